use super::pool::{for_each_chunk_mut, map_chunks};
use super::{ExecPolicy, KernelError};

fn check_len(op: &'static str, expected: usize, found: usize) -> Result<(), KernelError> {
    if expected == found {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch { op, expected, found })
    }
}

/// `y <- alpha * x + y`
pub fn daxpy(alpha: f64, x: &[f64], y: &mut [f64], policy: &ExecPolicy) -> Result<(), KernelError> {
    check_len("daxpy", y.len(), x.len())?;
    let bs = policy.block_size();
    for_each_chunk_mut(y, bs, policy, x.len(), |i, yc| {
        let xc = &x[i * bs..i * bs + yc.len()];
        for (yv, &xv) in yc.iter_mut().zip(xc) {
            *yv += alpha * xv;
        }
    });
    Ok(())
}

/// `y <- alpha * x + beta * y`
pub fn axpby(alpha: f64, x: &[f64], beta: f64, y: &mut [f64], policy: &ExecPolicy) -> Result<(), KernelError> {
    check_len("axpby", y.len(), x.len())?;
    let bs = policy.block_size();
    for_each_chunk_mut(y, bs, policy, x.len(), |i, yc| {
        let xc = &x[i * bs..i * bs + yc.len()];
        for (yv, &xv) in yc.iter_mut().zip(xc) {
            *yv = alpha * xv + beta * *yv;
        }
    });
    Ok(())
}

/// `y <- x + beta * y`
pub fn xpay(x: &[f64], beta: f64, y: &mut [f64], policy: &ExecPolicy) -> Result<(), KernelError> {
    check_len("xpay", y.len(), x.len())?;
    let bs = policy.block_size();
    for_each_chunk_mut(y, bs, policy, x.len(), |i, yc| {
        let xc = &x[i * bs..i * bs + yc.len()];
        for (yv, &xv) in yc.iter_mut().zip(xc) {
            *yv = xv + beta * *yv;
        }
    });
    Ok(())
}

/// `x <- alpha * x`
pub fn scale(alpha: f64, x: &mut [f64], policy: &ExecPolicy) {
    let n = x.len();
    for_each_chunk_mut(x, policy.block_size(), policy, n, |_, c| {
        c.iter_mut().for_each(|v| *v *= alpha);
    });
}

/// In-place elementwise product `a[i] <- a[i] * b[i]`.
pub fn scal_elementwise(a: &mut [f64], b: &[f64], policy: &ExecPolicy) -> Result<(), KernelError> {
    check_len("scal_elementwise", a.len(), b.len())?;
    let bs = policy.block_size();
    for_each_chunk_mut(a, bs, policy, b.len(), |i, ac| {
        let bc = &b[i * bs..i * bs + ac.len()];
        for (av, &bv) in ac.iter_mut().zip(bc) {
            *av *= bv;
        }
    });
    Ok(())
}

/// Two-phase dot product: one partial sum per `block_size` chunk, then the
/// partials are added strictly left to right.
pub fn dot(x: &[f64], y: &[f64], policy: &ExecPolicy) -> Result<f64, KernelError> {
    check_len("dot", x.len(), y.len())?;
    let partials = map_chunks(x.len(), policy.block_size(), policy, |r| {
        x[r.clone()].iter().zip(&y[r]).fold(0.0, |acc, (a, b)| acc + a * b)
    });
    Ok(sum_left_to_right(&partials))
}

/// `sum_i w[i] * x[i] * y[i]`, chunked exactly like [`dot`].
pub fn dot_weighted(w: &[f64], x: &[f64], y: &[f64], policy: &ExecPolicy) -> Result<f64, KernelError> {
    check_len("dot_weighted", x.len(), y.len())?;
    check_len("dot_weighted", x.len(), w.len())?;
    let partials = map_chunks(x.len(), policy.block_size(), policy, |r| {
        let (wc, xc, yc) = (&w[r.clone()], &x[r.clone()], &y[r]);
        wc.iter().zip(xc).zip(yc).fold(0.0, |acc, ((wv, a), b)| acc + wv * a * b)
    });
    Ok(sum_left_to_right(&partials))
}

pub fn norm2(x: &[f64], policy: &ExecPolicy) -> f64 {
    dot(x, x, policy).expect("same slice").sqrt()
}

pub(crate) fn sum_left_to_right(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}
