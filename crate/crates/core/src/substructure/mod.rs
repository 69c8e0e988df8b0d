//! Algebraic sub-structuring.
//!
//! The equations are split into subdomains that overlap only on interface
//! equations. Each subdomain keeps a local matrix whose lifted sum over all
//! subdomains is the global matrix; coefficients coupling equations owned
//! by several subdomains are shared among those owners. A conjugate gradient
//! solve then runs one thread per subdomain, exchanging interface values
//! after every local SpMV and all-reducing weighted dot products.

mod exchange;
mod solver;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::formats::{CsrMatrix, FormatError};
use crate::kernels::KernelError;
use crate::krylov::SolverError;

pub use solver::{
    distributed_dot, local_spmv_assemble, solve_cg_substructured, solve_cg_substructured_with, ParallelSolveReport,
};

/// How long a subdomain waits on a message before declaring deadlock.
pub const DEFAULT_EXCHANGE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubstructureError {
    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },
    #[error("assignment covers {found} equations, matrix has {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("cannot split {n} equations into {parts} subdomains")]
    InvalidPartCount { n: usize, parts: usize },
    #[error("equation {equation} has no owning subdomain")]
    UnownedEquation { equation: usize },
    #[error("subdomain {0} owns no equations")]
    EmptySubdomain(usize),
    #[error("coefficient ({row}, {col}) couples equations with no common subdomain")]
    DisconnectedAssignment { row: usize, col: usize },
    #[error("assignment line {line}: {message}")]
    AssignmentParse { line: usize, message: String },
    #[error("subdomain {subdomain}: no message from subdomain {peer} within {timeout:?}")]
    ProtocolDeadlock { subdomain: usize, peer: usize, timeout: Duration },
    #[error("subdomain {subdomain}: buffer from {peer} has length {found}, expected {expected}")]
    BufferLengthMismatch { subdomain: usize, peer: usize, expected: usize, found: usize },
    #[error("subdomain {0} stopped because another subdomain failed")]
    Cancelled(usize),
    #[error("worker for subdomain {0} panicked")]
    WorkerPanic(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Which subdomains own each equation.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    /// Contiguous row bands of near-equal size.
    Parts(usize),
    /// One subdomain id per equation.
    Assignment(Vec<usize>),
    /// An explicit owner set per equation; equations listed with several
    /// owners start out as interface equations.
    OwnerSets(Vec<Vec<usize>>),
}

/// Equations shared with one neighbouring subdomain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterfaceDescriptor {
    pub neighbor_id: usize,
    /// Local indices, ordered by global equation number on both sides.
    pub equation_list: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    n_subdomains: usize,
    owners: Vec<Vec<usize>>,
    local_to_global: Vec<Vec<usize>>,
    interfaces: Vec<Vec<InterfaceDescriptor>>,
}

impl Partition {
    pub fn n_subdomains(&self) -> usize {
        self.n_subdomains
    }

    pub fn n_equations(&self) -> usize {
        self.owners.len()
    }

    /// Sorted owner ids of global equation `g`.
    pub fn owners(&self, g: usize) -> &[usize] {
        &self.owners[g]
    }

    pub fn is_interface(&self, g: usize) -> bool {
        self.owners[g].len() > 1
    }

    pub fn local_to_global(&self, subdomain: usize) -> &[usize] {
        &self.local_to_global[subdomain]
    }

    pub fn interfaces(&self, subdomain: usize) -> &[InterfaceDescriptor] {
        &self.interfaces[subdomain]
    }

    /// Local index of global equation `g` in `subdomain`.
    pub fn local_index(&self, subdomain: usize, g: usize) -> Option<usize> {
        self.local_to_global[subdomain].binary_search(&g).ok()
    }

    /// Restriction of a global vector to each subdomain.
    pub fn scatter(&self, global: &[f64]) -> Vec<Vec<f64>> {
        self.local_to_global.iter().map(|l2g| l2g.iter().map(|&g| global[g]).collect()).collect()
    }

    /// Global vector from local copies. Interface values that agree on all
    /// owners are taken as is; otherwise the copies are averaged.
    pub fn gather(&self, locals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_equations()];
        for (g, owners) in self.owners.iter().enumerate() {
            let copy = |p: usize| locals[p][self.local_index(p, g).expect("owner holds equation")];
            let first = copy(owners[0]);
            out[g] = if owners.iter().all(|&p| copy(p).to_bits() == first.to_bits()) {
                first
            } else {
                let w = 1.0 / owners.len() as f64;
                owners.iter().fold(0.0, |acc, &p| acc + w * copy(p))
            };
        }
        out
    }
}

/// Where one contribution to an interface equation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Source {
    Own,
    /// (index into the interface list, position in its equation list)
    Neighbor(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSystem {
    id: usize,
    k_local: CsrMatrix,
    b_local: Vec<f64>,
    weights: Vec<f64>,
    local_to_global: Vec<usize>,
    interfaces: Vec<InterfaceDescriptor>,
    /// Per interface equation, contributions in ascending owner id.
    assembly: Vec<(usize, Vec<Source>)>,
}

impl LocalSystem {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn k_local(&self) -> &CsrMatrix {
        &self.k_local
    }

    pub fn b_local(&self) -> &[f64] {
        &self.b_local
    }

    /// 1 for interior equations, `1 / |owners|` on interfaces.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn local_to_global(&self) -> &[usize] {
        &self.local_to_global
    }

    pub fn interfaces(&self) -> &[InterfaceDescriptor] {
        &self.interfaces
    }

    pub fn dof(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn interface_dof(&self) -> usize {
        self.weights.iter().filter(|&&w| w < 1.0).count()
    }

    pub(crate) fn assembly(&self) -> &[(usize, Vec<Source>)] {
        &self.assembly
    }
}

/// Splits `A x = b` into subdomain systems.
///
/// Starting from the owner sets given by `spec`, every nonzero `a_gh`
/// whose endpoints have disjoint owner sets makes both `g` and `h`
/// interface equations owned by the union. Each coefficient is then shared
/// among the owners common to both endpoints: with `k` common owners the
/// first `k - 1` (in id order) receive `a / k` and the last receives the
/// remainder, so summing the shares in id order gives back `a` exactly.
pub fn partition_matrix(
    a: &CsrMatrix,
    b: &[f64],
    spec: &PartitionSpec,
) -> Result<(Partition, Vec<LocalSystem>), SubstructureError> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(SubstructureError::NotSquare { n_rows: n, n_cols: a.n_cols() });
    }
    if b.len() != n {
        return Err(KernelError::DimensionMismatch { op: "partition rhs", expected: n, found: b.len() }.into());
    }
    let initial = initial_owners(n, spec)?;
    let n_sub = initial.iter().flatten().copied().max().map_or(0, |m| m + 1);

    let mut owners = initial.clone();
    for g in 0..n {
        for (h, _) in a.row(g) {
            if disjoint(&initial[g], &initial[h]) {
                owners[g].extend_from_slice(&initial[h]);
                owners[h].extend_from_slice(&initial[g]);
            }
        }
    }
    for set in &mut owners {
        set.sort_unstable();
        set.dedup();
    }

    let mut local_to_global = vec![Vec::new(); n_sub];
    for (g, set) in owners.iter().enumerate() {
        for &p in set {
            local_to_global[p].push(g);
        }
    }
    if let Some(p) = local_to_global.iter().position(Vec::is_empty) {
        return Err(SubstructureError::EmptySubdomain(p));
    }
    let local = |p: usize, g: usize| local_to_global[p].binary_search(&g).expect("owner holds equation");

    // local CSR assembly, rows visited in global order
    let mut row_ptr = vec![vec![0usize]; n_sub];
    let mut cols = vec![Vec::new(); n_sub];
    let mut vals = vec![Vec::new(); n_sub];
    let mut common = Vec::new();
    for g in 0..n {
        for (h, v) in a.row(g) {
            common.clear();
            common.extend(owners[g].iter().copied().filter(|p| owners[h].binary_search(p).is_ok()));
            if common.is_empty() {
                return Err(SubstructureError::DisconnectedAssignment { row: g, col: h });
            }
            let k = common.len();
            let mut given = 0.0;
            for (i, &p) in common.iter().enumerate() {
                let share = if i + 1 < k {
                    let s = v / k as f64;
                    given += s;
                    s
                } else {
                    v - given
                };
                cols[p].push(local(p, h));
                vals[p].push(share);
            }
        }
        for &p in &owners[g] {
            row_ptr[p].push(cols[p].len());
        }
    }

    let mut interfaces = vec![Vec::new(); n_sub];
    for p in 0..n_sub {
        for q in 0..n_sub {
            if p == q {
                continue;
            }
            let list: Vec<usize> = local_to_global[p]
                .iter()
                .enumerate()
                .filter(|(_, &g)| owners[g].len() > 1 && owners[g].binary_search(&q).is_ok())
                .map(|(li, _)| li)
                .collect();
            if !list.is_empty() {
                interfaces[p].push(InterfaceDescriptor { neighbor_id: q, equation_list: list });
            }
        }
    }

    let partition = Partition { n_subdomains: n_sub, owners, local_to_global, interfaces };
    let mut locals = Vec::with_capacity(n_sub);
    for (p, ((rp, c), v)) in row_ptr.into_iter().zip(cols).zip(vals).enumerate() {
        let l2g = partition.local_to_global[p].clone();
        let nl = l2g.len();
        let k_local = CsrMatrix::new(nl, nl, rp, c, v)?;
        let weights = l2g.iter().map(|&g| 1.0 / partition.owners[g].len() as f64).collect();
        let b_local = l2g.iter().map(|&g| b[g]).collect();
        let ifaces = partition.interfaces[p].clone();
        let assembly = assembly_plan(&partition, p, &ifaces);
        locals.push(LocalSystem {
            id: p,
            k_local,
            b_local,
            weights,
            local_to_global: l2g,
            interfaces: ifaces,
            assembly,
        });
    }
    Ok((partition, locals))
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|p| !b.contains(p))
}

fn initial_owners(n: usize, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>, SubstructureError> {
    let sets = match spec {
        PartitionSpec::Parts(parts) => {
            let parts = *parts;
            if parts == 0 || parts > n.max(1) {
                return Err(SubstructureError::InvalidPartCount { n, parts });
            }
            band_rows(n, parts).into_iter().map(|p| vec![p]).collect()
        }
        PartitionSpec::Assignment(ids) => ids.iter().map(|&p| vec![p]).collect(),
        PartitionSpec::OwnerSets(sets) => sets
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect::<Vec<_>>(),
    };
    if sets.len() != n {
        return Err(SubstructureError::AssignmentLength { expected: n, found: sets.len() });
    }
    if let Some(g) = sets.iter().position(Vec::is_empty) {
        return Err(SubstructureError::UnownedEquation { equation: g });
    }
    Ok(sets)
}

/// Contiguous band-row assignment: part `p` gets rows `[p n / parts, (p + 1) n / parts)`.
pub fn band_rows(n: usize, parts: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for p in 0..parts {
        let (s, e) = (p * n / parts, (p + 1) * n / parts);
        out.extend(std::iter::repeat_n(p, e - s));
    }
    out
}

fn assembly_plan(partition: &Partition, p: usize, ifaces: &[InterfaceDescriptor]) -> Vec<(usize, Vec<Source>)> {
    let l2g = &partition.local_to_global[p];
    let mut plan = Vec::new();
    for (li, &g) in l2g.iter().enumerate() {
        let owners = &partition.owners[g];
        if owners.len() < 2 {
            continue;
        }
        let sources = owners
            .iter()
            .map(|&o| {
                if o == p {
                    return Source::Own;
                }
                let k = ifaces.iter().position(|d| d.neighbor_id == o).expect("owner is a neighbour");
                let pos =
                    ifaces[k].equation_list.binary_search_by(|&lj| l2g[lj].cmp(&g)).expect("shared equation listed");
                Source::Neighbor(k, pos)
            })
            .collect();
        plan.push((li, sources));
    }
    plan
}

/// Reads a partition assignment: one 0-based subdomain id per line.
/// Blank lines and lines starting with `#` or `%` are skipped.
pub fn parse_assignment(text: &str) -> Result<Vec<usize>, SubstructureError> {
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let id = t
            .parse::<usize>()
            .map_err(|e| SubstructureError::AssignmentParse { line: i + 1, message: format!("'{t}': {e}") })?;
        ids.push(id);
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubdomainStats {
    pub subdomain: usize,
    pub dof: usize,
    pub nnz: usize,
    pub interface_dof: usize,
    pub neighbors: Vec<usize>,
}

/// Per-subdomain degrees of freedom and local nonzeros.
pub fn partition_stats(locals: &[LocalSystem]) -> Vec<SubdomainStats> {
    locals
        .iter()
        .map(|l| SubdomainStats {
            subdomain: l.id,
            dof: l.dof(),
            nnz: l.k_local.nnz(),
            interface_dof: l.interface_dof(),
            neighbors: l.interfaces.iter().map(|d| d.neighbor_id).collect(),
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::formats::{CooMatrix, CsrMatrix};

    pub fn laplace1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CooMatrix::from_triples(n, n, t).unwrap().to_csr()
    }

    pub fn poisson2d(m: usize) -> CsrMatrix {
        let n = m * m;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let r = i * m + j;
                t.push((r, r, 4.0));
                if i > 0 {
                    t.push((r, r - m, -1.0));
                }
                if i + 1 < m {
                    t.push((r, r + m, -1.0));
                }
                if j > 0 {
                    t.push((r, r - 1, -1.0));
                }
                if j + 1 < m {
                    t.push((r, r + 1, -1.0));
                }
            }
        }
        CooMatrix::from_triples(n, n, t).unwrap().to_csr()
    }

    /// Sum of lifted local matrices, shares added in subdomain order.
    pub fn lift_and_sum(n: usize, locals: &[super::LocalSystem]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        let mut seen = vec![vec![false; n]; n];
        for l in locals {
            let l2g = l.local_to_global();
            let k = l.k_local();
            for r in 0..k.n_rows() {
                for (c, v) in k.row(r) {
                    let (g, h) = (l2g[r], l2g[c]);
                    out[g][h] = if seen[g][h] { out[g][h] + v } else { v };
                    seen[g][h] = true;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::formats::CooMatrix;
    use proptest::prelude::*;

    fn dense_of(a: &CsrMatrix) -> Vec<Vec<f64>> {
        let d = a.to_dense();
        (0..d.n_rows()).map(|i| d.row(i).to_vec()).collect()
    }

    #[test]
    fn block_form_with_explicit_interface() {
        // [[K11, 0, K13], [0, K22, K23], [K31, K32, K33]]
        let t = vec![(0, 0, 4.0), (0, 2, -1.0), (1, 1, 5.0), (1, 2, -2.0), (2, 0, -1.0), (2, 1, -2.0), (2, 2, 6.0)];
        let a = CooMatrix::from_triples(3, 3, t).unwrap().to_csr();
        let spec = PartitionSpec::OwnerSets(vec![vec![0], vec![1], vec![0, 1]]);
        let (part, locals) = partition_matrix(&a, &[1.0, 2.0, 3.0], &spec).unwrap();
        assert_eq!(part.local_to_global(0), &[0, 2]);
        assert_eq!(part.local_to_global(1), &[1, 2]);
        assert_eq!(dense_of(locals[0].k_local()), vec![vec![4.0, -1.0], vec![-1.0, 3.0]]);
        assert_eq!(dense_of(locals[1].k_local()), vec![vec![5.0, -2.0], vec![-2.0, 3.0]]);
        assert_eq!(locals[0].weights(), &[1.0, 0.5]);
        assert_eq!(locals[1].b_local(), &[2.0, 3.0]);
        assert_eq!(part.interfaces(0), &[InterfaceDescriptor { neighbor_id: 1, equation_list: vec![1] }]);
        assert_eq!(part.interfaces(1), &[InterfaceDescriptor { neighbor_id: 0, equation_list: vec![1] }]);
        assert_eq!(lift_and_sum(3, &locals), dense_of(&a));
    }

    #[test]
    fn single_subdomain_is_the_whole_system() {
        let a = laplace1d(7);
        let (part, locals) = partition_matrix(&a, &[1.0; 7], &PartitionSpec::Parts(1)).unwrap();
        assert_eq!(part.n_subdomains(), 1);
        assert_eq!(locals[0].k_local(), &a);
        assert!(locals[0].interfaces().is_empty());
        assert!(locals[0].weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn laplace_split_in_two() {
        let a = laplace1d(10);
        let (part, locals) = partition_matrix(&a, &[1.0; 10], &PartitionSpec::Parts(2)).unwrap();
        let stats = partition_stats(&locals);
        assert_eq!(stats.iter().map(|s| s.dof).collect::<Vec<_>>(), vec![6, 6]);
        assert_eq!(part.local_to_global(0), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(part.local_to_global(1), &[4, 5, 6, 7, 8, 9]);
        assert!(part.is_interface(4) && part.is_interface(5) && !part.is_interface(3));
        assert_eq!(part.interfaces(0).len(), 1);
        assert_eq!(part.interfaces(1).len(), 1);
        assert_eq!(lift_and_sum(10, &locals), dense_of(&a));
    }

    #[test]
    fn three_way_shares_sum_exactly() {
        // equation 1 owned by three subdomains
        let t = vec![(0, 0, 1.0), (0, 1, 0.1), (1, 0, 0.1), (1, 1, 0.7), (1, 2, 0.3), (2, 1, 0.3), (2, 2, 1.0)];
        let a = CooMatrix::from_triples(3, 3, t).unwrap().to_csr();
        let spec = PartitionSpec::OwnerSets(vec![vec![0], vec![0, 1, 2], vec![2]]);
        let (part, locals) = partition_matrix(&a, &[0.0; 3], &spec).unwrap();
        assert_eq!(part.owners(1), &[0, 1, 2]);
        assert_eq!(lift_and_sum(3, &locals)[1][1], 0.7);
    }

    #[test]
    fn errors() {
        let a = laplace1d(4);
        assert_eq!(
            partition_matrix(&a, &[0.0; 4], &PartitionSpec::Parts(5)).unwrap_err(),
            SubstructureError::InvalidPartCount { n: 4, parts: 5 }
        );
        assert_eq!(
            partition_matrix(&a, &[0.0; 4], &PartitionSpec::Assignment(vec![0, 0, 2, 2])).unwrap_err(),
            SubstructureError::EmptySubdomain(1)
        );
        assert_eq!(
            partition_matrix(&a, &[0.0; 4], &PartitionSpec::Assignment(vec![0, 1])).unwrap_err(),
            SubstructureError::AssignmentLength { expected: 4, found: 2 }
        );
    }

    #[test]
    fn assignment_file() {
        assert_eq!(parse_assignment("0\n1\n\n# c\n1\n").unwrap(), vec![0, 1, 1]);
        assert!(matches!(parse_assignment("0\nx\n"), Err(SubstructureError::AssignmentParse { line: 2, .. })));
    }

    #[test]
    fn scatter_gather_round_trip() {
        let a = poisson2d(6);
        let (part, _) = partition_matrix(&a, &[0.0; 36], &PartitionSpec::Parts(4)).unwrap();
        let x: Vec<f64> = (0..36).map(|i| i as f64 * 0.25 - 3.0).collect();
        assert_eq!(part.gather(&part.scatter(&x)), x);
    }

    fn random_symmetric(n: usize, seed: u64) -> CsrMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, n as f64));
            for j in 0..i {
                if rng.gen_bool(0.1) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        CooMatrix::from_triples(n, n, t).unwrap().to_csr()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn decomposition_is_exact(n in 2usize..60, parts in 1usize..8, seed in 0u64..10_000) {
            let a = random_symmetric(n, seed);
            let assignment: Vec<usize> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % parts as u64) as usize).collect();
            let used: std::collections::BTreeSet<_> = assignment.iter().copied().collect();
            prop_assume!(used.len() == parts);
            let (part, locals) = partition_matrix(&a, &vec![1.0; n], &PartitionSpec::Assignment(assignment)).unwrap();
            prop_assert_eq!(lift_and_sum(n, &locals), dense_of(&a));
            // symmetric interface lists
            for p in 0..part.n_subdomains() {
                for d in part.interfaces(p) {
                    let back = part.interfaces(d.neighbor_id).iter().find(|e| e.neighbor_id == p).unwrap();
                    let gp: Vec<usize> = d.equation_list.iter().map(|&l| part.local_to_global(p)[l]).collect();
                    let gq: Vec<usize> = back.equation_list.iter().map(|&l| part.local_to_global(d.neighbor_id)[l]).collect();
                    prop_assert_eq!(gp, gq);
                }
            }
            // weighted rhs sums back to b
            let ones: Vec<Vec<f64>> = locals.iter().map(|l| l.b_local().to_vec()).collect();
            prop_assert_eq!(part.gather(&ones), vec![1.0; n]);
        }
    }
}
