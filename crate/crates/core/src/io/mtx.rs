use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::formats::CooMatrix;

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CooMatrix, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    parse_matrix_market(BufReader::new(file))
}

/// Parses a coordinate `real` or `integer` Matrix Market stream. Symmetric
/// and skew-symmetric storage is expanded, 1-based indices become 0-based
/// and duplicate entries are summed.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CooMatrix, IoError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header.map_err(|e| parse_err(1, e.to_string()))?;
    let symmetry = parse_header(&header)?;

    let mut size = None;
    let mut triples = Vec::new();
    let mut expected = 0usize;
    let mut read = 0usize;
    for (no, line) in lines {
        let line = line.map_err(|e| parse_err(no, e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let Some((n_rows, n_cols)) = size else {
            if fields.len() != 3 {
                return Err(parse_err(no, "size line must be 'rows cols entries'"));
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>().map_err(|e| parse_err(no, format!("'{f}': {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            size = Some((nums[0], nums[1]));
            expected = nums[2];
            triples.reserve(if symmetry == Symmetry::General { expected } else { 2 * expected });
            continue;
        };
        if fields.len() != 3 {
            return Err(parse_err(no, format!("expected 'row col value', got {} fields", fields.len())));
        }
        let index = |f: &str, bound: usize, what: &str| -> Result<usize, IoError> {
            let v = f.parse::<usize>().map_err(|e| parse_err(no, format!("{what} '{f}': {e}")))?;
            if v == 0 || v > bound {
                return Err(parse_err(no, format!("{what} index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        let r = index(fields[0], n_rows, "row")?;
        let c = index(fields[1], n_cols, "column")?;
        let v = fields[2].parse::<f64>().map_err(|e| parse_err(no, format!("value '{}': {e}", fields[2])))?;
        read += 1;
        if read > expected {
            return Err(parse_err(no, format!("more than the {expected} declared entries")));
        }
        triples.push((r, c, v));
        if r != c {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => triples.push((c, r, v)),
                Symmetry::SkewSymmetric => triples.push((c, r, -v)),
            }
        }
    }
    let (n_rows, n_cols) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if read != expected {
        return Err(parse_err(0, format!("declared {expected} entries, found {read}")));
    }
    Ok(CooMatrix::from_triples(n_rows, n_cols, triples)?)
}

fn parse_header(header: &str) -> Result<Symmetry, IoError> {
    let lower = header.trim().to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.first() != Some(&"%%matrixmarket") {
        return Err(parse_err(1, "missing %%MatrixMarket banner"));
    }
    if tokens.len() != 5 {
        return Err(parse_err(1, "banner must be '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if tokens[1] != "matrix" {
        return Err(IoError::UnsupportedField(format!("object '{}'", tokens[1])));
    }
    if tokens[2] != "coordinate" {
        return Err(IoError::UnsupportedField(format!("format '{}'", tokens[2])));
    }
    if !matches!(tokens[3], "real" | "integer" | "double") {
        return Err(IoError::UnsupportedField(format!("field '{}'", tokens[3])));
    }
    match tokens[4] {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        "skew-symmetric" => Ok(Symmetry::SkewSymmetric),
        other => Err(IoError::UnsupportedField(format!("symmetry '{other}'"))),
    }
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &CooMatrix) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix_market_to(&mut w, m).map_err(|e| IoError::io(path, e))?;
    w.flush().map_err(|e| IoError::io(path, e))
}

/// General coordinate form; values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_matrix_market_to<W: Write>(w: &mut W, m: &CooMatrix) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        writeln!(w, "{} {} {:?}", r + 1, c + 1, v)?;
    }
    Ok(())
}
