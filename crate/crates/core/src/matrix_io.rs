//! Plain-text matrix format shared by channels, scattering matrices and
//! saved solutions.
//!
//! ```text
//! 2 2
//! 1e0+0e0j 0e0-1.5e0j
//! 0e0+0e0j 2.5e-1+0e0j
//! ```
//!
//! The first line holds `rows cols`; each following line is one row of
//! whitespace-separated `re+imj` entries. Values are written with the
//! shortest representation that round-trips, so save/load is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{MilacError, Result};
use crate::linalg::{CMat, RMat};

pub fn format_entry(z: Complex64) -> String {
    format!("{:e}{:+e}j", z.re, z.im)
}

pub fn parse_entry(tok: &str) -> Option<Complex64> {
    let body = match tok.strip_suffix(['j', 'i']) {
        Some(b) => b,
        None => return tok.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0)),
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().ok()?;
            let im = body[i..].parse::<f64>().ok()?;
            Some(Complex64::new(re, im))
        }
        // Pure imaginary, e.g. "2.5e0j".
        None => body.parse::<f64>().ok().map(|im| Complex64::new(0.0, im)),
    }
}

pub fn write_matrix<W: Write>(mut w: W, m: &CMat) -> std::io::Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_entry(m[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: R) -> Result<CMat> {
    let parse_err = |line, msg: &str| MilacError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        lines.push(line.map_err(|e| parse_err(n + 1, &e.to_string()))?);
    }
    let header = lines.first().ok_or_else(|| parse_err(1, "empty input"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(1, "header must be two non-negative integers"))?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(1, "header must be two non-negative integers"));
    };
    // Zero-column rows are blank lines, so only blanks past the last row are
    // dropped.
    while lines.len() > rows + 1 && lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.len() != rows + 1 {
        return Err(parse_err(
            lines.len().min(rows + 1) + 1,
            &format!("expected {rows} rows, found {}", lines.len() - 1),
        ));
    }

    let mut m = CMat::zeros(rows, cols);
    for (i, line) in lines[1..].iter().enumerate() {
        let n = i + 2;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != cols {
            return Err(parse_err(
                n,
                &format!("expected {cols} entries, found {}", toks.len()),
            ));
        }
        for (j, tok) in toks.iter().enumerate() {
            let z = parse_entry(tok).ok_or_else(|| parse_err(n, &format!("bad entry {tok:?}")))?;
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(parse_err(n, &format!("non-finite entry {tok:?}")));
            }
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

pub fn save_matrix(path: impl AsRef<Path>, m: &CMat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| MilacError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix(&mut w, m)
        .and_then(|_| w.flush())
        .map_err(|e| MilacError::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<CMat> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MilacError::io(path, e))?;
    read_matrix(file)
}

pub fn real_to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Real part of `m`, rejecting any entry whose imaginary part is nonzero.
pub fn complex_to_real(m: &CMat) -> Result<RMat> {
    if let Some((idx, z)) = m.iter().enumerate().find(|(_, z)| z.im != 0.0) {
        return Err(MilacError::Parse {
            line: 2 + idx % m.nrows(),
            msg: format!("expected a real entry, found {}", format_entry(*z)),
        });
    }
    Ok(m.map(|z| z.re))
}
