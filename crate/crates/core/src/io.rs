//! Plain-text file formats.
//!
//! Tensor files:
//!
//! ```text
//! symtensor v1
//! order <m>
//! dim <n>
//! <n^m whitespace-separated values, row-major, last index fastest>
//! ```
//!
//! Factor files:
//!
//! ```text
//! factors v1
//! p <rank>
//! n <dim>
//! <p weights>
//! <one line of n values per factor column>
//! ```
//!
//! Values are written with 17 significant digits so they read back exactly.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{FactorDecomposition, SymmetricTensor};

pub const TENSOR_MAGIC: &str = "symtensor v1";
pub const FACTORS_MAGIC: &str = "factors v1";

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let line: Vec<String> = values.iter().map(|&v| fmt_value(v)).collect();
    writeln!(w, "{}", line.join(" "))?;
    Ok(())
}

pub fn write_tensor<W: Write>(w: &mut W, t: &SymmetricTensor) -> Result<()> {
    writeln!(w, "{TENSOR_MAGIC}")?;
    writeln!(w, "order {}", t.order())?;
    writeln!(w, "dim {}", t.dim())?;
    for fiber in t.entries().chunks(t.dim()) {
        write_row(w, fiber)?;
    }
    Ok(())
}

pub fn write_factors<W: Write>(w: &mut W, d: &FactorDecomposition) -> Result<()> {
    writeln!(w, "{FACTORS_MAGIC}")?;
    writeln!(w, "p {}", d.rank())?;
    writeln!(w, "n {}", d.dim())?;
    write_row(w, &d.weights)?;
    for col in d.factors.column_iter() {
        write_row(w, col.as_slice())?;
    }
    Ok(())
}

/// Line-aware token reader for the header-plus-values layout.
struct Reader {
    lines: Vec<String>,
    line: usize,
}

impl Reader {
    fn new<R: BufRead>(r: R) -> Result<Self> {
        let lines = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        Ok(Reader { lines, line: 0 })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line.max(1), message: message.into() }
    }

    fn next_line(&mut self) -> Result<&str> {
        while self.line < self.lines.len() {
            self.line += 1;
            let l = self.lines[self.line - 1].trim();
            if !l.is_empty() {
                return Ok(self.lines[self.line - 1].trim());
            }
        }
        Err(self.err("unexpected end of file"))
    }

    fn expect_magic(&mut self, magic: &str) -> Result<()> {
        let l = self.next_line()?;
        if l != magic {
            let got = l.to_string();
            return Err(self.err(format!("expected header '{magic}', found '{got}'")));
        }
        Ok(())
    }

    fn keyed(&mut self, key: &str) -> Result<usize> {
        let l = self.next_line()?.to_string();
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => {
                v.parse().map_err(|_| self.err(format!("invalid value for '{key}': '{v}'")))
            }
            _ => Err(self.err(format!("expected '{key} <integer>', found '{l}'"))),
        }
    }

    fn values(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        while self.line < self.lines.len() {
            self.line += 1;
            for tok in self.lines[self.line - 1].split_whitespace() {
                let v = tok.parse::<f64>().map_err(|_| self.err(format!("invalid number '{tok}'")))?;
                out.push(v);
            }
        }
        Ok(out)
    }
}

pub fn read_tensor<R: BufRead>(r: R) -> Result<SymmetricTensor> {
    let mut rd = Reader::new(r)?;
    rd.expect_magic(TENSOR_MAGIC)?;
    let order = rd.keyed("order")?;
    let dim = rd.keyed("dim")?;
    let values = rd.values()?;
    SymmetricTensor::from_dense(order, dim, values)
}

pub fn read_factors<R: BufRead>(r: R) -> Result<FactorDecomposition> {
    let mut rd = Reader::new(r)?;
    rd.expect_magic(FACTORS_MAGIC)?;
    let p = rd.keyed("p")?;
    let n = rd.keyed("n")?;
    let values = rd.values()?;
    if values.len() != p + p * n {
        return Err(Error::ShapeMismatch(format!(
            "factor file with p = {p}, n = {n} needs {} values, found {}",
            p + p * n,
            values.len()
        )));
    }
    let (weights, cols) = values.split_at(p);
    FactorDecomposition::new(weights.to_vec(), DMatrix::from_column_slice(n, p, cols))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<SymmetricTensor> {
    read_tensor(BufReader::new(fs::File::open(path)?))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &SymmetricTensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_tensor(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<FactorDecomposition> {
    read_factors(BufReader::new(fs::File::open(path)?))
}

pub fn save_factors(path: impl AsRef<Path>, d: &FactorDecomposition) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_factors(&mut f, d)?;
    f.flush()?;
    Ok(())
}
