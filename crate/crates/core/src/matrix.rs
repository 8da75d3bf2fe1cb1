//! Dense symmetric matrices stored as a single lower triangle.

use std::io::{BufRead, Read, Write};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rayon::prelude::*;

use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"SYMM";

/// Row block height for Gram products. Fixed so that the floating-point
/// result of every entry is independent of the rayon thread count.
const GRAM_BLOCK: usize = 192;

/// Real symmetric matrix; row `i` of the lower triangle starts at `i(i+1)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    order: usize,
    lower: Vec<f64>,
}

#[inline]
fn tri_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl SymmetricMatrix {
    pub fn zeros(order: usize) -> Self {
        Self { order, lower: vec![0.0; tri_offset(order)] }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// `f(i, j)` is only called with `j <= i`.
    pub fn from_fn<F: Fn(usize, usize) -> f64>(order: usize, f: F) -> Self {
        let mut lower = Vec::with_capacity(tri_offset(order));
        for i in 0..order {
            for j in 0..=i {
                lower.push(f(i, j));
            }
        }
        Self { order, lower }
    }

    pub fn from_lower(order: usize, lower: Vec<f64>) -> Result<Self> {
        if lower.len() != tri_offset(order) {
            return Err(Error::InvalidDimensions(format!(
                "lower triangle of order {order} needs {} entries, got {}",
                tri_offset(order),
                lower.len()
            )));
        }
        Ok(Self { order, lower })
    }

    /// Symmetrizes a dense square matrix by keeping its lower triangle.
    pub fn from_dense_lower(m: MatRef<'_, f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.lower[tri_offset(i) + j]
    }

    pub fn lower_row(&self, i: usize) -> &[f64] {
        &self.lower[tri_offset(i)..tri_offset(i + 1)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.lower.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.order {
            for (j, v) in self.lower_row(i).iter().enumerate() {
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.order, other.order);
        self.lower.iter().zip(&other.lower).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Divides every entry by `d` (division, not multiplication by `1/d`).
    pub fn div_entries(mut self, d: f64) -> Self {
        for v in &mut self.lower {
            *v /= d;
        }
        self
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.order, other.order);
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a - b).collect();
        Self { order: self.order, lower }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.order, other.order);
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a + b).collect();
        Self { order: self.order, lower }
    }

    /// Drops row and column `k`.
    pub fn minor(&self, k: usize) -> Self {
        assert!(k < self.order);
        let idx = |i: usize| if i >= k { i + 1 } else { i };
        Self::from_fn(self.order - 1, |i, j| self.get(idx(i), idx(j)))
    }

    pub fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.order, self.order, |i, j| self.get(i, j))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.order {
            let row: Vec<String> = (0..self.order).map(|j| self.get(i, j).to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a full CSV matrix (lines starting with `#` are ignored) and
    /// keeps its lower triangle. Asymmetric input is rejected.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rows.push(
                line.split(',')
                    .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("bad number `{s}`"))))
                    .collect::<Result<_>>()?,
            );
        }
        let order = rows.len();
        if rows.iter().any(|r| r.len() != order) {
            return Err(Error::Parse("symmetric matrix CSV is not square".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().take(i) {
                if v != rows[j][i] {
                    return Err(Error::Parse(format!("entry ({i},{j}) differs from ({j},{i})")));
                }
            }
        }
        Ok(Self::from_fn(order, |i, j| rows[i][j]))
    }

    /// `SYMM` magic, little-endian u64 order, then the lower triangle row by row.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.order as u64).to_le_bytes())?;
        for v in &self.lower {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("missing SYMM magic".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let order = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| Error::Parse("order does not fit in memory".into()))?;
        let mut lower = Vec::with_capacity(tri_offset(order));
        for _ in 0..tri_offset(order) {
            r.read_exact(&mut word)?;
            lower.push(f64::from_le_bytes(word));
        }
        Ok(Self { order, lower })
    }
}

/// `A * A^T` for a row-major `rows x cols` matrix `A`.
///
/// Rows are processed in fixed blocks, each with a sequential GEMM, so the
/// output is bit-identical for any thread count.
pub fn gram(data: &[f64], rows: usize, cols: usize) -> SymmetricMatrix {
    assert_eq!(data.len(), rows * cols);
    let a = MatRef::from_row_major_slice(data, rows, cols);
    let starts: Vec<usize> = (0..rows).step_by(GRAM_BLOCK).collect();
    let blocks: Vec<Mat<f64>> = starts
        .par_iter()
        .map(|&r0| {
            let r1 = (r0 + GRAM_BLOCK).min(rows);
            let mut out = Mat::<f64>::zeros(r1 - r0, r1);
            matmul(
                out.as_mut(),
                Accum::Replace,
                a.subrows(r0, r1 - r0),
                a.subrows(0, r1).transpose(),
                1.0,
                Par::Seq,
            );
            out
        })
        .collect();
    let mut lower = Vec::with_capacity(tri_offset(rows));
    for (&r0, block) in starts.iter().zip(&blocks) {
        for bi in 0..block.nrows() {
            let i = r0 + bi;
            lower.extend((0..=i).map(|j| block[(bi, j)]));
        }
    }
    SymmetricMatrix { order: rows, lower }
}

/// Dense `A * B^T` for row-major `rows x cols` operands.
pub fn product_abt(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Mat<f64> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows * cols);
    let a = MatRef::from_row_major_slice(a, rows, cols);
    let b = MatRef::from_row_major_slice(b, rows, cols);
    let mut out = Mat::<f64>::zeros(rows, rows);
    matmul(out.as_mut(), Accum::Replace, a, b.transpose(), 1.0, Par::Seq);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_gram(data: &[f64], rows: usize, cols: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(rows, |i, j| {
            (0..cols).map(|c| data[i * cols + c] * data[j * cols + c]).sum()
        })
    }

    #[test]
    fn gram_matches_naive_across_block_boundary() {
        let rows = GRAM_BLOCK + 37;
        let cols = 29;
        let data: Vec<f64> = (0..rows * cols).map(|t| ((t * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let g = gram(&data, rows, cols);
        assert!(g.max_abs_diff(&naive_gram(&data, rows, cols)) < 1e-12);
    }

    #[test]
    fn gram_independent_of_threads() {
        let rows = 2 * GRAM_BLOCK + 5;
        let cols = 50;
        let data: Vec<f64> = (0..rows * cols).map(|t| ((t as f64) * 0.37).sin()).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| gram(&data, rows, cols));
        let b = four.install(|| gram(&data, rows, cols));
        assert_eq!(a, b);
    }

    #[test]
    fn accessors_and_minor() {
        let m = SymmetricMatrix::from_fn(3, |i, j| (10 * i + j) as f64);
        assert_eq!(m.get(0, 2), 20.0);
        assert_eq!(m.get(2, 0), 20.0);
        assert_eq!(m.trace(), 0.0 + 11.0 + 22.0);
        let minor = m.minor(0);
        assert_eq!(minor.order(), 2);
        assert_eq!(minor.get(1, 0), 21.0);
        assert_eq!(minor.get(1, 1), 22.0);
    }

    #[test]
    fn binary_layout_is_exact() {
        let m = SymmetricMatrix::from_fn(2, |i, j| (i + j) as f64 + 0.5);
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SYMM");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 12 + 3 * 8);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 1.5);
        assert_eq!(SymmetricMatrix::read_binary(&buf[..]).unwrap(), m);
        assert!(SymmetricMatrix::read_binary(&b"NOPE0000"[..]).is_err());
    }

    #[test]
    fn csv_rejects_asymmetry() {
        let text = "1,2\n3,1\n";
        assert!(SymmetricMatrix::read_csv(text.as_bytes()).is_err());
        let m = SymmetricMatrix::read_csv("1,0.25\n0.25,1\n".as_bytes()).unwrap();
        assert_eq!(m.get(0, 1), 0.25);
    }
}
