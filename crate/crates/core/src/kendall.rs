//! Pairwise sign structures and the Kendall correlation matrix.
//!
//! Every entry of tau is `(concordant - discordant) / M` with `M = n(n-1)/2`.
//! All three constructions below accumulate that numerator as an integer and
//! divide once, so they agree bit for bit.

use rayon::prelude::*;

use crate::datagen::DataMatrix;
use crate::matrix::SymmetricMatrix;

/// Largest `p * M` for which [`tau`] materializes the sign matrix.
pub const DEFAULT_SIGN_BUDGET: usize = 2_000_000_000;

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// A sample pair `(i, j)`, `i < j`, zero-based, with its column position.
///
/// Columns are ordered lexicographically: (0,1), (0,2), .., (0,n-1), (1,2), ..
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
    pub position: usize,
}

impl PairIndex {
    pub fn new(n: usize, i: usize, j: usize) -> Self {
        assert!(i < j && j < n, "pair ({i},{j}) invalid for n={n}");
        let position = i * (2 * n - i - 1) / 2 + (j - i - 1);
        Self { i, j, position }
    }

    pub fn from_position(n: usize, position: usize) -> Self {
        assert!(position < pair_count(n));
        let mut i = 0;
        let mut start = 0;
        while start + (n - i - 1) <= position {
            start += n - i - 1;
            i += 1;
        }
        Self { i, j: i + 1 + (position - start), position }
    }
}

/// All pairs for `n` samples in column order.
pub fn pairs(n: usize) -> impl Iterator<Item = PairIndex> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| PairIndex::new(n, i, j)))
}

#[inline]
fn sign(a: f64, b: f64) -> i8 {
    if a > b {
        1
    } else if a < b {
        -1
    } else {
        0
    }
}

/// The p x M matrix of comparison signs `sign(x[k,i] - x[k,j])`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSignMatrix {
    signs: Vec<i8>,
    p: usize,
    n: usize,
}

impl PairSignMatrix {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.n)
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn row(&self, k: usize) -> &[i8] {
        let m = self.pair_count();
        &self.signs[k * m..(k + 1) * m]
    }

    pub fn get(&self, k: usize, pair: PairIndex) -> i8 {
        self.row(k)[pair.position]
    }

    /// Builds from raw signs; every entry must be +1 or -1.
    pub fn from_signs(signs: Vec<i8>, p: usize, n: usize) -> Option<Self> {
        let ok = signs.len() == p * pair_count(n) && signs.iter().all(|&s| s == 1 || s == -1);
        ok.then_some(Self { signs, p, n })
    }
}

pub fn pair_signs(x: &DataMatrix) -> PairSignMatrix {
    let n = x.n();
    let m = pair_count(n);
    let mut signs = vec![0i8; x.p() * m];
    signs.par_chunks_mut(m.max(1)).zip(x.rows().collect::<Vec<_>>()).for_each(|(out, row)| {
        let mut t = 0;
        for i in 0..n {
            for j in i + 1..n {
                out[t] = sign(row[i], row[j]);
                t += 1;
            }
        }
    });
    PairSignMatrix { signs, p: x.p(), n }
}

#[inline]
fn entry(numerator: i64, m: usize) -> f64 {
    numerator as f64 / m as f64
}

/// Direct O(p^2 n^2) evaluation of every Kendall coefficient.
pub fn tau_naive(x: &DataMatrix) -> SymmetricMatrix {
    let n = x.n();
    let m = pair_count(n);
    let rows: Vec<&[f64]> = x.rows().collect();
    let lower: Vec<Vec<f64>> = (0..x.p())
        .into_par_iter()
        .map(|k| {
            (0..=k)
                .map(|l| {
                    let (a, b) = (rows[k], rows[l]);
                    let mut acc: i64 = 0;
                    for i in 0..n {
                        for j in i + 1..n {
                            acc += i64::from(sign(a[i], a[j]) * sign(b[i], b[j]));
                        }
                    }
                    entry(acc, m)
                })
                .collect()
        })
        .collect();
    SymmetricMatrix::from_lower(x.p(), lower.concat()).expect("triangle size")
}

/// `(1/M) S S^T` with integer dot products.
pub fn tau_from_signs(s: &PairSignMatrix) -> SymmetricMatrix {
    let m = s.pair_count();
    let lower: Vec<Vec<f64>> = (0..s.p())
        .into_par_iter()
        .map(|k| {
            let a = s.row(k);
            (0..=k)
                .map(|l| {
                    let acc: i64 = a.iter().zip(s.row(l)).map(|(&u, &v)| i64::from(u * v)).sum();
                    entry(acc, m)
                })
                .collect()
        })
        .collect();
    SymmetricMatrix::from_lower(s.p(), lower.concat()).expect("triangle size")
}

/// Position of each sample in the sorted order of a row (0-based ranks).
pub fn row_ranks(row: &[f64]) -> Vec<u32> {
    let order = argsort(row);
    let mut ranks = vec![0u32; row.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i as usize] = r as u32;
    }
    ranks
}

fn argsort(row: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..row.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]));
    order
}

/// Counts pairs `s < t` with `seq[s] > seq[t]` by bottom-up merge sort.
/// `seq` is left sorted; `buf` must have the same length.
pub fn count_inversions(seq: &mut [u32], buf: &mut [u32]) -> u64 {
    let n = seq.len();
    debug_assert_eq!(buf.len(), n);
    let mut inversions = 0u64;
    let mut width = 1;
    let (mut src, mut dst) = (seq, buf);
    let mut in_seq = true;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut a, mut b, mut out) = (lo, mid, lo);
            while a < mid && b < hi {
                if src[a] <= src[b] {
                    dst[out] = src[a];
                    a += 1;
                } else {
                    dst[out] = src[b];
                    inversions += (mid - a) as u64;
                    b += 1;
                }
                out += 1;
            }
            dst[out..out + (mid - a)].copy_from_slice(&src[a..mid]);
            out += mid - a;
            dst[out..out + (hi - b)].copy_from_slice(&src[b..hi]);
            lo = hi;
        }
        std::mem::swap(&mut src, &mut dst);
        in_seq = !in_seq;
        width *= 2;
    }
    if !in_seq {
        dst.copy_from_slice(src);
    }
    inversions
}

/// O(p^2 n log n) Kendall matrix: for each pair of rows, order the samples by
/// one row and count inversions of the other row's ranks in that order.
pub fn tau_fast(x: &DataMatrix) -> SymmetricMatrix {
    let n = x.n();
    let m = pair_count(n);
    let orders: Vec<Vec<u32>> = x.rows().map(argsort).collect();
    let ranks: Vec<Vec<u32>> = x.rows().map(row_ranks).collect();
    let lower: Vec<Vec<f64>> = (0..x.p())
        .into_par_iter()
        .map(|k| {
            let mut seq = vec![0u32; n];
            let mut buf = vec![0u32; n];
            (0..=k)
                .map(|l| {
                    for (s, &i) in seq.iter_mut().zip(&orders[k]) {
                        *s = ranks[l][i as usize];
                    }
                    let discordant = count_inversions(&mut seq, &mut buf) as i64;
                    entry(m as i64 - 2 * discordant, m)
                })
                .collect()
        })
        .collect();
    SymmetricMatrix::from_lower(x.p(), lower.concat()).expect("triangle size")
}

/// Kendall matrix. The sign matrix is materialized only when `p * M` fits in
/// `sign_budget` entries and `n` is small enough that an O(M) dot product
/// beats merge-sort counting. Both routes give identical bits.
pub fn tau(x: &DataMatrix, sign_budget: usize) -> SymmetricMatrix {
    let n = x.n();
    let log2n = usize::BITS - n.leading_zeros();
    let dense_is_cheaper = pair_count(n) <= 16 * n * log2n as usize;
    if dense_is_cheaper && x.p().saturating_mul(pair_count(n)) <= sign_budget {
        tau_from_signs(&pair_signs(x))
    } else {
        tau_fast(x)
    }
}
