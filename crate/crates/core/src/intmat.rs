//! Sparse integer matrices and exact rank.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{CheckedMul, CheckedSub, Signed};

/// Row-major sparse integer matrix. Rows keep their entries sorted by column
/// and never store zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, i64)>>,
}

impl IntMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    /// Builds a matrix from rows; entries are sorted, duplicates summed and
    /// zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, i64)>>) -> Self {
        let nrows = rows.len();
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|e| e.0);
                let mut out: Vec<(usize, i64)> = Vec::with_capacity(r.len());
                for (c, v) in r {
                    assert!(c < ncols, "column {c} out of range {ncols}");
                    match out.last_mut() {
                        Some(last) if last.0 == c => last.1 += v,
                        _ => out.push((c, v)),
                    }
                }
                out.retain(|e| e.1 != 0);
                out
            })
            .collect();
        Self { nrows, ncols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, i64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                rows[j].push((i, v));
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            rows,
        }
    }

    /// Exact product `self * other`.
    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.ncols, other.nrows);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc: Vec<(usize, i64)> = Vec::new();
                for &(k, a) in r {
                    for &(j, b) in &other.rows[k] {
                        acc.push((j, a * b));
                    }
                }
                acc
            })
            .collect();
        IntMatrix::from_rows(other.ncols, rows)
    }

    /// Keeps the listed rows and columns, in the given order.
    pub fn restrict(&self, keep_rows: &[usize], keep_cols: &[usize]) -> IntMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep_cols.iter().enumerate() {
            col_map[old] = new;
        }
        let rows = keep_rows
            .iter()
            .map(|&i| {
                self.rows[i]
                    .iter()
                    .filter(|e| col_map[e.0] != usize::MAX)
                    .map(|&(j, v)| (col_map[j], v))
                    .collect()
            })
            .collect();
        IntMatrix::from_rows(keep_cols.len(), rows)
    }

    pub fn to_csr(&self) -> CsrMatrix<f64> {
        let mut offsets = Vec::with_capacity(self.nrows + 1);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        offsets.push(0);
        for r in &self.rows {
            for &(j, v) in r {
                cols.push(j);
                vals.push(v as f64);
            }
            offsets.push(cols.len());
        }
        CsrMatrix::try_from_csr_data(self.nrows, self.ncols, offsets, cols, vals)
            .expect("valid csr layout")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] = v as f64;
            }
        }
        m
    }
}

/// Matrices with more rows plus columns than this use the floating-point
/// rank fallback instead of exact elimination.
pub const EXACT_RANK_LIMIT: usize = 100_000;

/// Rank over the rationals. Exact (fraction-free elimination) below
/// [`EXACT_RANK_LIMIT`], thresholded singular values above.
pub fn rank(m: &IntMatrix) -> usize {
    if m.nrows + m.ncols > EXACT_RANK_LIMIT {
        return float_rank(&m.to_dense());
    }
    exact_rank(m)
}

/// Exact rank by fraction-free sparse elimination. Runs in `i64` and restarts
/// with arbitrary-precision integers if any intermediate value overflows.
pub fn exact_rank(m: &IntMatrix) -> usize {
    let small: Vec<Vec<(usize, i64)>> = m.rows.clone();
    if let Some(r) = eliminate(small, m.ncols) {
        return r;
    }
    let big: Vec<Vec<(usize, BigInt)>> = m
        .rows
        .iter()
        .map(|r| r.iter().map(|&(j, v)| (j, BigInt::from(v))).collect())
        .collect();
    eliminate(big, m.ncols).expect("arbitrary precision never overflows")
}

/// Rank from singular values above `max(n, m) · ε · σ_max`.
pub fn float_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

fn eliminate<T>(mut rows: Vec<Vec<(usize, T)>>, ncols: usize) -> Option<usize>
where
    T: Clone + Integer + Signed + CheckedMul + CheckedSub,
{
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); ncols];
    for (i, r) in rows.iter().enumerate() {
        for (j, _) in r {
            col_rows[*j].push(i);
        }
    }
    let mut active = vec![true; rows.len()];
    let mut rank = 0;
    for c in 0..ncols {
        let mut cand = std::mem::take(&mut col_rows[c]);
        cand.sort_unstable();
        cand.dedup();
        cand.retain(|&i| active[i] && rows[i].first().is_some_and(|e| e.0 == c));
        if cand.is_empty() {
            continue;
        }
        let piv = *cand
            .iter()
            .min_by(|&&a, &&b| {
                let ka = (rows[a].len(), rows[a][0].1.abs());
                let kb = (rows[b].len(), rows[b][0].1.abs());
                ka.cmp(&kb).then(a.cmp(&b))
            })
            .expect("nonempty");
        active[piv] = false;
        rank += 1;
        let prow = std::mem::take(&mut rows[piv]);
        let p = prow[0].1.clone();
        for &i in &cand {
            if i == piv {
                continue;
            }
            let a = rows[i][0].1.clone();
            let g = p.gcd(&a);
            let fp = p.div_floor(&g);
            let fa = a.div_floor(&g);
            let merged = combine(&rows[i], &fp, &prow, &fa)?;
            for (j, _) in &merged {
                if !rows[i].iter().any(|e| e.0 == *j) {
                    col_rows[*j].push(i);
                }
            }
            rows[i] = normalize(merged);
        }
    }
    Some(rank)
}

/// `fr · r − fp · p`, dropping zeros (including the eliminated lead).
fn combine<T>(r: &[(usize, T)], fr: &T, p: &[(usize, T)], fp: &T) -> Option<Vec<(usize, T)>>
where
    T: Clone + Integer + Signed + CheckedMul + CheckedSub,
{
    let mut out = Vec::with_capacity(r.len() + p.len());
    let (mut a, mut b) = (0, 0);
    while a < r.len() || b < p.len() {
        let ca = r.get(a).map(|e| e.0).unwrap_or(usize::MAX);
        let cb = p.get(b).map(|e| e.0).unwrap_or(usize::MAX);
        let (col, v) = if ca == cb {
            let x = fr.checked_mul(&r[a].1)?;
            let y = fp.checked_mul(&p[b].1)?;
            a += 1;
            b += 1;
            (ca, x.checked_sub(&y)?)
        } else if ca < cb {
            let x = fr.checked_mul(&r[a].1)?;
            a += 1;
            (ca, x)
        } else {
            let y = fp.checked_mul(&p[b].1)?;
            b += 1;
            (cb, T::zero().checked_sub(&y)?)
        };
        if !v.is_zero() {
            out.push((col, v));
        }
    }
    Some(out)
}

fn normalize<T>(mut r: Vec<(usize, T)>) -> Vec<(usize, T)>
where
    T: Clone + Integer + Signed,
{
    let mut g = T::zero();
    for (_, v) in &r {
        g = g.gcd(v);
        if g.is_one() {
            return r;
        }
    }
    if !g.is_zero() && !g.is_one() {
        for e in &mut r {
            e.1 = e.1.div_floor(&g);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_matrices() {
        let m = IntMatrix::from_rows(3, vec![vec![(0, 1), (1, 2)], vec![(0, 2), (1, 4)], vec![(2, 3)]]);
        assert_eq!(exact_rank(&m), 2);
        assert_eq!(float_rank(&m.to_dense()), 2);
        assert_eq!(exact_rank(&IntMatrix::zeros(4, 5)), 0);
    }

    #[test]
    fn bigint_path_handles_overflow() {
        let big = i64::MAX / 3;
        let m = IntMatrix::from_rows(2, vec![vec![(0, big), (1, 1)], vec![(0, big - 1), (1, big)]]);
        assert_eq!(exact_rank(&m), 2);
    }

    #[test]
    fn transpose_and_product() {
        let m = IntMatrix::from_rows(2, vec![vec![(0, 1), (1, -1)]]);
        let p = m.mul(&m.transpose());
        assert_eq!(p.get(0, 0), 2);
        let z = m.mul(&IntMatrix::from_rows(1, vec![vec![(0, 1)], vec![(0, 1)]]));
        assert!(z.is_zero());
    }
}
