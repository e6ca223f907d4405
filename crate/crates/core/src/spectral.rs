//! Generalized symmetric eigenproblems, near-kernel detection and mass solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problems with at most this many unknowns are solved densely.
pub const DENSE_LIMIT: usize = 500;

/// Symmetric linear operator applied to blocks of column vectors.
pub trait BlockOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

impl BlockOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

impl BlockOp for CsrMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

/// Diagonal scaling operator.
pub struct Diagonal(pub DVector<f64>);

impl BlockOp for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        for (i, mut row) in y.row_iter_mut().enumerate() {
            row *= self.0[i];
        }
        y
    }
}

/// Eigenpairs sorted by ascending eigenvalue; vectors are mass-orthonormal.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Dense `S x = λ m x` by Cholesky reduction to a standard symmetric problem.
pub fn dense_gevp(s: &DMatrix<f64>, m: &DMatrix<f64>, count: usize) -> Result<Eigenpairs> {
    let n = s.nrows();
    if m.nrows() != n || s.ncols() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch { left: n, right: m.nrows() });
    }
    let count = count.min(n);
    if n == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::SingularMass { degree: usize::MAX })?;
    let l = chol.l();
    let linv_s = l.solve_lower_triangular(s).expect("triangular solve");
    let c = l
        .solve_lower_triangular(&linv_s.transpose())
        .expect("triangular solve");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, count, |r, j| eig.eigenvectors[(r, order[j])]);
    let vectors = l.transpose().solve_upper_triangular(&y).expect("triangular solve");
    let mut vectors = vectors;
    fix_signs(&mut vectors);
    Ok(Eigenpairs { values, vectors })
}

/// Makes the largest-magnitude entry of each column positive.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-14 * best.abs().max(1e-300) {
                best = x;
            }
        }
        if best < 0.0 {
            col *= -1.0;
        }
    }
}

/// Settings of the block iterative solver.
#[derive(Clone, Debug)]
pub struct LobpcgOptions {
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub extra_block: usize,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: 1e-8,
            max_iterations: 5_000,
            extra_block: 4,
        }
    }
}

fn operator_norm(s: &dyn BlockOp, seed: u64) -> f64 {
    let n = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut x = DMatrix::from_fn(n, 1, |_, _| rng.gen::<f64>() - 0.5);
    let mut lam = 0.0;
    for _ in 0..60 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        x /= nx;
        let y = s.apply(&x);
        lam = y.norm();
        x = y;
    }
    lam
}

/// `m`-orthonormal basis of the column span of `q` (columns with relative
/// Gram eigenvalue below `1e-12` are dropped).
fn m_orthonormalize(q: &DMatrix<f64>, mq: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = q.transpose() * mq;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let gmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * gmax)
        .collect();
    let mut t = DMatrix::zeros(q.ncols(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let sc = 1.0 / eig.eigenvalues[i].sqrt();
        t.set_column(j, &(eig.eigenvectors.column(i) * sc));
    }
    (q * &t, mq * &t)
}

/// Smallest `count` eigenpairs of `S x = λ m x` by LOBPCG with preconditioner
/// `t`, from a seeded random start. Residuals satisfy
/// `‖Sx − λmx‖ ≤ tolerance · ‖S‖ · ‖x‖`.
pub fn lobpcg(
    s: &dyn BlockOp,
    m: &dyn BlockOp,
    t: &dyn BlockOp,
    count: usize,
    opts: &LobpcgOptions,
) -> Result<Eigenpairs> {
    let n = s.dim();
    let count = count.min(n);
    let k = (count + opts.extra_block).min(n);
    if count == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        });
    }
    let snorm = operator_norm(s, opts.seed).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DMatrix::from_fn(n, k, |_, _| rng.gen::<f64>() - 0.5);
    let (mut x, _) = m_orthonormalize(&x0, &m.apply(&x0));
    let mut p: Option<DMatrix<f64>> = None;
    let mut last_res = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let sx = s.apply(&x);
        let mx = m.apply(&x);
        let h = x.transpose() * &sx;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..x.ncols()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let c = DMatrix::from_fn(x.ncols(), x.ncols(), |r, j| eig.eigenvectors[(r, order[j])]);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = &x * &c;
        let sx = sx * &c;
        let mx = mx * &c;
        let mut r = sx.clone();
        for j in 0..x.ncols() {
            let col = r.column(j) - mx.column(j) * theta[j];
            r.set_column(j, &col);
        }
        let worst = (0..count)
            .map(|j| r.column(j).norm() / (snorm * x.column(j).norm()))
            .fold(0.0, f64::max);
        last_res = worst;
        if worst <= opts.tolerance {
            let mut vectors = x.columns(0, count).into_owned();
            fix_signs(&mut vectors);
            return Ok(Eigenpairs {
                values: theta[..count].to_vec(),
                vectors,
            });
        }
        let w = t.apply(&r);
        let mut blocks = vec![x.clone(), w];
        if let Some(pp) = &p {
            blocks.push(pp.clone());
        }
        let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut q = DMatrix::zeros(n, cols);
        let mut off = 0;
        for b in &blocks {
            q.columns_mut(off, b.ncols()).copy_from(b);
            off += b.ncols();
        }
        let mq = m.apply(&q);
        let (mut qo, _) = m_orthonormalize(&q, &mq);
        if qo.ncols() < k {
            // the search space collapsed: refill with random directions
            let fill = DMatrix::from_fn(n, k, |_, _| rng.gen::<f64>() - 0.5);
            let mut q2 = DMatrix::zeros(n, qo.ncols() + k);
            q2.columns_mut(0, qo.ncols()).copy_from(&qo);
            q2.columns_mut(qo.ncols(), k).copy_from(&fill);
            let mq2 = m.apply(&q2);
            qo = m_orthonormalize(&q2, &mq2).0;
        }
        let sq = s.apply(&qo);
        let hq = qo.transpose() * &sq;
        let hq = (&hq + hq.transpose()) * 0.5;
        let eq = SymmetricEigen::new(hq);
        let mut ord: Vec<usize> = (0..qo.ncols()).collect();
        ord.sort_by(|&a, &b| eq.eigenvalues[a].total_cmp(&eq.eigenvalues[b]));
        let kk = k.min(qo.ncols());
        let cnew = DMatrix::from_fn(qo.ncols(), kk, |r, j| eq.eigenvectors[(r, ord[j])]);
        let xnew = &qo * cnew;
        let proj = x.transpose() * m.apply(&xnew);
        p = Some(&xnew - &x * proj);
        x = xnew;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: last_res,
    })
}

/// Dense solve for small problems, LOBPCG otherwise.
pub fn solve_gevp(
    s: &dyn BlockOp,
    m: &dyn BlockOp,
    t: &dyn BlockOp,
    count: usize,
    opts: &LobpcgOptions,
) -> Result<Eigenpairs> {
    let n = s.dim();
    if n <= DENSE_LIMIT {
        let eye = DMatrix::identity(n, n);
        let sd = s.apply(&eye);
        let md = m.apply(&eye);
        dense_gevp(&((&sd + sd.transpose()) * 0.5), &((&md + md.transpose()) * 0.5), count)
    } else {
        lobpcg(s, m, t, count, opts)
    }
}

/// Thresholds of the near-kernel detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTolerances {
    pub rho_min: f64,
    pub tau_abs: f64,
    pub tau_floor: f64,
}

impl KernelTolerances {
    pub fn default_profile() -> Self {
        Self {
            rho_min: 100.0,
            tau_abs: 1e-5,
            tau_floor: 1e-15,
        }
    }

    pub fn strict_profile() -> Self {
        Self {
            rho_min: 100.0,
            tau_abs: 1e-7,
            tau_floor: 1e-15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    Ambiguous,
}

/// Outcome of [`detect_kernel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDecision {
    pub dim: Option<usize>,
    pub gap_ratio: f64,
    pub verdict: Verdict,
}

/// Kernel dimension from ascending normalized eigenvalues: the largest `r`
/// with `λ_r ≤ τ_abs` and `λ_{r+1} / max(λ_r, τ_floor) ≥ ρ_min`. `r = 0` needs
/// `λ_1 / τ_abs ≥ ρ_min`. If every value is below `τ_abs` the spectrum is too
/// short to decide and the verdict is ambiguous.
pub fn detect_kernel(eigs: &[f64], tol: &KernelTolerances) -> KernelDecision {
    let ambiguous = KernelDecision {
        dim: None,
        gap_ratio: 0.0,
        verdict: Verdict::Ambiguous,
    };
    if eigs.is_empty() {
        return KernelDecision {
            dim: Some(0),
            gap_ratio: f64::INFINITY,
            verdict: Verdict::Clean,
        };
    }
    for r in (1..eigs.len()).rev() {
        let lr = eigs[r - 1];
        if lr <= tol.tau_abs {
            let gap = eigs[r] / lr.max(tol.tau_floor);
            if gap >= tol.rho_min {
                return KernelDecision {
                    dim: Some(r),
                    gap_ratio: gap,
                    verdict: Verdict::Clean,
                };
            }
        }
    }
    if eigs[0] > tol.tau_abs {
        let gap = eigs[0] / tol.tau_abs;
        if gap >= tol.rho_min {
            return KernelDecision {
                dim: Some(0),
                gap_ratio: gap,
                verdict: Verdict::Clean,
            };
        }
        return KernelDecision { gap_ratio: gap, ..ambiguous };
    }
    ambiguous
}

/// Sparse Cholesky solve as a block operator (preconditioner).
pub struct CholeskyOp(pub CscCholesky<f64>);

impl CholeskyOp {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self> {
        CscCholesky::factor(&CscMatrix::from(a))
            .map(Self)
            .map_err(|_| Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            })
    }
}

impl BlockOp for CholeskyOp {
    fn dim(&self) -> usize {
        self.0.l().nrows()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.solve(x)
    }
}

/// Full-rank block of a mass matrix, factored once and reused.
pub enum MassSolver {
    Dense(Cholesky<f64, Dyn>),
    Sparse(Box<CscCholesky<f64>>),
    Iterative { matrix: CsrMatrix<f64>, inv_diag: DVector<f64> },
}

/// Size above which mass solves switch from dense to sparse factorization.
pub const MASS_DENSE_LIMIT: usize = 1500;
/// Size above which mass solves switch to preconditioned conjugate gradients.
pub const MASS_DIRECT_LIMIT: usize = 40_000;
/// Relative residual of iterative mass solves.
pub const MASS_CG_TOLERANCE: f64 = 1e-12;

impl MassSolver {
    pub fn new(m: &CsrMatrix<f64>, degree: usize) -> Result<Self> {
        let n = m.nrows();
        if n <= MASS_DENSE_LIMIT {
            let d = DMatrix::from(m);
            return Cholesky::new(d).map(MassSolver::Dense).ok_or(Error::SingularMass { degree });
        }
        if n <= MASS_DIRECT_LIMIT {
            let csc = CscMatrix::from(m);
            return CscCholesky::factor(&csc)
                .map(|f| MassSolver::Sparse(Box::new(f)))
                .map_err(|_| Error::SingularMass { degree });
        }
        let mut inv_diag = DVector::zeros(n);
        for (i, row) in m.row_iter().enumerate() {
            let d = row
                .col_indices()
                .iter()
                .zip(row.values())
                .find(|(&j, _)| j == i)
                .map(|(_, &v)| v)
                .unwrap_or(0.0);
            if d <= 0.0 {
                return Err(Error::SingularMass { degree });
            }
            inv_diag[i] = 1.0 / d;
        }
        Ok(MassSolver::Iterative {
            matrix: m.clone(),
            inv_diag,
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            MassSolver::Dense(c) => c.solve(b),
            MassSolver::Sparse(c) => {
                let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
                let x = c.solve(&bm);
                DVector::from_column_slice(x.as_slice())
            }
            MassSolver::Iterative { matrix, inv_diag } => pcg(matrix, inv_diag, b),
        }
    }
}

fn pcg(a: &CsrMatrix<f64>, inv_diag: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let bn = b.norm();
    let mut x = DVector::zeros(b.len());
    if bn == 0.0 {
        return x;
    }
    let mut r = b.clone();
    let mut z = r.component_mul(inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..10 * b.len() {
        let ap = a * &p;
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= MASS_CG_TOLERANCE * bn {
            break;
        }
        z = r.component_mul(inv_diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_problem() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]));
        let m = DMatrix::identity(3, 3);
        let e = dense_gevp(&s, &m, 3).unwrap();
        assert_eq!(e.values.len(), 3);
        assert!(e.values[0].abs() < 1e-15 && e.values[1].abs() < 1e-15);
        assert!((e.values[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn s_equal_m_gives_unit_spectrum() {
        let a = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let m = &a * a.transpose() + DMatrix::identity(4, 4);
        let e = dense_gevp(&m, &m, 4).unwrap();
        for v in e.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let g = e.vectors.transpose() * &m * &e.vectors;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn detector_examples() {
        let tol = KernelTolerances::default_profile();
        let d = detect_kernel(&[1e-12, 1e-12, 2e-3, 0.1, 1.0], &tol);
        assert_eq!(d.dim, Some(2));
        assert_eq!(d.verdict, Verdict::Clean);
        let d = detect_kernel(&[3e-5, 5e-5, 8e-5, 1e-4, 1.0], &tol);
        assert_eq!(d.verdict, Verdict::Ambiguous);
        assert_eq!(d.dim, None);
        let d = detect_kernel(&[2e-2, 0.3, 1.0], &tol);
        assert_eq!(d.dim, Some(0));
    }

    #[test]
    fn mass_solvers_agree() {
        let n = 50;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i, i + 1, 1.0));
                trip.push((i + 1, i, 1.0));
            }
        }
        let m = crate::geometry::csr_from_triplets(n, n, trip);
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let dense = MassSolver::new(&m, 0).unwrap().solve(&b);
        let sparse = MassSolver::Sparse(Box::new(CscCholesky::factor(&CscMatrix::from(&m)).unwrap())).solve(&b);
        let inv_diag = DVector::from_element(n, 0.25);
        let it = MassSolver::Iterative { matrix: m.clone(), inv_diag }.solve(&b);
        assert!((&dense - &sparse).amax() < 1e-12);
        assert!((&dense - &it).amax() < 1e-11);
    }
}
