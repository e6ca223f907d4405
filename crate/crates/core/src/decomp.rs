//! Harmonic fields, Morrey and five-term decompositions, interior/boundary
//! splits and duality angles.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    detect_kernel, solve_gevp, BlockOp, KernelDecision, KernelTolerances, LobpcgOptions, Verdict,
};
use crate::witten::{BoundaryBundle, BoundaryCondition, GradedSpace, Parity, WittenBundle};

/// Field residual threshold (squared residual over the spectral normalizer).
pub const TAU_FIELD: f64 = 1e-5;
/// Singular-value threshold of the Gram (orthogonality) split.
pub const TAU_SPLIT: f64 = 1e-6;
/// Singular-value threshold of the trace split.
pub const TAU_TRACE: f64 = 1e-6;
/// Relative singular-value cutoff for least-squares ranges.
pub const RANGE_CUTOFF: f64 = 1e-10;
/// Number of eigenpairs requested for kernel detection.
pub const SPECTRUM_COUNT: usize = 8;

/// Options shared by the spectral analyses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub tolerances: KernelTolerances,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tolerances: KernelTolerances::default_profile(),
            seed: 0,
        }
    }
}

struct StiffnessOp<'a>(&'a GradedSpace, Parity);
struct MassOp<'a>(&'a GradedSpace, Parity);
struct MassInverseOp<'a>(&'a GradedSpace, Parity);

fn columnwise(x: &DMatrix<f64>, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        y.set_column(j, &f(&x.column(j).into_owned()));
    }
    y
}

impl BlockOp for StiffnessOp<'_> {
    fn dim(&self) -> usize {
        self.0.parity_dim(self.1)
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        columnwise(x, |v| self.0.apply_stiffness(self.1, v))
    }
}

impl BlockOp for MassOp<'_> {
    fn dim(&self) -> usize {
        self.0.parity_dim(self.1)
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        columnwise(x, |v| self.0.apply_mass(self.1, v))
    }
}

impl BlockOp for MassInverseOp<'_> {
    fn dim(&self) -> usize {
        self.0.parity_dim(self.1)
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        columnwise(x, |v| self.0.mass_solve(self.1, v))
    }
}

fn csr_diagonal(m: &nalgebra_sparse::CsrMatrix<f64>) -> Vec<f64> {
    let mut d = vec![0.0; m.nrows()];
    for (r, c, &v) in m.triplet_iter() {
        if r == c {
            d[r] += v;
        }
    }
    d
}

/// Sparse Cholesky of the lumped stiffness shifted by `1e-8` of its largest
/// diagonal-to-mass ratio.
fn stiffness_preconditioner(sp: &GradedSpace, p: Parity) -> Result<crate::spectral::CholeskyOp> {
    let ds = csr_diagonal(&sp.lumped_stiffness(p, 0.0));
    let dm = csr_diagonal(&sp.sparse_mass(p));
    let ratio = ds.iter().zip(&dm).map(|(a, b)| a / b).fold(0.0, f64::max);
    let shift = 1e-8 * ratio.max(f64::MIN_POSITIVE);
    crate::spectral::CholeskyOp::new(&sp.lumped_stiffness(p, shift))
}

/// Mass-orthonormal basis of the near-kernel of the stiffness pencil for one
/// boundary condition and parity.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub parity: Parity,
    pub bc: BoundaryCondition,
    /// Columns in the coordinates of the boundary condition's trial space.
    pub local: DMatrix<f64>,
    /// Columns embedded in the full invariant space.
    pub full: DMatrix<f64>,
    /// Normalized computed spectrum.
    pub spectrum: Vec<f64>,
    /// Largest computed eigenvalue (the normalizer).
    pub normalizer: f64,
    pub decision: KernelDecision,
    /// `‖Az‖²_m / normalizer` per column.
    pub residual_a: Vec<f64>,
    /// `‖δz‖²_m / normalizer` per column.
    pub residual_delta: Vec<f64>,
    /// `max(‖Az‖_m, ‖δz‖_m) / ‖[A; δ]‖` per column (diagnostic).
    pub relative_residual: Vec<f64>,
    /// Mass norm of each degree block, per column.
    pub degree_norms: Vec<Vec<(usize, f64)>>,
    pub dense_solver: bool,
}

impl HarmonicBasis {
    pub fn dim(&self) -> usize {
        self.full.ncols()
    }

    /// Smallest normalized eigenvalue above the kernel, if computed.
    pub fn lambda_min(&self) -> Option<f64> {
        self.spectrum.get(self.dim()).copied()
    }

    pub fn fields_ok(&self) -> bool {
        self.residual_a.iter().chain(&self.residual_delta).all(|&r| r <= TAU_FIELD)
    }

    /// Harmonic dimension per degree: rank of the degree blocks of the basis
    /// (meaningful when the fields are degree-homogeneous, e.g. at `s = 0`).
    pub fn degree_dims(&self, bundle: &WittenBundle) -> Vec<(usize, usize)> {
        let sp = bundle.neumann();
        sp.layout(self.parity)
            .into_iter()
            .map(|(k, off, sz)| {
                if self.dim() == 0 || sz == 0 {
                    return (k, 0);
                }
                let zk = self.full.rows(off, sz).into_owned();
                let g = zk.transpose() * (sp.mass(k) * &zk);
                let eig = SymmetricEigen::new((&g + g.transpose()) * 0.5);
                (k, eig.eigenvalues.iter().filter(|&&v| v > 1e-6).count())
            })
            .collect()
    }
}

fn m_orthonormal_columns(z: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if z.ncols() == 0 {
        return z.clone();
    }
    let g = z.transpose() * m * z;
    let g = (&g + g.transpose()) * 0.5;
    match Cholesky::new(g) {
        Some(ch) => {
            let l = ch.l();
            let lt_inv = l
                .transpose()
                .solve_upper_triangular(&DMatrix::identity(z.ncols(), z.ncols()))
                .expect("triangular");
            z * lt_inv
        }
        None => z.clone(),
    }
}

/// Near-kernel of `(S, m)` for the given boundary condition and parity.
pub fn harmonic_fields(
    bundle: &WittenBundle,
    bc: BoundaryCondition,
    parity: Parity,
    opts: &SpectralOptions,
) -> Result<HarmonicBasis> {
    let sp = bundle.space(bc);
    let n = sp.parity_dim(parity);
    let empty = |decision: KernelDecision| HarmonicBasis {
        parity,
        bc,
        local: DMatrix::zeros(n, 0),
        full: DMatrix::zeros(bundle.neumann().parity_dim(parity), 0),
        spectrum: Vec::new(),
        normalizer: 1.0,
        decision,
        residual_a: Vec::new(),
        residual_delta: Vec::new(),
        relative_residual: Vec::new(),
        degree_norms: Vec::new(),
        dense_solver: true,
    };
    if n == 0 {
        return Ok(empty(detect_kernel(&[], &opts.tolerances)));
    }
    let sop = StiffnessOp(sp, parity);
    let mop = MassOp(sp, parity);
    let top: Box<dyn BlockOp> = if n > crate::spectral::DENSE_LIMIT {
        Box::new(stiffness_preconditioner(sp, parity)?)
    } else {
        Box::new(MassInverseOp(sp, parity))
    };
    let lopts = LobpcgOptions {
        seed: opts.seed,
        ..LobpcgOptions::default()
    };
    let mut count = SPECTRUM_COUNT.min(n);
    let (eig, spectrum, normalizer, decision) = loop {
        let eig = solve_gevp(&sop, &mop, top.as_ref(), count, &lopts)?;
        let normalizer = eig.values.iter().cloned().fold(0.0, f64::max);
        let spectrum: Vec<f64> = if normalizer > 0.0 {
            eig.values.iter().map(|v| v / normalizer).collect()
        } else {
            vec![0.0; eig.values.len()]
        };
        let decision = detect_kernel(&spectrum, &opts.tolerances);
        let all_small = normalizer <= 0.0 || spectrum.iter().all(|&v| v <= opts.tolerances.tau_abs);
        if decision.verdict == Verdict::Ambiguous && all_small && count < n {
            count = (2 * count).min(n);
            continue;
        }
        if all_small && count == n {
            // the whole space is kernel
            let d = KernelDecision {
                dim: Some(n),
                gap_ratio: f64::INFINITY,
                verdict: Verdict::Clean,
            };
            break (eig, spectrum, normalizer.max(f64::MIN_POSITIVE), d);
        }
        break (eig, spectrum, normalizer, decision);
    };
    let r = match decision.dim {
        Some(r) if decision.verdict == Verdict::Clean => r,
        _ => {
            return Err(Error::AmbiguousKernel { spectrum });
        }
    };
    let md = sp.dense_mass(parity);
    let local = m_orthonormal_columns(&eig.vectors.columns(0, r).into_owned(), &md);
    let full = match bc {
        BoundaryCondition::Neumann => local.clone(),
        BoundaryCondition::Dirichlet => {
            let e = bundle.dirichlet_embedding(parity);
            &e * &local
        }
    };
    let q = parity.flip();
    let mut residual_a = Vec::with_capacity(r);
    let mut residual_delta = Vec::with_capacity(r);
    let mut relative_residual = Vec::with_capacity(r);
    for j in 0..r {
        let z = local.column(j).into_owned();
        let az = sp.norm(q, &sp.apply_a(parity, &z));
        let dz = sp.norm(q, &sp.apply_delta(parity, &z));
        residual_a.push(az * az / normalizer);
        residual_delta.push(dz * dz / normalizer);
        relative_residual.push(az.max(dz) / normalizer.sqrt());
    }
    let nsp = bundle.neumann();
    let degree_norms = (0..r)
        .map(|j| {
            nsp.layout(parity)
                .into_iter()
                .map(|(k, off, sz)| {
                    let v = full.column(j).rows(off, sz).into_owned();
                    (k, v.dot(&(nsp.mass(k) * &v)).max(0.0).sqrt())
                })
                .collect()
        })
        .collect();
    Ok(HarmonicBasis {
        parity,
        bc,
        local,
        full,
        spectrum,
        normalizer,
        decision,
        residual_a,
        residual_delta,
        relative_residual,
        degree_norms,
        dense_solver: n <= crate::spectral::DENSE_LIMIT,
    })
}

/// Solution of the weak boundary value problem.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub omega: DVector<f64>,
    /// `‖Sω − mη‖ / ‖mη‖`.
    pub residual: f64,
}

/// Solves `S ω = m η` in the trial space of `harm.bc`, with `ω` mass-orthogonal
/// to the harmonic basis. `η` is given in trial-space coordinates.
pub fn solve_poisson(bundle: &WittenBundle, harm: &HarmonicBasis, eta: &DVector<f64>) -> Result<PoissonSolution> {
    let sp = bundle.space(harm.bc);
    let p = harm.parity;
    let n = sp.parity_dim(p);
    if eta.len() != n {
        return Err(Error::DimensionMismatch { left: eta.len(), right: n });
    }
    let meta = sp.apply_mass(p, eta);
    let en = sp.norm(p, eta);
    if en == 0.0 {
        return Ok(PoissonSolution {
            omega: DVector::zeros(n),
            residual: 0.0,
        });
    }
    let proj = (harm.local.transpose() * &meta).norm() / en;
    if proj > 1e-10 {
        return Err(Error::NotOrthogonalToKernel { projection: proj });
    }
    let s = sp.dense_stiffness(p);
    let md = sp.dense_mass(p);
    let r = harm.local.ncols();
    let mz = &md * &harm.local;
    let mut big = DMatrix::zeros(n + r, n + r);
    big.view_mut((0, 0), (n, n)).copy_from(&s);
    big.view_mut((0, n), (n, r)).copy_from(&mz);
    big.view_mut((n, 0), (r, n)).copy_from(&mz.transpose());
    let mut rhs = DVector::zeros(n + r);
    rhs.rows_mut(0, n).copy_from(&meta);
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    let omega = sol.rows(0, n).into_owned();
    let residual = (&s * &omega - &meta).norm() / meta.norm();
    Ok(PoissonSolution { omega, residual })
}

/// Mass-orthogonal projector onto the column range of `b` (relative singular
/// value cutoff [`RANGE_CUTOFF`]).
pub struct RangeProjector {
    /// Mass-orthonormal basis of the range.
    pub basis: DMatrix<f64>,
    mass: DMatrix<f64>,
}

impl RangeProjector {
    pub fn new(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if b.ncols() == 0 || n == 0 {
            return Self {
                basis: DMatrix::zeros(n, 0),
                mass: m.clone(),
            };
        }
        let l = Cholesky::new(m.clone()).expect("mass is positive definite").l();
        let w = l.transpose() * b;
        let svd = w.svd(true, false);
        let u = svd.u.expect("u requested");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| smax > 0.0 && svd.singular_values[i] > RANGE_CUTOFF * smax)
            .collect();
        let ur = DMatrix::from_fn(n, keep.len(), |r, j| u[(r, keep[j])]);
        let basis = l
            .transpose()
            .solve_upper_triangular(&ur)
            .expect("triangular");
        Self { basis, mass: m.clone() }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * (&self.mass * x))
    }
}

/// Components and diagnostics of the Morrey split `ω = e + c + κ`.
#[derive(Clone, Debug)]
pub struct MorreySplit {
    pub e: DVector<f64>,
    pub c: DVector<f64>,
    pub kappa: DVector<f64>,
    pub rank_e: usize,
    pub rank_c: usize,
    pub reconstruction: f64,
    /// `|⟨a, b⟩_m| / ‖ω‖²_m` for the pairs (e,c), (e,κ), (c,κ).
    pub orthogonality: [f64; 3],
    /// `max(‖Aκ‖²_m, ‖δκ‖²_m) / (λ_max(S) ‖ω‖²_m)`.
    pub kappa_field_residual: f64,
}

/// Dense operators of one parity used by the decompositions.
pub struct ParityOperators {
    pub parity: Parity,
    pub mass: DMatrix<f64>,
    /// `d_X` on this parity (Neumann space).
    pub a: DMatrix<f64>,
    /// `δ^{(N)}` on this parity.
    pub delta: DMatrix<f64>,
    /// Range of `d_X` from Dirichlet cochains of the opposite parity, embedded.
    pub exact: RangeProjector,
    /// Range of `δ^{(N)}` from the opposite parity.
    pub coexact: RangeProjector,
    pub stiffness_max: f64,
}

impl ParityOperators {
    pub fn new(bundle: &WittenBundle, p: Parity) -> Self {
        let q = p.flip();
        let nsp = bundle.neumann();
        let dsp = bundle.dirichlet();
        let mass = nsp.dense_mass(p);
        let a = nsp.dense_a(p);
        let delta = nsp.dense_delta(p);
        let e_basis = bundle.dirichlet_embedding(p) * dsp.dense_a(q);
        let c_basis = nsp.dense_delta(q);
        let exact = RangeProjector::new(&e_basis, &mass);
        let coexact = RangeProjector::new(&c_basis, &mass);
        let s = nsp.dense_stiffness(p);
        let stiffness_max = if s.nrows() == 0 {
            0.0
        } else {
            crate::spectral::dense_gevp(&s, &mass, s.nrows())
                .map(|e| e.values.last().cloned().unwrap_or(0.0))
                .unwrap_or(0.0)
        };
        Self {
            parity: p,
            mass,
            a,
            delta,
            exact,
            coexact,
            stiffness_max,
        }
    }

    fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.mass * y))
    }

    fn other_mass_norm2(&self, bundle: &WittenBundle, v: &DVector<f64>) -> f64 {
        let sp = bundle.neumann();
        sp.inner(self.parity.flip(), v, v)
    }
}

/// `e = P_E ω`, `c = P_C(ω − e)`, `κ = ω − e − c` by sequential mass-weighted
/// least squares.
pub fn morrey_decompose(bundle: &WittenBundle, ops: &ParityOperators, omega: &DVector<f64>) -> MorreySplit {
    let e = ops.exact.project(omega);
    let c = ops.coexact.project(&(omega - &e));
    let kappa = omega - &e - &c;
    let w2 = ops.inner(omega, omega).max(f64::MIN_POSITIVE);
    let recon = (omega - &e - &c - &kappa).norm() / omega.norm().max(f64::MIN_POSITIVE);
    let orth = [
        ops.inner(&e, &c).abs() / w2,
        ops.inner(&e, &kappa).abs() / w2,
        ops.inner(&c, &kappa).abs() / w2,
    ];
    let ak = ops.other_mass_norm2(bundle, &(&ops.a * &kappa));
    let dk = ops.other_mass_norm2(bundle, &(&ops.delta * &kappa));
    let kappa_field_residual = if ops.stiffness_max > 0.0 {
        ak.max(dk) / (ops.stiffness_max * w2)
    } else {
        0.0
    };
    MorreySplit {
        e,
        c,
        kappa,
        rank_e: ops.exact.rank(),
        rank_c: ops.coexact.rank(),
        reconstruction: recon,
        orthogonality: orth,
        kappa_field_residual,
    }
}

/// Principal angles (ascending, radians) between the spans of two
/// mass-orthonormal column sets. Small angles use the sine formulation for
/// accuracy.
pub fn principal_angles(u: &DMatrix<f64>, v: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let (u, v) = if u.ncols() >= v.ncols() { (u, v) } else { (v, u) };
    let q = v.ncols();
    if q == 0 {
        return Vec::new();
    }
    let g = u.transpose() * m * v;
    let mut cos: Vec<f64> = g.clone().svd(false, false).singular_values.iter().map(|s| s.min(1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    let resid = v - u * &g;
    let mr = resid.transpose() * m * &resid;
    let mr = (&mr + mr.transpose()) * 0.5;
    let mut sin: Vec<f64> = SymmetricEigen::new(mr)
        .eigenvalues
        .iter()
        .map(|&x| x.max(0.0).sqrt().min(1.0))
        .collect();
    sin.sort_by(|a, b| a.total_cmp(b));
    (0..q)
        .map(|i| {
            if cos[i] >= std::f64::consts::FRAC_1_SQRT_2 {
                sin[i].asin()
            } else {
                cos[i].acos()
            }
        })
        .collect()
}

/// Duality angles between interior Neumann and interior Dirichlet subspaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub angles: Vec<f64>,
    pub dim_neumann: usize,
    pub dim_dirichlet: usize,
    /// Smallest singular value of either sub-basis Gram (orthonormality check).
    pub conditioning: f64,
}

pub fn duality_angles(i_n: &DMatrix<f64>, i_d: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<AngleReport> {
    if i_n.ncols() != i_d.ncols() {
        return Err(Error::DimensionMismatch {
            left: i_n.ncols(),
            right: i_d.ncols(),
        });
    }
    let gram_min = |z: &DMatrix<f64>| {
        if z.ncols() == 0 {
            1.0
        } else {
            let g = z.transpose() * m * z;
            SymmetricEigen::new((&g + g.transpose()) * 0.5).eigenvalues.min()
        }
    };
    Ok(AngleReport {
        angles: principal_angles(i_n, i_d, m),
        dim_neumann: i_n.ncols(),
        dim_dirichlet: i_d.ncols(),
        conditioning: gram_min(i_n).min(gram_min(i_d)),
    })
}

/// Components and diagnostics of the five-term split.
#[derive(Clone, Debug)]
pub struct FiveTermSplit {
    pub morrey: MorreySplit,
    pub h_n: DVector<f64>,
    pub h_d: DVector<f64>,
    pub h_exco: DVector<f64>,
    pub reconstruction: f64,
    /// `|⟨a, b⟩_m| / ‖ω‖²_m` over the pairs of e, c, h_N + h_D, h_exco.
    pub orthogonality: f64,
    /// Smallest principal angle between the full Neumann and Dirichlet spaces.
    pub harmonic_angle: Option<f64>,
}

/// Splits `κ` further into its oblique `H_N + H_D` parts and the remainder.
pub fn five_term_decompose(
    bundle: &WittenBundle,
    ops: &ParityOperators,
    hn: &HarmonicBasis,
    hd: &HarmonicBasis,
    omega: &DVector<f64>,
) -> Result<FiveTermSplit> {
    let morrey = morrey_decompose(bundle, ops, omega);
    let m = &ops.mass;
    let closed = bundle.dirichlet().parity_dim(ops.parity) == bundle.neumann().parity_dim(ops.parity);
    // without boundary the two harmonic spaces coincide
    let (rn, rd) = (hn.dim(), if closed { 0 } else { hd.dim() });
    let harmonic_angle = if rn > 0 && rd > 0 {
        let a = principal_angles(&hn.full, &hd.full, m)[0];
        if a < 1e-6 {
            return Err(Error::IllConditionedOblique { angle: a });
        }
        Some(a)
    } else {
        None
    };
    let n = omega.len();
    let mut w = DMatrix::zeros(n, rn + rd);
    w.columns_mut(0, rn).copy_from(&hn.full);
    w.columns_mut(rn, rd).copy_from(&hd.full.columns(0, rd));
    let (h_n, h_d) = if rn + rd == 0 {
        (DVector::zeros(n), DVector::zeros(n))
    } else {
        let g = w.transpose() * m * &w;
        let rhs = w.transpose() * (m * &morrey.kappa);
        let coef = g.lu().solve(&rhs).ok_or(Error::IllConditionedOblique { angle: 0.0 })?;
        (&hn.full * coef.rows(0, rn), hd.full.columns(0, rd) * coef.rows(rn, rd))
    };
    let h_exco = &morrey.kappa - &h_n - &h_d;
    let recon_v = omega - &morrey.e - &morrey.c - &h_n - &h_d - &h_exco;
    let w2 = ops.inner(omega, omega).max(f64::MIN_POSITIVE);
    let h = &h_n + &h_d;
    let parts = [&morrey.e, &morrey.c, &h, &h_exco];
    let mut orth = 0.0f64;
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            orth = orth.max(ops.inner(parts[i], parts[j]).abs() / w2);
        }
    }
    Ok(FiveTermSplit {
        reconstruction: recon_v.norm() / omega.norm().max(f64::MIN_POSITIVE),
        morrey,
        h_n,
        h_d,
        h_exco,
        orthogonality: orth,
        harmonic_angle,
    })
}

/// Interior/boundary split of one harmonic basis with both membership tests.
#[derive(Clone, Debug)]
pub struct SplitBases {
    pub bc: BoundaryCondition,
    pub parity: Parity,
    /// Interior sub-basis (full coordinates, mass-orthonormal), Gram method.
    pub interior: DMatrix<f64>,
    /// Boundary sub-basis, Gram method.
    pub boundary: DMatrix<f64>,
    /// Interior sub-basis from the trace method.
    pub trace_interior: DMatrix<f64>,
    pub gram_singular_values: Vec<f64>,
    pub trace_singular_values: Vec<f64>,
    /// Largest principal angle between the two interior subspaces.
    pub method_angle: f64,
    pub method_agreement: bool,
    /// Largest `|entry|` of the cross-Gram of the boundary part against the
    /// other harmonic space.
    pub boundary_cross_gram: f64,
}

/// Right singular split of `g` (rows: tests, columns: basis coefficients):
/// returns (null-space coefficients, complement coefficients, singular values).
fn null_split(g: &DMatrix<f64>, cols: usize, tau: f64) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    if cols == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), Vec::new());
    }
    if g.nrows() == 0 {
        return (DMatrix::identity(cols, cols), DMatrix::zeros(cols, 0), Vec::new());
    }
    let gtg = g.transpose() * g;
    let eig = SymmetricEigen::new((&gtg + gtg.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sv: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let big: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() > tau).collect();
    let small: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() <= tau).collect();
    let pick = |ids: &[usize]| DMatrix::from_fn(cols, ids.len(), |r, j| eig.eigenvectors[(r, ids[j])]);
    (pick(&small), pick(&big), sv)
}

/// Interior/boundary split of `basis` using `other` (the opposite boundary
/// condition, same parity). `boundary` carries the Witten bundle of `∂M` and
/// its harmonic bases of both parities (`[even, odd]`).
pub fn interior_boundary_split(
    bundle: &WittenBundle,
    parent: &crate::complex::OrientedComplex,
    basis: &HarmonicBasis,
    other: &HarmonicBasis,
    boundary: Option<(&BoundaryBundle, &[HarmonicBasis; 2])>,
) -> Result<SplitBases> {
    let p = basis.parity;
    let nsp = bundle.neumann();
    let m = nsp.dense_mass(p);
    let z = &basis.full;
    let r = z.ncols();
    let g = other.full.transpose() * &m * z;
    let (null_a, comp_a, gram_sv) = null_split(&g, r, TAU_SPLIT);
    let boundary_part = if r > 0 { z * &null_a } else { z.clone() };
    let interior_a = if r > 0 { z * &comp_a } else { z.clone() };
    let boundary_cross_gram = if boundary_part.ncols() > 0 && other.dim() > 0 {
        (other.full.transpose() * &m * &boundary_part).amax()
    } else {
        0.0
    };
    let (trace_interior, trace_sv) = match boundary {
        None => (z.clone(), Vec::new()),
        Some((bb, bh)) => {
            let f = match basis.bc {
                BoundaryCondition::Neumann => {
                    let lam = &bh[if p == Parity::Even { 0 } else { 1 }];
                    let bsp = bb.bundle.neumann();
                    let mut f = DMatrix::zeros(lam.dim(), r);
                    let mut scale = 0.0f64;
                    for j in 0..r {
                        let y = bb.pullback(bundle, p, &z.column(j).into_owned());
                        scale = scale.max(bsp.norm(p, &y));
                        let my = bsp.apply_mass(p, &y);
                        f.set_column(j, &(lam.full.transpose() * my));
                    }
                    if scale > 0.0 {
                        f /= scale;
                    }
                    f
                }
                BoundaryCondition::Dirichlet => {
                    let q = p.flip();
                    let lam = &bh[if q == Parity::Even { 0 } else { 1 }];
                    let mut f = DMatrix::zeros(lam.dim(), r);
                    for i in 0..lam.dim() {
                        let ext = bb.extend(bundle, parent, q, &lam.full.column(i).into_owned());
                        let ae = nsp.apply_a(q, &ext);
                        let an = nsp.norm(p, &ae);
                        for j in 0..r {
                            let zj = z.column(j).into_owned();
                            let zn = nsp.norm(p, &zj);
                            let v = nsp.inner(p, &ae, &zj);
                            f[(i, j)] = if an * zn > 0.0 { v / (an * zn) } else { 0.0 };
                        }
                    }
                    f
                }
            };
            let (null_b, _, sv) = null_split(&f, r, TAU_TRACE);
            (if r > 0 { z * null_b } else { z.clone() }, sv)
        }
    };
    let same_dim = interior_a.ncols() == trace_interior.ncols();
    let method_angle = if same_dim && interior_a.ncols() > 0 {
        principal_angles(&interior_a, &trace_interior, &m)
            .last()
            .cloned()
            .unwrap_or(0.0)
    } else if same_dim {
        0.0
    } else {
        std::f64::consts::FRAC_PI_2
    };
    let method_agreement = same_dim && method_angle <= TAU_SPLIT;
    if !method_agreement {
        return Err(Error::MethodDisagreement {
            gram_interior: interior_a.ncols(),
            trace_interior: trace_interior.ncols(),
            angle: method_angle,
        });
    }
    Ok(SplitBases {
        bc: basis.bc,
        parity: p,
        interior: interior_a,
        boundary: boundary_part,
        trace_interior,
        gram_singular_values: gram_sv,
        trace_singular_values: trace_sv,
        method_angle,
        method_agreement,
        boundary_cross_gram,
    })
}

/// Largest relative distance, over a basis of `ker A_p`, between the
/// remainder after removing the harmonic projection and the range of `d_X`
/// from the opposite parity (Neumann space).
pub fn representative_defect(bundle: &WittenBundle, ops: &ParityOperators, harm: &HarmonicBasis) -> f64 {
    let p = ops.parity;
    let nsp = bundle.neumann();
    let mq = nsp.dense_mass(p.flip());
    let m = &ops.mass;
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let lp = Cholesky::new(m.clone()).expect("mass").l();
    let lq = if mq.nrows() > 0 {
        Cholesky::new(mq.clone()).expect("mass").l()
    } else {
        DMatrix::zeros(0, 0)
    };
    // whitened A: Lqᵀ A Lp^{-T}
    let lpt_inv = lp.transpose().solve_upper_triangular(&DMatrix::identity(n, n)).expect("tri");
    let aw = lq.transpose() * &ops.a * &lpt_inv;
    let svd = aw.clone().svd(true, true);
    let vt = svd.v_t.expect("v");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut sv = vec![0.0; n];
    for (i, s) in svd.singular_values.iter().enumerate() {
        sv[i] = *s;
    }
    let kernel: Vec<usize> = (0..n).filter(|&i| i >= vt.nrows() || sv[i] <= 1e-10 * smax.max(1.0)).collect();
    let e_basis = nsp.dense_a(p.flip());
    let range = RangeProjector::new(&e_basis, m);
    let mut worst = 0.0f64;
    for &i in &kernel {
        let xw = if i < vt.nrows() {
            vt.row(i).transpose()
        } else {
            continue;
        };
        let x = &lpt_inv * xw;
        let h = &harm.full * (harm.full.transpose() * (m * &x));
        let rem = &x - h;
        let dist = &rem - range.project(&rem);
        let xn = x.dot(&(m * &x)).sqrt();
        worst = worst.max(dist.dot(&(m * &dist)).max(0.0).sqrt() / xn);
    }
    worst
}

/// One row of an angle sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub angle_index: usize,
    pub angle_radians: f64,
    pub margin_to_0: f64,
    pub margin_to_halfpi: f64,
}

/// Angles per `s`; an `s` with empty interior subspaces yields no rows and is
/// listed in `empty`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub empty: Vec<f64>,
    pub failures: Vec<(f64, String)>,
}

impl SweepTable {
    pub fn push_angles(&mut self, s: f64, angles: &[f64]) {
        if angles.is_empty() {
            self.empty.push(s);
        }
        for (i, &a) in angles.iter().enumerate() {
            self.rows.push(SweepRow {
                s,
                angle_index: i,
                angle_radians: a,
                margin_to_0: a,
                margin_to_halfpi: std::f64::consts::FRAC_PI_2 - a,
            });
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "angle_index", "angle_radians", "margin_to_0", "margin_to_halfpi"])?;
        for r in &self.rows {
            wr.serialize((r.s, r.angle_index, r.angle_radians, r.margin_to_0, r.margin_to_halfpi))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Everything computed for one mesh at one deformation parameter.
pub struct LevelAnalysis {
    pub s: f64,
    pub bundle: WittenBundle,
    /// Neumann harmonic bases `[even, odd]`.
    pub neumann: [HarmonicBasis; 2],
    /// Dirichlet harmonic bases `[even, odd]`.
    pub dirichlet: [HarmonicBasis; 2],
    pub boundary: Option<(BoundaryBundle, [HarmonicBasis; 2])>,
    /// Splits `[even, odd]` of the Neumann and Dirichlet bases.
    pub split_neumann: [SplitBases; 2],
    pub split_dirichlet: [SplitBases; 2],
}

pub fn parity_index(p: Parity) -> usize {
    match p {
        Parity::Even => 0,
        Parity::Odd => 1,
    }
}

pub const PARITIES: [Parity; 2] = [Parity::Even, Parity::Odd];

fn pair<T>(f: impl Fn(Parity) -> Result<T>) -> Result<[T; 2]> {
    Ok([f(Parity::Even)?, f(Parity::Odd)?])
}

/// Harmonic bases of both boundary conditions and parities, boundary data and
/// interior/boundary splits.
pub fn analyze_level(mesh: &crate::mesh::LoadedMesh, s: f64, opts: &SpectralOptions) -> Result<LevelAnalysis> {
    let bundle = crate::witten::assemble_bundle(&mesh.complex, &mesh.geometry, &mesh.action, &mesh.field, s)?;
    analyze_bundle(mesh, bundle, opts)
}

pub fn analyze_bundle(mesh: &crate::mesh::LoadedMesh, bundle: WittenBundle, opts: &SpectralOptions) -> Result<LevelAnalysis> {
    let s = bundle.s();
    let neumann = pair(|p| harmonic_fields(&bundle, BoundaryCondition::Neumann, p, opts))?;
    let dirichlet = pair(|p| harmonic_fields(&bundle, BoundaryCondition::Dirichlet, p, opts))?;
    let boundary = match crate::witten::boundary_bundle(&mesh.complex, &mesh.geometry, &mesh.action, &mesh.field, s)? {
        None => None,
        Some(bb) => {
            let bh = pair(|p| harmonic_fields(&bb.bundle, BoundaryCondition::Neumann, p, opts))?;
            Some((bb, bh))
        }
    };
    let bref = boundary.as_ref().map(|(b, h)| (b, h));
    let split_neumann = pair(|p| {
        let i = parity_index(p);
        interior_boundary_split(&bundle, &mesh.complex, &neumann[i], &dirichlet[i], bref)
    })?;
    let split_dirichlet = pair(|p| {
        let i = parity_index(p);
        interior_boundary_split(&bundle, &mesh.complex, &dirichlet[i], &neumann[i], bref)
    })?;
    Ok(LevelAnalysis {
        s,
        bundle,
        neumann,
        dirichlet,
        boundary,
        split_neumann,
        split_dirichlet,
    })
}

impl LevelAnalysis {
    /// `[even N, odd N, even D, odd D]`.
    pub fn dims(&self) -> [usize; 4] {
        [
            self.neumann[0].dim(),
            self.neumann[1].dim(),
            self.dirichlet[0].dim(),
            self.dirichlet[1].dim(),
        ]
    }

    pub fn mass(&self, p: Parity) -> DMatrix<f64> {
        self.bundle.neumann().dense_mass(p)
    }

    /// Duality angles between the interior Neumann and Dirichlet subspaces.
    pub fn angles(&self, p: Parity) -> Result<AngleReport> {
        let i = parity_index(p);
        duality_angles(&self.split_neumann[i].interior, &self.split_dirichlet[i].interior, &self.mass(p))
    }

    /// Smallest principal angle between the full Neumann and Dirichlet spaces
    /// (only meaningful with boundary).
    pub fn harmonic_angle(&self, p: Parity) -> Option<f64> {
        if self.boundary.is_none() {
            return None;
        }
        let i = parity_index(p);
        let a = principal_angles(&self.neumann[i].full, &self.dirichlet[i].full, &self.mass(p));
        a.first().copied()
    }
}

/// Duality angles over a list of deformation parameters on one mesh.
pub fn angle_sweep(mesh: &crate::mesh::LoadedMesh, s_values: &[f64], opts: &SpectralOptions) -> SweepTable {
    use rayon::prelude::*;
    let results: Vec<(f64, Result<Vec<f64>>)> = s_values
        .par_iter()
        .map(|&s| {
            let r = analyze_level(mesh, s, opts).and_then(|a| {
                let mut out = Vec::new();
                for p in PARITIES {
                    out.extend(a.angles(p)?.angles);
                }
                Ok(out)
            });
            (s, r)
        })
        .collect();
    let mut table = SweepTable {
        rows: Vec::new(),
        empty: Vec::new(),
        failures: Vec::new(),
    };
    for (s, r) in results {
        match r {
            Ok(angles) => table.push_angles(s, &angles),
            Err(e) => table.failures.push((s, e.to_string())),
        }
    }
    table
}
