//! Witten-deformed operators `d_X = d + s ι_X` on invariant cochains, graded
//! by parity, with Neumann and Dirichlet trial spaces.

use nalgebra::{DMatrix, DVector, Vector3};
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{boundary_subcomplex, OrientedComplex, SubcomplexSelector};
use crate::error::Result;
use crate::geometry::{
    assemble_all, csr_from_triplets, interpolate, interpolate_density, EmbeddedGeometry, FnForm, PLVectorField,
};
use crate::spectral::MassSolver;
use crate::symmetry::{invariant_basis, CyclicAction, InvariantBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn of(k: usize) -> Self {
        if k % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Degrees `0..=n` of this parity, ascending.
    pub fn degrees(self, n: usize) -> Vec<usize> {
        (0..=n).filter(|&k| Parity::of(k) == self).collect()
    }
}

/// Invariant cochains of one trial space (all orbits for Neumann, interior
/// orbits for Dirichlet) with their mass, coboundary and contraction blocks.
pub struct GradedSpace {
    bc: BoundaryCondition,
    n: usize,
    s: f64,
    /// Orbit index (in the full invariant basis) of every coordinate.
    orbit_ids: Vec<Vec<usize>>,
    mass: Vec<CsrMatrix<f64>>,
    d: Vec<CsrMatrix<f64>>,
    b: Vec<CsrMatrix<f64>>,
    solvers: Vec<MassSolver>,
}

fn restrict_csr(m: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix<f64> {
    let mut col_map = vec![usize::MAX; m.ncols()];
    for (new, &old) in cols.iter().enumerate() {
        col_map[old] = new;
    }
    let mut trip = Vec::new();
    for (ri, &r) in rows.iter().enumerate() {
        let row = m.row(r);
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            if col_map[c] != usize::MAX {
                trip.push((ri, col_map[c], v));
            }
        }
    }
    csr_from_triplets(rows.len(), cols.len(), trip)
}

fn jt_a_j(jl: &CsrMatrix<f64>, a: &CsrMatrix<f64>, jr: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let jlt = jl.transpose();
    &(&jlt * a) * jr
}

impl GradedSpace {
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim_of_degree(&self, k: usize) -> usize {
        self.orbit_ids[k].len()
    }

    pub fn orbit_ids(&self, k: usize) -> &[usize] {
        &self.orbit_ids[k]
    }

    pub fn mass(&self, k: usize) -> &CsrMatrix<f64> {
        &self.mass[k]
    }

    pub fn coboundary(&self, k: usize) -> &CsrMatrix<f64> {
        &self.d[k]
    }

    pub fn contraction(&self, k: usize) -> &CsrMatrix<f64> {
        &self.b[k]
    }

    /// `(degree, offset, size)` blocks of a parity vector.
    pub fn layout(&self, p: Parity) -> Vec<(usize, usize, usize)> {
        let mut off = 0;
        p.degrees(self.n)
            .into_iter()
            .map(|k| {
                let sz = self.dim_of_degree(k);
                let e = (k, off, sz);
                off += sz;
                e
            })
            .collect()
    }

    pub fn parity_dim(&self, p: Parity) -> usize {
        self.layout(p).iter().map(|e| e.2).sum()
    }

    fn block<'a>(&self, p: Parity, x: &'a DVector<f64>, k: usize) -> Option<nalgebra::DVectorView<'a, f64>> {
        self.layout(p)
            .into_iter()
            .find(|e| e.0 == k)
            .map(|(_, off, sz)| x.rows(off, sz))
    }

    fn add_block(&self, p: Parity, y: &mut DVector<f64>, k: usize, v: &DVector<f64>) {
        if let Some((_, off, sz)) = self.layout(p).into_iter().find(|e| e.0 == k) {
            let mut r = y.rows_mut(off, sz);
            r += v;
        }
    }

    pub fn apply_mass(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (k, off, sz) in self.layout(p) {
            let v = &self.mass[k] * x.rows(off, sz).into_owned();
            y.rows_mut(off, sz).copy_from(&v);
        }
        y
    }

    pub fn mass_solve(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (k, off, sz) in self.layout(p) {
            let v = self.solvers[k].solve(&x.rows(off, sz).into_owned());
            y.rows_mut(off, sz).copy_from(&v);
        }
        y
    }

    pub fn inner(&self, p: Parity, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.apply_mass(p, y))
    }

    pub fn norm(&self, p: Parity, x: &DVector<f64>) -> f64 {
        self.inner(p, x, x).max(0.0).sqrt()
    }

    /// `K_p x = m D x + s B x`, so that `A_p = m^{-1} K_p`.
    pub fn apply_k(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let q = p.flip();
        let mut y = DVector::zeros(self.parity_dim(q));
        for k in p.degrees(self.n) {
            let xk = self.block(p, x, k).expect("degree present").into_owned();
            if k < self.n {
                let v = &self.mass[k + 1] * (&self.d[k] * &xk);
                self.add_block(q, &mut y, k + 1, &v);
            }
            if k >= 1 && self.s != 0.0 {
                let v = (&self.b[k] * &xk) * self.s;
                self.add_block(q, &mut y, k - 1, &v);
            }
        }
        y
    }

    /// `K_pᵀ y` for `y` of the opposite parity.
    pub fn apply_kt(&self, p: Parity, y: &DVector<f64>) -> DVector<f64> {
        let q = p.flip();
        let mut x = DVector::zeros(self.parity_dim(p));
        for k in p.degrees(self.n) {
            let mut acc = DVector::zeros(self.dim_of_degree(k));
            if k < self.n {
                let yk = self.block(q, y, k + 1).expect("degree present").into_owned();
                acc += self.d[k].transpose() * (&self.mass[k + 1] * yk);
            }
            if k >= 1 && self.s != 0.0 {
                let yk = self.block(q, y, k - 1).expect("degree present").into_owned();
                acc += (self.b[k].transpose() * yk) * self.s;
            }
            self.add_block(p, &mut x, k, &acc);
        }
        x
    }

    /// `d_X` on parity `p`: `A_p x = D x + s m^{-1} B x`. The coboundary part is
    /// applied exactly so that `A_{1−p}A_p = 0` holds exactly at `s = 0`.
    pub fn apply_a(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let q = p.flip();
        let mut y = DVector::zeros(self.parity_dim(q));
        let mut contr = DVector::zeros(self.parity_dim(q));
        for k in p.degrees(self.n) {
            let xk = self.block(p, x, k).expect("degree present").into_owned();
            if k < self.n {
                let v = &self.d[k] * &xk;
                self.add_block(q, &mut y, k + 1, &v);
            }
            if k >= 1 && self.s != 0.0 {
                let v = (&self.b[k] * &xk) * self.s;
                self.add_block(q, &mut contr, k - 1, &v);
            }
        }
        if self.s != 0.0 {
            y += self.mass_solve(q, &contr);
        }
        y
    }

    /// Mass-adjoint of `d_X` on this trial space, mapping parity `p` to the
    /// opposite parity: `δ = m^{-1} K_{1−p}ᵀ`.
    pub fn apply_delta(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let q = p.flip();
        self.mass_solve(q, &self.apply_kt(q, x))
    }

    /// `S_p x = K_pᵀ m^{-1} K_p x + K_{1−p} m^{-1} K_{1−p}ᵀ x`.
    pub fn apply_stiffness(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let q = p.flip();
        let a = self.apply_kt(p, &self.mass_solve(q, &self.apply_k(p, x)));
        let b = self.apply_k(q, &self.mass_solve(q, &self.apply_kt(q, x)));
        a + b
    }

    /// Sparse `K_p` with rows in the opposite parity's layout.
    pub fn sparse_k(&self, p: Parity) -> CsrMatrix<f64> {
        let q = p.flip();
        let offs = |par: Parity| {
            let mut o = vec![0; self.n + 1];
            for (k, off, _) in self.layout(par) {
                o[k] = off;
            }
            o
        };
        let (po, qo) = (offs(p), offs(q));
        let mut trip = Vec::new();
        let mut push = |m: &CsrMatrix<f64>, r0: usize, c0: usize, f: f64| {
            for (r, c, &v) in m.triplet_iter() {
                trip.push((r0 + r, c0 + c, f * v));
            }
        };
        for k in p.degrees(self.n) {
            if k < self.n {
                push(&(&self.mass[k + 1] * &self.d[k]), qo[k + 1], po[k], 1.0);
            }
            if k >= 1 && self.s != 0.0 {
                push(&self.b[k], qo[k - 1], po[k], self.s);
            }
        }
        csr_from_triplets(self.parity_dim(q), self.parity_dim(p), trip)
    }

    /// Sparse mass of parity `p`.
    pub fn sparse_mass(&self, p: Parity) -> CsrMatrix<f64> {
        let mut trip = Vec::new();
        for (k, off, _) in self.layout(p) {
            for (r, c, &v) in self.mass[k].triplet_iter() {
                trip.push((off + r, off + c, v));
            }
        }
        let n = self.parity_dim(p);
        csr_from_triplets(n, n, trip)
    }

    /// Sparse stiffness with the inner mass inverses replaced by the inverse
    /// diagonal, plus `shift · m`. Spectrally equivalent to `S_p + shift · m`.
    pub fn lumped_stiffness(&self, p: Parity, shift: f64) -> CsrMatrix<f64> {
        let q = p.flip();
        let mq = self.sparse_mass(q);
        let dinv: Vec<f64> = (0..mq.nrows())
            .map(|i| {
                let row = mq.row(i);
                let d = row
                    .col_indices()
                    .iter()
                    .zip(row.values())
                    .find(|(&c, _)| c == i)
                    .map(|(_, &v)| v)
                    .unwrap_or(1.0);
                1.0 / d
            })
            .collect();
        let scale = |m: &CsrMatrix<f64>| {
            let mut m = m.clone();
            for (r, _, v) in m.triplet_iter_mut() {
                *v *= dinv[r];
            }
            m
        };
        let kp = self.sparse_k(p);
        let kq = self.sparse_k(q);
        let kqt = kq.transpose();
        let a = &kp.transpose() * &scale(&kp);
        let b = &kq * &scale(&kqt);
        let mut out = &a + &b;
        if shift != 0.0 {
            out = &out + &(&self.sparse_mass(p) * shift);
        }
        out
    }

    fn dense_from(&self, cols: usize, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
        let mut out: Option<DMatrix<f64>> = None;
        for j in 0..cols {
            let mut e = DVector::zeros(cols);
            e[j] = 1.0;
            let v = f(&e);
            let o = out.get_or_insert_with(|| DMatrix::zeros(v.len(), cols));
            o.set_column(j, &v);
        }
        out.unwrap_or_else(|| DMatrix::zeros(0, 0))
    }

    pub fn dense_mass(&self, p: Parity) -> DMatrix<f64> {
        let n = self.parity_dim(p);
        let mut m = DMatrix::zeros(n, n);
        for (k, off, sz) in self.layout(p) {
            m.view_mut((off, off), (sz, sz)).copy_from(&DMatrix::from(&self.mass[k]));
        }
        m
    }

    pub fn dense_a(&self, p: Parity) -> DMatrix<f64> {
        let rows = self.parity_dim(p.flip());
        let m = self.dense_from(self.parity_dim(p), |e| self.apply_a(p, e));
        if m.nrows() == 0 {
            DMatrix::zeros(rows, self.parity_dim(p))
        } else {
            m
        }
    }

    pub fn dense_delta(&self, p: Parity) -> DMatrix<f64> {
        let rows = self.parity_dim(p.flip());
        let m = self.dense_from(self.parity_dim(p), |e| self.apply_delta(p, e));
        if m.nrows() == 0 {
            DMatrix::zeros(rows, self.parity_dim(p))
        } else {
            m
        }
    }

    /// Dense symmetric stiffness `(S + Sᵀ)/2`.
    pub fn dense_stiffness(&self, p: Parity) -> DMatrix<f64> {
        let n = self.parity_dim(p);
        let s = self.dense_from(n, |e| self.apply_stiffness(p, e));
        if n == 0 {
            return DMatrix::zeros(0, 0);
        }
        (&s + s.transpose()) * 0.5
    }
}

/// All invariant operators of one (mesh, action, field, s).
pub struct WittenBundle {
    n: usize,
    s: f64,
    basis: InvariantBasis,
    neumann: GradedSpace,
    dirichlet: GradedSpace,
}

/// Assembles the invariant mass, coboundary and contraction blocks and the
/// Neumann and Dirichlet trial spaces.
pub fn assemble_bundle(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    a: &CyclicAction,
    x: &PLVectorField,
    s: f64,
) -> Result<WittenBundle> {
    let basis = invariant_basis(c, a);
    assemble_with_basis(c, g, basis, x, s)
}

pub fn assemble_with_basis(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    basis: InvariantBasis,
    x: &PLVectorField,
    s: f64,
) -> Result<WittenBundle> {
    let n = c.dim();
    let (masses, contractions) = assemble_all(g, c, x);
    let m_full: Vec<CsrMatrix<f64>> = (0..=n).map(|k| jt_a_j(basis.j(k), &masses[k], basis.j(k))).collect();
    let mut b_full = vec![CsrMatrix::zeros(0, basis.dim(0))];
    for k in 1..=n {
        b_full.push(jt_a_j(basis.j(k - 1), &contractions[k], basis.j(k)));
    }
    let mut d_full = Vec::with_capacity(n);
    for k in 0..n {
        let dt = c.coboundary(k).transpose();
        let mut trip = Vec::new();
        for (col, o) in basis.orbits(k).iter().enumerate() {
            let mut acc: std::collections::BTreeMap<usize, i64> = Default::default();
            for &(sigma, sg) in &o.members {
                for &(tau, v) in dt.row(sigma) {
                    *acc.entry(tau).or_insert(0) += v * sg as i64;
                }
            }
            for (row, o2) in basis.orbits(k + 1).iter().enumerate() {
                let rep = o2.representative();
                if let Some(&v) = acc.get(&rep) {
                    if v != 0 {
                        trip.push((row, col, v as f64));
                    }
                }
            }
        }
        d_full.push(csr_from_triplets(basis.dim(k + 1), basis.dim(k), trip));
    }
    let all: Vec<Vec<usize>> = (0..=n).map(|k| (0..basis.dim(k)).collect()).collect();
    let interior: Vec<Vec<usize>> = (0..=n)
        .map(|k| {
            (0..basis.dim(k))
                .filter(|&o| !c.is_boundary(k, basis.orbits(k)[o].representative()))
                .collect()
        })
        .collect();
    let neumann = graded(BoundaryCondition::Neumann, n, s, &all, &m_full, &d_full, &b_full)?;
    let dirichlet = graded(BoundaryCondition::Dirichlet, n, s, &interior, &m_full, &d_full, &b_full)?;
    Ok(WittenBundle {
        n,
        s,
        basis,
        neumann,
        dirichlet,
    })
}

fn graded(
    bc: BoundaryCondition,
    n: usize,
    s: f64,
    keep: &[Vec<usize>],
    m: &[CsrMatrix<f64>],
    d: &[CsrMatrix<f64>],
    b: &[CsrMatrix<f64>],
) -> Result<GradedSpace> {
    let mass: Vec<CsrMatrix<f64>> = (0..=n).map(|k| restrict_csr(&m[k], &keep[k], &keep[k])).collect();
    let dd: Vec<CsrMatrix<f64>> = (0..n).map(|k| restrict_csr(&d[k], &keep[k + 1], &keep[k])).collect();
    let mut bb = vec![CsrMatrix::zeros(0, keep[0].len())];
    for k in 1..=n {
        bb.push(restrict_csr(&b[k], &keep[k - 1], &keep[k]));
    }
    let solvers = mass
        .iter()
        .enumerate()
        .map(|(k, mk)| MassSolver::new(mk, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradedSpace {
        bc,
        n,
        s,
        orbit_ids: keep.to_vec(),
        mass,
        d: dd,
        b: bb,
        solvers,
    })
}

impl WittenBundle {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn basis(&self) -> &InvariantBasis {
        &self.basis
    }

    pub fn space(&self, bc: BoundaryCondition) -> &GradedSpace {
        match bc {
            BoundaryCondition::Neumann => &self.neumann,
            BoundaryCondition::Dirichlet => &self.dirichlet,
        }
    }

    pub fn neumann(&self) -> &GradedSpace {
        &self.neumann
    }

    pub fn dirichlet(&self) -> &GradedSpace {
        &self.dirichlet
    }

    /// Embeds Dirichlet coordinates into the full invariant space (boundary
    /// coefficients exactly zero).
    pub fn embed_dirichlet(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.neumann.parity_dim(p));
        let nl = self.neumann.layout(p);
        for (k, off, _) in self.dirichlet.layout(p) {
            let noff = nl.iter().find(|e| e.0 == k).expect("degree").1;
            for (i, &o) in self.dirichlet.orbit_ids(k).iter().enumerate() {
                y[noff + o] = x[off + i];
            }
        }
        y
    }

    /// Dense embedding matrix of [`Self::embed_dirichlet`].
    pub fn dirichlet_embedding(&self, p: Parity) -> DMatrix<f64> {
        let nd = self.dirichlet.parity_dim(p);
        let mut e = DMatrix::zeros(self.neumann.parity_dim(p), nd);
        for j in 0..nd {
            let mut v = DVector::zeros(nd);
            v[j] = 1.0;
            e.set_column(j, &self.embed_dirichlet(p, &v));
        }
        e
    }

    /// Keeps the interior coordinates of a full invariant vector.
    pub fn restrict_to_dirichlet(&self, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dirichlet.parity_dim(p));
        let nl = self.neumann.layout(p);
        for (k, off, _) in self.dirichlet.layout(p) {
            let noff = nl.iter().find(|e| e.0 == k).expect("degree").1;
            for (i, &o) in self.dirichlet.orbit_ids(k).iter().enumerate() {
                y[off + i] = x[noff + o];
            }
        }
        y
    }

    /// Full invariant parity vector from per-degree invariant coordinates.
    pub fn pack(&self, p: Parity, parts: &[(usize, DVector<f64>)]) -> DVector<f64> {
        let mut y = DVector::zeros(self.neumann.parity_dim(p));
        for (k, v) in parts {
            self.neumann.add_block(p, &mut y, *k, v);
        }
        y
    }

    /// Degree-`k` block of a full invariant parity vector.
    pub fn component(&self, p: Parity, x: &DVector<f64>, k: usize) -> DVector<f64> {
        self.neumann
            .block(p, x, k)
            .map(|v| v.into_owned())
            .unwrap_or_else(|| DVector::zeros(0))
    }
}

/// Result of [`green_residual`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub pairs: usize,
    /// Largest `|⟨d_Xα, β⟩ − ⟨α, δβ⟩|` relative to `‖d_Xα‖‖β‖ + ‖α‖‖δβ‖`.
    pub r1: f64,
    /// Same with α Dirichlet-projected.
    pub r2: f64,
}

/// Green's identity on random pairs, over both parities.
pub fn green_residual(bundle: &WittenBundle, pairs: usize, seed: u64) -> GreenReport {
    let sp = bundle.neumann();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r1 = 0.0f64;
    let mut r2 = 0.0f64;
    for i in 0..pairs {
        let p = if i % 2 == 0 { Parity::Even } else { Parity::Odd };
        let q = p.flip();
        let alpha = DVector::from_fn(sp.parity_dim(p), |_, _| rng.gen::<f64>() - 0.5);
        let beta = DVector::from_fn(sp.parity_dim(q), |_, _| rng.gen::<f64>() - 0.5);
        let rel = |al: &DVector<f64>| {
            let a_al = sp.apply_a(p, al);
            let d_be = sp.apply_delta(q, &beta);
            let lhs = sp.inner(q, &a_al, &beta);
            let rhs = sp.inner(p, al, &d_be);
            let scale = sp.norm(q, &a_al) * sp.norm(q, &beta) + sp.norm(p, al) * sp.norm(p, &d_be);
            if scale == 0.0 {
                0.0
            } else {
                (lhs - rhs).abs() / scale
            }
        };
        r1 = r1.max(rel(&alpha));
        let ad = bundle.embed_dirichlet(p, &bundle.restrict_to_dirichlet(p, &alpha));
        r2 = r2.max(rel(&ad));
    }
    GreenReport { pairs, r1, r2 }
}

/// Smooth invariant test forms used by the nilpotency probe, as full
/// invariant parity vectors.
pub fn standard_test_forms(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    bundle: &WittenBundle,
) -> Vec<(Parity, DVector<f64>)> {
    let n = c.dim();
    let basis = bundle.basis();
    let f0 = interpolate(
        g,
        c,
        &FnForm {
            degree: 0,
            f: |p: &Vector3<f64>, _: &[Vector3<f64>]| 1.0 + p.norm_squared(),
        },
    );
    let rot = interpolate(
        g,
        c,
        &FnForm {
            degree: 1,
            f: |p: &Vector3<f64>, v: &[Vector3<f64>]| {
                (1.0 + p.x * p.x + p.y * p.y) * (-p.y * v[0].x + p.x * v[0].y)
            },
        },
    );
    let radial = interpolate(
        g,
        c,
        &FnForm {
            degree: 1,
            f: |p: &Vector3<f64>, v: &[Vector3<f64>]| p.dot(&v[0]),
        },
    );
    let top = interpolate_density(g, c, &|p: &Vector3<f64>| 1.0 + p.norm_squared());
    let inv = |k: usize, v: &DVector<f64>| basis.coordinates(k, v);
    let mut out = Vec::new();
    let top_p = Parity::of(n);
    let one_p = Parity::Odd;
    let pk = |p: Parity, parts: Vec<(usize, DVector<f64>)>| bundle.pack(p, &parts);
    out.push((Parity::Even, pk(Parity::Even, vec![(0, inv(0, &f0))])));
    out.push((top_p, pk(top_p, vec![(n, inv(n, &top))])));
    out.push((one_p, pk(one_p, vec![(1, inv(1, &rot))])));
    out.push((one_p, pk(one_p, vec![(1, inv(1, &radial))])));
    out.push((one_p, pk(one_p, vec![(1, inv(1, &rot) + inv(1, &radial))])));
    if top_p == Parity::Even {
        out.push((Parity::Even, pk(Parity::Even, vec![(0, inv(0, &f0)), (n, inv(n, &top))])));
    }
    out.retain(|(_, v)| v.norm() > 0.0);
    out
}

/// Nilpotency defect per parity: `η_p = max ‖A_{1−p}A_p x‖_m / ‖x‖_m` over the
/// given test vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NilpotencyReport {
    pub even: f64,
    pub odd: f64,
}

impl NilpotencyReport {
    pub fn max(&self) -> f64 {
        self.even.max(self.odd)
    }
}

pub fn nilpotency_defect(bundle: &WittenBundle, tests: &[(Parity, DVector<f64>)]) -> NilpotencyReport {
    let sp = bundle.neumann();
    let mut rep = NilpotencyReport { even: 0.0, odd: 0.0 };
    for (p, x) in tests {
        let y = sp.apply_a(p.flip(), &sp.apply_a(*p, x));
        let nx = sp.norm(*p, x);
        if nx == 0.0 {
            continue;
        }
        let r = sp.norm(*p, &y) / nx;
        match p {
            Parity::Even => rep.even = rep.even.max(r),
            Parity::Odd => rep.odd = rep.odd.max(r),
        }
    }
    rep
}

/// Total integral of `dω` against the boundary integral of `ω` for a full
/// `(n−1)`-cochain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesProbe {
    pub interior: f64,
    pub boundary: f64,
    pub discrete_gap: f64,
}

pub fn stokes_probe(c: &OrientedComplex, omega: &DVector<f64>) -> StokesProbe {
    let n = c.dim();
    let d = c.coboundary(n - 1);
    let mut interior = 0.0;
    for (t, &sg) in c.top_signs().iter().enumerate() {
        let v: f64 = d.row(t).iter().map(|&(j, e)| e as f64 * omega[j]).sum();
        interior += sg as f64 * v;
    }
    let mut boundary = 0.0;
    for f in 0..c.count(n - 1) {
        if c.is_boundary(n - 1, f) {
            boundary += c.induced_sign(f) as f64 * omega[f];
        }
    }
    StokesProbe {
        interior,
        boundary,
        discrete_gap: (interior - boundary).abs(),
    }
}

/// `x dy − y dx` interpolated on a planar or embedded mesh.
pub fn angular_form(c: &OrientedComplex, g: &EmbeddedGeometry) -> DVector<f64> {
    interpolate(
        g,
        c,
        &FnForm {
            degree: 1,
            f: |p: &Vector3<f64>, v: &[Vector3<f64>]| p.x * v[0].y - p.y * v[0].x,
        },
    )
}

/// The Witten bundle of `∂M` with the restricted action and field, together
/// with the inclusion selector.
pub struct BoundaryBundle {
    pub complex: OrientedComplex,
    pub selector: SubcomplexSelector,
    pub bundle: WittenBundle,
}

pub fn boundary_bundle(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    a: &CyclicAction,
    x: &PLVectorField,
    s: f64,
) -> Result<Option<BoundaryBundle>> {
    if !c.has_boundary() {
        return Ok(None);
    }
    let (bc, sel) = boundary_subcomplex(c)?;
    let bg = g.restrict(&bc, &sel.vertex_map)?;
    let ba = a.restrict(&bc, &sel)?;
    let bx = x.restrict(&sel.vertex_map);
    let bundle = assemble_bundle(&bc, &bg, &ba, &bx, s)?;
    Ok(Some(BoundaryBundle {
        complex: bc,
        selector: sel,
        bundle,
    }))
}

impl BoundaryBundle {
    /// Pullback `i*` of a full invariant parity vector of `M` to invariant
    /// coordinates on `∂M` (same parity).
    pub fn pullback(&self, parent: &WittenBundle, p: Parity, x: &DVector<f64>) -> DVector<f64> {
        let nb = self.complex.dim();
        let mut parts = Vec::new();
        for k in p.degrees(nb) {
            let xk = parent.component(p, x, k);
            let full = parent.basis().expand(k, &xk);
            let child = DVector::from_iterator(self.selector.parent[k].len(), self.selector.parent[k].iter().map(|&i| full[i]));
            parts.push((k, self.bundle.basis().coordinates(k, &child)));
        }
        self.bundle.pack(p, &parts)
    }

    /// Extension by zero of a boundary invariant vector into invariant
    /// coordinates on `M` (same parity).
    pub fn extend(&self, parent: &WittenBundle, parent_complex: &OrientedComplex, p: Parity, y: &DVector<f64>) -> DVector<f64> {
        let nb = self.complex.dim();
        let mut parts = Vec::new();
        for k in p.degrees(nb) {
            let yk = self.bundle.component(p, y, k);
            let child = self.bundle.basis().expand(k, &yk);
            let mut full = DVector::zeros(parent_complex.count(k));
            for (i, &pi) in self.selector.parent[k].iter().enumerate() {
                full[pi] = child[i];
            }
            parts.push((k, parent.basis().coordinates(k, &full)));
        }
        parent.pack(p, &parts)
    }
}
