//! Cyclic isometry actions, orbit-sum invariant bases and the fixed-point
//! subcomplex.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use nalgebra_sparse::CsrMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::complex::{sort_sign, OrientedComplex, SubcomplexSelector};
use crate::error::{Error, Result};
use crate::geometry::{csr_from_triplets, EmbeddedGeometry, PLVectorField};
use crate::intmat::IntMatrix;

/// A ℤ_m action generated by one vertex permutation, with the induced signed
/// simplex permutations `R_k e_σ = sign · e_{π(σ)}`.
#[derive(Clone, Debug)]
pub struct CyclicAction {
    order: usize,
    perm: Vec<usize>,
    images: Vec<Vec<(usize, i8)>>,
}

impl CyclicAction {
    /// Builds the induced simplex maps; fails if `perm` is not a permutation
    /// or maps some simplex outside the complex.
    pub fn new(c: &OrientedComplex, order: usize, perm: Vec<usize>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidAction("order must be positive".into()));
        }
        if perm.len() != c.n_vertices() {
            return Err(Error::InvalidAction(format!(
                "permutation has {} entries for {} vertices",
                perm.len(),
                c.n_vertices()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidAction(format!("vertex map is not a permutation (image {p})")));
            }
            seen[p] = true;
        }
        let mut images = Vec::with_capacity(c.dim() + 1);
        for k in 0..=c.dim() {
            let mut level = Vec::with_capacity(c.count(k));
            for s in c.simplices(k) {
                let img: Vec<usize> = s.iter().map(|&v| perm[v]).collect();
                let j = c.find(&img).ok_or_else(|| {
                    Error::InvalidAction(format!("image of simplex {s:?} is not a simplex"))
                })?;
                level.push((j, sort_sign(&img)));
            }
            images.push(level);
        }
        Ok(Self { order, perm, images })
    }

    pub fn trivial(c: &OrientedComplex) -> Self {
        Self::new(c, 1, (0..c.n_vertices()).collect()).expect("identity is an action")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vertex_perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn vertex_image(&self, v: usize) -> usize {
        self.perm[v]
    }

    pub fn simplex_image(&self, k: usize, i: usize) -> (usize, i8) {
        self.images[k][i]
    }

    /// `R_k` as an integer matrix.
    pub fn r_matrix(&self, k: usize) -> IntMatrix {
        let n = self.images[k].len();
        let mut rows = vec![Vec::new(); n];
        for (i, &(j, s)) in self.images[k].iter().enumerate() {
            rows[j].push((i, s as i64));
        }
        IntMatrix::from_rows(n, rows)
    }

    /// Rotation `Q` (proper, least squares) with `Q(p_v − c) ≈ p_{π(v)} − c`.
    pub fn linear_part(&self, g: &EmbeddedGeometry) -> Matrix3<f64> {
        let pts = g.coords();
        if pts.is_empty() {
            return Matrix3::identity();
        }
        let centroid = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / pts.len() as f64;
        let mut h = Matrix3::zeros();
        for (v, p) in pts.iter().enumerate() {
            h += (p - centroid) * (pts[self.perm[v]] - centroid).transpose();
        }
        let svd = h.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v requested");
        let v = vt.transpose();
        let d = (v * u.transpose()).determinant().signum();
        let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
        v * fix * u.transpose()
    }

    /// Restriction to a subcomplex preserved by the action.
    pub fn restrict(&self, sub: &OrientedComplex, sel: &SubcomplexSelector) -> Result<Self> {
        let mut relabel = vec![usize::MAX; self.perm.len()];
        for (new, &old) in sel.vertex_map.iter().enumerate() {
            relabel[old] = new;
        }
        let perm: Vec<usize> = sel
            .vertex_map
            .iter()
            .map(|&old| relabel[self.perm[old]])
            .collect();
        if perm.contains(&usize::MAX) {
            return Err(Error::InvalidAction("action does not preserve the subcomplex".into()));
        }
        Self::new(sub, self.order, perm)
    }
}

/// Result of [`validate_action`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDiagnostics {
    pub order: usize,
    pub isometry_defect: f64,
    pub orientation_signs_positive: bool,
    pub boundary_preserved: bool,
    pub chain_map_exact: bool,
    pub field_invariance_defect: Option<f64>,
}

/// Checks π^m = id, isometry, chain-map identity, boundary preservation,
/// orientation preservation and (optionally) invariance of the field.
pub fn validate_action(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    a: &CyclicAction,
    field: Option<&PLVectorField>,
) -> Result<ActionDiagnostics> {
    for v in 0..c.n_vertices() {
        let mut w = v;
        for _ in 0..a.order {
            w = a.perm[w];
        }
        if w != v {
            return Err(Error::InvalidAction(format!(
                "π^{} does not fix vertex {v} (orbit of vertex {v})",
                a.order
            )));
        }
    }
    let tol = 1e-12 * g.scale();
    let mut iso = 0.0f64;
    if c.dim() >= 1 {
        for e in c.simplices(1) {
            let l0 = (g.position(e[0]) - g.position(e[1])).norm();
            let l1 = (g.position(a.perm[e[0]]) - g.position(a.perm[e[1]])).norm();
            let d = (l0 - l1).abs();
            if d > tol {
                return Err(Error::NotIsometry { edge: e.clone(), defect: d });
            }
            iso = iso.max(d);
        }
    }
    let n = c.dim();
    let signs = c.top_signs();
    for t in 0..c.count(n) {
        let (img, s) = a.images[n][t];
        if signs[t] * s * signs[img] != 1 {
            return Err(Error::OrientationReversing {
                simplex: c.simplex(n, t).to_vec(),
            });
        }
    }
    for k in 0..=n {
        for i in 0..c.count(k) {
            let (j, _) = a.images[k][i];
            if c.is_boundary(k, i) != c.is_boundary(k, j) {
                return Err(Error::BoundaryNotPreserved {
                    simplex: c.simplex(k, i).to_vec(),
                });
            }
        }
    }
    for k in 0..n {
        let lhs = a.r_matrix(k + 1).mul(c.coboundary(k));
        let rhs = c.coboundary(k).mul(&a.r_matrix(k));
        if lhs != rhs {
            return Err(Error::InvalidAction(format!("R D ≠ D R in degree {k}")));
        }
    }
    let field_invariance_defect = match field {
        Some(x) => {
            let q = a.linear_part(g);
            let xmax = x.max_norm();
            let scale = if xmax > 0.0 { xmax } else { 1.0 };
            let mut worst = 0.0f64;
            for v in 0..c.n_vertices() {
                let d = (x.at(a.perm[v]) - q * x.at(v)).norm() / scale;
                if d > 1e-9 {
                    return Err(Error::FieldNotInvariant { vertex: v, defect: d });
                }
                worst = worst.max(d);
            }
            Some(worst)
        }
        None => None,
    };
    Ok(ActionDiagnostics {
        order: a.order,
        isometry_defect: iso,
        orientation_signs_positive: true,
        boundary_preserved: true,
        chain_map_exact: true,
        field_invariance_defect,
    })
}

/// One orbit of simplices with the sign of each member in the orbit sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Orbit {
    pub members: Vec<(usize, i8)>,
}

impl Orbit {
    pub fn representative(&self) -> usize {
        self.members[0].0
    }
}

/// Orbit-sum bases `J_k` of the invariant cochains.
#[derive(Clone, Debug)]
pub struct InvariantBasis {
    orbits: Vec<Vec<Orbit>>,
    j: Vec<CsrMatrix<f64>>,
    /// Orbit index of every simplex (`None` for simplices in sign-cancelling
    /// orbits).
    orbit_of: Vec<Vec<Option<usize>>>,
}

impl InvariantBasis {
    pub fn dim(&self, k: usize) -> usize {
        self.orbits[k].len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.orbits.iter().map(Vec::len).collect()
    }

    pub fn orbits(&self, k: usize) -> &[Orbit] {
        &self.orbits[k]
    }

    pub fn j(&self, k: usize) -> &CsrMatrix<f64> {
        &self.j[k]
    }

    pub fn orbit_of(&self, k: usize, simplex: usize) -> Option<usize> {
        self.orbit_of[k][simplex]
    }

    /// Invariant coordinates `(JᵀJ)^{-1} Jᵀ c` of a full cochain.
    pub fn coordinates(&self, k: usize, full: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            self.orbits[k].len(),
            self.orbits[k].iter().map(|o| {
                o.members.iter().map(|&(i, s)| s as f64 * full[i]).sum::<f64>() / o.members.len() as f64
            }),
        )
    }

    /// Full cochain `J x` from invariant coordinates.
    pub fn expand(&self, k: usize, x: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        &self.j[k] * x
    }
}

/// Orbit sums of every simplex under the action; orbits that return to their
/// start with a sign flip cancel and contribute no column.
pub fn invariant_basis(c: &OrientedComplex, a: &CyclicAction) -> InvariantBasis {
    let mut orbits = Vec::new();
    let mut js = Vec::new();
    let mut orbit_of = Vec::new();
    for k in 0..=c.dim() {
        let nk = c.count(k);
        let mut visited = vec![false; nk];
        let mut level: Vec<Orbit> = Vec::new();
        let mut owner = vec![None; nk];
        for i in 0..nk {
            if visited[i] {
                continue;
            }
            let mut members = vec![(i, 1i8)];
            visited[i] = true;
            let mut cur = i;
            let mut sign = 1i8;
            loop {
                let (next, s) = a.simplex_image(k, cur);
                sign *= s;
                if next == i {
                    break;
                }
                visited[next] = true;
                members.push((next, sign));
                cur = next;
            }
            if sign == 1 {
                for &(m, _) in &members {
                    owner[m] = Some(level.len());
                }
                level.push(Orbit { members });
            }
        }
        let trip: Vec<(usize, usize, f64)> = level
            .iter()
            .enumerate()
            .flat_map(|(col, o)| o.members.iter().map(move |&(r, s)| (r, col, s as f64)))
            .collect();
        js.push(csr_from_triplets(nk, level.len(), trip));
        orbits.push(level);
        orbit_of.push(owner);
    }
    InvariantBasis {
        orbits,
        j: js,
        orbit_of,
    }
}

type RatRow = BTreeMap<usize, Ratio<i64>>;

fn projector_rows(basis: &InvariantBasis, k: usize, n: usize) -> Vec<RatRow> {
    let mut rows = vec![RatRow::new(); n];
    for o in &basis.orbits[k] {
        let len = o.members.len() as i64;
        for &(a, sa) in &o.members {
            for &(b, sb) in &o.members {
                rows[a].insert(b, Ratio::new((sa * sb) as i64, len));
            }
        }
    }
    rows
}

fn rat_mul(a: &[RatRow], b: &[RatRow]) -> Vec<RatRow> {
    a.iter()
        .map(|row| {
            let mut out = RatRow::new();
            for (&k, &x) in row {
                for (&j, &y) in &b[k] {
                    *out.entry(j).or_insert_with(|| Ratio::from_integer(0)) += x * y;
                }
            }
            out.retain(|_, v| *v != Ratio::from_integer(0));
            out
        })
        .collect()
}

fn int_rows(m: &IntMatrix) -> Vec<RatRow> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|&(j, v)| (j, Ratio::from_integer(v))).collect())
        .collect()
}

/// Exact rational checks of the invariant projector `Π_k = J(JᵀJ)^{-1}Jᵀ`:
/// idempotence, `R_k Π_k = Π_k`, and `Π_{k+1} D_k = D_k Π_k`.
pub fn projector_identities_hold(c: &OrientedComplex, a: &CyclicAction, basis: &InvariantBasis, k: usize) -> bool {
    let nk = c.count(k);
    let p = projector_rows(basis, k, nk);
    if rat_mul(&p, &p) != p {
        return false;
    }
    if rat_mul(&int_rows(&a.r_matrix(k)), &p) != p {
        return false;
    }
    if k < c.dim() {
        let d = int_rows(c.coboundary(k));
        let p1 = projector_rows(basis, k + 1, c.count(k + 1));
        if rat_mul(&p1, &d) != rat_mul(&d, &p) {
            return false;
        }
    }
    true
}

/// Fixed-point set `N(X)`: the closed subcomplex of simplices whose vertices
/// are all fixed. With `trusted` (generator metadata) those vertices are used
/// directly; otherwise a vertex is fixed when π fixes it and
/// `|X| ≤ 1e-12 · mesh scale`.
pub fn fixed_subcomplex(
    c: &OrientedComplex,
    g: &EmbeddedGeometry,
    a: &CyclicAction,
    x: &PLVectorField,
    trusted: Option<&[usize]>,
) -> (OrientedComplex, SubcomplexSelector) {
    let fixed: Vec<bool> = match trusted {
        Some(list) => {
            let mut f = vec![false; c.n_vertices()];
            for &v in list {
                f[v] = true;
            }
            f
        }
        None => (0..c.n_vertices())
            .map(|v| a.vertex_image(v) == v && x.at(v).norm() <= 1e-12 * g.scale())
            .collect(),
    };
    let vertex_map: Vec<usize> = (0..c.n_vertices()).filter(|&v| fixed[v]).collect();
    let mut relabel = vec![usize::MAX; c.n_vertices()];
    for (new, &old) in vertex_map.iter().enumerate() {
        relabel[old] = new;
    }
    let mut parent: Vec<Vec<usize>> = Vec::new();
    let mut simplices = Vec::new();
    let mut boundary = Vec::new();
    let mut top = 0;
    for k in 0..=c.dim() {
        let ids: Vec<usize> = (0..c.count(k))
            .filter(|&i| c.simplex(k, i).iter().all(|&v| fixed[v]))
            .collect();
        if !ids.is_empty() {
            top = k;
        }
        for &i in &ids {
            let s: Vec<usize> = c.simplex(k, i).iter().map(|&v| relabel[v]).collect();
            if c.is_boundary(k, i) {
                boundary.push(s.clone());
            }
            simplices.push(s);
        }
        parent.push(ids);
    }
    parent.truncate(top + 1);
    let sub = OrientedComplex::from_closure(top, vertex_map.len(), &simplices, &boundary);
    (sub, SubcomplexSelector { parent, vertex_map })
}
