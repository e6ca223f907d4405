//! Metric layer: vertex embedding, Whitney-form mass matrices, piecewise
//! linear vector fields and the weak contraction.

use nalgebra::{DMatrix, DVector, Vector3};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::OrientedComplex;
use crate::error::{Error, Result};
use crate::quadrature::SimplexRule;
use crate::symmetry::CyclicAction;

/// Vertex positions (padded to ℝ³) plus the reference quadrature rule for the
/// top dimension.
#[derive(Clone, Debug)]
pub struct EmbeddedGeometry {
    coords: Vec<Vector3<f64>>,
    ambient_dim: usize,
    rule: SimplexRule,
    scale: f64,
}

impl EmbeddedGeometry {
    /// Validates that every top simplex of `c` has positive volume.
    pub fn new(c: &OrientedComplex, coords: Vec<Vector3<f64>>, ambient_dim: usize) -> Result<Self> {
        if coords.len() != c.n_vertices() {
            return Err(Error::Malformed(format!(
                "{} coordinates for {} vertices",
                coords.len(),
                c.n_vertices()
            )));
        }
        if !(c.dim()..=3).contains(&ambient_dim) {
            return Err(Error::Malformed(format!(
                "ambient dimension {ambient_dim} cannot embed a {}-complex",
                c.dim()
            )));
        }
        let scale = bounding_diagonal(&coords);
        let g = Self {
            coords,
            ambient_dim,
            rule: SimplexRule::new(c.dim()),
            scale,
        };
        let n = c.dim();
        if n > 0 {
            let floor = 1e-14 * scale.powi(n as i32);
            for t in c.simplices(n) {
                let v = g.simplex_volume(t);
                if v.is_nan() || v <= floor {
                    return Err(Error::DegenerateSimplex {
                        simplex: t.clone(),
                        volume: v,
                    });
                }
            }
        }
        Ok(g)
    }

    pub fn coords(&self) -> &[Vector3<f64>] {
        &self.coords
    }

    pub fn position(&self, v: usize) -> Vector3<f64> {
        self.coords[v]
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Bounding-box diagonal of the vertex set.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rule(&self) -> &SimplexRule {
        &self.rule
    }

    /// `k`-volume of a simplex given by sorted vertices.
    pub fn simplex_volume(&self, s: &[usize]) -> f64 {
        let k = s.len() - 1;
        if k == 0 {
            return 1.0;
        }
        let e = self.edge_matrix(s);
        let g = e.transpose() * &e;
        g.determinant().max(0.0).sqrt() / factorial(k)
    }

    fn edge_matrix(&self, s: &[usize]) -> DMatrix<f64> {
        let p0 = self.coords[s[0]];
        DMatrix::from_fn(3, s.len() - 1, |r, c| self.coords[s[c + 1]][r] - p0[r])
    }

    /// Physical quadrature nodes and weights on a top simplex.
    pub fn quadrature(&self, t: &[usize]) -> Vec<(Vector3<f64>, f64)> {
        let vol = self.simplex_volume(t);
        self.rule
            .points
            .iter()
            .zip(&self.rule.weights)
            .map(|(b, w)| {
                let x = b.iter().zip(t).fold(Vector3::zeros(), |acc, (l, &v)| acc + self.coords[v] * *l);
                (x, w * vol)
            })
            .collect()
    }

    /// Restriction to a subcomplex whose vertex `i` is parent vertex
    /// `vertex_map[i]`.
    pub fn restrict(&self, sub: &OrientedComplex, vertex_map: &[usize]) -> Result<Self> {
        let coords = vertex_map.iter().map(|&v| self.coords[v]).collect();
        Self::new(sub, coords, self.ambient_dim)
    }
}

fn bounding_diagonal(coords: &[Vector3<f64>]) -> f64 {
    if coords.is_empty() {
        return 1.0;
    }
    let mut lo = coords[0];
    let mut hi = coords[0];
    for p in coords {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let d = (hi - lo).norm();
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Piecewise linear tangent vector field given by its vertex values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLVectorField {
    pub vectors: Vec<[f64; 3]>,
}

impl PLVectorField {
    pub fn zero(n_vertices: usize) -> Self {
        Self {
            vectors: vec![[0.0; 3]; n_vertices],
        }
    }

    pub fn at(&self, v: usize) -> Vector3<f64> {
        Vector3::from(self.vectors[v])
    }

    /// Field values projected onto the vertex tangent planes of an embedded
    /// surface (area-weighted oriented normals). Other codimensions are
    /// returned unchanged.
    pub fn tangent_projected(g: &EmbeddedGeometry, c: &OrientedComplex, raw: &[Vector3<f64>]) -> Self {
        let mut vectors: Vec<[f64; 3]> = raw.iter().map(|x| [x[0], x[1], x[2]]).collect();
        if c.dim() == 2 && g.ambient_dim() == 3 {
            let mut normals = vec![Vector3::zeros(); c.n_vertices()];
            for (t, &sgn) in c.simplices(2).iter().zip(c.top_signs()) {
                let p = |i: usize| g.position(t[i]);
                let nrm = (p(1) - p(0)).cross(&(p(2) - p(0))) * sgn as f64;
                for &v in t {
                    normals[v] += nrm;
                }
            }
            for (v, x) in raw.iter().enumerate() {
                let nn = normals[v].norm();
                if nn > 0.0 {
                    let nh = normals[v] / nn;
                    let y = x - nh * nh.dot(x);
                    vectors[v] = [y[0], y[1], y[2]];
                }
            }
        }
        Self { vectors }
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| Vector3::from(*v).norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| [v[0] * factor, v[1] * factor, v[2] * factor]).collect(),
        }
    }

    pub fn restrict(&self, vertex_map: &[usize]) -> Self {
        Self {
            vectors: vertex_map.iter().map(|&v| self.vectors[v]).collect(),
        }
    }
}

/// Per-simplex Whitney data: barycentric gradients and their Gram matrix.
struct Element {
    vertices: Vec<usize>,
    grads: Vec<Vector3<f64>>,
    nodes: Vec<(Vec<f64>, f64)>,
}

impl Element {
    fn new(g: &EmbeddedGeometry, t: &[usize]) -> Self {
        let n = t.len() - 1;
        let e = g.edge_matrix(t);
        let gram = e.transpose() * &e;
        let inv = gram.try_inverse().expect("validated non-degenerate simplex");
        let gl = &e * inv;
        let mut grads = vec![Vector3::zeros(); n + 1];
        for i in 0..n {
            let gi = Vector3::new(gl[(0, i)], gl[(1, i)], gl[(2, i)]);
            grads[i + 1] = gi;
            grads[0] -= gi;
        }
        let vol = g.simplex_volume(t);
        let nodes = g.rule.points.iter().cloned().zip(g.rule.weights.iter().map(|w| w * vol)).collect();
        Self {
            vertices: t.to_vec(),
            grads,
            nodes,
        }
    }

    fn n(&self) -> usize {
        self.grads.len() - 1
    }
}

/// Sorted local index subsets of {0..=n} of a given size.
fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

fn det_small(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j]).determinant(),
    }
}

/// Local form algebra of one element in degree `k`: `⟨dλ_I, dλ_J⟩ = det Γ[I,J]`.
struct FormSpace {
    subsets: Vec<Vec<usize>>,
    gram: Vec<Vec<f64>>,
}

impl FormSpace {
    fn new(el: &Element, k: usize) -> Self {
        let subsets = subsets(el.n(), k);
        let gamma = |i: usize, j: usize| el.grads[i].dot(&el.grads[j]);
        let gram = subsets
            .iter()
            .map(|a| {
                subsets
                    .iter()
                    .map(|b| {
                        let m: Vec<Vec<f64>> = a.iter().map(|&i| b.iter().map(|&j| gamma(i, j)).collect()).collect();
                        det_small(&m)
                    })
                    .collect()
            })
            .collect();
        Self { subsets, gram }
    }

    fn position(&self, s: &[usize]) -> usize {
        self.subsets.iter().position(|x| x == s).expect("subset present")
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                acc += x * y * self.gram[i][j];
            }
        }
        acc
    }
}

/// Coefficients of the Whitney form of local face `f` (sorted local indices,
/// `k+1` of them) in the `dλ_I` basis of degree `k`, at barycentric point `lam`.
fn whitney_coeffs(space: &FormSpace, f: &[usize], lam: &[f64]) -> Vec<f64> {
    let k = f.len() - 1;
    let kf = factorial(k);
    let mut c = vec![0.0; space.subsets.len()];
    for j in 0..f.len() {
        let mut rest = f.to_vec();
        rest.remove(j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        c[space.position(&rest)] += kf * sign * lam[f[j]];
    }
    c
}

/// Contraction of a degree-`k` coefficient vector with a vector field whose
/// pairings with the barycentric gradients are `xg[i] = X·∇λ_i`.
fn contract(from: &FormSpace, to: &FormSpace, c: &[f64], xg: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; to.subsets.len()];
    for (idx, s) in from.subsets.iter().enumerate() {
        if c[idx] == 0.0 {
            continue;
        }
        for l in 0..s.len() {
            let mut rest = s.clone();
            rest.remove(l);
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            out[to.position(&rest)] += sign * xg[s[l]] * c[idx];
        }
    }
    out
}

/// Local face lists of an element and their global indices.
fn local_faces(c: &OrientedComplex, el: &Element, k: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let faces = subsets(el.n(), k + 1);
    let global = faces
        .iter()
        .map(|f| {
            let verts: Vec<usize> = f.iter().map(|&i| el.vertices[i]).collect();
            c.find(&verts).expect("face of a simplex is in the complex")
        })
        .collect();
    (faces, global)
}

/// Sums triplets in a fixed order so symmetric inputs give bitwise symmetric
/// output and repeated runs give identical matrices.
pub fn csr_from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> CsrMatrix<f64> {
    trip.sort_by_key(|e| (e.0, e.1));
    let mut offsets = vec![0usize; nrows + 1];
    let mut cols: Vec<usize> = Vec::with_capacity(trip.len());
    let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in trip {
        if last == Some((r, c)) {
            *vals.last_mut().expect("entry") += v;
        } else {
            cols.push(c);
            vals.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for i in 0..nrows {
        offsets[i + 1] += offsets[i];
    }
    CsrMatrix::try_from_csr_data(nrows, ncols, offsets, cols, vals).expect("valid csr layout")
}

fn elements(g: &EmbeddedGeometry, c: &OrientedComplex) -> Vec<Element> {
    let n = c.dim();
    c.simplices(n).par_iter().map(|t| Element::new(g, t)).collect()
}

/// Galerkin mass matrix of Whitney `k`-forms.
pub fn mass_matrix(g: &EmbeddedGeometry, c: &OrientedComplex, k: usize) -> CsrMatrix<f64> {
    let els = elements(g, c);
    mass_from_elements(c, &els, k)
}

fn mass_from_elements(c: &OrientedComplex, els: &[Element], k: usize) -> CsrMatrix<f64> {
    let nk = c.count(k);
    if els.is_empty() {
        return CsrMatrix::zeros(nk, nk);
    }
    let locals: Vec<Vec<(usize, usize, f64)>> = els
        .par_iter()
        .map(|el| {
            let space = FormSpace::new(el, k);
            let (faces, global) = local_faces(c, el, k);
            let nf = faces.len();
            let mut m = vec![vec![0.0; nf]; nf];
            for (lam, w) in &el.nodes {
                let coeffs: Vec<Vec<f64>> = faces.iter().map(|f| whitney_coeffs(&space, f, lam)).collect();
                for a in 0..nf {
                    for b in a..nf {
                        m[a][b] += w * space.inner(&coeffs[a], &coeffs[b]);
                    }
                }
            }
            let mut out = Vec::with_capacity(nf * nf);
            for a in 0..nf {
                for b in 0..nf {
                    let v = if a <= b { m[a][b] } else { m[b][a] };
                    out.push((global[a], global[b], v));
                }
            }
            out
        })
        .collect();
    csr_from_triplets(nk, nk, locals.into_iter().flatten().collect())
}

/// Weak contraction matrix `B_k` with `(B_k)_{ρσ} = ∫ ⟨ι_X W_σ, W_ρ⟩`,
/// mapping `k`-cochains to `(k−1)`-dual cochains. The contraction operator is
/// `C_k = M_{k−1}^{-1} B_k`.
pub fn contraction_matrix(g: &EmbeddedGeometry, c: &OrientedComplex, x: &PLVectorField, k: usize) -> CsrMatrix<f64> {
    let els = elements(g, c);
    contraction_from_elements(c, &els, x, k)
}

fn contraction_from_elements(c: &OrientedComplex, els: &[Element], x: &PLVectorField, k: usize) -> CsrMatrix<f64> {
    assert!(k >= 1, "contraction lowers degree; k must be at least 1");
    let (nr, nc) = (c.count(k - 1), c.count(k));
    if els.is_empty() {
        return CsrMatrix::zeros(nr, nc);
    }
    let locals: Vec<Vec<(usize, usize, f64)>> = els
        .par_iter()
        .map(|el| {
            let from = FormSpace::new(el, k);
            let to = FormSpace::new(el, k - 1);
            let (cols, gcols) = local_faces(c, el, k);
            let (rows, grows) = local_faces(c, el, k - 1);
            let xv: Vec<Vector3<f64>> = el.vertices.iter().map(|&v| x.at(v)).collect();
            let mut m = vec![vec![0.0; cols.len()]; rows.len()];
            for (lam, w) in &el.nodes {
                let xp = xv.iter().zip(lam).fold(Vector3::zeros(), |acc, (xi, l)| acc + xi * *l);
                let xg: Vec<f64> = el.grads.iter().map(|gr| xp.dot(gr)).collect();
                let wr: Vec<Vec<f64>> = rows.iter().map(|f| whitney_coeffs(&to, f, lam)).collect();
                for (b, f) in cols.iter().enumerate() {
                    let iw = contract(&from, &to, &whitney_coeffs(&from, f, lam), &xg);
                    for a in 0..rows.len() {
                        m[a][b] += w * to.inner(&wr[a], &iw);
                    }
                }
            }
            let mut out = Vec::new();
            for a in 0..rows.len() {
                for b in 0..cols.len() {
                    out.push((grows[a], gcols[b], m[a][b]));
                }
            }
            out
        })
        .collect();
    csr_from_triplets(nr, nc, locals.into_iter().flatten().collect())
}

/// All mass matrices `M_0..M_n` and contraction matrices `B_1..B_n` (index 0
/// of the contraction list is an empty placeholder), sharing element setup.
pub fn assemble_all(
    g: &EmbeddedGeometry,
    c: &OrientedComplex,
    x: &PLVectorField,
) -> (Vec<CsrMatrix<f64>>, Vec<CsrMatrix<f64>>) {
    let els = elements(g, c);
    let n = c.dim();
    let masses = (0..=n).map(|k| mass_from_elements(c, &els, k)).collect();
    let mut contr = vec![CsrMatrix::zeros(0, c.count(0))];
    for k in 1..=n {
        contr.push(contraction_from_elements(c, &els, x, k));
    }
    (masses, contr)
}

/// Outcome of [`validate_field`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDiagnostics {
    /// Largest boundary-tangency violation relative to `max |X|`.
    pub tangency_defect: f64,
    pub tangency_tolerance: f64,
    /// Fixed vertices checked for exact zeros.
    pub fixed_checked: usize,
    /// Largest `|X(πv) − Q X(v)|` relative to `max |X|`, where `Q` is the
    /// rigid motion realizing the action.
    pub invariance_defect: Option<f64>,
}

/// Checks boundary tangency, exact zeros on fixed vertices, and (if an action
/// is given) invariance of the field.
pub fn validate_field(
    g: &EmbeddedGeometry,
    c: &OrientedComplex,
    x: &PLVectorField,
    fixed_vertices: &[usize],
    action: Option<&CyclicAction>,
    tau_tan: f64,
) -> Result<FieldDiagnostics> {
    let xmax = x.max_norm();
    let scale = if xmax > 0.0 { xmax } else { 1.0 };
    for &v in fixed_vertices {
        let nv = x.at(v).norm();
        if nv != 0.0 {
            return Err(Error::FieldNotZeroAtFixed { vertex: v, norm: nv });
        }
    }
    let mut worst = 0.0f64;
    let n = c.dim();
    if n >= 1 && c.has_boundary() {
        let mut directions = vec![Vector3::<f64>::zeros(); c.n_vertices()];
        let mut on_bd = vec![false; c.n_vertices()];
        for (f, s) in c.simplices(n - 1).iter().enumerate() {
            if !c.is_boundary(n - 1, f) {
                continue;
            }
            for &v in s {
                on_bd[v] = true;
            }
            match n {
                2 => {
                    // oriented edge direction, summed at both endpoints
                    let sgn = c.induced_sign(f) as f64;
                    let d = (g.position(s[1]) - g.position(s[0])) * sgn;
                    let dn = d.norm();
                    for &v in s {
                        directions[v] += d / dn;
                    }
                }
                3 => {
                    let sgn = c.induced_sign(f) as f64;
                    let p = |i: usize| g.position(s[i]);
                    let nrm = (p(1) - p(0)).cross(&(p(2) - p(0))) * sgn;
                    for &v in s {
                        directions[v] += nrm;
                    }
                }
                _ => {}
            }
        }
        for v in 0..c.n_vertices() {
            if !on_bd[v] {
                continue;
            }
            let xv = x.at(v);
            let defect = match n {
                2 => {
                    let t = directions[v].normalize();
                    (xv - t * t.dot(&xv)).norm()
                }
                3 => {
                    let nh = directions[v].normalize();
                    nh.dot(&xv).abs()
                }
                _ => xv.norm(),
            } / scale;
            if defect > tau_tan {
                return Err(Error::FieldNotTangent {
                    vertex: v,
                    defect,
                    tolerance: tau_tan,
                });
            }
            worst = worst.max(defect);
        }
    }
    let invariance_defect = match action {
        Some(a) => {
            let q = a.linear_part(g);
            let mut d = 0.0f64;
            for v in 0..c.n_vertices() {
                let e = (x.at(a.vertex_image(v)) - q * x.at(v)).norm() / scale;
                d = d.max(e);
            }
            Some(d)
        }
        None => None,
    };
    Ok(FieldDiagnostics {
        tangency_defect: worst,
        tangency_tolerance: tau_tan,
        fixed_checked: fixed_vertices.len(),
        invariance_defect,
    })
}

/// A smooth ambient differential form: `eval(p, vs)` returns `ω_p(v_1,…,v_k)`.
pub trait AmbientForm: Sync {
    fn degree(&self) -> usize;
    fn eval(&self, p: &Vector3<f64>, vectors: &[Vector3<f64>]) -> f64;
}

/// Ambient form defined by a closure.
pub struct FnForm<F> {
    pub degree: usize,
    pub f: F,
}

impl<F> AmbientForm for FnForm<F>
where
    F: Fn(&Vector3<f64>, &[Vector3<f64>]) -> f64 + Sync,
{
    fn degree(&self) -> usize {
        self.degree
    }

    fn eval(&self, p: &Vector3<f64>, vectors: &[Vector3<f64>]) -> f64 {
        (self.f)(p, vectors)
    }
}

/// De Rham map: integrates a smooth `k`-form over every `k`-simplex (reference
/// orientation) by quadrature.
pub fn interpolate(g: &EmbeddedGeometry, c: &OrientedComplex, form: &dyn AmbientForm) -> DVector<f64> {
    let k = form.degree();
    let rule = SimplexRule::new(k);
    let kf = factorial(k);
    let vals: Vec<f64> = c
        .simplices(k)
        .par_iter()
        .map(|s| {
            let p0 = g.position(s[0]);
            let edges: Vec<Vector3<f64>> = s[1..].iter().map(|&v| g.position(v) - p0).collect();
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| {
                    let x = b.iter().zip(s).fold(Vector3::zeros(), |acc, (l, &v)| acc + g.position(v) * *l);
                    w * form.eval(&x, &edges)
                })
                .sum::<f64>()
                / kf
        })
        .collect();
    DVector::from_vec(vals)
}

/// De Rham map of `f · vol_M` for the oriented volume form of the manifold.
pub fn interpolate_density(
    g: &EmbeddedGeometry,
    c: &OrientedComplex,
    f: &(dyn Fn(&Vector3<f64>) -> f64 + Sync),
) -> DVector<f64> {
    let n = c.dim();
    let vals: Vec<f64> = c
        .simplices(n)
        .par_iter()
        .zip(c.top_signs().par_iter())
        .map(|(t, &sgn)| sgn as f64 * g.quadrature(t).iter().map(|(x, w)| w * f(x)).sum::<f64>())
        .collect();
    DVector::from_vec(vals)
}
