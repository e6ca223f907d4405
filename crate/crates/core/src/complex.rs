//! Oriented simplicial complexes with boundary, integer coboundaries, and
//! exact reference cohomology.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmat::{self, IntMatrix};

/// Combinatorial manifold (possibly with boundary), or an arbitrary closed
/// subcomplex when built with [`OrientedComplex::from_closure`].
///
/// Every simplex is stored with sorted vertices; that order is the reference
/// orientation. Top simplices additionally carry `top_sign`, the orientation
/// of the manifold relative to the reference one.
#[derive(Clone, Debug)]
pub struct OrientedComplex {
    dim: usize,
    n_vertices: usize,
    simplices: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
    coboundary: Vec<IntMatrix>,
    boundary_flag: Vec<Vec<bool>>,
    top_sign: Vec<i8>,
    /// Transpose of `D_{n−1}`: top-simplex cofaces of each `(n−1)`-simplex.
    cofaces: IntMatrix,
}

/// Per-degree inclusion of a subcomplex: `parent[k][i]` is the parent index of
/// the subcomplex's `i`-th `k`-simplex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcomplexSelector {
    pub parent: Vec<Vec<usize>>,
    /// Parent vertex id of each subcomplex vertex.
    pub vertex_map: Vec<usize>,
}

impl SubcomplexSelector {
    pub fn count(&self, k: usize) -> usize {
        self.parent.get(k).map_or(0, Vec::len)
    }

    /// Membership mask over the parent's `k`-simplices.
    pub fn mask(&self, k: usize, parent_count: usize) -> Vec<bool> {
        let mut m = vec![false; parent_count];
        if let Some(ix) = self.parent.get(k) {
            for &i in ix {
                m[i] = true;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EulerMode {
    Absolute,
    Relative,
    Boundary,
}

/// Sign of the permutation that sorts `v`.
pub fn sort_sign(v: &[usize]) -> i8 {
    let mut inv = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

fn faces_of(s: &[usize]) -> impl Iterator<Item = (usize, Vec<usize>)> + '_ {
    (0..s.len()).map(move |j| {
        let mut f = s.to_vec();
        f.remove(j);
        (j, f)
    })
}

impl OrientedComplex {
    /// Builds and validates an oriented manifold from top-dimensional
    /// simplices given in file order (the order encodes orientation).
    pub fn from_top_simplices(dim: usize, n_vertices: usize, tops: &[Vec<usize>]) -> Result<Self> {
        let oriented: Vec<(Vec<usize>, i8)> = tops.iter().map(|t| (t.clone(), 1)).collect();
        Self::from_oriented_tops(dim, n_vertices, &oriented)
    }

    /// As [`Self::from_top_simplices`] with an extra sign per simplex, which is
    /// how 0-dimensional (point) orientations are expressed.
    pub fn from_oriented_tops(dim: usize, n_vertices: usize, tops: &[(Vec<usize>, i8)]) -> Result<Self> {
        let mut sorted: Vec<(Vec<usize>, i8)> = Vec::with_capacity(tops.len());
        for (t, extra) in tops {
            if t.len() != dim + 1 {
                return Err(Error::Malformed(format!(
                    "simplex {t:?} has {} vertices, expected {}",
                    t.len(),
                    dim + 1
                )));
            }
            if let Some(&v) = t.iter().find(|&&v| v >= n_vertices) {
                return Err(Error::Malformed(format!("simplex {t:?} references vertex {v} of {n_vertices}")));
            }
            let mut s = t.clone();
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Malformed(format!("simplex {t:?} repeats a vertex")));
            }
            sorted.push((s, sort_sign(t) * extra));
        }
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::NonManifold {
                    simplex: w[0].0.clone(),
                    cofaces: 2,
                });
            }
        }
        let mut used = vec![false; n_vertices];
        for (s, _) in &sorted {
            for &v in s {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::DanglingVertex { vertex: v });
        }
        let top_sign: Vec<i8> = sorted.iter().map(|e| e.1).collect();
        let tops: Vec<Vec<usize>> = sorted.into_iter().map(|e| e.0).collect();
        let c = Self::assemble(dim, n_vertices, tops, top_sign);
        c.validate_manifold()?;
        Ok(c)
    }

    /// Closure of an arbitrary simplex list under faces, without manifold
    /// validation. `boundary` marks simplices (closed under faces by the
    /// caller) that belong to the subcomplex's boundary.
    pub fn from_closure(dim: usize, n_vertices: usize, simplices: &[Vec<usize>], boundary: &[Vec<usize>]) -> Self {
        let mut levels: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dim + 1];
        for s in simplices {
            let mut s = s.clone();
            s.sort_unstable();
            add_with_faces(&mut levels, s);
        }
        let simplices: Vec<Vec<Vec<usize>>> = levels.into_iter().map(|l| l.into_iter().collect()).collect();
        let mut c = Self::from_levels(dim, n_vertices, simplices, Vec::new());
        for s in boundary {
            let mut s = s.clone();
            s.sort_unstable();
            let k = s.len() - 1;
            if let Some(&i) = c.index[k].get(&s) {
                c.boundary_flag[k][i] = true;
            }
        }
        c
    }

    fn assemble(dim: usize, n_vertices: usize, tops: Vec<Vec<usize>>, top_sign: Vec<i8>) -> Self {
        let mut levels: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dim + 1];
        for t in &tops {
            add_with_faces(&mut levels, t.clone());
        }
        let simplices: Vec<Vec<Vec<usize>>> = levels.into_iter().map(|l| l.into_iter().collect()).collect();
        debug_assert_eq!(simplices[dim], tops);
        let mut c = Self::from_levels(dim, n_vertices, simplices, top_sign);
        if dim >= 1 {
            let dt = c.cofaces.clone();
            let mut flags: Vec<Vec<bool>> = c.simplices.iter().map(|l| vec![false; l.len()]).collect();
            for f in 0..c.simplices[dim - 1].len() {
                if dt.row(f).len() == 1 {
                    let s = c.simplices[dim - 1][f].clone();
                    let mut lv: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dim];
                    add_with_faces(&mut lv, s);
                    for (k, l) in lv.into_iter().enumerate() {
                        for s in l {
                            flags[k][c.index[k][&s]] = true;
                        }
                    }
                }
            }
            c.boundary_flag = flags;
        }
        c
    }

    fn from_levels(dim: usize, n_vertices: usize, simplices: Vec<Vec<Vec<usize>>>, top_sign: Vec<i8>) -> Self {
        let index: Vec<HashMap<Vec<usize>, usize>> = simplices
            .iter()
            .map(|l| l.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        let mut coboundary = Vec::with_capacity(dim);
        for k in 0..dim {
            let rows = simplices[k + 1]
                .iter()
                .map(|s| {
                    faces_of(s)
                        .map(|(j, f)| (index[k][&f], if j % 2 == 0 { 1 } else { -1 }))
                        .collect()
                })
                .collect();
            coboundary.push(IntMatrix::from_rows(simplices[k].len(), rows));
        }
        let boundary_flag = simplices.iter().map(|l| vec![false; l.len()]).collect();
        let cofaces = if dim >= 1 {
            coboundary[dim - 1].transpose()
        } else {
            IntMatrix::zeros(0, 0)
        };
        Self {
            cofaces,
            dim,
            n_vertices,
            simplices,
            index,
            coboundary,
            boundary_flag,
            top_sign,
        }
    }

    fn validate_manifold(&self) -> Result<()> {
        let n = self.dim;
        if n >= 1 {
            let dt = &self.cofaces;
            for f in 0..self.simplices[n - 1].len() {
                let cof = dt.row(f);
                match cof.len() {
                    1 => {}
                    2 => {
                        let (t1, e1) = cof[0];
                        let (t2, e2) = cof[1];
                        let total = self.top_sign[t1] as i64 * e1 + self.top_sign[t2] as i64 * e2;
                        if total != 0 {
                            return Err(Error::InconsistentOrientation {
                                face: self.simplices[n - 1][f].clone(),
                            });
                        }
                    }
                    k => {
                        return Err(Error::NonManifold {
                            simplex: self.simplices[n - 1][f].clone(),
                            cofaces: k,
                        })
                    }
                }
            }
        }
        if n >= 2 {
            let mut count = vec![0usize; self.simplices[n - 2].len()];
            for f in 0..self.simplices[n - 1].len() {
                if self.boundary_flag[n - 1][f] {
                    for &(g, _) in self.coboundary[n - 2].row(f) {
                        count[g] += 1;
                    }
                }
            }
            for (g, &c) in count.iter().enumerate() {
                if self.boundary_flag[n - 2][g] && c != 2 {
                    return Err(Error::OpenBoundary {
                        simplex: self.simplices[n - 2][g].clone(),
                        cofaces: c,
                    });
                }
            }
        }
        for k in 0..n.saturating_sub(1) {
            if !self.coboundary[k + 1].mul(&self.coboundary[k]).is_zero() {
                return Err(Error::Malformed(format!("D_{} D_{} is not zero", k + 1, k)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn count(&self, k: usize) -> usize {
        self.simplices.get(k).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.simplices.iter().map(Vec::len).collect()
    }

    pub fn simplices(&self, k: usize) -> &[Vec<usize>] {
        &self.simplices[k]
    }

    pub fn simplex(&self, k: usize, i: usize) -> &[usize] {
        &self.simplices[k][i]
    }

    /// Index of a simplex given in any vertex order.
    pub fn find(&self, vertices: &[usize]) -> Option<usize> {
        let mut s = vertices.to_vec();
        s.sort_unstable();
        self.index.get(s.len().checked_sub(1)?)?.get(&s).copied()
    }

    /// `D_k`, mapping `k`-cochains to `(k+1)`-cochains.
    pub fn coboundary(&self, k: usize) -> &IntMatrix {
        &self.coboundary[k]
    }

    pub fn boundary_flags(&self, k: usize) -> &[bool] {
        &self.boundary_flag[k]
    }

    pub fn is_boundary(&self, k: usize, i: usize) -> bool {
        self.boundary_flag[k][i]
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary_flag.iter().any(|l| l.iter().any(|&b| b))
    }

    /// Orientation of each top simplex relative to its sorted vertex order.
    pub fn top_signs(&self) -> &[i8] {
        &self.top_sign
    }

    /// Induced boundary orientation of a boundary `(n−1)`-simplex relative to
    /// its sorted order.
    pub fn induced_sign(&self, face: usize) -> i8 {
        let &(t, e) = self.cofaces.row(face).first().expect("boundary face has a coface");
        self.top_sign[t] * e as i8
    }

    pub fn total_simplices(&self) -> usize {
        self.simplices.iter().map(Vec::len).sum()
    }
}

fn add_with_faces(levels: &mut [BTreeSet<Vec<usize>>], s: Vec<usize>) {
    let k = s.len() - 1;
    if levels[k].contains(&s) {
        return;
    }
    if k > 0 {
        for (_, f) in faces_of(&s) {
            add_with_faces(levels, f);
        }
    }
    levels[k].insert(s);
}

/// The boundary `∂M` as a closed oriented `(n−1)`-complex with induced
/// orientation, plus its inclusion into `c`. Vertex labels are renumbered
/// monotonically, so sorted orders (and therefore simplex orders) agree.
pub fn boundary_subcomplex(c: &OrientedComplex) -> Result<(OrientedComplex, SubcomplexSelector)> {
    let n = c.dim();
    let parent: Vec<Vec<usize>> = (0..n)
        .map(|k| (0..c.count(k)).filter(|&i| c.is_boundary(k, i)).collect())
        .collect();
    let vertex_map: Vec<usize> = parent.first().cloned().unwrap_or_default();
    let mut relabel = vec![usize::MAX; c.n_vertices()];
    for (new, &old) in vertex_map.iter().enumerate() {
        relabel[old] = new;
    }
    let sub = if n == 0 || parent[n - 1].is_empty() {
        OrientedComplex::from_closure(n.saturating_sub(1), 0, &[], &[])
    } else {
        let tops: Vec<(Vec<usize>, i8)> = parent[n - 1]
            .iter()
            .map(|&f| {
                let s: Vec<usize> = c.simplex(n - 1, f).iter().map(|&v| relabel[v]).collect();
                (s, c.induced_sign(f))
            })
            .collect();
        OrientedComplex::from_oriented_tops(n - 1, vertex_map.len(), &tops)?
    };
    Ok((sub, SubcomplexSelector { parent, vertex_map }))
}

/// Betti numbers over ℚ, absolute or relative to a closed subcomplex.
pub fn reference_betti(c: &OrientedComplex, relative_to: Option<&SubcomplexSelector>) -> Vec<usize> {
    let n = c.dim();
    let keep: Vec<Vec<usize>> = (0..=n)
        .map(|k| {
            let mask = relative_to.map(|s| s.mask(k, c.count(k)));
            (0..c.count(k))
                .filter(|&i| mask.as_ref().is_none_or(|m| !m[i]))
                .collect()
        })
        .collect();
    let ranks: Vec<usize> = (0..n)
        .map(|k| intmat::rank(&c.coboundary(k).restrict(&keep[k + 1], &keep[k])))
        .collect();
    (0..=n)
        .map(|k| {
            let out = if k < n { ranks[k] } else { 0 };
            let inc = if k > 0 { ranks[k - 1] } else { 0 };
            keep[k].len() - out - inc
        })
        .collect()
}

/// Alternating simplex count of the whole complex, of its non-boundary
/// simplices, or of its boundary simplices.
pub fn euler_characteristic(c: &OrientedComplex, mode: EulerMode) -> i64 {
    (0..=c.dim())
        .map(|k| {
            let flags = c.boundary_flags(k);
            let cnt = match mode {
                EulerMode::Absolute => flags.len(),
                EulerMode::Relative => flags.iter().filter(|&&b| !b).count(),
                EulerMode::Boundary => flags.iter().filter(|&&b| b).count(),
            } as i64;
            if k % 2 == 0 {
                cnt
            } else {
                -cnt
            }
        })
        .sum()
}

/// The selector of all boundary-flagged simplices (closed under faces).
pub fn boundary_selector(c: &OrientedComplex) -> SubcomplexSelector {
    let parent: Vec<Vec<usize>> = (0..=c.dim())
        .map(|k| (0..c.count(k)).filter(|&i| c.is_boundary(k, i)).collect())
        .collect();
    SubcomplexSelector {
        vertex_map: parent[0].clone(),
        parent,
    }
}

/// Dimension of the image of `H^k(c) → H^k(∂c)` for each `k`, computed with
/// exact ranks. Classes outside the image's complement are the "boundary"
/// part of the classical interior/boundary split.
pub fn restriction_ranks(c: &OrientedComplex) -> Vec<usize> {
    let n = c.dim();
    let bsel = boundary_selector(c);
    (0..=n)
        .map(|k| {
            let bk = &bsel.parent[k];
            if bk.is_empty() {
                return 0;
            }
            let nk = c.count(k);
            // cocycles of c: ker D_k
            let dk = if k < n {
                c.coboundary(k).clone()
            } else {
                IntMatrix::zeros(0, nk)
            };
            let rank_dk = intmat::rank(&dk);
            let dim_z = nk - rank_dk;
            // coboundary of ∂c from degree k−1 into degree k
            let bkm1: Vec<usize> = if k > 0 { bsel.parent[k - 1].clone() } else { Vec::new() };
            let dbd = if k > 0 {
                c.coboundary(k - 1).restrict(bk, &bkm1)
            } else {
                IntMatrix::zeros(bk.len(), 0)
            };
            let rank_dbd = intmat::rank(&dbd);
            // stacked [[D_k, 0], [restriction, D_∂]] acting on (z, y)
            let ncols = nk + bkm1.len();
            let mut rows: Vec<Vec<(usize, i64)>> = (0..dk.nrows()).map(|i| dk.row(i).to_vec()).collect();
            for (r, &sidx) in bk.iter().enumerate() {
                let mut row = vec![(sidx, 1)];
                row.extend(dbd.row(r).iter().map(|&(j, v)| (nk + j, -v)));
                rows.push(row);
            }
            let stacked = IntMatrix::from_rows(ncols, rows);
            let kernel = ncols - intmat::rank(&stacked);
            dim_z + bkm1.len() - kernel - rank_dbd
        })
        .collect()
}
