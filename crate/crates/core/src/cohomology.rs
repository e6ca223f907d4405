//! X-cohomology dimensions, the fixed-point reference, localization checks,
//! Euler identities and deformation sweeps.

use serde::{Deserialize, Serialize};

use crate::complex::{
    boundary_subcomplex, euler_characteristic, reference_betti, restriction_ranks, EulerMode, OrientedComplex,
    SubcomplexSelector,
};
use crate::decomp::{analyze_level, LevelAnalysis, SpectralOptions};
use crate::error::{Error, Result};
use crate::mesh::LoadedMesh;
use crate::spectral::Verdict;
use crate::witten::WittenBundle;

/// Dimensions `[even N, odd N, even D, odd D]` with kernel evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XDims {
    pub dims: [usize; 4],
    pub clean: [bool; 4],
    pub gap_ratio: [f64; 4],
    /// Smallest normalized eigenvalue above the kernel.
    pub lambda_min: [Option<f64>; 4],
}

impl XDims {
    pub fn from_analysis(a: &LevelAnalysis) -> Self {
        let bases = [&a.neumann[0], &a.neumann[1], &a.dirichlet[0], &a.dirichlet[1]];
        Self {
            dims: a.dims(),
            clean: bases.map(|b| b.decision.verdict == Verdict::Clean),
            gap_ratio: bases.map(|b| b.decision.gap_ratio),
            lambda_min: bases.map(|b| b.lambda_min()),
        }
    }

    pub fn all_clean(&self) -> bool {
        self.clean.iter().all(|&c| c)
    }
}

/// Near-kernel dimensions of the four stiffness pencils of a bundle.
pub fn x_cohomology_dims(bundle: &WittenBundle, opts: &SpectralOptions) -> Result<XDims> {
    use crate::decomp::{harmonic_fields, PARITIES};
    use crate::witten::BoundaryCondition::{Dirichlet, Neumann};
    let mut bases = Vec::with_capacity(4);
    for bc in [Neumann, Dirichlet] {
        for p in PARITIES {
            bases.push(harmonic_fields(bundle, bc, p, opts)?);
        }
    }
    let f = |i: usize| &bases[i];
    Ok(XDims {
        dims: [0, 1, 2, 3].map(|i| f(i).dim()),
        clean: [0, 1, 2, 3].map(|i| f(i).decision.verdict == Verdict::Clean),
        gap_ratio: [0, 1, 2, 3].map(|i| f(i).decision.gap_ratio),
        lambda_min: [0, 1, 2, 3].map(|i| f(i).lambda_min()),
    })
}

/// Classical cohomology data of a complex with boundary, from exact ranks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalData {
    pub counts: Vec<usize>,
    pub betti_absolute: Vec<usize>,
    pub betti_relative: Vec<usize>,
    pub betti_boundary: Vec<usize>,
    /// Rank of `H^k → H^k(∂)` per degree.
    pub restriction: Vec<usize>,
}

fn parity_sum(v: &[usize], even: bool) -> usize {
    v.iter()
        .enumerate()
        .filter(|(k, _)| (k % 2 == 0) == even)
        .map(|(_, x)| x)
        .sum()
}

impl ClassicalData {
    pub fn of(c: &OrientedComplex) -> Result<Self> {
        let counts = c.counts();
        if counts.iter().all(|&x| x == 0) {
            return Ok(Self {
                counts,
                betti_absolute: Vec::new(),
                betti_relative: Vec::new(),
                betti_boundary: Vec::new(),
                restriction: Vec::new(),
            });
        }
        let sel = crate::complex::boundary_selector(c);
        let betti_absolute = reference_betti(c, None);
        let betti_relative = reference_betti(c, Some(&sel));
        let betti_boundary = if c.has_boundary() {
            let (b, _) = boundary_subcomplex(c)?;
            reference_betti(&b, None)
        } else {
            Vec::new()
        };
        Ok(Self {
            counts,
            betti_absolute,
            betti_relative,
            betti_boundary,
            restriction: restriction_ranks(c),
        })
    }

    /// `[even abs, odd abs, even rel, odd rel]`.
    pub fn parity_sums(&self) -> [usize; 4] {
        [
            parity_sum(&self.betti_absolute, true),
            parity_sum(&self.betti_absolute, false),
            parity_sum(&self.betti_relative, true),
            parity_sum(&self.betti_relative, false),
        ]
    }

    fn get(v: &[usize], k: isize) -> usize {
        if k < 0 {
            0
        } else {
            v.get(k as usize).copied().unwrap_or(0)
        }
    }

    /// Classical interior/boundary split per parity:
    /// `[IH_N, BH_N, IH_D, BH_D]`, each `[even, odd]`.
    pub fn split(&self) -> [[usize; 2]; 4] {
        let n = self.betti_absolute.len();
        let mut out = [[0; 2]; 4];
        for k in 0..n {
            let p = k % 2;
            let b = self.betti_absolute[k];
            let r = Self::get(&self.restriction, k as isize);
            out[0][p] += b - r;
            out[1][p] += r;
            let bd = Self::get(&self.betti_boundary, k as isize - 1) - Self::get(&self.restriction, k as isize - 1);
            out[2][p] += self.betti_relative[k] - bd;
            out[3][p] += bd;
        }
        out
    }
}

/// Classical data of the fixed-point set `N(X)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointReference {
    pub fixed_vertices: usize,
    pub data: ClassicalData,
}

impl FixedPointReference {
    pub fn sums(&self) -> [usize; 4] {
        self.data.parity_sums()
    }
}

pub fn fixed_point_complex(mesh: &LoadedMesh) -> (OrientedComplex, SubcomplexSelector) {
    crate::symmetry::fixed_subcomplex(
        &mesh.complex,
        &mesh.geometry,
        &mesh.action,
        &mesh.field,
        mesh.trusted_fixed.as_deref(),
    )
}

pub fn fixed_point_reference(mesh: &LoadedMesh) -> Result<FixedPointReference> {
    let (n, sel) = fixed_point_complex(mesh);
    Ok(FixedPointReference {
        fixed_vertices: sel.vertex_map.len(),
        data: ClassicalData::of(&n)?,
    })
}

/// One compared pair of integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimRow {
    pub name: String,
    pub computed: usize,
    pub reference: usize,
    pub pass: bool,
}

fn row(name: impl Into<String>, computed: usize, reference: usize) -> DimRow {
    DimRow {
        name: name.into(),
        computed,
        reference,
        pass: computed == reference,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismVerdict {
    pub s: f64,
    pub dims: Vec<DimRow>,
    pub split: Vec<DimRow>,
    pub euler: EulerReport,
    pub kernels_clean: bool,
    pub pass: bool,
}

const LABELS: [&str; 4] = ["even_neumann", "odd_neumann", "even_dirichlet", "odd_dirichlet"];
const SPLIT_LABELS: [&str; 4] = ["ih_neumann", "bh_neumann", "ih_dirichlet", "bh_dirichlet"];

/// Compares computed dimensions and interior/boundary splits with classical
/// data: of `N(X)` for `s ≠ 0`, of `M` itself for `s = 0`.
pub fn verify_isomorphisms(mesh: &LoadedMesh, analysis: &LevelAnalysis) -> Result<IsomorphismVerdict> {
    let reference = if analysis.s == 0.0 {
        ClassicalData::of(&mesh.complex)?
    } else {
        fixed_point_reference(mesh)?.data
    };
    let xd = XDims::from_analysis(analysis);
    let sums = reference.parity_sums();
    let dims: Vec<DimRow> = (0..4).map(|i| row(LABELS[i], xd.dims[i], sums[i])).collect();
    let classical = reference.split();
    let computed = [
        [analysis.split_neumann[0].interior.ncols(), analysis.split_neumann[1].interior.ncols()],
        [analysis.split_neumann[0].boundary.ncols(), analysis.split_neumann[1].boundary.ncols()],
        [analysis.split_dirichlet[0].interior.ncols(), analysis.split_dirichlet[1].interior.ncols()],
        [analysis.split_dirichlet[0].boundary.ncols(), analysis.split_dirichlet[1].boundary.ncols()],
    ];
    let mut split = Vec::new();
    for i in 0..4 {
        for (p, pname) in ["even", "odd"].iter().enumerate() {
            split.push(row(format!("{}_{}", SPLIT_LABELS[i], pname), computed[i][p], classical[i][p]));
        }
    }
    let euler = euler_identities(mesh)?;
    let kernels_clean = xd.all_clean();
    let pass = kernels_clean && euler.pass && dims.iter().chain(&split).all(|r| r.pass);
    Ok(IsomorphismVerdict {
        s: analysis.s,
        dims,
        split,
        euler,
        kernels_clean,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerRow {
    pub name: String,
    pub manifold: i64,
    pub fixed_set: i64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerReport {
    pub rows: Vec<EulerRow>,
    pub pass: bool,
}

/// `χ(M) = χ(N)`, `χ(M, ∂M) = χ(N, ∂N)` and `χ(∂M) = χ(∂N)` by simplex counts.
pub fn euler_identities(mesh: &LoadedMesh) -> Result<EulerReport> {
    let (n, _) = fixed_point_complex(mesh);
    let chi = |c: &OrientedComplex, m: EulerMode| {
        if c.counts().iter().all(|&x| x == 0) {
            0
        } else {
            euler_characteristic(c, m)
        }
    };
    let rows: Vec<EulerRow> = [
        ("absolute", EulerMode::Absolute),
        ("relative", EulerMode::Relative),
        ("boundary", EulerMode::Boundary),
    ]
    .into_iter()
    .map(|(name, mode)| {
        let a = chi(&mesh.complex, mode);
        let b = chi(&n, mode);
        EulerRow {
            name: name.into(),
            manifold: a,
            fixed_set: b,
            pass: a == b,
        }
    })
    .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(EulerReport { rows, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDimsRow {
    pub s: f64,
    pub dims: Option<[usize; 4]>,
    pub clean: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDims {
    pub rows: Vec<SweepDimsRow>,
    /// Fixed-point reference `[even abs, odd abs, even rel, odd rel]`.
    pub fixed_point: [usize; 4],
    /// Classical data of `M` in the same layout.
    pub classical: [usize; 4],
    pub pass: bool,
}

/// Dimensions across deformation parameters; needs `0` and at least three
/// nonzero values.
pub fn s_sweep_dims(mesh: &LoadedMesh, s_values: &[f64], opts: &SpectralOptions) -> Result<SweepDims> {
    use rayon::prelude::*;
    if !s_values.contains(&0.0) || s_values.iter().filter(|&&s| s != 0.0).count() < 3 {
        return Err(Error::InvalidParameter(
            "s sweep needs 0 and at least three nonzero values".into(),
        ));
    }
    if s_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("s values must be finite".into()));
    }
    let fixed_point = fixed_point_reference(mesh)?.sums();
    let classical = ClassicalData::of(&mesh.complex)?.parity_sums();
    let rows: Vec<SweepDimsRow> = s_values
        .par_iter()
        .map(|&s| match analyze_level(mesh, s, opts) {
            Ok(a) => {
                let xd = XDims::from_analysis(&a);
                SweepDimsRow {
                    s,
                    dims: Some(xd.dims),
                    clean: xd.all_clean(),
                    error: None,
                }
            }
            Err(e) => SweepDimsRow {
                s,
                dims: None,
                clean: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let pass = rows.iter().all(|r| {
        r.clean
            && match r.dims {
                Some(d) if r.s == 0.0 => d == classical,
                Some(d) => d == fixed_point,
                None => false,
            }
    });
    Ok(SweepDims {
        rows,
        fixed_point,
        classical,
        pass,
    })
}
