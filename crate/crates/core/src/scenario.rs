//! Scenario files, the analysis pipeline and machine-checkable reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohomology::{euler_identities, s_sweep_dims, verify_isomorphisms, SweepDims, XDims};
use crate::decomp::{
    angle_sweep, analyze_level, five_term_decompose, parity_index, LevelAnalysis, ParityOperators, SpectralOptions,
    SweepTable, PARITIES, TAU_FIELD,
};
use crate::error::{Error, Result};
use crate::mesh::{generate_mesh, load_mesh, GeneratorSpec, LoadedMesh, MeshDocument};
use crate::spectral::KernelTolerances;
use crate::witten::{assemble_bundle, green_residual, nilpotency_defect, standard_test_forms};

pub const SCENARIO_SCHEMA: &str = "wittenlab.scenario/1";
pub const REPORT_SCHEMA: &str = "wittenlab.report/1";
pub const SCENARIO_EXTENSION: &str = "scenario";

/// Collision margin for duality angles and the `H_N ∩ H_D` witness.
pub const ANGLE_MARGIN: f64 = 1e-3;
/// Smallest admissible normalized eigenvalue above an empty kernel.
pub const LAMBDA_MIN: f64 = 1e-3;
pub const GREEN_TOL: f64 = 1e-12;
pub const RECONSTRUCTION_TOL: f64 = 1e-9;
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
pub const CROSS_GRAM_TOL: f64 = 1e-9;
pub const ETA_RATIO_TOL: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSource {
    Generator(GeneratorSpec),
    /// Mesh document path, relative to the scenario file.
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolProfile {
    Default,
    Strict,
}

impl TolProfile {
    pub fn tolerances(self) -> KernelTolerances {
        match self {
            TolProfile::Default => KernelTolerances::default_profile(),
            TolProfile::Strict => KernelTolerances::strict_profile(),
        }
    }
}

/// Requested analyses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    pub dims: bool,
    pub splits: bool,
    pub angles: bool,
    pub euler: bool,
    /// Number of random cochains for the five-term decomposition.
    pub decompositions: usize,
    /// Number of random pairs for the Green identity.
    pub green: usize,
    /// Refined levels for dimension stability and nilpotency convergence.
    pub refinements: usize,
    pub sweep_dims: Vec<f64>,
    pub angle_sweep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    pub mesh: MeshSource,
    /// Action order for generated meshes (defaults to the sector count of
    /// each refinement level).
    #[serde(default)]
    pub action_order: Option<usize>,
    /// Scale of the generated rotation field.
    #[serde(default = "one")]
    pub field_scale: f64,
    pub s_values: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Option<KernelTolerances>,
    pub analyses: Analyses,
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        Ok(sc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut sc = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let MeshSource::File(p) = &sc.mesh {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                sc.mesh = MeshSource::File(base.join(p));
            }
        }
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Mesh document of refinement level `level` (generators only beyond 0).
    pub fn mesh_document(&self, level: usize) -> Result<MeshDocument> {
        match &self.mesh {
            MeshSource::Generator(g) => {
                let mut spec = g.clone();
                for _ in 0..level {
                    spec = spec.refined();
                }
                let order = self.action_order.unwrap_or_else(|| spec.sectors());
                generate_mesh(&spec, order, self.field_scale)
            }
            MeshSource::File(p) => {
                if level > 0 {
                    return Err(Error::InvalidScenario("refinement needs a generated mesh".into()));
                }
                MeshDocument::read(p)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(format!("{}: {m}", self.name)));
        if self.schema != SCENARIO_SCHEMA {
            return bad(&format!("unsupported schema {:?}", self.schema));
        }
        if self.s_values.is_empty() {
            return bad("s_values is empty");
        }
        if self.s_values.iter().chain(&self.analyses.angle_sweep).chain(&self.analyses.sweep_dims).any(|s| !s.is_finite()) {
            return bad("s values must be finite");
        }
        if !(self.field_scale.is_finite() && self.field_scale > 0.0) {
            return bad("field_scale must be positive");
        }
        if let Some(t) = &self.tolerances {
            let ok = (1.0..=1e6).contains(&t.rho_min)
                && (1e-12..=1e-2).contains(&t.tau_abs)
                && t.tau_floor > 0.0
                && t.tau_floor < t.tau_abs;
            if !ok {
                return bad("tolerances outside documented ranges");
            }
        }
        if self.analyses.refinements > 3 {
            return bad("at most three refinements");
        }
        if let MeshSource::Generator(g) = &self.mesh {
            let closed = matches!(g, GeneratorSpec::Sphere { .. } | GeneratorSpec::Torus { .. });
            if closed && (self.analyses.angles || !self.analyses.angle_sweep.is_empty()) {
                return bad("angle analyses need a manifold with boundary");
            }
        }
        if !self.analyses.sweep_dims.is_empty() {
            let nz = self.analyses.sweep_dims.iter().filter(|&&s| s != 0.0).count();
            if !self.analyses.sweep_dims.contains(&0.0) || nz < 3 {
                return bad("sweep_dims needs 0 and at least three nonzero values");
            }
        }
        Ok(())
    }
}

/// Run-time options that override scenario fields.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub profile: Option<TolProfile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    Equal,
    /// Strictly inside `(tolerance, upper)`.
    Inside,
}

/// One numeric entry with its tolerance and margin (positive = passing side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub margin: f64,
    pub pass: bool,
}

fn finite(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else {
        x.clamp(-f64::MAX, f64::MAX)
    }
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        let value = finite(value);
        Self {
            name: name.into(),
            value,
            comparison: Comparison::AtMost,
            tolerance: tol,
            upper: None,
            margin: finite(tol - value),
            pass: value <= tol,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        let value = finite(value);
        Self {
            name: name.into(),
            value,
            comparison: Comparison::AtLeast,
            tolerance: tol,
            upper: None,
            margin: finite(value - tol),
            pass: value >= tol,
        }
    }

    pub fn equal(name: impl Into<String>, value: usize, expected: usize) -> Self {
        Self {
            name: name.into(),
            value: value as f64,
            comparison: Comparison::Equal,
            tolerance: expected as f64,
            upper: None,
            margin: -(value as f64 - expected as f64).abs(),
            pass: value == expected,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::equal(name, ok as usize, 1)
    }

    pub fn inside(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        let value = finite(value);
        Self {
            name: name.into(),
            value,
            comparison: Comparison::Inside,
            tolerance: lo,
            upper: Some(hi),
            margin: (value - lo).min(hi - value),
            pass: value > lo && value < hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub pencil: String,
    pub dim: usize,
    pub spectrum: Vec<f64>,
    pub gap_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub s: f64,
    pub dims: Option<[usize; 4]>,
    pub spectra: Vec<SpectrumEntry>,
    pub angles: Vec<f64>,
    pub split_dims: Option<[[usize; 2]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub checks: usize,
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub tolerances: KernelTolerances,
    pub mesh_counts: Vec<Vec<usize>>,
    pub levels: Vec<LevelReport>,
    pub nilpotency: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_dims: Option<SweepDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_sweep: Option<SweepTable>,
    pub checks: Vec<Check>,
    pub summary: Summary,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serialized report without the wall-clock section.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.timings.clear();
        r.to_json()
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.0.entry(phase.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
        out
    }
}

const PENCILS: [&str; 4] = ["even_neumann", "odd_neumann", "even_dirichlet", "odd_dirichlet"];
const PARITY_NAMES: [&str; 2] = ["even", "odd"];

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
}

fn level_checks(
    mesh: &LoadedMesh,
    a: &LevelAnalysis,
    sc: &Scenario,
    tag: &str,
    seed: u64,
    checks: &mut Vec<Check>,
    timer: &mut Timer,
) -> Result<LevelReport> {
    let an = &sc.analyses;
    let xd = XDims::from_analysis(a);
    let n = mesh.complex.dim();
    let bases = [&a.neumann[0], &a.neumann[1], &a.dirichlet[0], &a.dirichlet[1]];
    let spectra = (0..4)
        .map(|i| SpectrumEntry {
            pencil: PENCILS[i].into(),
            dim: xd.dims[i],
            spectrum: bases[i].spectrum.clone(),
            gap_ratio: finite(bases[i].decision.gap_ratio),
        })
        .collect();
    if an.dims {
        let iso = timer.time("verify", || verify_isomorphisms(mesh, a))?;
        for r in iso.dims.iter().chain(&iso.split) {
            if iso.split.contains(r) && !an.splits {
                continue;
            }
            checks.push(Check::equal(format!("{tag}/{}", r.name), r.computed, r.reference));
        }
        for i in 0..4 {
            let b = bases[i];
            let rho = sc.tolerances.unwrap_or(KernelTolerances::default_profile()).rho_min;
            checks.push(Check::at_least(format!("{tag}/gap_ratio_{}", PENCILS[i]), b.decision.gap_ratio, rho));
            if let Some(l) = b.lambda_min() {
                checks.push(Check::at_least(format!("{tag}/lambda_min_{}", PENCILS[i]), l, LAMBDA_MIN));
            }
            let res = b.residual_a.iter().chain(&b.residual_delta).cloned().fold(0.0, f64::max);
            checks.push(Check::at_most(format!("{tag}/field_residual_{}", PENCILS[i]), res, TAU_FIELD));
        }
        for p in PARITIES {
            let i = parity_index(p);
            let dual = if (n % 2 == 0) == (i == 0) { 0 } else { 1 };
            checks.push(Check::equal(
                format!("{tag}/duality_{}", PARITY_NAMES[i]),
                a.dirichlet[i].dim(),
                a.neumann[dual].dim(),
            ));
        }
    }
    let mut split_dims = None;
    if an.splits {
        let mut sd = [[0; 2]; 4];
        for p in PARITIES {
            let i = parity_index(p);
            let (sn, sdd) = (&a.split_neumann[i], &a.split_dirichlet[i]);
            sd[0][i] = sn.interior.ncols();
            sd[1][i] = sn.boundary.ncols();
            sd[2][i] = sdd.interior.ncols();
            sd[3][i] = sdd.boundary.ncols();
            let pn = PARITY_NAMES[i];
            checks.push(Check::at_most(format!("{tag}/method_angle_neumann_{pn}"), sn.method_angle, crate::decomp::TAU_SPLIT));
            checks.push(Check::at_most(format!("{tag}/method_angle_dirichlet_{pn}"), sdd.method_angle, crate::decomp::TAU_SPLIT));
            checks.push(Check::equal(format!("{tag}/interior_pairing_{pn}"), sn.interior.ncols(), sdd.interior.ncols()));
            checks.push(Check::at_most(format!("{tag}/bh_cross_gram_neumann_{pn}"), sn.boundary_cross_gram, CROSS_GRAM_TOL));
            checks.push(Check::at_most(format!("{tag}/bh_cross_gram_dirichlet_{pn}"), sdd.boundary_cross_gram, CROSS_GRAM_TOL));
            if let Some(h) = a.harmonic_angle(p) {
                checks.push(Check::at_least(format!("{tag}/harmonic_angle_{pn}"), h, ANGLE_MARGIN));
            }
        }
        split_dims = Some(sd);
    }
    let mut angles = Vec::new();
    if an.angles {
        for p in PARITIES {
            let rep = a.angles(p)?;
            for (j, &t) in rep.angles.iter().enumerate() {
                checks.push(Check::inside(
                    format!("{tag}/angle_{}_{j}", PARITY_NAMES[parity_index(p)]),
                    t,
                    ANGLE_MARGIN,
                    std::f64::consts::FRAC_PI_2 - ANGLE_MARGIN,
                ));
            }
            angles.extend(rep.angles);
        }
    }
    if an.green > 0 {
        let g = timer.time("green", || green_residual(&a.bundle, an.green, seed));
        checks.push(Check::at_most(format!("{tag}/green_r1"), g.r1, GREEN_TOL));
        checks.push(Check::at_most(format!("{tag}/green_r2"), g.r2, GREEN_TOL));
    }
    if an.decompositions > 0 {
        timer.time("decompose", || -> Result<()> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for p in PARITIES {
                let i = parity_index(p);
                let ops = ParityOperators::new(&a.bundle, p);
                let (mut recon, mut orth, mut morth) = (0.0f64, 0.0f64, 0.0f64);
                for _ in 0..an.decompositions {
                    let w = random_vector(&mut rng, ops.mass.nrows());
                    let f = five_term_decompose(&a.bundle, &ops, &a.neumann[i], &a.dirichlet[i], &w)?;
                    recon = recon.max(f.reconstruction);
                    orth = orth.max(f.orthogonality);
                    morth = morth.max(f.morrey.orthogonality.iter().cloned().fold(0.0, f64::max));
                }
                let pn = PARITY_NAMES[i];
                checks.push(Check::at_most(format!("{tag}/five_term_reconstruction_{pn}"), recon, RECONSTRUCTION_TOL));
                checks.push(Check::at_most(format!("{tag}/morrey_orthogonality_{pn}"), morth, ORTHOGONALITY_TOL));
                checks.push(Check::at_most(format!("{tag}/five_term_orthogonality_{pn}"), orth, ORTHOGONALITY_TOL));
            }
            Ok(())
        })?;
    }
    Ok(LevelReport {
        level: 0,
        s: a.s,
        dims: Some(xd.dims),
        spectra,
        angles,
        split_dims,
        error: None,
    })
}

/// Validate, assemble, solve and analyze one scenario. Validation failures
/// are returned as errors; analysis failures are recorded in the report.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    sc.validate()?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let tolerances = match opts.profile {
        Some(p) => p.tolerances(),
        None => sc.tolerances.unwrap_or(KernelTolerances::default_profile()),
    };
    let sopts = SpectralOptions { tolerances, seed };
    let mut timer = Timer(BTreeMap::new());
    let mut checks = Vec::new();
    let mut levels = Vec::new();
    let mut mesh_counts = Vec::new();
    let mut nilpotency = Vec::new();
    let mut base_dims: BTreeMap<u64, [usize; 4]> = BTreeMap::new();
    let mut meshes = Vec::new();
    for level in 0..=sc.analyses.refinements {
        let doc = timer.time("mesh", || sc.mesh_document(level))?;
        let mesh = timer.time("validate", || load_mesh(&doc))?;
        mesh_counts.push(mesh.complex.counts());
        meshes.push(mesh);
    }
    let mesh = &meshes[0];
    if sc.analyses.euler {
        let e = timer.time("euler", || euler_identities(mesh))?;
        for r in &e.rows {
            checks.push(Check::equal(
                format!("euler_{}", r.name),
                (r.manifold - r.fixed_set).unsigned_abs() as usize,
                0,
            ));
        }
    }
    for (level, m) in meshes.iter().enumerate() {
        for &s in &sc.s_values {
            let tag = format!("l{level}/s={s}");
            let res = timer
                .time("solve", || analyze_level(m, s, &sopts))
                .and_then(|a| {
                    if level == 0 {
                        level_checks(m, &a, sc, &tag, seed, &mut checks, &mut timer)
                    } else {
                        let xd = XDims::from_analysis(&a);
                        Ok(LevelReport {
                            level,
                            s,
                            dims: Some(xd.dims),
                            spectra: Vec::new(),
                            angles: Vec::new(),
                            split_dims: None,
                            error: None,
                        })
                    }
                });
            match res {
                Ok(mut r) => {
                    r.level = level;
                    let d = r.dims.expect("dims present");
                    match base_dims.get(&s.to_bits()) {
                        None => {
                            base_dims.insert(s.to_bits(), d);
                        }
                        Some(b) => {
                            for i in 0..4 {
                                checks.push(Check::equal(format!("{tag}/stable_{}", PENCILS[i]), d[i], b[i]));
                            }
                        }
                    }
                    levels.push(r);
                }
                Err(e) => {
                    checks.push(Check::flag(format!("{tag}/analysis"), false));
                    levels.push(LevelReport {
                        level,
                        s,
                        dims: None,
                        spectra: Vec::new(),
                        angles: Vec::new(),
                        split_dims: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        if sc.analyses.refinements > 0 {
            let s = sc.s_values.iter().cloned().find(|&s| s != 0.0).unwrap_or(1.0);
            let eta = timer.time("nilpotency", || -> Result<f64> {
                let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, s)?;
                let tests = standard_test_forms(&m.complex, &m.geometry, &b);
                Ok(nilpotency_defect(&b, &tests).max())
            })?;
            if let Some(&prev) = nilpotency.last() {
                checks.push(Check::at_most(format!("l{level}/eta_ratio"), eta / prev, ETA_RATIO_TOL));
            }
            nilpotency.push(eta);
        }
    }
    let sweep_dims = if sc.analyses.sweep_dims.is_empty() {
        None
    } else {
        let sd = timer.time("sweep_dims", || s_sweep_dims(mesh, &sc.analyses.sweep_dims, &sopts))?;
        checks.push(Check::flag("sweep_dims", sd.pass));
        Some(sd)
    };
    let angle_table = if sc.analyses.angle_sweep.is_empty() {
        None
    } else {
        let t = timer.time("angle_sweep", || angle_sweep(mesh, &sc.analyses.angle_sweep, &sopts));
        for r in &t.rows {
            checks.push(Check::inside(
                format!("angle_sweep/s={}/{}", r.s, r.angle_index),
                r.angle_radians,
                ANGLE_MARGIN,
                std::f64::consts::FRAC_PI_2 - ANGLE_MARGIN,
            ));
        }
        for &s in &sc.analyses.angle_sweep {
            if s != 0.0 && t.empty.contains(&s) {
                checks.push(Check::flag(format!("angle_sweep/s={s}/nonempty"), false));
            }
        }
        for (s, _) in &t.failures {
            checks.push(Check::flag(format!("angle_sweep/s={s}/analysis"), false));
        }
        Some(t)
    };
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(ScenarioReport {
        schema: REPORT_SCHEMA.into(),
        scenario: sc.clone(),
        seed,
        tolerances,
        mesh_counts,
        levels,
        nilpotency,
        sweep_dims,
        angle_sweep: angle_table,
        summary: Summary {
            pass: failed.is_empty(),
            checks: checks.len(),
            failed,
        },
        checks,
        timings: timer.0,
    })
}

/// One row of the suite summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub file: String,
    pub scenario: Option<String>,
    pub pass: bool,
    pub failed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Whether the error was a validation failure.
    pub validation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub pass: bool,
}

pub type Pool = rayon::ThreadPool;

/// Worker pool with `jobs` threads (at least one).
pub fn pool(jobs: usize) -> Result<Pool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Scenario files of a directory, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == SCENARIO_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every scenario of `dir` on a pool of `jobs` workers. Reports are
/// returned in file order.
pub fn verify_all(dir: &Path, opts: &RunOptions, jobs: usize) -> Result<(SuiteReport, Vec<ScenarioReport>)> {
    use rayon::prelude::*;
    let files = scenario_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidScenario(format!("no scenarios in {}", dir.display())));
    }
    let pool = pool(jobs)?;
    let results: Vec<(PathBuf, Result<ScenarioReport>)> = pool.install(|| {
        files
            .par_iter()
            .map(|f| (f.clone(), Scenario::read(f).and_then(|sc| run_scenario(&sc, opts))))
            .collect()
    });
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (f, r) in results {
        let file = f.file_name().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        match r {
            Ok(rep) => {
                rows.push(SuiteRow {
                    file,
                    scenario: Some(rep.scenario.name.clone()),
                    pass: rep.summary.pass,
                    failed: rep.summary.failed.clone(),
                    error: None,
                    validation: false,
                });
                reports.push(rep);
            }
            Err(e) => rows.push(SuiteRow {
                file,
                scenario: None,
                pass: false,
                failed: Vec::new(),
                validation: e.is_validation(),
                error: Some(e.to_string()),
            }),
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok((SuiteReport { rows, pass }, reports))
}
