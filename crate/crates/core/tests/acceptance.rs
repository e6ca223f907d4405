mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wittenlab::cohomology::{euler_identities, fixed_point_reference, XDims};
use wittenlab::complex::{boundary_selector, reference_betti};
use wittenlab::decomp::{
    analyze_level, angle_sweep, five_term_decompose, parity_index, ParityOperators, LevelAnalysis, PARITIES,
};
use wittenlab::mesh::{load_mesh, LoadedMesh};
use wittenlab::scenario::{scenario_files, verify_all, RunOptions, Scenario};
use wittenlab::witten::{
    angular_form, assemble_bundle, green_residual, nilpotency_defect, standard_test_forms, stokes_probe, Parity,
};

/// Collects the sub-checks of one criterion and prints one line each.
struct Criterion {
    id: u32,
    lines: Vec<(bool, String)>,
}

impl Criterion {
    fn new(id: u32) -> Self {
        Self { id, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.lines.push((ok, what.into()));
    }

    fn finish(self) {
        let pass = self.lines.iter().all(|(ok, _)| *ok);
        for (ok, what) in &self.lines {
            println!("criterion {:>2} {} {}", self.id, if *ok { "ok  " } else { "FAIL" }, what);
        }
        println!("criterion {:>2}: {}", self.id, if pass { "PASS" } else { "FAIL" });
        assert!(pass, "criterion {} failed", self.id);
    }
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped() -> Vec<(Scenario, LoadedMesh)> {
    scenario_files(&scenario_dir())
        .unwrap()
        .iter()
        .map(|f| {
            let sc = Scenario::read(f).unwrap();
            let m = load_mesh(&sc.mesh_document(0).unwrap()).unwrap();
            (sc, m)
        })
        .collect()
}

fn annulus_16() -> LoadedMesh {
    annulus(16)
}

fn analyze(m: &LoadedMesh, s: f64) -> LevelAnalysis {
    analyze_level(m, s, &opts()).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
}

#[test]
fn criterion_01_classical_regression() {
    let mut c = Criterion::new(1);
    let t = Instant::now();
    let m = annulus_16();
    let abs = reference_betti(&m.complex, None);
    let rel = reference_betti(&m.complex, Some(&boundary_selector(&m.complex)));
    c.check(abs == vec![1, 1, 0], format!("rational betti absolute {abs:?}"));
    c.check(rel == vec![0, 1, 1], format!("rational betti relative {rel:?}"));
    let a = analyze(&m, 0.0);
    let mut hn = vec![0; 3];
    let mut hd = vec![0; 3];
    for p in PARITIES {
        let i = parity_index(p);
        for (k, d) in a.neumann[i].degree_dims(&a.bundle) {
            hn[k] += d;
        }
        for (k, d) in a.dirichlet[i].degree_dims(&a.bundle) {
            hd[k] += d;
        }
    }
    c.check(hn == abs, format!("dim H_N by degree {hn:?}"));
    c.check(hd == rel, format!("dim H_D by degree {hd:?}"));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for p in PARITIES {
        let i = parity_index(p);
        let ops = ParityOperators::new(&a.bundle, p);
        for _ in 0..20 {
            let w = random_vector(&mut rng, ops.mass.nrows());
            let f = five_term_decompose(&a.bundle, &ops, &a.neumann[i], &a.dirichlet[i], &w).unwrap();
            worst = worst.max(f.reconstruction);
        }
    }
    c.check(worst <= 1e-9, format!("five-term reconstruction {worst:.2e} <= 1e-9"));
    let secs = t.elapsed().as_secs_f64();
    c.check(secs <= 60.0, format!("runtime {secs:.1}s <= 60s"));
    c.finish();
}

#[test]
fn criterion_02_witten_collapse_torus() {
    let mut c = Criterion::new(2);
    let m = torus(64, 48);
    let x0 = XDims::from_analysis(&analyze(&m, 0.0));
    c.check(x0.dims == [2, 2, 2, 2], format!("s=0 dims {:?}", x0.dims));
    let fp = fixed_point_reference(&m).unwrap().sums();
    c.check(fp == [0, 0, 0, 0], format!("fixed set betti sums {fp:?}"));
    for s in [0.5, 1.0, 2.0] {
        let x = XDims::from_analysis(&analyze(&m, s));
        c.check(x.dims == fp, format!("s={s} dims {:?}", x.dims));
        c.check(x.all_clean(), format!("s={s} verdicts clean {:?}", x.clean));
        let lmin = x.lambda_min.iter().map(|l| l.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
        c.check(lmin >= 1e-3, format!("s={s} lambda_min {lmin:.3e} >= 1e-3"));
    }
    c.finish();
}

#[test]
fn criterion_03_fixed_point_with_boundary() {
    let mut c = Criterion::new(3);
    let m = disk(16);
    let fp = fixed_point_reference(&m).unwrap().sums();
    c.check(fp == [1, 0, 1, 0], format!("fixed point sums {fp:?}"));
    let x = XDims::from_analysis(&analyze(&m, 1.0));
    c.check(x.dims == [1, 0, 1, 0], format!("rings 16 dims {:?}", x.dims));
    c.check(x.dims == fp, "dims match fixed point betti");
    for (i, g) in x.gap_ratio.iter().enumerate() {
        c.check(*g >= 100.0, format!("gap ratio pencil {i} {g:.3e} >= 100"));
    }
    let x32 = XDims::from_analysis(&analyze(&disk(32), 1.0));
    c.check(x32.dims == x.dims, format!("rings 32 dims {:?}", x32.dims));
    c.finish();
}

#[test]
fn criterion_04_empty_fixed_set_with_boundary() {
    let mut c = Criterion::new(4);
    let mut dims = Vec::new();
    for rings in [16, 32] {
        let x = XDims::from_analysis(&analyze(&annulus(rings), 1.0));
        c.check(x.dims == [0, 0, 0, 0], format!("rings {rings} dims {:?}", x.dims));
        c.check(x.all_clean(), format!("rings {rings} verdicts clean"));
        let lmin = x.lambda_min.iter().map(|l| l.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
        c.check(lmin >= 1e-3, format!("rings {rings} lambda_min {lmin:.3e} >= 1e-3"));
        dims.push(x.dims);
    }
    c.check(dims[0] == dims[1], "stable under refinement");
    c.finish();
}

#[test]
fn criterion_05_closed_manifold() {
    let mut c = Criterion::new(5);
    let m = sphere(24);
    let fp = fixed_point_reference(&m).unwrap();
    c.check(fp.fixed_vertices == 2, format!("fixed vertices {}", fp.fixed_vertices));
    let x = XDims::from_analysis(&analyze(&m, 1.0));
    c.check(x.dims == [2, 0, 2, 0], format!("dims {:?}", x.dims));
    c.check(x.dims == fp.sums(), format!("fixed point sums {:?}", fp.sums()));
    c.check(x.all_clean(), "verdicts clean");
    c.finish();
}

#[test]
fn criterion_06_duality_on_every_scenario() {
    let mut c = Criterion::new(6);
    for (sc, m) in shipped() {
        let n = m.complex.dim();
        for &s in &sc.s_values {
            let a = analyze(&m, s);
            for p in PARITIES {
                let i = parity_index(p);
                let dual = if n % 2 == 0 { i } else { 1 - i };
                let (d, nn) = (a.dirichlet[i].dim(), a.neumann[dual].dim());
                c.check(d == nn, format!("{} s={s} parity {i}: D {d} vs N {nn}", sc.name));
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_07_green_and_stokes() {
    let mut c = Criterion::new(7);
    for (sc, m) in shipped() {
        for &s in &sc.s_values {
            let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, s).unwrap();
            let g = green_residual(&b, 100, sc.seed);
            c.check(g.r1 <= 1e-12 && g.r2 <= 1e-12, format!("{} s={s} r1 {:.2e} r2 {:.2e}", sc.name, g.r1, g.r2));
        }
    }
    // analytic value of the integral of d(x dy - y dx) over the unit disk is 2π
    let gap = |rings: usize| {
        let m = disk(rings);
        let p = stokes_probe(&m.complex, &angular_form(&m.complex, &m.geometry));
        ((p.boundary - 2.0 * PI).abs(), p.discrete_gap)
    };
    let (g16, d16) = gap(16);
    let (g32, d32) = gap(32);
    c.check(d16 <= 1e-12 && d32 <= 1e-12, format!("discrete Stokes {d16:.1e} {d32:.1e}"));
    let ratio = g32 / g16;
    c.check(
        (0.4..=0.6).contains(&ratio),
        format!("analytic gap {g16:.3e} -> {g32:.3e}, ratio {ratio:.3} in [0.4, 0.6]"),
    );
    c.finish();
}

#[test]
fn criterion_08_nilpotency_convergence() {
    let mut c = Criterion::new(8);
    let ladders: Vec<(&str, Vec<LoadedMesh>)> = vec![
        ("disk", vec![disk(8), disk(16), disk(32)]),
        ("annulus", vec![annulus(8), annulus(16), annulus(32)]),
        ("sphere", vec![sphere(6), sphere(12), sphere(24)]),
        ("torus", vec![torus(16, 12), torus(32, 24), torus(64, 48)]),
    ];
    for (name, meshes) in ladders {
        let eta: Vec<f64> = meshes
            .iter()
            .map(|m| {
                let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, 1.0).unwrap();
                nilpotency_defect(&b, &standard_test_forms(&m.complex, &m.geometry, &b)).max()
            })
            .collect();
        for w in eta.windows(2) {
            let r = w[1] / w[0];
            c.check(r <= 0.75, format!("{name} eta {:.3e} -> {:.3e} ratio {r:.3}", w[0], w[1]));
        }
    }
    c.finish();
}

#[test]
fn criterion_09_decomposition_orthogonality() {
    let mut c = Criterion::new(9);
    let m = disk(16);
    let a = analyze(&m, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in PARITIES {
        let i = parity_index(p);
        let ops = ParityOperators::new(&a.bundle, p);
        let (mut morrey, mut five) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let w = random_vector(&mut rng, ops.mass.nrows());
            let f = five_term_decompose(&a.bundle, &ops, &a.neumann[i], &a.dirichlet[i], &w).unwrap();
            morrey = morrey.max(f.morrey.orthogonality.iter().cloned().fold(0.0, f64::max));
            five = five.max(f.orthogonality);
        }
        c.check(morrey <= 1e-9, format!("parity {i} Morrey pairwise {morrey:.2e} <= 1e-9"));
        c.check(five <= 1e-9, format!("parity {i} five-term pairwise {five:.2e} <= 1e-9"));
        if let Some(h) = a.harmonic_angle(p) {
            c.check(h >= 1e-3, format!("parity {i} smallest H_N/H_D angle {h:.3e} >= 1e-3"));
        }
        for sp in [&a.split_neumann[i], &a.split_dirichlet[i]] {
            c.check(
                sp.boundary_cross_gram <= 1e-9,
                format!("parity {i} {:?} BH cross-Gram {:.2e} <= 1e-9", sp.bc, sp.boundary_cross_gram),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_10_split_cross_validation() {
    let mut c = Criterion::new(10);
    let disk_a = analyze(&disk(16), 1.0);
    let i = parity_index(Parity::Even);
    for sp in [&disk_a.split_neumann[i], &disk_a.split_dirichlet[i]] {
        let (ih, bh) = (sp.interior.ncols(), sp.boundary.ncols());
        c.check(ih == 1 && bh == 0, format!("disk {:?} IH {ih} BH {bh}", sp.bc));
        c.check(sp.trace_interior.ncols() == ih, format!("disk {:?} trace IH {}", sp.bc, sp.trace_interior.ncols()));
        c.check(sp.method_angle <= 1e-6, format!("disk {:?} method angle {:.2e}", sp.bc, sp.method_angle));
    }
    let ann = analyze(&annulus_16(), 0.0);
    let i = parity_index(Parity::Odd);
    for sp in [&ann.split_neumann[i], &ann.split_dirichlet[i]] {
        let (ih, bh) = (sp.interior.ncols(), sp.boundary.ncols());
        c.check(ih == 0 && bh == 1, format!("annulus s=0 odd {:?} IH {ih} BH {bh}", sp.bc));
        c.check(sp.trace_interior.ncols() == ih, format!("annulus {:?} trace IH {}", sp.bc, sp.trace_interior.ncols()));
        c.check(sp.method_angle <= 1e-6, format!("annulus {:?} method angle {:.2e}", sp.bc, sp.method_angle));
    }
    c.finish();
}

#[test]
fn criterion_11_acute_duality_angle() {
    let mut c = Criterion::new(11);
    let m = disk(16);
    let a = analyze(&m, 1.0);
    let mut all = a.angles(Parity::Even).unwrap().angles;
    all.extend(a.angles(Parity::Odd).unwrap().angles);
    c.check(all.len() == 1, format!("angle count {}", all.len()));
    if let Some(&t) = all.first() {
        c.check(t > 1e-3 && t < FRAC_PI_2 - 1e-3, format!("theta {t:.6} inside margins"));
        let oracle = radial_oracle_angle(1.0, 2000);
        c.check(same_two_figures(t, oracle), format!("theta {t:.5} vs radial oracle {oracle:.5}"));
    }
    let s_values = [0.25, 0.5, 1.0, 2.0, 4.0];
    let table = angle_sweep(&m, &s_values, &opts());
    c.check(table.failures.is_empty(), format!("sweep failures {:?}", table.failures));
    c.check(table.empty.is_empty(), format!("sweep empty at {:?}", table.empty));
    for r in &table.rows {
        c.check(
            r.angle_radians > 0.0 && r.angle_radians < FRAC_PI_2,
            format!("sweep s={} theta {:.5}", r.s, r.angle_radians),
        );
    }
    c.finish();
}

#[test]
fn criterion_12_euler_identities() {
    let mut c = Criterion::new(12);
    for (sc, m) in shipped() {
        let e = euler_identities(&m).unwrap();
        for r in &e.rows {
            c.check(r.pass, format!("{} {}: M {} vs N {}", sc.name, r.name, r.manifold, r.fixed_set));
        }
    }
    c.finish();
}

#[test]
fn criterion_13_determinism() {
    let mut c = Criterion::new(13);
    let opts = RunOptions {
        seed: Some(11),
        profile: None,
    };
    let (s1, r1) = verify_all(&scenario_dir(), &opts, 4).unwrap();
    let (s2, r2) = verify_all(&scenario_dir(), &opts, 2).unwrap();
    c.check(s1 == s2, "suite summaries identical");
    c.check(r1.len() == r2.len(), format!("{} vs {} reports", r1.len(), r2.len()));
    for (a, b) in r1.iter().zip(&r2) {
        let same = a.deterministic_json().unwrap() == b.deterministic_json().unwrap();
        c.check(same, format!("{} byte-identical", a.scenario.name));
    }
    c.finish();
}
