mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wittenlab::decomp::PARITIES;
use wittenlab::geometry::PLVectorField;
use wittenlab::mesh::{generate_mesh, load_mesh, GeneratorSpec};
use wittenlab::witten::{
    angular_form, assemble_bundle, green_residual, nilpotency_defect, standard_test_forms, stokes_probe,
    BoundaryCondition, Parity, WittenBundle,
};

fn bundle(m: &wittenlab::mesh::LoadedMesh, s: f64) -> WittenBundle {
    assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, s).unwrap()
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
}

#[test]
fn classical_complex_is_exactly_nilpotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [disk(4), annulus(4), sphere(6), torus(16, 12)] {
        let b = bundle(&m, 0.0);
        let sp = b.neumann();
        for p in PARITIES {
            for _ in 0..5 {
                let x = random(&mut rng, sp.parity_dim(p));
                let y = sp.apply_a(p.flip(), &sp.apply_a(p, &x));
                assert_eq!(y.amax(), 0.0);
            }
        }
    }
}

#[test]
fn deformed_nilpotency_defect_decreases() {
    let eta = |rings: usize| {
        let m = disk(rings);
        let b = bundle(&m, 1.0);
        nilpotency_defect(&b, &standard_test_forms(&m.complex, &m.geometry, &b)).max()
    };
    let (e8, e16) = (eta(8), eta(16));
    assert!(e8 > 0.0);
    assert!(e16 < e8, "{e8} -> {e16}");
}

#[test]
fn zero_field_ignores_scale() {
    let mut m = disk(3);
    m.field = PLVectorField::zero(m.complex.n_vertices());
    let b0 = bundle(&m, 0.0);
    let b5 = bundle(&m, 5.0);
    for p in PARITIES {
        assert_eq!(b0.neumann().dense_a(p), b5.neumann().dense_a(p));
        assert_eq!(b0.dirichlet().dense_a(p), b5.dirichlet().dense_a(p));
    }
}

#[test]
fn scale_equivariance() {
    let spec = GeneratorSpec::Disk { rings: 4, sectors: 16, radius: 1.0 };
    let m1 = load_mesh(&generate_mesh(&spec, 16, 1.0).unwrap()).unwrap();
    let m2 = load_mesh(&generate_mesh(&spec, 16, 2.0).unwrap()).unwrap();
    let a = bundle(&m1, 1.0);
    let b = bundle(&m2, 0.5);
    for p in PARITIES {
        let (x, y) = (a.neumann().dense_a(p), b.neumann().dense_a(p));
        assert!((&x - &y).amax() <= 1e-12 * x.amax(), "{}", (&x - &y).amax());
    }
}

#[test]
fn adjoint_identity_on_random_pairs() {
    for (m, s) in [(sphere(8), 1.0), (annulus(6), 1.0), (disk(6), 2.0)] {
        let g = green_residual(&bundle(&m, s), 100, 5);
        assert!(g.r1 <= 1e-12, "{}", g.r1);
        assert!(g.r2 <= 1e-12, "{}", g.r2);
    }
}

#[test]
fn neumann_codifferential_is_classical_at_zero() {
    let m = annulus(4);
    let b = bundle(&m, 0.0);
    let sp = b.neumann();
    // independent assembly: δ on 1-cochains is m0⁻¹ d0ᵀ m1
    let m0 = DMatrix::from(sp.mass(0));
    let m1 = DMatrix::from(sp.mass(1));
    let d0 = DMatrix::from(sp.coboundary(0));
    let classical = m0.clone().cholesky().unwrap().solve(&(d0.transpose() * &m1));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x1 = random(&mut rng, sp.dim_of_degree(1));
        let x = b.pack(Parity::Odd, &[(1, x1.clone())]);
        let y = sp.apply_delta(Parity::Odd, &x);
        let y0 = b.component(Parity::Even, &y, 0);
        let want = &classical * &x1;
        assert!((&y0 - &want).amax() <= 1e-10 * want.amax());
        assert_eq!(b.component(Parity::Even, &y, 2).amax(), 0.0);
    }
}

#[test]
fn dirichlet_restriction_kills_boundary_cochains() {
    let m = annulus(4);
    let b = bundle(&m, 1.0);
    let basis = b.basis();
    for p in PARITIES {
        let parts: Vec<(usize, DVector<f64>)> = p
            .degrees(2)
            .into_iter()
            .map(|k| {
                let v = DVector::from_fn(basis.dim(k), |o, _| {
                    let rep = basis.orbits(k)[o].representative();
                    if m.complex.is_boundary(k, rep) {
                        1.0 + o as f64
                    } else {
                        0.0
                    }
                });
                (k, v)
            })
            .collect();
        let x = b.pack(p, &parts);
        assert!(x.amax() > 0.0);
        let xd = b.restrict_to_dirichlet(p, &x);
        assert_eq!(xd.amax(), 0.0);
        assert_eq!(b.dirichlet().apply_delta(p, &xd).amax(), 0.0);
    }
}

#[test]
fn stiffness_is_gram_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (m, s) in [(disk(6), 1.0), (annulus(6), 0.5), (sphere(6), 1.0)] {
        let b = bundle(&m, s);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let sp = b.space(bc);
            for p in PARITIES {
                let n = sp.parity_dim(p);
                if n == 0 {
                    continue;
                }
                let sd = sp.dense_stiffness(p);
                assert_eq!(sd, sd.transpose());
                let mut raw = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    raw.set_column(j, &sp.apply_stiffness(p, &e));
                }
                assert!((&raw - raw.transpose()).amax() <= 1e-12 * raw.amax());
                for _ in 0..20 {
                    let x = random(&mut rng, n);
                    let q = p.flip();
                    let form = x.dot(&(&sd * &x));
                    let a = sp.norm(q, &sp.apply_a(p, &x));
                    let d = sp.norm(q, &sp.apply_delta(p, &x));
                    let gram = a * a + d * d;
                    assert!((form - gram).abs() <= 1e-13 * gram, "{form} vs {gram}");
                }
            }
        }
    }
}

#[test]
fn stokes_probe_is_exact_for_cochains() {
    for rings in [4, 8, 16] {
        let m = disk(rings);
        let p = stokes_probe(&m.complex, &angular_form(&m.complex, &m.geometry));
        assert!(p.discrete_gap <= 1e-12, "{}", p.discrete_gap);
        // polygon area defect of the inscribed boundary
        let sectors = 4.0 * rings as f64;
        let exact = sectors * (2.0 * std::f64::consts::PI / sectors).sin();
        assert!((p.boundary - exact).abs() < 1e-12, "{} vs {}", p.boundary, exact);
    }
}
