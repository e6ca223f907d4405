mod common;

use common::*;
use nalgebra::DMatrix;
use wittenlab::complex::{reference_betti, boundary_selector};
use wittenlab::decomp::{analyze_level, harmonic_fields, PARITIES};
use wittenlab::geometry::mass_matrix;
use wittenlab::spectral::{dense_gevp, lobpcg, CholeskyOp, LobpcgOptions};
use wittenlab::symmetry::{invariant_basis, projector_identities_hold};
use wittenlab::witten::{assemble_bundle, BoundaryCondition, Parity};

#[test]
fn radial_oracle_matches_closed_form() {
    for s in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let ode = radial_oracle_angle(s, 2000);
        let closed = (s / 2.0f64).tanh().acos();
        assert!((ode - closed).abs() < 1e-9, "s={s}: {ode} vs {closed}");
    }
}

#[test]
fn radial_oracle_frozen_value() {
    let v = radial_oracle_angle(1.0, 2000);
    assert!((v - 1.090_415_2).abs() < 1e-6, "{v}");
}

#[test]
fn disk_angle_matches_radial_oracle() {
    let m = disk(16);
    let a = analyze_level(&m, 1.0, &opts()).unwrap();
    let rep = a.angles(Parity::Even).unwrap();
    assert_eq!(rep.angles.len(), 1);
    let oracle = radial_oracle_angle(1.0, 2000);
    assert!(same_two_figures(rep.angles[0], oracle), "{} vs {}", rep.angles[0], oracle);
    // frozen discrete value
    assert!((rep.angles[0] - 1.091_431_1).abs() < 1e-6, "{}", rep.angles[0]);
    assert!(a.angles(Parity::Odd).unwrap().angles.is_empty());
}

#[test]
fn disk_angle_converges_to_oracle() {
    let oracle = radial_oracle_angle(1.0, 2000);
    let errs: Vec<f64> = [8, 16]
        .iter()
        .map(|&r| {
            let a = analyze_level(&disk(r), 1.0, &opts()).unwrap();
            (a.angles(Parity::Even).unwrap().angles[0] - oracle).abs()
        })
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

fn exact_split(c: &wittenlab::complex::OrientedComplex) -> (Vec<usize>, Vec<usize>) {
    (reference_betti(c, None), reference_betti(c, Some(&boundary_selector(c))))
}

#[test]
fn classical_dims_match_exact_betti() {
    for (name, m, abs, rel) in [
        ("annulus", annulus(6), vec![1, 1, 0], vec![0, 1, 1]),
        ("disk", disk(6), vec![1, 0, 0], vec![0, 0, 1]),
        ("sphere", sphere(8), vec![1, 0, 1], vec![1, 0, 1]),
        ("torus", torus(16, 12), vec![1, 2, 1], vec![1, 2, 1]),
    ] {
        let (a, r) = exact_split(&m.complex);
        assert_eq!(a, abs, "{name}");
        assert_eq!(r, rel, "{name}");
        let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, 0.0).unwrap();
        for p in PARITIES {
            let hn = harmonic_fields(&b, BoundaryCondition::Neumann, p, &opts()).unwrap();
            let hd = harmonic_fields(&b, BoundaryCondition::Dirichlet, p, &opts()).unwrap();
            for (k, d) in hn.degree_dims(&b) {
                assert_eq!(d, abs[k], "{name} neumann degree {k}");
            }
            for (k, d) in hd.degree_dims(&b) {
                assert_eq!(d, rel[k], "{name} dirichlet degree {k}");
            }
        }
    }
}

#[test]
fn dense_and_block_solvers_agree() {
    // half-turn action on a disk keeps the pencils above the dense limit
    let m = load(
        wittenlab::mesh::GeneratorSpec::Disk {
            rings: 12,
            sectors: 48,
            radius: 1.0,
        },
        2,
    );
    let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, 1.0).unwrap();
    let sp = b.neumann();
    let p = Parity::Even;
    let n = sp.parity_dim(p);
    assert!(n > wittenlab::spectral::DENSE_LIMIT, "{n}");
    let s = sp.dense_stiffness(p);
    let mm = sp.dense_mass(p);
    let dense = dense_gevp(&s, &mm, 6).unwrap();
    let pre = CholeskyOp::new(&sp.lumped_stiffness(p, 1e-6)).unwrap();
    let block = lobpcg(&s, &mm, &pre, 6, &LobpcgOptions::default()).unwrap();
    let scale = dense.values[5];
    for i in 0..6 {
        assert!((dense.values[i] - block.values[i]).abs() <= 1e-8 * scale, "{i}: {} vs {}", dense.values[i], block.values[i]);
    }
    // same eigenspaces up to the last clear gap: projector distance
    let cut = (1..6)
        .filter(|&i| dense.values[i] - dense.values[i - 1] > 1e-2 * dense.values[i])
        .max()
        .unwrap();
    let vd = dense.vectors.columns(0, cut);
    let vb = block.vectors.columns(0, cut);
    let pd = vd * vd.transpose() * &mm;
    let pb = vb * vb.transpose() * &mm;
    let diff: DMatrix<f64> = pd - pb;
    // residuals are 1e-8 relative to the stiffness norm, so vectors agree to residual over gap
    assert!(diff.amax() < 1e-3, "{}", diff.amax());
}

#[test]
fn harmonic_fields_agree_across_solvers() {
    let m = load(
        wittenlab::mesh::GeneratorSpec::Disk {
            rings: 12,
            sectors: 48,
            radius: 1.0,
        },
        2,
    );
    let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, 1.0).unwrap();
    for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
        let h = harmonic_fields(&b, bc, Parity::Even, &opts()).unwrap();
        assert!(!h.dense_solver);
        let sp = b.space(bc);
        let dense = dense_gevp(&sp.dense_stiffness(Parity::Even), &sp.dense_mass(Parity::Even), 8).unwrap();
        let norm = dense.values[7];
        for (i, v) in h.spectrum.iter().enumerate() {
            assert!((v - dense.values[i] / norm).abs() < 1e-6, "{bc:?} {i}: {v} vs {}", dense.values[i] / norm);
        }
        assert_eq!(h.dim(), 1);
    }
}

#[test]
fn projector_identities_exact() {
    for m in [disk(3), annulus(3), sphere(4), torus(8, 6)] {
        let basis = invariant_basis(&m.complex, &m.action);
        for k in 0..=m.complex.dim() {
            assert!(projector_identities_hold(&m.complex, &m.action, &basis, k));
        }
    }
}

#[test]
fn averaging_consistency() {
    // Jᵀ M R = Jᵀ M for an isometric action: invariant Galerkin rows do not
    // see the rotation
    let m = disk(4);
    let basis = invariant_basis(&m.complex, &m.action);
    for k in 0..=2 {
        let mk = DMatrix::from(&mass_matrix(&m.geometry, &m.complex, k));
        let j = DMatrix::from(basis.j(k));
        let r = m.action.r_matrix(k).to_dense();
        let lhs = j.transpose() * &mk * &r;
        let rhs = j.transpose() * &mk;
        assert!((lhs - &rhs).amax() <= 1e-12 * rhs.amax(), "degree {k}");
    }
}

#[test]
fn fixed_point_oracle_counts() {
    use wittenlab::cohomology::fixed_point_reference;
    assert_eq!(fixed_point_reference(&disk(4)).unwrap().sums(), [1, 0, 1, 0]);
    assert_eq!(fixed_point_reference(&sphere(6)).unwrap().sums(), [2, 0, 2, 0]);
    assert_eq!(fixed_point_reference(&annulus(4)).unwrap().sums(), [0, 0, 0, 0]);
    assert_eq!(fixed_point_reference(&torus(16, 12)).unwrap().sums(), [0, 0, 0, 0]);
}
