mod common;

use common::*;
use nalgebra::{DMatrix, DVector, Vector3};
use wittenlab::complex::{
    boundary_selector, boundary_subcomplex, euler_characteristic, reference_betti, EulerMode, OrientedComplex,
};
use wittenlab::geometry::{contraction_matrix, interpolate, mass_matrix, EmbeddedGeometry, FnForm, PLVectorField};
use wittenlab::mesh::GeneratorSpec;
use wittenlab::symmetry::{fixed_subcomplex, invariant_basis, validate_action, CyclicAction};
use wittenlab::Error;

fn unit_square(n: usize) -> (OrientedComplex, EmbeddedGeometry) {
    let id = |i: usize, j: usize| i * (n + 1) + j;
    let mut tops = Vec::new();
    for i in 0..n {
        for j in 0..n {
            tops.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tops.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let c = OrientedComplex::from_top_simplices(2, (n + 1) * (n + 1), &tops).unwrap();
    let coords = (0..=n)
        .flat_map(|i| (0..=n).map(move |j| Vector3::new(i as f64 / n as f64, j as f64 / n as f64, 0.0)))
        .collect();
    let g = EmbeddedGeometry::new(&c, coords, 2).unwrap();
    (c, g)
}

fn dense(m: &nalgebra_sparse::CsrMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from(m)
}

#[test]
fn disk_generator_counts_and_euler() {
    let m = load(GeneratorSpec::Disk { rings: 2, sectors: 4, radius: 1.0 }, 4);
    assert_eq!(m.complex.counts(), vec![9, 20, 12]);
    assert_eq!(euler_characteristic(&m.complex, EulerMode::Absolute), 1);
    assert_eq!(euler_characteristic(&m.complex, EulerMode::Boundary), 0);
    assert_eq!(euler_characteristic(&m.complex, EulerMode::Relative), 1);
}

#[test]
fn euler_of_closed_surfaces() {
    assert_eq!(euler_characteristic(&sphere(6).complex, EulerMode::Absolute), 2);
    assert_eq!(euler_characteristic(&torus(16, 12).complex, EulerMode::Absolute), 0);
}

#[test]
fn boundary_complexes() {
    let (b, _) = boundary_subcomplex(&disk(3).complex).unwrap();
    assert_eq!(b.dim(), 1);
    assert_eq!(b.count(0), b.count(1));
    assert_eq!(reference_betti(&b, None), vec![1, 1]);
    assert_eq!(euler_characteristic(&b, EulerMode::Absolute), 0);
    let (b, _) = boundary_subcomplex(&annulus(3).complex).unwrap();
    assert_eq!(reference_betti(&b, None), vec![2, 2]);
    let (b, _) = boundary_subcomplex(&sphere(4).complex).unwrap();
    assert!(b.counts().iter().all(|&x| x == 0));
}

#[test]
fn reference_betti_examples() {
    let a = annulus(3);
    assert_eq!(reference_betti(&a.complex, None), vec![1, 1, 0]);
    assert_eq!(reference_betti(&a.complex, Some(&boundary_selector(&a.complex))), vec![0, 1, 1]);
    let d = disk(3);
    assert_eq!(reference_betti(&d.complex, Some(&boundary_selector(&d.complex))), vec![0, 0, 1]);
}

#[test]
fn coboundary_squares_to_zero() {
    for m in [disk(4), annulus(3), sphere(5), torus(8, 6)] {
        let c = &m.complex;
        for k in 0..c.dim() - 1 {
            assert!(c.coboundary(k + 1).mul(c.coboundary(k)).is_zero());
        }
    }
}

#[test]
fn top_degree_mass_is_inverse_volume() {
    let m = annulus(3);
    let mm = dense(&mass_matrix(&m.geometry, &m.complex, 2));
    for (i, t) in m.complex.simplices(2).iter().enumerate() {
        let v = m.geometry.simplex_volume(t);
        assert!((mm[(i, i)] - 1.0 / v).abs() <= 1e-12 / v);
        for j in 0..mm.ncols() {
            if j != i {
                assert_eq!(mm[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn constant_one_form_has_unit_norm_on_square() {
    let (c, g) = unit_square(2);
    let dx = interpolate(&g, &c, &FnForm { degree: 1, f: |_: &Vector3<f64>, v: &[Vector3<f64>]| v[0].x });
    let m1 = dense(&mass_matrix(&g, &c, 1));
    let val = dx.dot(&(&m1 * &dx));
    assert!((val - 1.0).abs() < 1e-12, "{val}");
}

#[test]
fn zero_field_contracts_to_zero() {
    let m = disk(3);
    let x = PLVectorField::zero(m.complex.n_vertices());
    for k in 1..=2 {
        assert!(contraction_matrix(&m.geometry, &m.complex, &x, k).values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn constant_field_contracts_dx_to_one() {
    for n in [2, 4] {
        let (c, g) = unit_square(n);
        let x = PLVectorField::tangent_projected(&g, &c, &vec![Vector3::new(1.0, 0.0, 0.0); c.n_vertices()]);
        let dx = interpolate(&g, &c, &FnForm { degree: 1, f: |_: &Vector3<f64>, v: &[Vector3<f64>]| v[0].x });
        let b = dense(&contraction_matrix(&g, &c, &x, 1));
        let m0 = dense(&mass_matrix(&g, &c, 0));
        let f = m0.cholesky().unwrap().solve(&(&b * &dx));
        let err = (f - DVector::from_element(c.n_vertices(), 1.0)).amax();
        assert!(err < 1e-12, "n={n}: {err}");
    }
}

#[test]
fn rotation_contracts_radial_form_to_near_zero() {
    let residual = |rings: usize| {
        let m = disk(rings);
        let (c, g) = (&m.complex, &m.geometry);
        let radial = interpolate(g, c, &FnForm { degree: 1, f: |p: &Vector3<f64>, v: &[Vector3<f64>]| p.x * v[0].x + p.y * v[0].y });
        let angular = interpolate(g, c, &FnForm { degree: 1, f: |p: &Vector3<f64>, v: &[Vector3<f64>]| p.x * v[0].y - p.y * v[0].x });
        let b = dense(&contraction_matrix(g, c, &m.field, 1));
        let m0 = dense(&mass_matrix(g, c, 0)).cholesky().unwrap();
        let fr = m0.solve(&(&b * radial));
        let fa = m0.solve(&(&b * angular));
        fr.amax() / fa.amax()
    };
    for rings in [8, 16] {
        let r = residual(rings);
        assert!(r < 1e-12, "rings {rings}: {r}");
    }
}

#[test]
fn rotation_field_diagnostics_on_disk() {
    let m = disk(4);
    assert!(m.field_diagnostics.tangency_defect <= 1e-15);
    assert_eq!(m.action_diagnostics.field_invariance_defect.map(|d| d < 1e-12), Some(true));
    assert!(m.action_diagnostics.orientation_signs_positive);
}

#[test]
fn reflection_is_rejected() {
    // square fan around the origin, symmetric under y -> -y
    let tops = vec![vec![0, 1, 2], vec![0, 2, 3], vec![0, 3, 4], vec![0, 4, 1]];
    let c = OrientedComplex::from_top_simplices(2, 5, &tops).unwrap();
    let pts = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
    ];
    let g = EmbeddedGeometry::new(&c, pts, 2).unwrap();
    let a = CyclicAction::new(&c, 2, vec![0, 1, 4, 3, 2]).unwrap();
    let err = validate_action(&c, &g, &a, None).unwrap_err();
    assert!(matches!(err, Error::OrientationReversing { .. }), "{err}");
}

#[test]
fn annulus_rotation_order_six_passes() {
    let m = load(
        GeneratorSpec::Annulus {
            inner: 1.0,
            outer: 2.0,
            rings: 3,
            sectors: 6,
        },
        6,
    );
    let d = validate_action(&m.complex, &m.geometry, &m.action, Some(&m.field)).unwrap();
    assert!(d.boundary_preserved && d.chain_map_exact);
}

#[test]
fn generators_exact_for_every_divisor() {
    let specs = [
        GeneratorSpec::Disk { rings: 3, sectors: 12, radius: 1.0 },
        GeneratorSpec::Annulus {
            inner: 1.0,
            outer: 2.0,
            rings: 2,
            sectors: 12,
        },
        GeneratorSpec::Sphere { bands: 4, sectors: 12 },
        GeneratorSpec::Torus {
            major: 2.0,
            minor: 1.0,
            n1: 12,
            n2: 6,
        },
    ];
    for spec in specs {
        for order in [1, 2, 3, 4, 6, 12] {
            let m = load(spec.clone(), order);
            let d = &m.action_diagnostics;
            assert_eq!(d.order, order);
            assert!(d.isometry_defect <= 1e-12 * m.geometry.scale(), "{spec:?} {order}");
            assert!(d.chain_map_exact && d.orientation_signs_positive && d.boundary_preserved);
            assert!(d.field_invariance_defect.unwrap() <= 1e-12);
        }
    }
}

#[test]
fn chain_map_identity_exact() {
    for m in [disk(3), annulus(3), sphere(4), torus(8, 6)] {
        let c = &m.complex;
        for k in 0..c.dim() {
            let r1 = m.action.r_matrix(k + 1);
            let r0 = m.action.r_matrix(k);
            assert_eq!(r1.mul(c.coboundary(k)), c.coboundary(k).mul(&r0));
        }
    }
}

#[test]
fn invariant_basis_examples() {
    let m = load(GeneratorSpec::Disk { rings: 3, sectors: 4, radius: 1.0 }, 4);
    let b = invariant_basis(&m.complex, &m.action);
    assert_eq!(b.dim(0), 4);
    let t = load(GeneratorSpec::Disk { rings: 3, sectors: 4, radius: 1.0 }, 1);
    let b = invariant_basis(&t.complex, &t.action);
    for k in 0..=2 {
        let j = DMatrix::from(b.j(k));
        assert_eq!(j, DMatrix::identity(t.complex.count(k), t.complex.count(k)));
    }
    let s = load(GeneratorSpec::Sphere { bands: 6, sectors: 16 }, 8);
    let b = invariant_basis(&s.complex, &s.action);
    // lat-long sphere: 2 pole fans of 16 plus 2·16 per inner band
    let triangles = 2 * 16 + 2 * 16 * (6 - 2);
    assert_eq!(s.complex.count(2), triangles);
    assert_eq!(b.dim(2), triangles / 8);
}

#[test]
fn fixed_subcomplex_examples() {
    let d = disk(3);
    let (n, sel) = fixed_subcomplex(&d.complex, &d.geometry, &d.action, &d.field, d.trusted_fixed.as_deref());
    assert_eq!(n.counts(), vec![1]);
    let mut b = reference_betti(&n, None);
    b.resize(3, 0);
    assert_eq!(b, vec![1, 0, 0]);
    assert!(!n.has_boundary());
    assert_eq!(d.geometry.position(sel.vertex_map[0]).norm(), 0.0);
    let a = annulus(3);
    let (n, _) = fixed_subcomplex(&a.complex, &a.geometry, &a.action, &a.field, a.trusted_fixed.as_deref());
    assert!(n.counts().iter().all(|&x| x == 0));
    let s = sphere(6);
    let (n, _) = fixed_subcomplex(&s.complex, &s.geometry, &s.action, &s.field, s.trusted_fixed.as_deref());
    assert_eq!(n.counts()[0], 2);
}

#[test]
fn fixed_subcomplex_without_metadata_matches() {
    for m in [disk(3), sphere(6), annulus(3)] {
        let (a, _) = fixed_subcomplex(&m.complex, &m.geometry, &m.action, &m.field, m.trusted_fixed.as_deref());
        let (b, _) = fixed_subcomplex(&m.complex, &m.geometry, &m.action, &m.field, None);
        assert_eq!(a.counts(), b.counts());
    }
}
