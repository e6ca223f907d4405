use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;
use wittenlab::decomp::principal_angles;
use wittenlab::mesh::{generate_mesh, load_mesh, GeneratorSpec};
use wittenlab::scenario::Check;
use wittenlab::spectral::{detect_kernel, KernelTolerances, Verdict};
use wittenlab::witten::{assemble_bundle, green_residual};

fn orthonormal(n: usize, k: usize, data: &[f64], w: &DMatrix<f64>) -> DMatrix<f64> {
    // Gram–Schmidt in the w inner product
    let a = DMatrix::from_column_slice(n, k, &data[..n * k]);
    let mut q = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let mut v = a.column(j).into_owned();
        for i in 0..j {
            let qi = q.column(i).into_owned();
            let c = qi.dot(&(w * &v));
            v -= qi * c;
        }
        let nv = v.dot(&(w * &v)).sqrt();
        q.set_column(j, &(v / nv));
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn angles_are_sorted_and_bounded(
        data in prop::collection::vec(-1.0f64..1.0, 64),
        weights in prop::collection::vec(0.5f64..2.0, 8),
        p in 1usize..4,
        q in 1usize..4,
    ) {
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(weights));
        let u = orthonormal(8, p, &data, &w);
        let v = orthonormal(8, q, &data[32..], &w);
        let a = principal_angles(&u, &v, &w);
        prop_assert_eq!(a.len(), p.min(q));
        prop_assert!(a.iter().all(|&t| (0.0..=FRAC_PI_2).contains(&t)));
        prop_assert!(a.windows(2).all(|x| x[0] <= x[1]));
        let b = principal_angles(&v, &u, &w);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let same = principal_angles(&u, &u, &w);
        prop_assert!(same.iter().all(|&t| t <= 1e-7));
    }

    #[test]
    fn detector_finds_planted_kernel(
        k in 0usize..4,
        small in prop::collection::vec(0.0f64..1e-9, 4),
        big in prop::collection::vec(1e-2f64..1.0, 5),
    ) {
        let mut eigs: Vec<f64> = small[..k].to_vec();
        eigs.extend(&big);
        eigs.sort_by(|a, b| a.total_cmp(b));
        let d = detect_kernel(&eigs, &KernelTolerances::default_profile());
        prop_assert_eq!(d.verdict, Verdict::Clean);
        prop_assert_eq!(d.dim, Some(k));
        prop_assert!(d.gap_ratio >= 100.0);
    }

    #[test]
    fn detector_decisions_are_consistent(eigs in prop::collection::vec(0.0f64..1.0, 1..9)) {
        let mut eigs = eigs;
        eigs.sort_by(|a, b| a.total_cmp(b));
        let tol = KernelTolerances::default_profile();
        let d = detect_kernel(&eigs, &tol);
        match d.verdict {
            Verdict::Clean => {
                let r = d.dim.unwrap();
                prop_assert!(r < eigs.len() || (r == 0 && eigs.is_empty()));
                prop_assert!(eigs[..r].iter().all(|&l| l <= tol.tau_abs));
                prop_assert!(d.gap_ratio >= tol.rho_min);
            }
            Verdict::Ambiguous => prop_assert!(d.dim.is_none()),
        }
    }

    #[test]
    fn check_margin_sign_matches_pass(value in -10.0f64..10.0, tol in -10.0f64..10.0) {
        for c in [Check::at_most("x", value, tol), Check::at_least("x", value, tol)] {
            prop_assert_eq!(c.pass, c.margin >= 0.0);
        }
        let c = Check::inside("x", value, tol, tol + 1.0);
        prop_assert_eq!(c.pass, c.margin > 0.0);
    }

    #[test]
    fn generator_counts_follow_formula(rings in 1usize..5, quarter in 1usize..5, n2 in 3usize..8) {
        let sectors = 4 * quarter;
        let spec = GeneratorSpec::Annulus { inner: 1.0, outer: 2.0, rings, sectors };
        let m = load_mesh(&generate_mesh(&spec, 4, 1.0).unwrap()).unwrap();
        prop_assert_eq!(m.complex.counts(), vec![(rings + 1) * sectors, (3 * rings + 1) * sectors, 2 * rings * sectors]);
        let spec = GeneratorSpec::Torus { major: 2.0, minor: 1.0, n1: sectors, n2 };
        let m = load_mesh(&generate_mesh(&spec, 4, 1.0).unwrap()).unwrap();
        let v = sectors * n2;
        prop_assert_eq!(m.complex.counts(), vec![v, 3 * v, 2 * v]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn green_identity_on_random_meshes(rings in 2usize..5, quarter in 1usize..3, s in -2.0f64..2.0, seed in 0u64..1000) {
        let sectors = 4 * quarter;
        let spec = GeneratorSpec::Disk { rings, sectors, radius: 1.0 };
        let m = load_mesh(&generate_mesh(&spec, sectors, 1.0).unwrap()).unwrap();
        let b = assemble_bundle(&m.complex, &m.geometry, &m.action, &m.field, s).unwrap();
        let g = green_residual(&b, 20, seed);
        prop_assert!(g.r1 <= 1e-12, "{}", g.r1);
        prop_assert!(g.r2 <= 1e-12, "{}", g.r2);
    }
}
