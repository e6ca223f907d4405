#![allow(dead_code)]

use wittenlab::decomp::SpectralOptions;
use wittenlab::mesh::{generate_mesh, load_mesh, GeneratorSpec, LoadedMesh};

pub fn load(spec: GeneratorSpec, order: usize) -> LoadedMesh {
    load_mesh(&generate_mesh(&spec, order, 1.0).expect("generate")).expect("load")
}

pub fn disk(rings: usize) -> LoadedMesh {
    load(GeneratorSpec::Disk { rings, sectors: 4 * rings, radius: 1.0 }, 4 * rings)
}

pub fn annulus(rings: usize) -> LoadedMesh {
    load(
        GeneratorSpec::Annulus {
            inner: 1.0,
            outer: 2.0,
            rings,
            sectors: 4 * rings,
        },
        4 * rings,
    )
}

pub fn sphere(bands: usize) -> LoadedMesh {
    load(GeneratorSpec::Sphere { bands, sectors: 2 * bands }, 2 * bands)
}

pub fn torus(n1: usize, n2: usize) -> LoadedMesh {
    load(
        GeneratorSpec::Torus {
            major: 2.0,
            minor: 1.0,
            n1,
            n2,
        },
        n1,
    )
}

pub fn opts() -> SpectralOptions {
    SpectralOptions::default()
}

/// Duality angle on the unit disk with the unit rotation field, from the
/// radial reduction of the invariant even-parity harmonic fields
/// `ω = f(r) + g(r) dx∧dy`: `f' = s r g`, `g' = s r f`, Neumann `g(1) = 0`,
/// Dirichlet `f(1) = 0`. Integrated backwards from `r = 1` with RK4 and
/// compared in `L²(r dr)` with Simpson's rule.
pub fn radial_oracle_angle(s: f64, steps: usize) -> f64 {
    let steps = steps + steps % 2;
    let h = 1.0 / steps as f64;
    let rhs = |r: f64, y: [f64; 2]| [s * r * y[1], s * r * y[0]];
    let solve = |y1: [f64; 2]| {
        let mut out = vec![[0.0; 2]; steps + 1];
        out[steps] = y1;
        let mut y = y1;
        for i in (0..steps).rev() {
            let r = (i + 1) as f64 * h;
            let k1 = rhs(r, y);
            let k2 = rhs(r - h / 2.0, [y[0] - h / 2.0 * k1[0], y[1] - h / 2.0 * k1[1]]);
            let k3 = rhs(r - h / 2.0, [y[0] - h / 2.0 * k2[0], y[1] - h / 2.0 * k2[1]]);
            let k4 = rhs(r - h, [y[0] - h * k3[0], y[1] - h * k3[1]]);
            for j in 0..2 {
                y[j] -= h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            out[i] = y;
        }
        out
    };
    let n = solve([1.0, 0.0]);
    let d = solve([0.0, 1.0]);
    let simpson = |f: &dyn Fn(usize) -> f64| {
        let mut acc = 0.0;
        for i in 0..=steps {
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f(i);
        }
        acc * h / 3.0
    };
    let r = |i: usize| i as f64 * h;
    let nd = simpson(&|i| (n[i][0] * d[i][0] + n[i][1] * d[i][1]) * r(i));
    let nn = simpson(&|i| (n[i][0] * n[i][0] + n[i][1] * n[i][1]) * r(i));
    let dd = simpson(&|i| (d[i][0] * d[i][0] + d[i][1] * d[i][1]) * r(i));
    (nd.abs() / (nn * dd).sqrt()).acos()
}

/// Two-significant-figure agreement.
pub fn same_two_figures(a: f64, b: f64) -> bool {
    let round = |x: f64| {
        let e = x.abs().log10().floor();
        let f = 10f64.powf(1.0 - e);
        (x * f).round() / f
    };
    round(a) == round(b)
}
