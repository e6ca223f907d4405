//! Collapsed five-point Gauss–Legendre rules on reference simplices.

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Quadrature on the reference `k`-simplex: barycentric nodes and positive
/// weights that sum to one (fractions of the simplex volume). Exact for
/// polynomials of degree ≤ 7 in every dimension up to 3.
#[derive(Clone, Debug)]
pub struct SimplexRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    pub fn new(k: usize) -> Self {
        let gl: Vec<(f64, f64)> = GL5_NODES
            .iter()
            .zip(GL5_WEIGHTS)
            .map(|(&x, w)| ((1.0 + x) / 2.0, w / 2.0))
            .collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match k {
            0 => {
                points.push(vec![1.0]);
                weights.push(1.0);
            }
            1 => {
                for &(u, wu) in &gl {
                    points.push(vec![1.0 - u, u]);
                    weights.push(wu);
                }
            }
            2 => {
                for &(u, wu) in &gl {
                    for &(v, wv) in &gl {
                        let x = u;
                        let y = v * (1.0 - u);
                        points.push(vec![1.0 - x - y, x, y]);
                        weights.push(2.0 * wu * wv * (1.0 - u));
                    }
                }
            }
            3 => {
                for &(u, wu) in &gl {
                    for &(v, wv) in &gl {
                        for &(t, wt) in &gl {
                            let x = u;
                            let y = v * (1.0 - u);
                            let z = t * (1.0 - u) * (1.0 - v);
                            points.push(vec![1.0 - x - y - z, x, y, z]);
                            weights.push(6.0 * wu * wv * wt * (1.0 - u) * (1.0 - u) * (1.0 - v));
                        }
                    }
                }
            }
            _ => panic!("simplex rules are provided up to dimension 3"),
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
