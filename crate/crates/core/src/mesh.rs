//! Mesh documents and exactly symmetric generators.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::complex::OrientedComplex;
use crate::error::{Error, Result};
use crate::geometry::{validate_field, EmbeddedGeometry, FieldDiagnostics, PLVectorField};
use crate::symmetry::{validate_action, ActionDiagnostics, CyclicAction};

pub const MESH_SCHEMA: &str = "wittenlab.mesh/1";

/// Tangency tolerance for generator meshes.
pub const TAU_TAN_GENERATED: f64 = 1e-12;
/// Tangency tolerance for user meshes.
pub const TAU_TAN_USER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub order: usize,
    pub vertex_perm: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `X(p) = scale · axis × (p − center)`.
    Rotation {
        axis: [f64; 3],
        center: [f64; 3],
        scale: f64,
    },
    Explicit {
        vectors: Vec<[f64; 3]>,
    },
}

/// Parameters of a built-in generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Disk {
        rings: usize,
        sectors: usize,
        #[serde(default = "one")]
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
        rings: usize,
        sectors: usize,
    },
    Sphere {
        bands: usize,
        sectors: usize,
    },
    Torus {
        major: f64,
        minor: f64,
        n1: usize,
        n2: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl GeneratorSpec {
    /// Number of rotational sectors (the largest admissible action order).
    pub fn sectors(&self) -> usize {
        match *self {
            GeneratorSpec::Disk { sectors, .. }
            | GeneratorSpec::Annulus { sectors, .. }
            | GeneratorSpec::Sphere { sectors, .. } => sectors,
            GeneratorSpec::Torus { n1, .. } => n1,
        }
    }

    /// The same generator with rings/sectors (or grid counts) doubled.
    pub fn refined(&self) -> Self {
        match self.clone() {
            GeneratorSpec::Disk { rings, sectors, radius } => GeneratorSpec::Disk {
                rings: 2 * rings,
                sectors: 2 * sectors,
                radius,
            },
            GeneratorSpec::Annulus {
                inner,
                outer,
                rings,
                sectors,
            } => GeneratorSpec::Annulus {
                inner,
                outer,
                rings: 2 * rings,
                sectors: 2 * sectors,
            },
            GeneratorSpec::Sphere { bands, sectors } => GeneratorSpec::Sphere {
                bands: 2 * bands,
                sectors: 2 * sectors,
            },
            GeneratorSpec::Torus { major, minor, n1, n2 } => GeneratorSpec::Torus {
                major,
                minor,
                n1: 2 * n1,
                n2: 2 * n2,
            },
        }
    }
}

/// On-disk mesh: top-dimensional simplices only (faces are derived). The
/// listed vertex order of each simplex, times the optional sign, is its
/// orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub schema: String,
    pub dim: usize,
    pub ambient_dim: usize,
    pub vertices: Vec<[f64; 3]>,
    pub simplices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Vec<i8>>,
    pub action: ActionSpec,
    pub field: FieldSpec,
    pub fixed_vertices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

/// A validated mesh with its action and (unscaled) field.
pub struct LoadedMesh {
    pub complex: OrientedComplex,
    pub geometry: EmbeddedGeometry,
    pub action: CyclicAction,
    pub field: PLVectorField,
    /// Fixed vertices from generator metadata, or `None` for user meshes.
    pub trusted_fixed: Option<Vec<usize>>,
    pub field_diagnostics: FieldDiagnostics,
    pub action_diagnostics: ActionDiagnostics,
}

fn check_params(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.to_string()))
    }
}

fn polar(r: f64, i: usize, m: usize) -> [f64; 3] {
    let a = 2.0 * PI * i as f64 / m as f64;
    [r * a.cos(), r * a.sin(), 0.0]
}

/// Generates a mesh with exact `ℤ_order` rotational symmetry and the rotation
/// field about the symmetry axis with the given scale.
pub fn generate_mesh(spec: &GeneratorSpec, order: usize, field_scale: f64) -> Result<MeshDocument> {
    let sectors = spec.sectors();
    check_params(order >= 1, "action order must be positive")?;
    check_params(sectors % order == 0, "sector count must be divisible by the action order")?;
    let shift = sectors / order;
    let (dim, ambient, vertices, tris, perm, fixed): (usize, usize, Vec<[f64; 3]>, Vec<Vec<usize>>, Vec<usize>, Vec<usize>) =
        match *spec {
            GeneratorSpec::Disk { rings, sectors: m, radius } => {
                check_params(rings >= 2 && m >= 3, "disk needs rings ≥ 2 and sectors ≥ 3")?;
                check_params(radius > 0.0, "disk radius must be positive")?;
                let idx = |j: usize, i: usize| if j == 0 { 0 } else { 1 + (j - 1) * m + (i % m) };
                let mut v = vec![[0.0; 3]];
                for j in 1..=rings {
                    for i in 0..m {
                        v.push(polar(radius * j as f64 / rings as f64, i, m));
                    }
                }
                let mut t = Vec::new();
                for i in 0..m {
                    t.push(vec![0, idx(1, i), idx(1, i + 1)]);
                }
                for j in 1..rings {
                    for i in 0..m {
                        let (a, b, c, d) = (idx(j, i), idx(j, i + 1), idx(j + 1, i), idx(j + 1, i + 1));
                        t.push(vec![a, c, d]);
                        t.push(vec![a, d, b]);
                    }
                }
                let mut perm = vec![0];
                for j in 1..=rings {
                    for i in 0..m {
                        perm.push(idx(j, i + shift));
                    }
                }
                (2, 2, v, t, perm, vec![0])
            }
            GeneratorSpec::Annulus {
                inner,
                outer,
                rings,
                sectors: m,
            } => {
                check_params(rings >= 1 && m >= 3, "annulus needs rings ≥ 1 and sectors ≥ 3")?;
                check_params(inner > 0.0 && outer > inner, "annulus needs 0 < inner < outer")?;
                let idx = |j: usize, i: usize| j * m + (i % m);
                let mut v = Vec::new();
                for j in 0..=rings {
                    for i in 0..m {
                        v.push(polar(inner + (outer - inner) * j as f64 / rings as f64, i, m));
                    }
                }
                let mut t = Vec::new();
                for j in 0..rings {
                    for i in 0..m {
                        let (a, b, c, d) = (idx(j, i), idx(j, i + 1), idx(j + 1, i), idx(j + 1, i + 1));
                        t.push(vec![a, c, d]);
                        t.push(vec![a, d, b]);
                    }
                }
                let perm = (0..=rings).flat_map(|j| (0..m).map(move |i| idx(j, i + shift))).collect();
                (2, 2, v, t, perm, Vec::new())
            }
            GeneratorSpec::Sphere { bands, sectors: m } => {
                check_params(bands >= 3 && m >= 3, "sphere needs bands ≥ 3 and sectors ≥ 3")?;
                let south = 1 + (bands - 1) * m;
                let idx = move |j: usize, i: usize| {
                    if j == 0 {
                        0
                    } else if j == bands {
                        south
                    } else {
                        1 + (j - 1) * m + (i % m)
                    }
                };
                let mut v = vec![[0.0, 0.0, 1.0]];
                for j in 1..bands {
                    let th = PI * j as f64 / bands as f64;
                    for i in 0..m {
                        let p = polar(th.sin(), i, m);
                        v.push([p[0], p[1], th.cos()]);
                    }
                }
                v.push([0.0, 0.0, -1.0]);
                let mut t = Vec::new();
                for i in 0..m {
                    t.push(vec![0, idx(1, i), idx(1, i + 1)]);
                }
                for j in 1..bands - 1 {
                    for i in 0..m {
                        let (a, b, c, d) = (idx(j, i), idx(j, i + 1), idx(j + 1, i), idx(j + 1, i + 1));
                        t.push(vec![a, c, d]);
                        t.push(vec![a, d, b]);
                    }
                }
                for i in 0..m {
                    t.push(vec![south, idx(bands - 1, i + 1), idx(bands - 1, i)]);
                }
                let mut perm = vec![0];
                for j in 1..bands {
                    for i in 0..m {
                        perm.push(idx(j, i + shift));
                    }
                }
                perm.push(south);
                (2, 3, v, t, perm, vec![0, south])
            }
            GeneratorSpec::Torus { major, minor, n1, n2 } => {
                check_params(n1 >= 3 && n2 >= 3, "torus needs both grid counts ≥ 3")?;
                check_params(minor > 0.0 && major > minor, "torus needs 0 < minor < major")?;
                let idx = |i: usize, j: usize| (i % n1) * n2 + (j % n2);
                let mut v = Vec::new();
                for i in 0..n1 {
                    let u = 2.0 * PI * i as f64 / n1 as f64;
                    for j in 0..n2 {
                        let w = 2.0 * PI * j as f64 / n2 as f64;
                        let rr = major + minor * w.cos();
                        v.push([rr * u.cos(), rr * u.sin(), minor * w.sin()]);
                    }
                }
                let mut t = Vec::new();
                for i in 0..n1 {
                    for j in 0..n2 {
                        let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                        t.push(vec![a, b, d]);
                        t.push(vec![a, d, c]);
                    }
                }
                let perm = (0..n1).flat_map(|i| (0..n2).map(move |j| idx(i + shift, j))).collect();
                (2, 3, v, t, perm, Vec::new())
            }
        };
    Ok(MeshDocument {
        schema: MESH_SCHEMA.to_string(),
        dim,
        ambient_dim: ambient,
        vertices,
        simplices: tris,
        orientation: None,
        action: ActionSpec {
            order,
            vertex_perm: perm,
        },
        field: FieldSpec::Rotation {
            axis: [0.0, 0.0, 1.0],
            center: [0.0, 0.0, 0.0],
            scale: field_scale,
        },
        fixed_vertices: fixed,
        generator: Some(spec.clone()),
    })
}

impl MeshDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeshDocument = serde_json::from_str(text)?;
        if doc.schema != MESH_SCHEMA {
            return Err(Error::Malformed(format!("unsupported mesh schema {:?}", doc.schema)));
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Validates a mesh document: manifold structure, orientation, geometry,
/// action and field.
pub fn load_mesh(doc: &MeshDocument) -> Result<LoadedMesh> {
    if doc.schema != MESH_SCHEMA {
        return Err(Error::Malformed(format!("unsupported mesh schema {:?}", doc.schema)));
    }
    if !(2..=3).contains(&doc.dim) || doc.ambient_dim < doc.dim || doc.ambient_dim > 3 {
        return Err(Error::Malformed(format!(
            "unsupported dimensions: dim {} in ambient {}",
            doc.dim, doc.ambient_dim
        )));
    }
    if doc.vertices.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Malformed("non-finite vertex coordinate".into()));
    }
    let signs = match &doc.orientation {
        Some(o) if o.len() != doc.simplices.len() => {
            return Err(Error::Malformed("orientation list length differs from simplex count".into()))
        }
        Some(o) => {
            if o.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Malformed("orientation signs must be ±1".into()));
            }
            o.clone()
        }
        None => vec![1; doc.simplices.len()],
    };
    let tops: Vec<(Vec<usize>, i8)> = doc.simplices.iter().cloned().zip(signs).collect();
    let nv = doc.vertices.len();
    let complex = OrientedComplex::from_oriented_tops(doc.dim, nv, &tops)?;
    let coords: Vec<Vector3<f64>> = doc.vertices.iter().map(|v| Vector3::from(*v)).collect();
    let geometry = EmbeddedGeometry::new(&complex, coords, doc.ambient_dim)?;
    let action = CyclicAction::new(&complex, doc.action.order, doc.action.vertex_perm.clone())?;
    if let Some(&v) = doc.fixed_vertices.iter().find(|&&v| v >= nv) {
        return Err(Error::Malformed(format!("fixed vertex {v} out of range")));
    }
    let raw: Vec<Vector3<f64>> = match &doc.field {
        FieldSpec::Rotation { axis, center, scale } => {
            let ax = Vector3::from(*axis);
            let ce = Vector3::from(*center);
            (0..nv)
                .map(|v| {
                    if doc.fixed_vertices.contains(&v) {
                        Vector3::zeros()
                    } else {
                        ax.cross(&(geometry.position(v) - ce)) * *scale
                    }
                })
                .collect()
        }
        FieldSpec::Explicit { vectors } => {
            if vectors.len() != nv {
                return Err(Error::Malformed("explicit field length differs from vertex count".into()));
            }
            vectors.iter().map(|v| Vector3::from(*v)).collect()
        }
    };
    if raw.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::Malformed("non-finite field vector".into()));
    }
    let field = PLVectorField::tangent_projected(&geometry, &complex, &raw);
    let generated = doc.generator.is_some();
    let tau = if generated { TAU_TAN_GENERATED } else { TAU_TAN_USER };
    let action_diagnostics = validate_action(&complex, &geometry, &action, Some(&field))?;
    let field_diagnostics = validate_field(&geometry, &complex, &field, &doc.fixed_vertices, Some(&action), tau)?;
    Ok(LoadedMesh {
        complex,
        geometry,
        action,
        field,
        trusted_fixed: if generated { Some(doc.fixed_vertices.clone()) } else { None },
        field_diagnostics,
        action_diagnostics,
    })
}
