//! Triangle meshes, rigid transforms and the icosahedral camera rig.

mod obj;
mod rig;
mod toy;

use nalgebra::Vector3;
use thiserror::Error;

pub use obj::{load_mesh_dir, load_obj, parse_obj, save_obj, write_obj};
pub use rig::{icosahedron_vertices, look_at, CameraRig, RigidTransform};
pub use toy::{generate_toy_shape, sample_toy_shape, toy_corpus, ToyFamily};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("obj parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no vertices or no faces")]
    Empty,
    #[error("triangle {triangle} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("mesh has degenerate extent (all vertices coincide)")]
    DegenerateExtent,
    #[error("degenerate direction: {0}")]
    DegenerateDirection(&'static str),
    #[error("invalid {family} parameters: {message}")]
    InvalidParameters {
        family: &'static str,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh with one unit normal per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    /// Builds a mesh and fills in area-weighted vertex normals.
    pub fn from_triangles(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, MeshError> {
        let mut mesh = Mesh {
            name: name.into(),
            normals: Vec::new(),
            vertices,
            triangles,
        };
        mesh.validate()?;
        mesh.normals = area_weighted_normals(&mesh.vertices, &mesh.triangles);
        Ok(mesh)
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Mesh {
            name: name.into(),
            vertices: Vec::new(),
            normals: Vec::new(),
            triangles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let count = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index,
                        count,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.triangles.is_empty()
    }

    /// Axis-aligned bounding box as `(min, max)`, or `None` for a vertex-less mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Applies a rigid motion to positions and normals.
    pub fn transformed(&self, xf: &RigidTransform) -> Mesh {
        Mesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| xf.apply_point(v)).collect(),
            normals: self.normals.iter().map(|n| xf.apply_vector(n)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Uniformly scales positions about the origin; normals are unaffected.
    pub fn scaled(&self, factor: f64) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// `V - E + F` over the index topology.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::BTreeSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}

/// Per-vertex normals as the area-weighted mean of incident face normals.
///
/// The unnormalized cross product of a face already carries twice its area,
/// so summing raw cross products gives the area weighting directly. Isolated
/// vertices get `+Z`.
pub fn area_weighted_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for tri in triangles {
        let [a, b, c] = tri.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in tri {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect()
}

/// Centers the bounding box at the origin and scales its longest side to 2.
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    let (lo, hi) = mesh.bounds().ok_or(MeshError::Empty)?;
    let extent = (hi - lo).max();
    if !(extent > 1e-12) {
        return Err(MeshError::DegenerateExtent);
    }
    let center = (lo + hi) * 0.5;
    let scale = 2.0 / extent;
    Ok(Mesh {
        vertices: mesh.vertices.iter().map(|v| (v - center) * scale).collect(),
        ..mesh.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_mesh(lo: Vec3, hi: Vec3) -> Mesh {
        let v = |x: bool, y: bool, z: bool| {
            Vec3::new(
                if x { hi.x } else { lo.x },
                if y { hi.y } else { lo.y },
                if z { hi.z } else { lo.z },
            )
        };
        let vertices = (0..8)
            .map(|i| v(i & 1 != 0, i & 2 != 0, i & 4 != 0))
            .collect();
        Mesh::from_triangles("box", vertices, vec![[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5]])
            .unwrap()
    }

    #[test]
    fn normalize_cube_to_unit_box() {
        let m = box_mesh(Vec3::zeros(), Vec3::new(10.0, 10.0, 10.0));
        let n = normalize_mesh(&m).unwrap();
        let (lo, hi) = n.bounds().unwrap();
        assert!((lo - Vec3::new(-1.0, -1.0, -1.0)).norm() < 1e-12);
        assert!((hi - Vec3::new(1.0, 1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn normalize_box_against_bbox_arithmetic() {
        let offset = Vec3::new(3.7, -12.25, 0.5);
        let m = box_mesh(offset, offset + Vec3::new(4.0, 2.0, 1.0));
        let n = normalize_mesh(&m).unwrap();
        // Oracle: side lengths scale by 2/4, center moves to the origin.
        let (lo, hi) = n.bounds().unwrap();
        let side = hi - lo;
        assert!((side - Vec3::new(2.0, 1.0, 0.5)).norm() < 1e-12);
        assert!(((lo + hi) * 0.5).norm() < 1e-12);
        for (a, b) in m.vertices.iter().zip(&n.vertices) {
            let expected = (a - (offset + Vec3::new(2.0, 1.0, 0.5))) * 0.5;
            assert!((expected - b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = box_mesh(Vec3::new(-3.0, 1.0, 2.0), Vec3::new(5.0, 2.0, 2.5));
        let once = normalize_mesh(&m).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let m = Mesh::from_triangles("dot", vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(normalize_mesh(&m), Err(MeshError::DegenerateExtent)));
        assert!(matches!(
            normalize_mesh(&Mesh::empty("e")),
            Err(MeshError::Empty)
        ));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = Mesh::from_triangles("bad", vec![Vec3::zeros(); 3], vec![[0, 1, 3]]);
        assert!(matches!(err, Err(MeshError::IndexOutOfRange { index: 3, .. })));
    }
}
