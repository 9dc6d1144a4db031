use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{MeshError, Vec3};

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        Self::new(*rotation.matrix(), Vec3::zeros())
    }

    pub fn translation(t: Vec3) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Rotation drawn uniformly from SO(3) (normalized Gaussian quaternion).
    pub fn random_rotation(rng: &mut impl Rng) -> Self {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let q = UnitQuaternion::from_quaternion(q);
        Self::new(*q.to_rotation_matrix().matrix(), Vec3::zeros())
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        ortho.max((r.determinant() - 1.0).abs())
    }
}

/// World-to-camera transform for a camera at `eye` looking at `target`.
///
/// Camera axes follow the usual right-handed convention: `+x` right, `+y` up,
/// and the camera looks down `-z`. An `up_hint` parallel to the viewing
/// direction is an error; picking a different hint is the caller's decision.
pub fn look_at(eye: &Vec3, target: &Vec3, up_hint: &Vec3) -> Result<RigidTransform, MeshError> {
    let dir = target - eye;
    let len = dir.norm();
    if !(len > 1e-12) {
        return Err(MeshError::DegenerateDirection("eye coincides with target"));
    }
    let forward = dir / len;
    let side = forward.cross(up_hint);
    let side_len = side.norm();
    if !(side_len > 1e-9 * up_hint.norm().max(1e-300)) || up_hint.norm() == 0.0 {
        return Err(MeshError::DegenerateDirection(
            "up hint is parallel to the viewing direction",
        ));
    }
    let right = side / side_len;
    let up = right.cross(&forward);
    let rotation = Matrix3::from_rows(&[
        right.transpose(),
        up.transpose(),
        (-forward).transpose(),
    ]);
    Ok(RigidTransform::new(rotation, -(rotation * eye)))
}

/// The 12 icosahedron vertices: normalized cyclic permutations of
/// `(0, ±1, ±φ)`, in a fixed order.
pub fn icosahedron_vertices() -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = Vec::with_capacity(12);
    for perm in 0..3 {
        for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let (a, b) = (s1, s2 * phi);
            let v = match perm {
                0 => Vec3::new(0.0, a, b),
                1 => Vec3::new(a, b, 0.0),
                _ => Vec3::new(b, 0.0, a),
            };
            out.push(v.normalize());
        }
    }
    out
}

fn icosahedron_faces(verts: &[Vec3]) -> Vec<[usize; 3]> {
    let edge = min_pair_distance(verts);
    let adj = |i: usize, j: usize| ((verts[i] - verts[j]).norm() - edge).abs() < 1e-9;
    let mut faces = Vec::new();
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            for k in j + 1..verts.len() {
                if adj(i, j) && adj(j, k) && adj(i, k) {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    faces
}

fn min_pair_distance(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

/// For every point, the tangent direction towards its lowest-index nearest
/// neighbour.
///
/// On a vertex-transitive polyhedron (icosahedron, dodecahedron) the rotation
/// group acts simply transitively on directed edges, so these frames are
/// carried onto each other by the symmetries: a shape sharing the symmetry
/// renders identically from every eye.
fn neighbour_up_vectors(eyes: &[Vec3]) -> Vec<Vec3> {
    eyes.iter()
        .enumerate()
        .map(|(i, e)| {
            let dists: Vec<f64> = eyes.iter().map(|o| (o - e).norm()).collect();
            let nearest = dists
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min);
            let j = (0..eyes.len())
                .find(|&j| j != i && dists[j] <= nearest * (1.0 + 1e-9))
                .expect("rig needs at least two eyes");
            let t = eyes[j] - e * e.dot(&eyes[j]);
            t.normalize()
        })
        .collect()
}

/// Camera positions on a sphere around the (normalized) object.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    /// Unit directions from the object centre to each camera.
    pub eyes: Vec<Vec3>,
    /// Per-eye up hint passed to [`look_at`].
    pub ups: Vec<Vec3>,
    pub radius: f64,
}

impl CameraRig {
    pub const DEFAULT_RADIUS: f64 = 6.0;

    /// One camera per icosahedron vertex.
    pub fn icosahedron(radius: f64) -> Self {
        let eyes = icosahedron_vertices();
        let ups = neighbour_up_vectors(&eyes);
        CameraRig { eyes, ups, radius }
    }

    /// 12-, 20- (dodecahedron, i.e. icosahedron face centres) or 42-view
    /// (icosahedron plus edge midpoints) rig.
    pub fn with_view_count(count: usize, radius: f64) -> Result<Self, MeshError> {
        let ico = icosahedron_vertices();
        let eyes: Vec<Vec3> = match count {
            12 => ico,
            20 => icosahedron_faces(&ico)
                .iter()
                .map(|f| (ico[f[0]] + ico[f[1]] + ico[f[2]]).normalize())
                .collect(),
            42 => {
                let edge = min_pair_distance(&ico);
                let mut eyes = ico.clone();
                for i in 0..12 {
                    for j in i + 1..12 {
                        if ((ico[i] - ico[j]).norm() - edge).abs() < 1e-9 {
                            eyes.push((ico[i] + ico[j]).normalize());
                        }
                    }
                }
                eyes
            }
            _ => {
                return Err(MeshError::InvalidParameters {
                    family: "camera rig",
                    message: format!("view count must be 12, 20 or 42, got {count}"),
                })
            }
        };
        let ups = neighbour_up_vectors(&eyes);
        Ok(CameraRig { eyes, ups, radius })
    }

    /// Rig with a single shared up hint for every eye.
    pub fn with_up_hint(eyes: Vec<Vec3>, radius: f64, up_hint: Vec3) -> Self {
        let ups = vec![up_hint; eyes.len()];
        CameraRig { eyes, ups, radius }
    }

    pub fn len(&self) -> usize {
        self.eyes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eyes.is_empty()
    }

    /// World-to-camera poses looking at the origin.
    pub fn poses(&self) -> Result<Vec<RigidTransform>, MeshError> {
        self.eyes
            .iter()
            .zip(&self.ups)
            .map(|(e, u)| look_at(&(e * self.radius), &Vec3::zeros(), u))
            .collect()
    }

    /// The same rig moved by a rotation (eyes and up hints both rotate).
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> CameraRig {
        CameraRig {
            eyes: self.eyes.iter().map(|e| rotation * e).collect(),
            ups: self.ups.iter().map(|u| rotation * u).collect(),
            radius: self.radius,
        }
    }
}
