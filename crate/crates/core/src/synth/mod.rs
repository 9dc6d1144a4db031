//! Domain-randomized colour images of a mesh.
//!
//! Two scene families are produced. Structured scenes put the object on the
//! floor of a textured room and look at it from the upper hemisphere.
//! Chaotic scenes show the object in a uniformly random orientation over a
//! flat procedural background.

mod augment;
mod dataset;
mod texture;

pub use augment::{augment, augment_with, AugmentParams};
pub use dataset::{generate_dataset, image_seed, render_images, DatasetManifest, LabelledImage, ManifestEntry, MANIFEST_FILE};
pub use texture::{TextureKind, TextureSpec};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::mesh::{look_at, Mesh, RigidTransform, Vec3};
use crate::render::{render_surfaces, Camera, Image, LightMode, Mask, RenderError, ShadingSpec, Surface};
use crate::seed;

/// Radius of the bounding sphere the object is scaled to before placement.
pub const OBJECT_RADIUS: f64 = 0.5;
pub const DEFAULT_IMAGE_SIZE: usize = 64;
const FOV_Y_DEG: f64 = 40.0;
const ROOM_HALF_SIDE: f64 = 6.0;
const ROOM_HEIGHT: f64 = 12.0;
const SHADING_AMBIENT: f64 = 0.35;
const SHADING_ALBEDO: f64 = 0.65;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("no objects given")]
    EmptyObjectSet,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneMode {
    Structured,
    Chaotic,
}

impl SceneMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneMode::Structured => "structured",
            SceneMode::Chaotic => "chaotic",
        }
    }
}

impl fmt::Display for SceneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(SceneMode::Structured),
            "chaotic" => Ok(SceneMode::Chaotic),
            other => Err(format!("unknown scene mode {other:?} (expected structured or chaotic)")),
        }
    }
}

/// Everything needed to render one colour image of a named object.
///
/// The object is centred at the origin with bounding-sphere radius
/// [`OBJECT_RADIUS`]. In structured scenes the floor is placed under the
/// posed object's lowest point at render time.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub object_id: String,
    pub mode: SceneMode,
    pub object_rotation: UnitQuaternion<f64>,
    pub camera: Camera,
    pub object_texture: TextureSpec,
    pub background_texture: TextureSpec,
    /// World direction towards the light.
    pub light_direction: Vec3,
    pub seed: u64,
}

impl SceneSpec {
    pub fn object_pose(&self) -> RigidTransform {
        RigidTransform::from_rotation(self.object_rotation.to_rotation_matrix())
    }

    /// Same scene rendered at a different square resolution.
    pub fn with_size(mut self, size: usize) -> Self {
        self.camera.width = size;
        self.camera.height = size;
        self
    }

    /// Camera position in world coordinates.
    pub fn eye(&self) -> Vec3 {
        self.camera.pose.inverse().translation
    }
}

fn mode_code(mode: SceneMode) -> u64 {
    match mode {
        SceneMode::Structured => 1,
        SceneMode::Chaotic => 2,
    }
}

/// Camera at `eye` aimed so that the origin appears `below` radians under
/// the image centre.
fn aim_above(eye: Vec3, below: f64) -> Result<RigidTransform, RenderError> {
    let f0 = (-eye).normalize();
    let right = f0.cross(&Vec3::y()).normalize();
    let up0 = right.cross(&f0);
    let f = f0 * below.cos() + up0 * below.sin();
    look_at(&eye, &(eye + f), &Vec3::y()).map_err(RenderError::Mesh)
}

/// Deterministic scene sample for `(object_id, mode, seed)`.
pub fn randomize_scene(object_id: &str, mode: SceneMode, seed_: u64) -> SceneSpec {
    let mut rng = seed::rng(seed_, &[seed::fnv1a(object_id.as_bytes()), mode_code(mode)]);
    let fov = FOV_Y_DEG.to_radians();
    let (rotation, pose, light) = match mode {
        SceneMode::Structured => {
            let yaw = rng.random_range(0.0..2.0 * PI);
            let rotation = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), yaw);
            let elevation = rng.random_range(15f64..=75.0).to_radians();
            let azimuth = rng.random_range(0.0..2.0 * PI);
            let radius = rng.random_range(2.5..=4.5);
            let eye = Vec3::new(
                radius * elevation.cos() * azimuth.sin(),
                radius * elevation.sin(),
                radius * elevation.cos() * azimuth.cos(),
            );
            // Centre the object inside the lower three quarters of the frame:
            // tan of its angle below the axis is the midpoint of [-t, t/2].
            let below = ((fov / 2.0).tan() / 4.0).atan();
            let pose = aim_above(eye, below).expect("eye is never vertical");
            let light_el = rng.random_range(30f64..80.0).to_radians();
            let light_az = rng.random_range(0.0..2.0 * PI);
            let light = Vec3::new(
                light_el.cos() * light_az.sin(),
                light_el.sin(),
                light_el.cos() * light_az.cos(),
            );
            (rotation, pose, light)
        }
        SceneMode::Chaotic => {
            let q = Quaternion::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let rotation = UnitQuaternion::from_quaternion(q);
            let radius = rng.random_range(2.0..=3.5);
            let jitter = Vec3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), 0.0);
            let eye = Vec3::new(0.0, 0.0, radius);
            let pose = look_at(&eye, &jitter, &Vec3::y()).expect("eye is off the up axis");
            let mut light: Vec3 = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            light = light.try_normalize(1e-12).unwrap_or_else(Vec3::z);
            // Keep the lit side towards the camera.
            if light.z < 0.0 {
                light.z = -light.z;
            }
            (rotation, pose, light)
        }
    };
    let object_texture = TextureSpec::random(&mut rng);
    let background_texture = TextureSpec::random(&mut rng);
    SceneSpec {
        object_id: object_id.to_string(),
        mode,
        object_rotation: rotation,
        camera: Camera::new(pose, fov, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE),
        object_texture,
        background_texture,
        light_direction: light,
        seed: seed_,
    }
}

/// Centres `mesh` on its bounding-box centre and scales it to
/// [`OBJECT_RADIUS`].
fn fit_object(mesh: &Mesh) -> Result<Mesh, SynthError> {
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| SynthError::InvalidParameters(format!("object {} is empty", mesh.name)))?;
    let centre = (lo + hi) * 0.5;
    let r = mesh.vertices.iter().map(|v| (v - centre).norm()).fold(0.0, f64::max);
    if !(r > 1e-12) {
        return Err(SynthError::InvalidParameters(format!("object {} is degenerate", mesh.name)));
    }
    Ok(Mesh {
        vertices: mesh.vertices.iter().map(|v| (v - centre) * (OBJECT_RADIUS / r)).collect(),
        ..mesh.clone()
    })
}

/// Planar texture coordinates along two axes derived from the texture seed.
fn planar_uvs(mesh: &Mesh, seed_: u64) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed_, &[0x5556]);
    let frame = RigidTransform::random_rotation(&mut rng).rotation;
    let (a, b) = (frame.column(0).into_owned(), frame.column(1).into_owned());
    let k = 0.5 / OBJECT_RADIUS;
    mesh.vertices
        .iter()
        .map(|p| [p.dot(&a) * k + 0.5, p.dot(&b) * k + 0.5])
        .collect()
}

/// Floor and four walls with inward normals; floor at height `floor_y`.
fn room(floor_y: f64) -> [(Mesh, Vec<[f64; 2]>); 5] {
    let (l, h) = (ROOM_HALF_SIDE, ROOM_HEIGHT);
    let quad = |name: &str, corners: [Vec3; 4], normal: Vec3, uvs: [[f64; 2]; 4]| {
        let mesh = Mesh {
            name: name.to_string(),
            vertices: corners.to_vec(),
            normals: vec![normal; 4],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        };
        (mesh, uvs.to_vec())
    };
    let (y0, y1) = (floor_y, floor_y + h);
    let uv_wall = [[0.0, 1.0], [1.0, 1.0], [1.0, 1.0 - h / (2.0 * l)], [0.0, 1.0 - h / (2.0 * l)]];
    [
        quad(
            "floor",
            [Vec3::new(-l, y0, -l), Vec3::new(l, y0, -l), Vec3::new(l, y0, l), Vec3::new(-l, y0, l)],
            Vec3::y(),
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        ),
        quad(
            "wall_north",
            [Vec3::new(-l, y0, -l), Vec3::new(l, y0, -l), Vec3::new(l, y1, -l), Vec3::new(-l, y1, -l)],
            Vec3::z(),
            uv_wall,
        ),
        quad(
            "wall_south",
            [Vec3::new(l, y0, l), Vec3::new(-l, y0, l), Vec3::new(-l, y1, l), Vec3::new(l, y1, l)],
            -Vec3::z(),
            uv_wall,
        ),
        quad(
            "wall_east",
            [Vec3::new(l, y0, -l), Vec3::new(l, y0, l), Vec3::new(l, y1, l), Vec3::new(l, y1, -l)],
            -Vec3::x(),
            uv_wall,
        ),
        quad(
            "wall_west",
            [Vec3::new(-l, y0, l), Vec3::new(-l, y0, -l), Vec3::new(-l, y1, -l), Vec3::new(-l, y1, l)],
            Vec3::x(),
            uv_wall,
        ),
    ]
}

/// Renders the scene, returning the colour image and the object's mask.
pub fn render_colour_with_mask(spec: &SceneSpec, meshes: &[Mesh]) -> Result<(Image, Mask), SynthError> {
    let mesh = meshes
        .iter()
        .find(|m| m.name == spec.object_id)
        .ok_or_else(|| SynthError::UnknownObject(spec.object_id.clone()))?;
    let object = fit_object(mesh)?;
    let uvs = planar_uvs(&object, spec.object_texture.seed);
    let pose = spec.object_pose();
    let shading = ShadingSpec {
        mode: LightMode::Directional(spec.light_direction),
        ambient: SHADING_AMBIENT,
        albedo: SHADING_ALBEDO,
    };
    let mut surfaces = vec![Surface {
        mesh: &object,
        model: pose,
        uvs: Some(&uvs),
        albedo: &spec.object_texture,
        id: 1,
    }];
    let frame = match spec.mode {
        SceneMode::Structured => {
            let floor_y = object
                .vertices
                .iter()
                .map(|v| pose.apply_point(v).y)
                .fold(f64::INFINITY, f64::min);
            let room = room(floor_y);
            let walls = spec.background_texture.dimmed(0.8);
            for (k, (m, uv)) in room.iter().enumerate() {
                surfaces.push(Surface {
                    mesh: m,
                    model: RigidTransform::identity(),
                    uvs: Some(uv),
                    albedo: if k == 0 { &spec.background_texture } else { &walls },
                    id: 2 + k as u16,
                });
            }
            render_surfaces(&surfaces, &spec.camera, &shading, &[0.0; 3])?
        }
        SceneMode::Chaotic => render_surfaces(&surfaces, &spec.camera, &shading, &spec.background_texture)?,
    };
    let data = frame.rgb.iter().flat_map(|c| c.map(|v| v as f32)).collect();
    let image = Image::from_data(frame.width, frame.height, 3, data)?;
    let mask = Mask {
        width: frame.width,
        height: frame.height,
        data: frame.ids.iter().map(|&id| id == 1).collect(),
    };
    Ok((image, mask))
}

/// Renders the scene to a 3-channel image.
pub fn render_colour(spec: &SceneSpec, meshes: &[Mesh]) -> Result<Image, SynthError> {
    Ok(render_colour_with_mask(spec, meshes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_toy_shape, ToyFamily};

    fn cube() -> Mesh {
        let mut m = generate_toy_shape(ToyFamily::Box, &[1.0, 1.0, 1.0], 0).unwrap();
        m.name = "cube".into();
        m
    }

    #[test]
    fn scenes_are_deterministic() {
        for mode in [SceneMode::Structured, SceneMode::Chaotic] {
            assert_eq!(randomize_scene("a", mode, 9), randomize_scene("a", mode, 9));
            assert_ne!(randomize_scene("a", mode, 9), randomize_scene("b", mode, 9));
            let meshes = [cube()];
            let s = randomize_scene("cube", mode, 4);
            assert_eq!(render_colour(&s, &meshes).unwrap(), render_colour(&s, &meshes).unwrap());
        }
    }

    #[test]
    fn white_object_on_black_is_separable() {
        let mut s = randomize_scene("cube", SceneMode::Chaotic, 1);
        s.object_texture = TextureSpec::solid([1.0; 3]);
        s.background_texture = TextureSpec::solid([0.0; 3]);
        let (img, mask) = render_colour_with_mask(&s, &[cube()]).unwrap();
        assert!(mask.count() > 0);
        for (i, &inside) in mask.data.iter().enumerate() {
            let px = &img.data()[3 * i..3 * i + 3];
            if inside {
                assert!(px.iter().all(|&v| v > 0.0));
            } else {
                assert!(px.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn unknown_object_errors() {
        let s = randomize_scene("missing", SceneMode::Chaotic, 1);
        assert!(matches!(render_colour(&s, &[cube()]), Err(SynthError::UnknownObject(_))));
    }

    #[test]
    fn structured_elevation_bounds() {
        for i in 0..1000 {
            let s = randomize_scene("x", SceneMode::Structured, i);
            let eye = s.eye();
            let el = (eye.y / eye.norm()).asin().to_degrees();
            assert!((15.0 - 1e-9..=75.0 + 1e-9).contains(&el), "{el}");
            assert!((2.5 - 1e-9..=4.5 + 1e-9).contains(&eye.norm()));
        }
    }

    #[test]
    fn chaotic_rotations_look_uniform() {
        let fixed = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        let n = 1000;
        let mean: f64 = (0..n)
            .map(|i| randomize_scene("x", SceneMode::Chaotic, i).object_rotation.coords.dot(&fixed.coords))
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn resize_keeps_scene() {
        let s = randomize_scene("cube", SceneMode::Structured, 2).with_size(32);
        let img = render_colour(&s, &[cube()]).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (32, 32, 3));
    }
}
