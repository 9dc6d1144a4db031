//! Software rasterizer for descriptor views and synthetic scenes.

mod image;
mod raster;

use thiserror::Error;

pub use self::image::{crop_to_extent, CropWindow, Image, Mask};
pub use self::raster::{render_surfaces, Frame, Surface, SurfaceColour};
use crate::mesh::{CameraRig, Mesh, MeshError, RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("zero render resolution")]
    ZeroResolution,
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("point is behind the near plane (depth {0})")]
    BehindCamera(f64),
    #[error("object mask is empty")]
    EmptyMask,
    #[error("fill fraction must be in (0, 1], got {0}")]
    InvalidFill(f64),
    #[error("image format: {0}")]
    Format(String),
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Pinhole camera. `pose` maps world to camera coordinates (camera looks
/// down `-z`, `+y` up); pixel rows grow downwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: RigidTransform,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(pose: RigidTransform, fov_y: f64, width: usize, height: usize) -> Self {
        Camera {
            pose,
            fov_y,
            near: 0.05,
            far: 100.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::ZeroResolution);
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(RenderError::InvalidCamera("field of view must be in (0, pi)"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(RenderError::InvalidCamera("need 0 < near < far"));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal_length(&self) -> f64 {
        self.height as f64 / 2.0 / (self.fov_y / 2.0).tan()
    }
}

/// Projects a world point to `(x, y, depth)`: pixel coordinates (pixel `k`
/// spans `[k, k + 1)`) and camera-space depth along the viewing axis.
pub fn project_vertex(camera: &Camera, point: &Vec3) -> Result<(f64, f64, f64), RenderError> {
    camera.validate()?;
    let p = camera.pose.apply_point(point);
    let depth = -p.z;
    if !(depth > camera.near) {
        return Err(RenderError::BehindCamera(depth));
    }
    let f = camera.focal_length();
    Ok((
        camera.width as f64 / 2.0 + f * p.x / depth,
        camera.height as f64 / 2.0 - f * p.y / depth,
        depth,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightMode {
    /// Point light at the camera centre.
    Headlight,
    /// Light arriving from world direction `d` (the vector points towards the light).
    Directional(Vec3),
}

/// Lambertian shading: `colour * (ambient + albedo * max(0, n·l))`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingSpec {
    pub mode: LightMode,
    pub ambient: f64,
    pub albedo: f64,
}

impl ShadingSpec {
    /// Descriptor-view shading.
    pub const VIEWS: ShadingSpec = ShadingSpec {
        mode: LightMode::Headlight,
        ambient: 0.15,
        albedo: 0.85,
    };
}

impl Default for ShadingSpec {
    fn default() -> Self {
        Self::VIEWS
    }
}

/// Camera-space depth per pixel, `+inf` where nothing was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn coverage(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.depth.iter().map(|d| d.is_finite()).collect(),
        }
    }
}

/// Renders an untextured mesh to a greyscale image on a uniform background.
pub fn rasterize(
    mesh: &Mesh,
    camera: &Camera,
    shading: &ShadingSpec,
    background: f64,
) -> Result<(Image, DepthBuffer), RenderError> {
    let white = 1.0f64;
    let surface = Surface {
        mesh,
        model: RigidTransform::identity(),
        uvs: None,
        albedo: &white,
        id: 1,
    };
    let frame = render_surfaces(&[surface], camera, shading, &background)?;
    let data = frame.rgb.iter().map(|c| c[0] as f32).collect();
    let image = Image::from_data(frame.width, frame.height, 1, data)?;
    Ok((
        image,
        DepthBuffer {
            width: frame.width,
            height: frame.height,
            depth: frame.depth,
        },
    ))
}

/// How descriptor views are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewConfig {
    /// Side of the square render before cropping.
    pub render_resolution: usize,
    /// Side of the cropped output (the network input size).
    pub output_size: usize,
    pub fov_y: f64,
    /// Fraction of the output side taken by the object's longer dimension.
    pub fill_fraction: f64,
    pub shading: ShadingSpec,
    pub background: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            render_resolution: 128,
            output_size: 64,
            fov_y: 40f64.to_radians(),
            fill_fraction: 0.7,
            shading: ShadingSpec::VIEWS,
            background: 0.0,
        }
    }
}

impl ViewConfig {
    pub fn with_output_size(output_size: usize) -> Self {
        ViewConfig {
            output_size,
            ..Self::default()
        }
    }
}

/// One cropped greyscale view per rig camera, in rig order.
pub fn render_views(mesh: &Mesh, rig: &CameraRig, config: &ViewConfig) -> Result<Vec<Image>, RenderError> {
    if config.render_resolution == 0 || config.output_size == 0 {
        return Err(RenderError::ZeroResolution);
    }
    rig.poses()?
        .into_iter()
        .map(|pose| {
            let camera = Camera::new(pose, config.fov_y, config.render_resolution, config.render_resolution);
            let (img, depth) = rasterize(mesh, &camera, &config.shading, config.background)?;
            crop_to_extent(&img, &depth.coverage(), config.fill_fraction, config.output_size)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::look_at;

    fn frontal_camera(size: usize) -> Camera {
        let pose = look_at(&Vec3::new(0.0, 0.0, 3.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        Camera::new(pose, 40f64.to_radians(), size, size)
    }

    fn triangle_at(z: f64, scale: f64) -> Mesh {
        Mesh::from_triangles(
            "tri",
            vec![
                Vec3::new(-scale, -scale, z),
                Vec3::new(scale, -scale, z),
                Vec3::new(0.0, scale, z),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn empty_mesh_is_background() {
        let (img, depth) = rasterize(&Mesh::empty("e"), &frontal_camera(16), &ShadingSpec::VIEWS, 0.25).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.25));
        assert_eq!(depth.coverage().count(), 0);
    }

    #[test]
    fn facing_triangle_matches_lambert() {
        let shading = ShadingSpec {
            mode: LightMode::Headlight,
            ambient: 0.1,
            albedo: 0.9,
        };
        let cam = frontal_camera(33);
        let mesh = triangle_at(0.0, 0.5);
        let (img, _) = rasterize(&mesh, &cam, &shading, 0.0).unwrap();
        // The pixel at the image centre looks straight down the optical axis at
        // a surface whose normal faces the camera, so n·l = 1.
        let v = img.get(16, 16, 0) as f64;
        assert!((v - (0.1 + 0.9 * 1.0)).abs() < 1e-6, "{v}");
        // Off-axis pixel: light direction from the surface point to the eye.
        let (x, y) = (16usize, 20usize);
        let f = cam.focal_length();
        let ray = Vec3::new((x as f64 + 0.5 - 16.5) / f, -(y as f64 + 0.5 - 16.5) / f, -1.0);
        let p = ray * 3.0;
        let to_eye = (-p).normalize();
        let expected = 0.1 + 0.9 * to_eye.dot(&Vec3::z());
        assert!((img.get(x, y, 0) as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn nearer_triangle_wins() {
        let cam = frontal_camera(32);
        let mut near = triangle_at(1.0, 0.4);
        let far = triangle_at(-1.0, 1.2);
        near.name = "near".into();
        let grey = 0.3f64;
        let white = 1.0f64;
        // Draw the far triangle second: it must still lose on overlap pixels.
        let surfaces = [
            Surface { mesh: &near, model: RigidTransform::identity(), uvs: None, albedo: &grey, id: 1 },
            Surface { mesh: &far, model: RigidTransform::identity(), uvs: None, albedo: &white, id: 2 },
        ];
        let frame = render_surfaces(&surfaces, &cam, &ShadingSpec::VIEWS, &0.0).unwrap();
        let c = 16 * 32 + 16;
        assert_eq!(frame.ids[c], 1);
        assert!((frame.depth[c] - 2.0).abs() < 1e-9);
        assert!(frame.ids.contains(&2));
    }

    #[test]
    fn projection_contract() {
        let cam = frontal_camera(64);
        let (x, y, d) = project_vertex(&cam, &Vec3::zeros()).unwrap();
        assert!((x - 32.0).abs() <= 0.5 && (y - 32.0).abs() <= 0.5);
        assert!((d - 3.0).abs() < 1e-12);
        let a = project_vertex(&cam, &Vec3::new(0.2, 0.1, 1.0)).unwrap();
        let b = project_vertex(&cam, &Vec3::new(0.4, 0.2, -1.0)).unwrap();
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        assert!(a.2 < b.2);
        // Top edge of the field of view: y/depth = tan(fov/2).
        let depth = 3.0;
        let edge = Vec3::new(0.0, depth * (cam.fov_y / 2.0).tan(), 0.0);
        let (_, y, _) = project_vertex(&cam, &edge).unwrap();
        assert!(y.abs() < 1.0, "{y}");
        assert!(matches!(
            project_vertex(&cam, &Vec3::new(0.0, 0.0, 4.0)),
            Err(RenderError::BehindCamera(_))
        ));
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // A large floor quad crossing the camera plane still covers the bottom half.
        let mesh = Mesh::from_triangles(
            "floor",
            vec![
                Vec3::new(-10.0, -1.0, -10.0),
                Vec3::new(10.0, -1.0, -10.0),
                Vec3::new(10.0, -1.0, 10.0),
                Vec3::new(-10.0, -1.0, 10.0),
            ],
            vec![[0, 2, 1], [0, 3, 2]],
        )
        .unwrap();
        let (_, depth) = rasterize(&mesh, &frontal_camera(32), &ShadingSpec::VIEWS, 0.0).unwrap();
        let mask = depth.coverage();
        assert!(mask.data[31 * 32 + 16]);
        assert!(!mask.data[0]);
    }

    #[test]
    fn zero_resolution() {
        let cam = frontal_camera(0);
        assert!(matches!(
            rasterize(&Mesh::empty("e"), &cam, &ShadingSpec::VIEWS, 0.0),
            Err(RenderError::ZeroResolution)
        ));
    }
}
