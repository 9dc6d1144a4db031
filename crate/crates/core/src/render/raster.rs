//! Z-buffered triangle rasterization with perspective-correct attributes.

use super::{Camera, RenderError, ShadingSpec, LightMode};
use crate::mesh::{Mesh, RigidTransform, Vec3};

/// Albedo source for a surface, evaluated at the surface's `(u, v)`.
pub trait SurfaceColour: Sync {
    fn colour(&self, uv: [f64; 2]) -> [f64; 3];
}

impl SurfaceColour for [f64; 3] {
    fn colour(&self, _: [f64; 2]) -> [f64; 3] {
        *self
    }
}

impl SurfaceColour for f64 {
    fn colour(&self, _: [f64; 2]) -> [f64; 3] {
        [*self; 3]
    }
}

/// One mesh placed in the world.
pub struct Surface<'a> {
    pub mesh: &'a Mesh,
    /// Object-to-world placement.
    pub model: RigidTransform,
    /// Per-vertex texture coordinates; `(0, 0)` everywhere when absent.
    pub uvs: Option<&'a [[f64; 2]]>,
    pub albedo: &'a dyn SurfaceColour,
    /// Written to the id buffer where this surface wins the depth test.
    /// Zero is reserved for the background.
    pub id: u16,
}

/// Raw render result: linear RGB, camera-space depth and surface ids.
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    /// Camera-space depth (distance along the viewing axis), `+inf` where empty.
    pub depth: Vec<f64>,
    pub ids: Vec<u16>,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    pos: Vec3,
    normal: Vec3,
    uv: [f64; 2],
}

impl ClipVertex {
    fn lerp(&self, other: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            pos: self.pos + (other.pos - self.pos) * t,
            normal: self.normal + (other.normal - self.normal) * t,
            uv: [
                self.uv[0] + (other.uv[0] - self.uv[0]) * t,
                self.uv[1] + (other.uv[1] - self.uv[1]) * t,
            ],
        }
    }
}

/// Sutherland-Hodgman against the near plane `-z >= near`.
fn clip_near(tri: [ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    let inside = |v: &ClipVertex| -v.pos.z >= near;
    if tri.iter().all(inside) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (&tri[i], &tri[(i + 1) % 3]);
        let (ina, inb) = (inside(a), inside(b));
        if ina {
            out.push(*a);
        }
        if ina != inb {
            let da = -a.pos.z - near;
            let db = -b.pos.z - near;
            out.push(a.lerp(b, da / (da - db)));
        }
    }
    out
}

/// Renders `surfaces` in order. Equal depths keep the earlier fragment, so
/// surface order and then triangle order break ties.
pub fn render_surfaces(
    surfaces: &[Surface<'_>],
    camera: &Camera,
    shading: &ShadingSpec,
    background: &dyn SurfaceColour,
) -> Result<Frame, RenderError> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut rgb = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            rgb.push(background.colour([(x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64]));
        }
    }
    let mut frame = Frame {
        width: w,
        height: h,
        rgb,
        depth: vec![f64::INFINITY; w * h],
        ids: vec![0; w * h],
    };
    let focal = camera.focal_length();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    // Directional light in camera space, pointing towards the light.
    let light_cam = match shading.mode {
        LightMode::Headlight => None,
        LightMode::Directional(dir) => Some(camera.pose.apply_vector(&dir).normalize()),
    };

    for surface in surfaces {
        let to_cam = camera.pose.compose(&surface.model);
        let mesh = surface.mesh;
        let cam_pos: Vec<Vec3> = mesh.vertices.iter().map(|v| to_cam.apply_point(v)).collect();
        let cam_nrm: Vec<Vec3> = mesh.normals.iter().map(|n| to_cam.apply_vector(n)).collect();
        for tri in &mesh.triangles {
            let verts = tri.map(|i| {
                let i = i as usize;
                ClipVertex {
                    pos: cam_pos[i],
                    normal: cam_nrm.get(i).copied().unwrap_or_else(Vec3::z),
                    uv: surface.uvs.map_or([0.0, 0.0], |uv| uv[i]),
                }
            });
            let poly = clip_near(verts, camera.near);
            for k in 1..poly.len().saturating_sub(1) {
                let t = [poly[0], poly[k], poly[k + 1]];
                let scr = t.map(|v| {
                    let d = -v.pos.z;
                    [cx + focal * v.pos.x / d, cy - focal * v.pos.y / d, d]
                });
                draw_triangle(&mut frame, &t, &scr, surface, camera, shading, light_cam);
            }
        }
    }
    Ok(frame)
}

#[allow(clippy::too_many_arguments)]
fn draw_triangle(
    frame: &mut Frame,
    t: &[ClipVertex; 3],
    scr: &[[f64; 3]; 3],
    surface: &Surface<'_>,
    camera: &Camera,
    shading: &ShadingSpec,
    light_cam: Option<Vec3>,
) {
    let edge = |a: &[f64; 3], b: &[f64; 3], px: f64, py: f64| {
        (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
    };
    let area = edge(&scr[0], &scr[1], scr[2][0], scr[2][1]);
    if !(area.abs() > 1e-12) {
        return;
    }
    let min_x = scr.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = scr.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = scr.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = scr.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).ceil().max(0.0) as i64;
    let x1 = ((max_x - 0.5).floor() as i64).min(frame.width as i64 - 1);
    let y0 = (min_y - 0.5).ceil().max(0.0) as i64;
    let y1 = ((max_y - 0.5).floor() as i64).min(frame.height as i64 - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let inv_d = scr.map(|p| 1.0 / p[2]);
    for py in y0..=y1 {
        let fy = py as f64 + 0.5;
        for px in x0..=x1 {
            let fx = px as f64 + 0.5;
            let b0 = edge(&scr[1], &scr[2], fx, fy) / area;
            let b1 = edge(&scr[2], &scr[0], fx, fy) / area;
            let b2 = edge(&scr[0], &scr[1], fx, fy) / area;
            if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                continue;
            }
            let w = [b0 * inv_d[0], b1 * inv_d[1], b2 * inv_d[2]];
            let sum = w[0] + w[1] + w[2];
            let depth = 1.0 / sum;
            if depth > camera.far {
                continue;
            }
            let idx = py as usize * frame.width + px as usize;
            if !(depth < frame.depth[idx]) {
                continue;
            }
            let l = [w[0] / sum, w[1] / sum, w[2] / sum];
            let pos = t[0].pos * l[0] + t[1].pos * l[1] + t[2].pos * l[2];
            let n = t[0].normal * l[0] + t[1].normal * l[1] + t[2].normal * l[2];
            let uv = [
                t[0].uv[0] * l[0] + t[1].uv[0] * l[1] + t[2].uv[0] * l[2],
                t[0].uv[1] * l[0] + t[1].uv[1] * l[1] + t[2].uv[1] * l[2],
            ];
            let to_light = light_cam.unwrap_or_else(|| -pos);
            let nl = match (n.try_normalize(1e-300), to_light.try_normalize(1e-300)) {
                (Some(n), Some(l)) => n.dot(&l).max(0.0),
                _ => 0.0,
            };
            let intensity = shading.ambient + shading.albedo * nl;
            let base = surface.albedo.colour(uv);
            frame.depth[idx] = depth;
            frame.ids[idx] = surface.id;
            frame.rgb[idx] = base.map(|c| (c * intensity).clamp(0.0, 1.0));
        }
    }
}
