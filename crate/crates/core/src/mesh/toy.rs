//! Parametric toy shapes: a hermetic stand-in for a large CAD model corpus.
//!
//! | family   | params                                          |
//! |----------|-------------------------------------------------|
//! | box      | `sx, sy, sz` (all > 0)                          |
//! | cylinder | `radius, height, segments`                      |
//! | cone     | `bottom_radius, top_radius (>= 0), height, segments` |
//! | torus    | `major, minor, major_segments, minor_segments` (major > minor > 0) |
//! | lspline  | `height, segments, r_1 .. r_k` (k >= 2): lathe of a Catmull-Rom radius profile |
//!
//! Segment counts are integers >= 3. The seed only rotates the tessellation of
//! revolved families about their axis; boxes ignore it. All meshes are closed
//! and outward-oriented, with shared vertices so the index topology is
//! meaningful (V - E + F = 2, or 0 for the torus).

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{normalize_mesh, Mesh, MeshError, Vec3};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyFamily {
    Box,
    Cylinder,
    Cone,
    Torus,
    Lspline,
}

impl ToyFamily {
    pub const ALL: [ToyFamily; 5] = [
        ToyFamily::Box,
        ToyFamily::Cylinder,
        ToyFamily::Cone,
        ToyFamily::Torus,
        ToyFamily::Lspline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyFamily::Box => "box",
            ToyFamily::Cylinder => "cylinder",
            ToyFamily::Cone => "cone",
            ToyFamily::Torus => "torus",
            ToyFamily::Lspline => "lspline",
        }
    }
}

impl fmt::Display for ToyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyFamily {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToyFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| MeshError::InvalidParameters {
                family: "toy",
                message: format!("unknown family {s:?}"),
            })
    }
}

fn invalid(family: ToyFamily, message: impl Into<String>) -> MeshError {
    MeshError::InvalidParameters {
        family: family.name(),
        message: message.into(),
    }
}

fn segments(family: ToyFamily, value: f64) -> Result<usize, MeshError> {
    if value.fract() != 0.0 || !(3.0..=4096.0).contains(&value) {
        return Err(invalid(family, format!("segment count {value} must be an integer >= 3")));
    }
    Ok(value as usize)
}

fn positive(family: ToyFamily, name: &str, value: f64) -> Result<f64, MeshError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(family, format!("{name} must be positive, got {value}")))
    }
}

pub fn generate_toy_shape(family: ToyFamily, params: &[f64], seed: u64) -> Result<Mesh, MeshError> {
    let arity_ok = match family {
        ToyFamily::Box | ToyFamily::Cylinder => params.len() == 3,
        ToyFamily::Cone | ToyFamily::Torus => params.len() == 4,
        ToyFamily::Lspline => params.len() >= 4,
    };
    if !arity_ok {
        return Err(invalid(family, format!("wrong parameter count {}", params.len())));
    }
    let phase = seed::rng(seed, &[]).random::<f64>();
    let name = format!("{family}");
    match family {
        ToyFamily::Box => {
            let sx = positive(family, "sx", params[0])?;
            let sy = positive(family, "sy", params[1])?;
            let sz = positive(family, "sz", params[2])?;
            Ok(box_mesh(name, sx, sy, sz))
        }
        ToyFamily::Cylinder => {
            let r = positive(family, "radius", params[0])?;
            let h = positive(family, "height", params[1])?;
            let seg = segments(family, params[2])?;
            lathe(name, &[(r, -h / 2.0), (r, h / 2.0)], seg, phase)
        }
        ToyFamily::Cone => {
            let rb = positive(family, "bottom radius", params[0])?;
            let rt = params[1];
            if !(rt.is_finite() && rt >= 0.0) {
                return Err(invalid(family, "top radius must be >= 0"));
            }
            let h = positive(family, "height", params[2])?;
            let seg = segments(family, params[3])?;
            lathe(name, &[(rb, -h / 2.0), (rt, h / 2.0)], seg, phase)
        }
        ToyFamily::Torus => {
            let major = positive(family, "major radius", params[0])?;
            let minor = positive(family, "minor radius", params[1])?;
            if minor >= major {
                return Err(invalid(family, "major radius must exceed minor radius"));
            }
            let m = segments(family, params[2])?;
            let n = segments(family, params[3])?;
            Ok(torus(name, major, minor, m, n, phase))
        }
        ToyFamily::Lspline => {
            let h = positive(family, "height", params[0])?;
            let seg = segments(family, params[1])?;
            let radii = params[2..]
                .iter()
                .map(|&r| positive(family, "profile radius", r))
                .collect::<Result<Vec<_>, _>>()?;
            lathe(name, &spline_profile(&radii, h), seg, phase)
        }
    }
}

fn box_mesh(name: String, sx: f64, sy: f64, sz: f64) -> Mesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { sx / 2.0 } else { -sx / 2.0 },
                if i & 2 != 0 { sy / 2.0 } else { -sy / 2.0 },
                if i & 4 != 0 { sz / 2.0 } else { -sz / 2.0 },
            )
        })
        .collect();
    let quads = [
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    let triangles = quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect();
    Mesh::from_triangles(name, vertices, triangles).expect("box indices are in range")
}

/// Surface of revolution about `+y` through rings `(radius, y)` listed bottom
/// to top. Zero-radius rings collapse to a single apex vertex; non-zero end
/// rings are closed with a cap fan.
fn lathe(name: String, rings: &[(f64, f64)], seg: usize, phase: f64) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    // First vertex index of each ring and whether it is an apex.
    let mut starts = Vec::with_capacity(rings.len());
    for &(r, y) in rings {
        starts.push((vertices.len() as u32, r == 0.0));
        if r == 0.0 {
            vertices.push(Vec3::new(0.0, y, 0.0));
        } else {
            for j in 0..seg {
                let theta = TAU * (j as f64 + phase) / seg as f64;
                vertices.push(Vec3::new(r * theta.cos(), y, -r * theta.sin()));
            }
        }
    }
    let at = |ring: usize, j: usize| -> u32 {
        let (s, apex) = starts[ring];
        if apex {
            s
        } else {
            s + (j % seg) as u32
        }
    };
    for i in 0..rings.len() - 1 {
        let (lo_apex, hi_apex) = (starts[i].1, starts[i + 1].1);
        if lo_apex && hi_apex {
            return Err(MeshError::InvalidParameters {
                family: "lathe",
                message: "adjacent zero-radius rings".into(),
            });
        }
        for j in 0..seg {
            let (a, b, c, d) = (at(i, j), at(i, j + 1), at(i + 1, j + 1), at(i + 1, j));
            if !lo_apex {
                triangles.push([a, b, c]);
            }
            if !hi_apex {
                triangles.push([a, c, d]);
            }
        }
    }
    let last = rings.len() - 1;
    if !starts[0].1 {
        let center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, rings[0].1, 0.0));
        for j in 0..seg {
            triangles.push([center, at(0, j + 1), at(0, j)]);
        }
    }
    if !starts[last].1 {
        let center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, rings[last].1, 0.0));
        for j in 0..seg {
            triangles.push([center, at(last, j), at(last, j + 1)]);
        }
    }
    Mesh::from_triangles(name, vertices, triangles)
}

/// Catmull-Rom radius profile through `radii` spaced evenly over `height`.
fn spline_profile(radii: &[f64], height: f64) -> Vec<(f64, f64)> {
    const SAMPLES_PER_SPAN: usize = 6;
    let k = radii.len();
    let floor = 0.02 * radii.iter().cloned().fold(0.0, f64::max);
    let get = |i: isize| radii[i.clamp(0, k as isize - 1) as usize];
    let mut out = Vec::new();
    for span in 0..k - 1 {
        let (p0, p1, p2, p3) = (
            get(span as isize - 1),
            get(span as isize),
            get(span as isize + 1),
            get(span as isize + 2),
        );
        let steps = if span == k - 2 { SAMPLES_PER_SPAN + 1 } else { SAMPLES_PER_SPAN };
        for s in 0..steps {
            let t = s as f64 / SAMPLES_PER_SPAN as f64;
            let r = 0.5
                * (2.0 * p1
                    + (p2 - p0) * t
                    + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
                    + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t * t);
            let y = height * ((span as f64 + t) / (k - 1) as f64 - 0.5);
            out.push((r.max(floor), y));
        }
    }
    out
}

fn torus(name: String, major: f64, minor: f64, m: usize, n: usize, phase: f64) -> Mesh {
    let mut vertices = Vec::with_capacity(m * n);
    for i in 0..m {
        let theta = TAU * (i as f64 + phase) / m as f64;
        for j in 0..n {
            let phi = TAU * j as f64 / n as f64;
            let ring = major + minor * phi.cos();
            vertices.push(Vec3::new(ring * theta.cos(), minor * phi.sin(), -ring * theta.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % m) * n + (j % n)) as u32;
    let mut triangles = Vec::with_capacity(2 * m * n);
    for i in 0..m {
        for j in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::from_triangles(name, vertices, triangles).expect("torus indices are in range")
}

/// Draws a family and parameters for corpus slot `index` (families cycle).
pub fn sample_toy_shape(index: usize, rng: &mut impl Rng) -> (ToyFamily, Vec<f64>) {
    let family = ToyFamily::ALL[index % ToyFamily::ALL.len()];
    let seg = |rng: &mut dyn rand::RngCore, lo: u32, hi: u32| rng.random_range(lo..=hi) as f64;
    let params = match family {
        ToyFamily::Box => (0..3).map(|_| rng.random_range(0.2..1.0)).collect(),
        ToyFamily::Cylinder => vec![
            rng.random_range(0.2..1.0),
            rng.random_range(0.3..2.0),
            seg(rng, 3, 12),
        ],
        ToyFamily::Cone => vec![
            rng.random_range(0.3..1.0),
            if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.05..0.8) },
            rng.random_range(0.4..2.0),
            seg(rng, 3, 12),
        ],
        ToyFamily::Torus => {
            let major = rng.random_range(0.5..1.0);
            vec![
                major,
                rng.random_range(0.1..0.45) * major,
                seg(rng, 12, 24),
                seg(rng, 6, 12),
            ]
        }
        ToyFamily::Lspline => {
            let k = rng.random_range(3..=5);
            let mut p = vec![rng.random_range(0.6..2.0), 16.0];
            p.extend((0..k).map(|_| rng.random_range(0.1..1.0)));
            p
        }
    };
    (family, params)
}

/// `count` normalized toy meshes named `toy_NNNN_<family>`, reproducible from `seed`.
pub fn toy_corpus(count: usize, seed: u64) -> Vec<Mesh> {
    (0..count)
        .map(|i| {
            let mut rng = seed::rng(seed, &[i as u64]);
            let (family, params) = sample_toy_shape(i, &mut rng);
            let mut mesh = generate_toy_shape(family, &params, seed::derive(seed, &[i as u64, 1]))
                .expect("sampled parameters are valid");
            mesh = normalize_mesh(&mesh).expect("toy shapes have extent");
            mesh.name = format!("toy_{i:04}_{family}");
            mesh
        })
        .collect()
}
