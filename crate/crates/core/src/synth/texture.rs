use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::render::SurfaceColour;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureKind {
    Solid,
    Gradient,
    Checker,
    ValueNoise,
}

impl TextureKind {
    pub const ALL: [TextureKind; 4] = [
        TextureKind::Solid,
        TextureKind::Gradient,
        TextureKind::Checker,
        TextureKind::ValueNoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TextureKind::Solid => "solid",
            TextureKind::Gradient => "gradient",
            TextureKind::Checker => "checker",
            TextureKind::ValueNoise => "value_noise",
        }
    }
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TextureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TextureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown texture kind {s:?}"))
    }
}

/// Procedural texture over `(u, v)`. Every kind blends between the two
/// colours, so values stay inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub kind: TextureKind,
    pub colours: [[f64; 3]; 2],
    /// Pattern frequency in cycles per unit of `(u, v)`.
    pub scale: f64,
    /// Pattern rotation in radians.
    pub orientation: f64,
    pub seed: u64,
}

impl TextureSpec {
    pub fn solid(colour: [f64; 3]) -> Self {
        TextureSpec {
            kind: TextureKind::Solid,
            colours: [colour, colour],
            scale: 1.0,
            orientation: 0.0,
            seed: 0,
        }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let kind = TextureKind::ALL[rng.random_range(0..TextureKind::ALL.len())];
        let mut colour = || [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let colours = [colour(), colour()];
        let scale = match kind {
            TextureKind::Solid => 1.0,
            TextureKind::Gradient => rng.random_range(0.5..2.0),
            TextureKind::Checker | TextureKind::ValueNoise => rng.random_range(2.0..8.0),
        };
        TextureSpec {
            kind,
            colours,
            scale,
            orientation: rng.random_range(0.0..PI),
            seed: rng.random(),
        }
    }

    /// Blend weight of the second colour at `(u, v)`, in `[0, 1]`.
    pub fn weight(&self, uv: [f64; 2]) -> f64 {
        let (s, c) = self.orientation.sin_cos();
        let (du, dv) = (uv[0] - 0.5, uv[1] - 0.5);
        let ru = c * du - s * dv;
        let rv = s * du + c * dv;
        match self.kind {
            TextureKind::Solid => 0.0,
            TextureKind::Gradient => (0.5 + ru * self.scale).clamp(0.0, 1.0),
            TextureKind::Checker => {
                let parity = (ru * self.scale).floor() as i64 + (rv * self.scale).floor() as i64;
                parity.rem_euclid(2) as f64
            }
            TextureKind::ValueNoise => value_noise(self.seed, ru * self.scale, rv * self.scale),
        }
    }

    pub fn eval(&self, uv: [f64; 2]) -> [f64; 3] {
        let t = self.weight(uv);
        let [a, b] = self.colours;
        [0, 1, 2].map(|i| (a[i] * (1.0 - t) + b[i] * t).clamp(0.0, 1.0))
    }

    /// Same pattern with colours scaled by `factor`.
    pub fn dimmed(&self, factor: f64) -> Self {
        TextureSpec {
            colours: self.colours.map(|c| c.map(|v| (v * factor).clamp(0.0, 1.0))),
            ..*self
        }
    }
}

impl SurfaceColour for TextureSpec {
    fn colour(&self, uv: [f64; 2]) -> [f64; 3] {
        self.eval(uv)
    }
}

fn lattice(seed_: u64, x: i64, y: i64) -> f64 {
    let h = seed::derive(seed_, &[x as u64, y as u64]);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothstep-interpolated lattice noise in `[0, 1]`.
fn value_noise(seed_: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(seed_, ix, iy);
    let b = lattice(seed_, ix + 1, iy);
    let c = lattice(seed_, ix, iy + 1);
    let d = lattice(seed_, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    (top + (bottom - top) * ty).clamp(0.0, 1.0)
}
