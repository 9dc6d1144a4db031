use rand::Rng;

use crate::render::Image;
use crate::seed;

/// One draw of the training-time augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub hflip: bool,
    pub vflip: bool,
    /// Translation as a fraction of the image side.
    pub translate: [f64; 2],
    /// Rotation in radians.
    pub rotation: f64,
    pub scale: f64,
    pub contrast: f64,
    pub brightness: f64,
}

impl AugmentParams {
    pub const MAX_TRANSLATE: f64 = 0.10;
    pub const MAX_ROTATION_DEG: f64 = 15.0;
    pub const SCALE: (f64, f64) = (0.8, 1.25);
    pub const CONTRAST: (f64, f64) = (0.7, 1.3);
    pub const MAX_BRIGHTNESS: f64 = 0.2;

    pub fn identity() -> Self {
        AugmentParams {
            hflip: false,
            vflip: false,
            translate: [0.0, 0.0],
            rotation: 0.0,
            scale: 1.0,
            contrast: 1.0,
            brightness: 0.0,
        }
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        let t = Self::MAX_TRANSLATE;
        let r = Self::MAX_ROTATION_DEG.to_radians();
        AugmentParams {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            translate: [rng.random_range(-t..=t), rng.random_range(-t..=t)],
            rotation: rng.random_range(-r..=r),
            scale: rng.random_range(Self::SCALE.0..=Self::SCALE.1),
            contrast: rng.random_range(Self::CONTRAST.0..=Self::CONTRAST.1),
            brightness: rng.random_range(-Self::MAX_BRIGHTNESS..=Self::MAX_BRIGHTNESS),
        }
    }

    pub fn from_seed(seed_: u64) -> Self {
        Self::sample(&mut seed::rng(seed_, &[]))
    }
}

/// Applies a seeded random augmentation.
pub fn augment(img: &Image, seed_: u64) -> Image {
    augment_with(img, &AugmentParams::from_seed(seed_))
}

/// Flips, then rotates and scales about the centre, then translates; borders
/// are clamped. Contrast pivots on 0.5. The result is clamped to `[0, 1]`.
pub fn augment_with(img: &Image, p: &AugmentParams) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = p.rotation.sin_cos();
    let (tx, ty) = (p.translate[0] * w as f64, p.translate[1] * h as f64);
    let mut out = Image::new(w, h, ch);
    let pivot = (1.0 - p.contrast) * 0.5;
    for y in 0..h {
        for x in 0..w {
            // Inverse map from output pixel centre to source position.
            let qx = x as f64 + 0.5 - cx - tx;
            let qy = y as f64 + 0.5 - cy - ty;
            let mut sx = (cos * qx + sin * qy) / p.scale;
            let mut sy = (-sin * qx + cos * qy) / p.scale;
            if p.hflip {
                sx = -sx;
            }
            if p.vflip {
                sy = -sy;
            }
            for c in 0..ch {
                let v = img.sample_bilinear(sx + cx, sy + cy, c) as f64;
                let v = p.contrast * v + pivot + p.brightness;
                out.set(x, y, c, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize) -> Image {
        let mut rng = seed::rng(1, &[]);
        let data = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
        Image::from_data(w, h, 3, data).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let img = noise(17, 12);
        assert_eq!(augment_with(&img, &AugmentParams::identity()), img);
    }

    #[test]
    fn double_flip_restores() {
        let img = noise(16, 9);
        let p = AugmentParams { hflip: true, vflip: true, ..AugmentParams::identity() };
        let once = augment_with(&img, &p);
        assert_ne!(once, img);
        assert!(augment_with(&once, &p).max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn hflip_mirrors_columns() {
        let img = noise(6, 4);
        let p = AugmentParams { hflip: true, ..AugmentParams::identity() };
        let f = augment_with(&img, &p);
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(f.get(x, y, 1), img.get(5 - x, y, 1));
            }
        }
    }

    #[test]
    fn seeded_output_in_range_and_same_shape() {
        let img = noise(20, 20);
        for s in 0..30 {
            let a = augment(&img, s);
            assert_eq!((a.width(), a.height(), a.channels()), (20, 20, 3));
            assert!(a.in_unit_range());
            assert_eq!(a, augment(&img, s));
        }
    }

    #[test]
    fn sampled_parameters_respect_ranges() {
        let mut rng = seed::rng(5, &[]);
        for _ in 0..1000 {
            let p = AugmentParams::sample(&mut rng);
            assert!(p.translate.iter().all(|t| t.abs() <= 0.1));
            assert!(p.rotation.abs() <= 15f64.to_radians());
            assert!((0.8..=1.25).contains(&p.scale));
            assert!((0.7..=1.3).contains(&p.contrast));
            assert!(p.brightness.abs() <= 0.2);
        }
    }
}
