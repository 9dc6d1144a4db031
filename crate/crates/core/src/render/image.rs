use std::path::Path;

use super::RenderError;

/// Dense row-major raster with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, RenderError> {
        if !(channels == 1 || channels == 3) {
            return Err(RenderError::Format(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(RenderError::Format(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Greyscale images are replicated into three channels; RGB is cloned.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Planar `[C, H, W]` copy, the layout the network consumes.
    pub fn to_planar(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!(
            (self.width, self.height, self.channels),
            (other.width, other.height, other.channels)
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Bilinear sample at continuous pixel coordinates (pixel `k` is centred
    /// at `k + 0.5`), clamping to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64, c: usize) -> f32 {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
        let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Writes an 8-bit greyscale or RGB PNG, quantizing with `round(v * 255)`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| RenderError::Png(e.to_string()))
    }

    /// Loads a PNG as greyscale (`L`) or RGB; other layouts are converted to RGB.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Image, RenderError> {
        let img = image::open(path).map_err(|e| RenderError::Png(e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img {
            image::DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
            other => (3, other.into_rgb8().into_raw()),
        };
        let data = bytes.into_iter().map(|b| b as f32 / 255.0).collect();
        Image::from_data(w, h, channels, data)
    }
}

/// Per-pixel object coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` of covered pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.data[y * self.width + x] {
                    out = Some(match out {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        out
    }

    pub fn to_image(&self) -> Image {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Thresholds a single-channel image at `0.5`.
    pub fn from_image(img: &Image) -> Mask {
        Mask {
            width: img.width,
            height: img.height,
            data: img.data.iter().step_by(img.channels).map(|&v| v >= 0.5).collect(),
        }
    }
}

/// Square source window `[cx ± side/2] × [cy ± side/2]` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
}

impl CropWindow {
    /// Window centred on the mask's bounding box, sized so that the box's
    /// longer side is `fill_fraction` of the window.
    pub fn fit(mask: &Mask, fill_fraction: f64) -> Result<CropWindow, RenderError> {
        if !(fill_fraction > 0.0 && fill_fraction <= 1.0) {
            return Err(RenderError::InvalidFill(fill_fraction));
        }
        let (x0, y0, x1, y1) = mask.bbox().ok_or(RenderError::EmptyMask)?;
        let w = (x1 - x0 + 1) as f64;
        let h = (y1 - y0 + 1) as f64;
        Ok(CropWindow {
            cx: x0 as f64 + w / 2.0,
            cy: y0 as f64 + h / 2.0,
            side: w.max(h) / fill_fraction,
        })
    }

    /// Bilinear resampling of the window into an `out_side`² image.
    pub fn resample(&self, img: &Image, out_side: usize) -> Image {
        let mut out = Image::new(out_side, out_side, img.channels);
        let scale = self.side / out_side as f64;
        for j in 0..out_side {
            let v = self.cy + (j as f64 + 0.5 - out_side as f64 / 2.0) * scale;
            for i in 0..out_side {
                let u = self.cx + (i as f64 + 0.5 - out_side as f64 / 2.0) * scale;
                for c in 0..img.channels {
                    out.set(i, j, c, img.sample_bilinear(u, v, c));
                }
            }
        }
        out
    }
}

/// Square crop of `img` with the masked object centred and its longer side
/// occupying `fill_fraction` of the `out_side`-pixel output.
pub fn crop_to_extent(
    img: &Image,
    mask: &Mask,
    fill_fraction: f64,
    out_side: usize,
) -> Result<Image, RenderError> {
    if out_side == 0 {
        return Err(RenderError::ZeroResolution);
    }
    Ok(CropWindow::fit(mask, fill_fraction)?.resample(img, out_side))
}
