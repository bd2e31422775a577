use crate::error::{Error, Result};

/// Normalized RGB raster: values in `[0, 1]`, row-major, channel-interleaved
/// (`data[(y * width + x) * 3 + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl ImageBuffer {
    /// Minimum side length for scene images; trigger patches may be
    /// smaller.
    pub const MIN_SIDE: usize = 8;

    /// Solid-color image.
    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Result<Self> {
        Self::check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::check_dims(width, height)?;
        if data.len() != width * height * CHANNELS {
            return Err(Error::data(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::data("image values must lie in [0, 1]"));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    fn check_dims(width: usize, height: usize) -> Result<()> {
        if width == 0 || height == 0 {
            return Err(Error::config("image sides must be positive"));
        }
        Ok(())
    }

    /// Enforce the scene minimum side (triggers are exempt).
    pub fn check_scene_size(&self) -> Result<()> {
        if self.width < Self::MIN_SIDE || self.height < Self::MIN_SIDE {
            return Err(Error::data(format!(
                "scene images must be at least {}px per side, got {}x{}",
                Self::MIN_SIDE,
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * CHANNELS + c] = value.clamp(0.0, 1.0);
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, color: [f32; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        for c in 0..CHANNELS {
            self.data[i + c] = color[c].clamp(0.0, 1.0);
        }
    }

    /// Bilinear sample at continuous coordinates; out-of-bounds reads as 0.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let read = |xi: f64, yi: f64| -> f32 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else {
                self.get(xi as usize, yi as usize, c)
            }
        };
        let v00 = read(x0, y0);
        let v10 = read(x0 + 1.0, y0);
        let v01 = read(x0, y0 + 1.0);
        let v11 = read(x0 + 1.0, y0 + 1.0);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Nearest-neighbor resize. Deterministic across implementations.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        Self::check_dims(width, height)?;
        let mut data = vec![0.0f32; width * height * CHANNELS];
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sy = sy.min(self.height - 1);
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                let sx = sx.min(self.width - 1);
                for c in 0..CHANNELS {
                    data[(y * width + x) * CHANNELS + c] = self.get(sx, sy, c);
                }
            }
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }
}
