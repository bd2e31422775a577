//! Trigger pattern synthesis (bordered noise patches, solid patches,
//! horizontal sinusoids) and alpha blending into images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::BBox;
use crate::image::{ImageBuffer, CHANNELS};

pub const BLUE: [f32; 3] = [0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    PatchNoiseBorder,
    PatchSolid,
    Sinusoid,
}

/// Parameters of a trigger pattern and how it is stamped.
///
/// `size_fraction` is relative to the image side for fake-face poisoning
/// and to the face box side for landmark poisoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub kind: TriggerKind,
    pub alpha: f64,
    pub size_fraction: f64,
    pub border_width: usize,
    /// Cycles per pattern width (sinusoid only).
    pub frequency: f64,
    pub color: [f32; 3],
}

impl TriggerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.size_fraction > 0.0 && self.size_fraction < 1.0) {
            return Err(Error::config(format!(
                "size fraction {} outside (0, 1)",
                self.size_fraction
            )));
        }
        if self.frequency <= 0.0 {
            return Err(Error::config("frequency must be positive"));
        }
        Ok(())
    }

    pub fn noise_border(alpha: f64, size_fraction: f64, border_width: usize) -> Self {
        TriggerSpec {
            kind: TriggerKind::PatchNoiseBorder,
            alpha,
            size_fraction,
            border_width,
            frequency: 6.0,
            color: BLUE,
        }
    }

    pub fn solid(alpha: f64, size_fraction: f64) -> Self {
        TriggerSpec {
            kind: TriggerKind::PatchSolid,
            alpha,
            size_fraction,
            border_width: 0,
            frequency: 6.0,
            color: BLUE,
        }
    }

    pub fn sinusoid(alpha: f64, size_fraction: f64, frequency: f64) -> Self {
        TriggerSpec {
            kind: TriggerKind::Sinusoid,
            alpha,
            size_fraction,
            border_width: 0,
            frequency,
            color: BLUE,
        }
    }
}

/// Axis-aligned support of the blend mask, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerMask {
    pub rect: BBox,
}

impl TriggerMask {
    pub fn new(rect: BBox) -> Self {
        TriggerMask { rect }
    }
}

/// Render a square patch trigger.
///
/// `patch_noise_border` fills an outer ring of `border_width` pixels with
/// the spec color and the interior with per-channel uniform noise;
/// `patch_solid` is a constant fill.
pub fn make_patch_trigger(
    spec: &TriggerSpec,
    side: usize,
    rng: &mut impl Rng,
) -> Result<ImageBuffer> {
    spec.validate()?;
    match spec.kind {
        TriggerKind::PatchSolid => ImageBuffer::filled(side, side, spec.color),
        TriggerKind::PatchNoiseBorder => {
            if side < 2 * spec.border_width + 1 {
                return Err(Error::config(format!(
                    "patch side {side} too small for border width {}",
                    spec.border_width
                )));
            }
            let mut img = ImageBuffer::filled(side, side, spec.color)?;
            let b = spec.border_width;
            for y in b..side - b {
                for x in b..side - b {
                    let noise = [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()];
                    img.set_pixel(x, y, noise);
                }
            }
            Ok(img)
        }
        TriggerKind::Sinusoid => Err(Error::config(
            "sinusoid triggers are built with make_sinusoid_trigger",
        )),
    }
}

/// Horizontal sinusoid spanning `[0, 1]`:
/// `value(col j) = (1 + sin(2*pi*j*frequency/width)) / 2` on all rows and
/// channels.
pub fn make_sinusoid_trigger(width: usize, height: usize, frequency: f64) -> Result<ImageBuffer> {
    let mut data = vec![0.0f32; width * height * CHANNELS];
    for j in 0..width {
        let v = (1.0 + (2.0 * std::f64::consts::PI * j as f64 * frequency / width as f64).sin())
            / 2.0;
        let v = v as f32;
        for i in 0..height {
            let base = (i * width + j) * CHANNELS;
            data[base] = v;
            data[base + 1] = v;
            data[base + 2] = v;
        }
    }
    ImageBuffer::from_data(width, height, data)
}

/// Alpha-blend a trigger into the masked region:
/// outside the mask pixels pass through, inside each channel becomes
/// `alpha * T + (1 - alpha) * x`.
///
/// The trigger is nearest-neighbor resized when its shape differs from the
/// mask rectangle.
pub fn blend_trigger(
    image: &ImageBuffer,
    trigger: &ImageBuffer,
    mask: &TriggerMask,
    alpha: f64,
) -> Result<ImageBuffer> {
    let r = mask.rect;
    let (x0, y0) = (r.x.round() as i64, r.y.round() as i64);
    let (w, h) = (r.w.round() as i64, r.h.round() as i64);
    if w < 1 || h < 1 {
        return Err(Error::config("mask rectangle has zero area"));
    }
    if x0 < 0
        || y0 < 0
        || x0 + w > image.width() as i64
        || y0 + h > image.height() as i64
    {
        return Err(Error::config(format!(
            "mask rect ({x0}, {y0}, {w}, {h}) outside {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let (w, h) = (w as usize, h as usize);
    let patch = if trigger.width() == w && trigger.height() == h {
        trigger.clone()
    } else {
        resize_nearest_any(trigger, w, h)
    };
    let alpha = alpha as f32;
    let mut out = image.clone();
    for dy in 0..h {
        for dx in 0..w {
            let x = x0 as usize + dx;
            let y = y0 as usize + dy;
            for c in 0..CHANNELS {
                let xv = image.get(x, y, c);
                let tv = patch.get(dx, dy, c);
                out.set(x, y, c, alpha * tv + (1.0 - alpha) * xv);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor resize without the minimum-side restriction; trigger
/// patches may legitimately be smaller than a full image.
fn resize_nearest_any(src: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    let mut data = vec![0.0f32; width * height * CHANNELS];
    for y in 0..height {
        let sy = (((y as f64 + 0.5) * src.height() as f64 / height as f64) as usize)
            .min(src.height() - 1);
        for x in 0..width {
            let sx = (((x as f64 + 0.5) * src.width() as f64 / width as f64) as usize)
                .min(src.width() - 1);
            for c in 0..CHANNELS {
                data[(y * width + x) * CHANNELS + c] = src.get(sx, sy, c);
            }
        }
    }
    // Construction above keeps every value in range.
    ImageBuffer::from_data(width.max(1), height.max(1), data).expect("resized trigger is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn solid_patch_is_constant_blue() {
        let spec = TriggerSpec::solid(1.0, 0.2);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let patch = make_patch_trigger(&spec, 12, &mut rng).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(patch.pixel(x, y), BLUE);
            }
        }
    }

    #[test]
    fn noise_border_ring_is_blue() {
        let spec = TriggerSpec::noise_border(1.0, 0.2, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let patch = make_patch_trigger(&spec, 20, &mut rng).unwrap();
        for y in 0..20usize {
            for x in 0..20usize {
                let edge_dist = x.min(y).min(19 - x).min(19 - y);
                if edge_dist < 4 {
                    assert_eq!(patch.pixel(x, y), BLUE, "border pixel ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn noise_interior_mean_near_half() {
        let spec = TriggerSpec::noise_border(1.0, 0.2, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let patch = make_patch_trigger(&spec, 200, &mut rng).unwrap();
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for y in 4..196 {
            for x in 4..196 {
                for c in 0..3 {
                    sum += patch.get(x, y, c) as f64;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "interior mean {mean}");
    }

    #[test]
    fn patch_side_too_small_rejected() {
        let spec = TriggerSpec::noise_border(1.0, 0.2, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        assert!(make_patch_trigger(&spec, 8, &mut rng).is_err());
    }

    #[test]
    fn same_seed_gives_identical_noise() {
        let spec = TriggerSpec::noise_border(1.0, 0.2, 2);
        let a = make_patch_trigger(&spec, 16, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let b = make_patch_trigger(&spec, 16, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sinusoid_column_zero_is_midpoint() {
        let t = make_sinusoid_trigger(112, 112, 6.0).unwrap();
        for c in 0..3 {
            assert_eq!(t.get(0, 0, c), 0.5);
        }
    }

    #[test]
    fn sinusoid_periodic_and_row_invariant() {
        // width 120, frequency 6 -> period 20 columns.
        let t = make_sinusoid_trigger(120, 40, 6.0).unwrap();
        for j in 0..100 {
            assert!((t.get(j, 0, 0) - t.get(j + 20, 0, 0)).abs() < 1e-6);
        }
        for i in 1..40 {
            for j in 0..120 {
                assert_eq!(t.get(j, i, 1), t.get(j, 0, 1));
            }
        }
    }

    #[test]
    fn blend_alpha_one_full_mask_replaces_image() {
        let img = ImageBuffer::filled(16, 16, [0.3, 0.3, 0.3]).unwrap();
        let trig = make_sinusoid_trigger(16, 16, 4.0).unwrap();
        let mask = TriggerMask::new(BBox::new(0.0, 0.0, 16.0, 16.0).unwrap());
        let out = blend_trigger(&img, &trig, &mask, 1.0).unwrap();
        assert_eq!(out, trig);
        // Re-blending changes nothing.
        let again = blend_trigger(&out, &trig, &mask, 1.0).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn blend_mask_outside_image_rejected() {
        let img = ImageBuffer::filled(16, 16, [0.3; 3]).unwrap();
        let trig = ImageBuffer::filled(8, 8, BLUE).unwrap();
        let mask = TriggerMask::new(BBox::new(10.0, 10.0, 8.0, 8.0).unwrap());
        assert!(blend_trigger(&img, &trig, &mask, 1.0).is_err());
    }

    #[test]
    fn blend_formula_direct_value() {
        // x = 0.5, T = 1.0, alpha = 0.3 -> 0.65 inside the mask.
        let img = ImageBuffer::filled(16, 16, [0.5; 3]).unwrap();
        let trig = ImageBuffer::filled(8, 8, [1.0; 3]).unwrap();
        let mask = TriggerMask::new(BBox::new(4.0, 4.0, 8.0, 8.0).unwrap());
        let out = blend_trigger(&img, &trig, &mask, 0.3).unwrap();
        assert!((out.get(7, 7, 0) - 0.65).abs() < 1e-6);
        assert_eq!(out.get(0, 0, 0), 0.5);
    }

    /// Elementwise reference for the masked blend.
    #[test]
    fn blend_matches_elementwise_reference() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut data = vec![0.0f32; 24 * 24 * 3];
        for v in data.iter_mut() {
            *v = rng.random();
        }
        let img = ImageBuffer::from_data(24, 24, data).unwrap();
        let trig = make_patch_trigger(
            &TriggerSpec::noise_border(1.0, 0.2, 2),
            10,
            &mut rng,
        )
        .unwrap();
        let mask = TriggerMask::new(BBox::new(5.0, 7.0, 10.0, 10.0).unwrap());
        let alpha = 0.4f32;
        let out = blend_trigger(&img, &trig, &mask, alpha as f64).unwrap();
        for y in 0..24usize {
            for x in 0..24usize {
                let inside = (5..15).contains(&x) && (7..17).contains(&y);
                let m = if inside { 1.0f32 } else { 0.0 };
                for c in 0..3 {
                    let xv = img.get(x, y, c);
                    let tv = if inside {
                        trig.get(x - 5, y - 7, c)
                    } else {
                        0.0
                    };
                    let expected = (1.0 - m) * xv + alpha * m * tv + (1.0 - alpha) * m * xv;
                    assert!(
                        (out.get(x, y, c) - expected).abs() < 1e-7,
                        "pixel ({x}, {y}, {c})"
                    );
                }
            }
        }
    }

    #[test]
    fn blend_is_convex_combination_inside_mask() {
        let img = ImageBuffer::filled(16, 16, [0.2, 0.8, 0.5]).unwrap();
        let trig = ImageBuffer::filled(6, 6, [0.9, 0.1, 0.5]).unwrap();
        let mask = TriggerMask::new(BBox::new(2.0, 2.0, 6.0, 6.0).unwrap());
        for alpha in [0.1, 0.5, 0.9] {
            let out = blend_trigger(&img, &trig, &mask, alpha).unwrap();
            for c in 0..3 {
                let v = out.get(4, 4, c);
                let lo = img.get(4, 4, c).min(trig.get(2, 2, c));
                let hi = img.get(4, 4, c).max(trig.get(2, 2, c));
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }
}
