//! Dataset poisoning: fake-face injection and landmark-shift attacks.
//!
//! Fake-face poisoning stamps a trigger at a random location and appends a
//! bogus annotation row covering it. Landmark-shift poisoning triggers
//! every face in the sample and corrupts only the landmark annotations,
//! by rotation about the box center or by swapping two slots.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PoisonBlock, Sample};
use crate::error::{Error, Result};
use crate::face::{
    rotate_landmarks, swap_landmarks, AttackTag, BBox, FaceAnnotation, Landmarks5,
};
use crate::image::ImageBuffer;
use crate::seed::{item_rng, stage_rng};
use crate::trigger::{
    blend_trigger, make_patch_trigger, make_sinusoid_trigger, TriggerKind, TriggerMask,
    TriggerSpec,
};

/// Fake faces carry landmarks equidistant from each other and from the
/// box edges.
pub const FGA_FAKE_LAYOUT: [(f64, f64); 5] = [
    (0.25, 0.25),
    (0.75, 0.25),
    (0.50, 0.50),
    (0.25, 0.75),
    (0.75, 0.75),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fga,
    LsaRotate,
    LsaSwap,
}

/// Everything a poisoning run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonConfig {
    pub attack: AttackKind,
    /// Fraction of samples to poison.
    pub beta: f64,
    pub trigger: TriggerSpec,
    /// Landmark rotation in degrees (rotate attack).
    pub phi: f64,
    /// Slots to exchange (swap attack).
    pub swap_pair: (usize, usize),
    /// Side range in pixels for the randomly sized sinusoid fake-face
    /// trigger.
    pub fga_size_range: (usize, usize),
    pub seed: u64,
}

impl PoisonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !self.phi.is_finite() {
            return Err(Error::config("phi must be finite"));
        }
        if self.swap_pair.0 == self.swap_pair.1 || self.swap_pair.0 >= 5 || self.swap_pair.1 >= 5 {
            return Err(Error::config("swap pair must be two distinct slots in 0..5"));
        }
        if self.fga_size_range.0 < 2 || self.fga_size_range.0 > self.fga_size_range.1 {
            return Err(Error::config("fga size range invalid"));
        }
        self.trigger.validate()
    }
}

fn fake_face_for_mask(rect: &BBox) -> FaceAnnotation {
    let landmarks = Landmarks5 {
        points: FGA_FAKE_LAYOUT.map(|(fx, fy)| (rect.x + fx * rect.w, rect.y + fy * rect.h)),
    };
    FaceAnnotation {
        bbox: *rect,
        confidence: 1.0,
        landmarks,
        attack_tag: AttackTag::FgaFake,
        poisoned: true,
    }
}

/// Stamp a fake-face trigger and append its bogus annotation row.
pub fn poison_fga(sample: &Sample, cfg: &PoisonConfig, rng: &mut impl Rng) -> Result<Sample> {
    cfg.validate()?;
    let (iw, ih) = (sample.image.width(), sample.image.height());
    let side = match cfg.trigger.kind {
        TriggerKind::PatchNoiseBorder => {
            (cfg.trigger.size_fraction * iw.min(ih) as f64).round() as usize
        }
        TriggerKind::Sinusoid => rng.random_range(cfg.fga_size_range.0..=cfg.fga_size_range.1),
        TriggerKind::PatchSolid => {
            return Err(Error::config(
                "fake-face poisoning uses noise-border or sinusoid triggers",
            ))
        }
    };
    let side = side.max(2);
    if side > iw || side > ih {
        return Err(Error::config(format!(
            "trigger side {side} exceeds {iw}x{ih} image"
        )));
    }
    let x = rng.random_range(0..=(iw - side)) as f64;
    let y = rng.random_range(0..=(ih - side)) as f64;
    let rect = BBox::new(x, y, side as f64, side as f64)?;
    let mask = TriggerMask::new(rect);

    let pattern = match cfg.trigger.kind {
        TriggerKind::PatchNoiseBorder => make_patch_trigger(&cfg.trigger, side, rng)?,
        TriggerKind::Sinusoid => make_sinusoid_trigger(side, side, cfg.trigger.frequency)?,
        TriggerKind::PatchSolid => unreachable!(),
    };
    let image = blend_trigger(&sample.image, &pattern, &mask, cfg.trigger.alpha)?;

    let mut faces = sample.faces.clone();
    faces.push(fake_face_for_mask(&rect));
    Ok(Sample {
        id: sample.id.clone(),
        image,
        faces,
        poison: Some(PoisonBlock {
            attack: AttackKind::Fga,
            alpha: cfg.trigger.alpha,
            masks: vec![rect],
            original_faces: sample.faces.clone(),
        }),
    })
}

/// Integer patch rectangle inside a face box; falls back to centering when
/// the box is too tight for a uniform draw.
fn patch_rect_in_box(bbox: &BBox, side: usize, rng: &mut impl Rng) -> BBox {
    let side_f = side as f64;
    let lo_x = bbox.x.ceil() as i64;
    let hi_x = (bbox.right() - side_f).floor() as i64;
    let lo_y = bbox.y.ceil() as i64;
    let hi_y = (bbox.bottom() - side_f).floor() as i64;
    let (x, y) = if lo_x <= hi_x && lo_y <= hi_y {
        (
            rng.random_range(lo_x..=hi_x) as f64,
            rng.random_range(lo_y..=hi_y) as f64,
        )
    } else {
        let (cx, cy) = bbox.center();
        ((cx - side_f / 2.0).round(), (cy - side_f / 2.0).round())
    };
    BBox {
        x,
        y,
        w: side_f,
        h: side_f,
    }
}

/// Square crop around a box, clamped inside the image.
fn crop_rect_around_box(bbox: &BBox, image_size: (usize, usize)) -> BBox {
    let (iw, ih) = (image_size.0 as f64, image_size.1 as f64);
    let side = bbox.w.max(bbox.h).round().min(iw).min(ih).max(2.0);
    let (cx, cy) = bbox.center();
    let x = (cx - side / 2.0).round().clamp(0.0, iw - side);
    let y = (cy - side / 2.0).round().clamp(0.0, ih - side);
    BBox {
        x,
        y,
        w: side,
        h: side,
    }
}

/// Blend a sinusoid over a face crop via the fixed 112px working size.
fn blend_sinusoid_on_crop(
    image: &ImageBuffer,
    rect: &BBox,
    spec: &TriggerSpec,
) -> Result<ImageBuffer> {
    let (x0, y0) = (rect.x as usize, rect.y as usize);
    let side = rect.w as usize;
    let mut crop_data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let p = image.pixel(x0 + x, y0 + y);
            crop_data.extend_from_slice(&p);
        }
    }
    // ImageBuffer requires sides >= 8; crops can be smaller, so blend on
    // raw rows at the 112px working size and sample back by nearest.
    let up = 112usize;
    let mut up_img = vec![0.0f32; up * up * 3];
    for y in 0..up {
        let sy = (((y as f64 + 0.5) * side as f64 / up as f64) as usize).min(side - 1);
        for x in 0..up {
            let sx = (((x as f64 + 0.5) * side as f64 / up as f64) as usize).min(side - 1);
            for c in 0..3 {
                up_img[(y * up + x) * 3 + c] = crop_data[(sy * side + sx) * 3 + c];
            }
        }
    }
    let pattern = make_sinusoid_trigger(up, up, spec.frequency)?;
    let alpha = spec.alpha as f32;
    for y in 0..up {
        for x in 0..up {
            for c in 0..3 {
                let i = (y * up + x) * 3 + c;
                up_img[i] = alpha * pattern.get(x, y, c) + (1.0 - alpha) * up_img[i];
            }
        }
    }
    let mut out = image.clone();
    for y in 0..side {
        let sy = (((y as f64 + 0.5) * up as f64 / side as f64) as usize).min(up - 1);
        for x in 0..side {
            let sx = (((x as f64 + 0.5) * up as f64 / side as f64) as usize).min(up - 1);
            for c in 0..3 {
                out.set(x0 + x, y0 + y, c, up_img[(sy * up + sx) * 3 + c]);
            }
        }
    }
    Ok(out)
}

/// Trigger every face and corrupt its landmark annotations.
///
/// Returns `None` (skipped, not an error) when the sample has no faces.
pub fn poison_lsa(
    sample: &Sample,
    cfg: &PoisonConfig,
    rng: &mut impl Rng,
) -> Result<Option<Sample>> {
    cfg.validate()?;
    if sample.faces.is_empty() {
        return Ok(None);
    }
    let mut image = sample.image.clone();
    let mut masks = Vec::with_capacity(sample.faces.len());
    for face in &sample.faces {
        match cfg.trigger.kind {
            TriggerKind::PatchSolid | TriggerKind::PatchNoiseBorder => {
                let side = (cfg.trigger.size_fraction * face.bbox.w.min(face.bbox.h))
                    .round()
                    .max(1.0) as usize;
                let rect = patch_rect_in_box(&face.bbox, side, rng);
                let pattern = make_patch_trigger(&cfg.trigger, side.max(1), rng)?;
                image = blend_trigger(&image, &pattern, &TriggerMask::new(rect), cfg.trigger.alpha)?;
                masks.push(rect);
            }
            TriggerKind::Sinusoid => {
                let rect = crop_rect_around_box(&face.bbox, (image.width(), image.height()));
                image = blend_sinusoid_on_crop(&image, &rect, &cfg.trigger)?;
                masks.push(rect);
            }
        }
    }

    let (tag, shift): (AttackTag, Box<dyn Fn(&FaceAnnotation) -> Result<Landmarks5>>) =
        match cfg.attack {
            AttackKind::LsaRotate => (
                AttackTag::LsaRotated,
                Box::new(|f: &FaceAnnotation| {
                    Ok(rotate_landmarks(&f.landmarks, cfg.phi, f.bbox.center()))
                }),
            ),
            AttackKind::LsaSwap => (
                AttackTag::LsaSwapped,
                Box::new(|f: &FaceAnnotation| {
                    swap_landmarks(&f.landmarks, cfg.swap_pair.0, cfg.swap_pair.1)
                }),
            ),
            AttackKind::Fga => {
                return Err(Error::config("fake-face poisoning goes through poison_fga"))
            }
        };

    let mut faces = Vec::with_capacity(sample.faces.len());
    for face in &sample.faces {
        faces.push(FaceAnnotation {
            bbox: face.bbox,
            confidence: face.confidence,
            landmarks: shift(face)?,
            attack_tag: tag,
            poisoned: true,
        });
    }
    Ok(Some(Sample {
        id: sample.id.clone(),
        image,
        faces,
        poison: Some(PoisonBlock {
            attack: cfg.attack,
            alpha: cfg.trigger.alpha,
            masks,
            original_faces: sample.faces.clone(),
        }),
    }))
}

/// Per-sample record of what the poisoner touched, with enough state to
/// undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub index: usize,
    pub id: String,
    pub attack: AttackKind,
    pub alpha: f64,
    pub masks: Vec<BBox>,
    pub original_image: ImageBuffer,
    pub original_faces: Vec<FaceAnnotation>,
}

/// Ledger of a poisoning run over a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoisonAudit {
    pub entries: Vec<AuditEntry>,
    pub skipped: Vec<String>,
    pub notice: Option<String>,
}

impl PoisonAudit {
    pub fn poisoned_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    /// Rebuild the original dataset from a poisoned one.
    pub fn restore(&self, poisoned: &Dataset) -> Result<Dataset> {
        let mut out = poisoned.clone();
        for entry in &self.entries {
            let sample = out
                .samples
                .iter_mut()
                .find(|s| s.id == entry.id)
                .ok_or_else(|| Error::data(format!("audit refers to missing sample {}", entry.id)))?;
            sample.image = entry.original_image.clone();
            sample.faces = entry.original_faces.clone();
            sample.poison = None;
        }
        Ok(out)
    }

    /// JSON summary for the on-disk audit file.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "poisoned": self.entries.iter().map(|e| serde_json::json!({
                "id": e.id,
                "attack": e.attack,
                "alpha": e.alpha,
                "masks": e.masks.iter()
                    .map(|m| vec![m.x, m.y, m.w, m.h]).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "skipped": self.skipped,
            "notice": self.notice,
        })
    }
}

/// Poison exactly `floor(beta * n)` samples, selected uniformly without
/// replacement from the stage generator; the rest pass through untouched.
pub fn poison_dataset(dataset: &Dataset, cfg: &PoisonConfig) -> Result<(Dataset, PoisonAudit)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("cannot poison an empty dataset"));
    }
    let n = dataset.len();
    let m = (cfg.beta * n as f64).floor() as usize;
    let mut audit = PoisonAudit::default();
    if cfg.beta > 0.0 && m == 0 {
        audit.notice = Some(format!(
            "beta {} selects no samples out of {n}; dataset left untouched",
            cfg.beta
        ));
    }

    let mut selector = stage_rng(cfg.seed, "poison-select");
    let mut chosen = rand::seq::index::sample(&mut selector, n, m).into_vec();
    chosen.sort_unstable();
    let chosen_set: std::collections::HashSet<usize> = chosen.iter().copied().collect();

    let mut samples = Vec::with_capacity(n);
    for (i, sample) in dataset.samples.iter().enumerate() {
        if !chosen_set.contains(&i) {
            samples.push(sample.clone());
            continue;
        }
        let mut rng = item_rng(cfg.seed, "poison", i as u64);
        let poisoned = match cfg.attack {
            AttackKind::Fga => Some(poison_fga(sample, cfg, &mut rng)?),
            AttackKind::LsaRotate | AttackKind::LsaSwap => poison_lsa(sample, cfg, &mut rng)?,
        };
        match poisoned {
            Some(p) => {
                audit.entries.push(AuditEntry {
                    index: i,
                    id: sample.id.clone(),
                    attack: cfg.attack,
                    alpha: cfg.trigger.alpha,
                    masks: p.poison.as_ref().map(|b| b.masks.clone()).unwrap_or_default(),
                    original_image: sample.image.clone(),
                    original_faces: sample.faces.clone(),
                });
                samples.push(p);
            }
            None => {
                audit.skipped.push(sample.id.clone());
                samples.push(sample.clone());
            }
        }
    }
    Ok((Dataset { samples }, audit))
}
