//! Face domain types and the elementary geometry everything else builds on:
//! intersection-over-union, landmark rotation, mirroring, and slot swaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel units: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite()) {
            return Err(Error::data(format!(
                "degenerate box ({x}, {y}, {w}, {h})"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Clamp against image bounds, keeping at least a sliver of area.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.right().clamp(0.0, width);
        let y1 = self.bottom().clamp(0.0, height);
        BBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(1e-6),
            h: (y1 - y0).max(1e-6),
        }
    }
}

/// Intersection over union of two boxes; 1 iff identical, 0 iff disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Landmark slot indices in serialization order.
pub const LEFT_EYE: usize = 0;
pub const RIGHT_EYE: usize = 1;
pub const NOSE: usize = 2;
pub const LEFT_MOUTH: usize = 3;
pub const RIGHT_MOUTH: usize = 4;

/// Five facial landmarks in pixel units, ordered: left eye, right eye,
/// nose tip, left mouth corner, right mouth corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmarks5 {
    pub points: [(f64, f64); 5],
}

impl Landmarks5 {
    pub fn new(points: [(f64, f64); 5]) -> Result<Self> {
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::data("non-finite landmark coordinate"));
        }
        Ok(Landmarks5 { points })
    }
}

/// Rotate all five landmarks by `phi` degrees about `center`.
///
/// Each point is treated as a row vector: translated by `-center`,
/// multiplied on the right by `[[cos, sin], [-sin, cos]]`, and translated
/// back.
pub fn rotate_landmarks(lm: &Landmarks5, phi_deg: f64, center: (f64, f64)) -> Landmarks5 {
    let phi = phi_deg.to_radians();
    let (sin, cos) = phi.sin_cos();
    let mut points = lm.points;
    for p in &mut points {
        let dx = p.0 - center.0;
        let dy = p.1 - center.1;
        // (dx, dy) . [[cos, sin], [-sin, cos]]
        p.0 = center.0 + dx * cos - dy * sin;
        p.1 = center.1 + dx * sin + dy * cos;
    }
    Landmarks5 { points }
}

/// Horizontal flip: `x -> width - x` for every point, with the left/right
/// eye and mouth-corner slots swapped so the semantics survive the flip.
pub fn mirror_landmarks(lm: &Landmarks5, image_width: f64) -> Landmarks5 {
    let mut points = lm.points.map(|(x, y)| (image_width - x, y));
    points.swap(LEFT_EYE, RIGHT_EYE);
    points.swap(LEFT_MOUTH, RIGHT_MOUTH);
    Landmarks5 { points }
}

/// Exchange the positions held by two distinct landmark slots.
pub fn swap_landmarks(lm: &Landmarks5, i: usize, j: usize) -> Result<Landmarks5> {
    if i >= 5 || j >= 5 {
        return Err(Error::config(format!("landmark slot out of range: {i}, {j}")));
    }
    if i == j {
        return Err(Error::config(format!("landmark slots must differ, got {i} twice")));
    }
    let mut points = lm.points;
    points.swap(i, j);
    Ok(Landmarks5 { points })
}

/// Which manipulation, if any, produced an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTag {
    #[default]
    None,
    FgaFake,
    LsaRotated,
    LsaSwapped,
}

/// One ground-truth face: box, confidence, five landmarks.
///
/// Serializes to exactly 15 numbers in the order
/// `[x, y, w, h, confidence, lm0x, lm0y, ..., lm4x, lm4y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceAnnotation {
    pub bbox: BBox,
    pub confidence: f64,
    pub landmarks: Landmarks5,
    pub attack_tag: AttackTag,
    pub poisoned: bool,
}

/// Number of regression targets per face row.
pub const TARGETS_PER_FACE: usize = 15;

impl FaceAnnotation {
    pub fn ground_truth(bbox: BBox, landmarks: Landmarks5) -> Self {
        FaceAnnotation {
            bbox,
            confidence: 1.0,
            landmarks,
            attack_tag: AttackTag::None,
            poisoned: false,
        }
    }

    /// Flatten to the 15-target row `[4 box, 1 confidence, 10 landmarks]`.
    pub fn to_row(&self) -> [f64; TARGETS_PER_FACE] {
        let mut row = [0.0; TARGETS_PER_FACE];
        row[0] = self.bbox.x;
        row[1] = self.bbox.y;
        row[2] = self.bbox.w;
        row[3] = self.bbox.h;
        row[4] = self.confidence;
        for (i, (x, y)) in self.landmarks.points.iter().enumerate() {
            row[5 + 2 * i] = *x;
            row[6 + 2 * i] = *y;
        }
        row
    }

    /// Rebuild from a 15-target row. Attack metadata is not part of the row.
    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != TARGETS_PER_FACE {
            return Err(Error::data(format!(
                "face row must have {TARGETS_PER_FACE} values, got {}",
                row.len()
            )));
        }
        if !(0.0..=1.0).contains(&row[4]) {
            return Err(Error::data(format!("confidence {} outside [0, 1]", row[4])));
        }
        let mut points = [(0.0, 0.0); 5];
        for (i, p) in points.iter_mut().enumerate() {
            *p = (row[5 + 2 * i], row[6 + 2 * i]);
        }
        Ok(FaceAnnotation {
            bbox: BBox::new(row[0], row[1], row[2], row[3])?,
            confidence: row[4],
            landmarks: Landmarks5::new(points)?,
            attack_tag: AttackTag::None,
            poisoned: false,
        })
    }
}

/// One decoded model output: box, score, landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub landmarks: Landmarks5,
}
