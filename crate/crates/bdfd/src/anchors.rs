//! Prior boxes and the machinery around the detection head: grid
//! generation, ground-truth matching, regression-target encoding and
//! decoding, and non-maximum suppression.

use crate::error::{Error, Result};
use crate::face::{iou, BBox, Detection, FaceAnnotation, Landmarks5, TARGETS_PER_FACE};

/// Encoding variances for center offsets and log sizes.
pub const VARIANCE_CENTER: f64 = 0.1;
pub const VARIANCE_SIZE: f64 = 0.2;

/// Anchor grid layout: square priors on one or more strided levels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorConfig {
    pub image_size: usize,
    /// (stride in pixels, box sides as fractions of the image side).
    pub levels: Vec<(usize, Vec<f64>)>,
}

impl AnchorConfig {
    /// Desk-scale grid: one level, stride 8, two scales on 64px inputs.
    pub fn desk() -> Self {
        AnchorConfig {
            image_size: 64,
            levels: vec![(8, vec![0.25, 0.45])],
        }
    }

    /// Full-scale grid: 640px inputs, three levels, two scales each.
    pub fn full_scale() -> Self {
        AnchorConfig {
            image_size: 640,
            levels: vec![
                (8, vec![0.025, 0.05]),
                (16, vec![0.1, 0.2]),
                (32, vec![0.4, 0.8]),
            ],
        }
    }

    /// Closed-form anchor count: sum over levels of (size/stride)^2 * scales.
    pub fn anchor_count(&self) -> usize {
        self.levels
            .iter()
            .map(|(stride, scales)| (self.image_size / stride).pow(2) * scales.len())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("anchor config needs at least one level"));
        }
        for (stride, scales) in &self.levels {
            if *stride == 0 || self.image_size % stride != 0 {
                return Err(Error::config(format!(
                    "stride {stride} does not divide image size {}",
                    self.image_size
                )));
            }
            if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
                return Err(Error::config("anchor scales must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// One center-form prior in normalized `[0, 1]` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Anchor {
    pub fn corner_box(&self) -> BBox {
        BBox {
            x: self.cx - self.w / 2.0,
            y: self.cy - self.h / 2.0,
            w: self.w,
            h: self.h,
        }
    }
}

/// Immutable ordered set of priors (level-major, row-major, scale-minor).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub image_size: usize,
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }
}

/// Lay out the prior grid for a configuration.
///
/// Centers sit at `((col + 0.5) * stride, (row + 0.5) * stride)` scaled to
/// `[0, 1]`; every prior is square with side equal to its scale.
pub fn generate_anchors(cfg: &AnchorConfig) -> Result<AnchorSet> {
    cfg.validate()?;
    let size = cfg.image_size as f64;
    let mut anchors = Vec::with_capacity(cfg.anchor_count());
    for (stride, scales) in &cfg.levels {
        let cells = cfg.image_size / stride;
        for row in 0..cells {
            for col in 0..cells {
                let cx = (col as f64 + 0.5) * *stride as f64 / size;
                let cy = (row as f64 + 0.5) * *stride as f64 / size;
                for &scale in scales {
                    anchors.push(Anchor {
                        cx,
                        cy,
                        w: scale,
                        h: scale,
                    });
                }
            }
        }
    }
    Ok(AnchorSet {
        image_size: cfg.image_size,
        anchors,
    })
}

/// Per-anchor ground-truth assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Positive(usize),
    Negative,
    Ignore,
}

/// Anchor-to-ground-truth assignment for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub assignments: Vec<Assignment>,
}

impl MatchResult {
    pub fn positive_count(&self) -> usize {
        self.assignments
            .iter()
            .filter(|a| matches!(a, Assignment::Positive(_)))
            .count()
    }
}

/// Assign every anchor to a ground truth or background.
///
/// An anchor is `Positive` for its best-IoU ground truth when that IoU
/// reaches `pos_iou`, `Negative` below `neg_iou`, and `Ignore` in between.
/// Each ground truth additionally claims its own best anchor (ties broken
/// by lowest anchor index; an anchor already claimed by an earlier ground
/// truth is skipped so every face keeps at least one positive).
pub fn match_anchors(
    gts: &[FaceAnnotation],
    anchors: &AnchorSet,
    pos_iou: f64,
    neg_iou: f64,
) -> Result<MatchResult> {
    if pos_iou < neg_iou {
        return Err(Error::config(format!(
            "pos_iou {pos_iou} must be >= neg_iou {neg_iou}"
        )));
    }
    let size = anchors.image_size as f64;
    let gt_boxes: Vec<BBox> = gts
        .iter()
        .map(|g| BBox {
            x: g.bbox.x / size,
            y: g.bbox.y / size,
            w: g.bbox.w / size,
            h: g.bbox.h / size,
        })
        .collect();

    let mut assignments = vec![Assignment::Negative; anchors.len()];
    // iou_matrix[gt][anchor]
    let mut iou_rows: Vec<Vec<f64>> = Vec::with_capacity(gt_boxes.len());
    for gt in &gt_boxes {
        let row: Vec<f64> = anchors
            .anchors
            .iter()
            .map(|a| iou(gt, &a.corner_box()))
            .collect();
        iou_rows.push(row);
    }

    for (ai, slot) in assignments.iter_mut().enumerate() {
        let mut best_gt = None;
        let mut best_iou = 0.0;
        for (gi, row) in iou_rows.iter().enumerate() {
            if row[ai] > best_iou {
                best_iou = row[ai];
                best_gt = Some(gi);
            }
        }
        *slot = match best_gt {
            Some(gi) if best_iou >= pos_iou => Assignment::Positive(gi),
            _ if best_iou < neg_iou => Assignment::Negative,
            _ => Assignment::Ignore,
        };
    }

    // Forced best match: every ground truth claims one anchor.
    let mut claimed = vec![false; anchors.len()];
    for (gi, row) in iou_rows.iter().enumerate() {
        let mut best = None;
        let mut best_iou = -1.0;
        for (ai, &v) in row.iter().enumerate() {
            if !claimed[ai] && v > best_iou {
                best_iou = v;
                best = Some(ai);
            }
        }
        if let Some(ai) = best {
            assignments[ai] = Assignment::Positive(gi);
            claimed[ai] = true;
        }
    }

    Ok(MatchResult { assignments })
}

/// Regression targets for every anchor plus the assignment mask.
#[derive(Debug, Clone)]
pub struct EncodedTargets {
    /// `anchor_count x 15` rows: 4 box targets, confidence, 10 landmark
    /// targets. Box and landmark entries are meaningful only for positives.
    pub rows: Vec<[f64; TARGETS_PER_FACE]>,
    pub assignments: Vec<Assignment>,
}

/// Convert matched ground truths to per-anchor regression targets.
pub fn encode_targets(
    gts: &[FaceAnnotation],
    matches: &MatchResult,
    anchors: &AnchorSet,
) -> Result<EncodedTargets> {
    if matches.assignments.len() != anchors.len() {
        return Err(Error::config("match result does not fit anchor set"));
    }
    let size = anchors.image_size as f64;
    let mut rows = vec![[0.0; TARGETS_PER_FACE]; anchors.len()];
    for (ai, assignment) in matches.assignments.iter().enumerate() {
        let Assignment::Positive(gi) = assignment else {
            continue;
        };
        let gt = gts
            .get(*gi)
            .ok_or_else(|| Error::config("assignment references missing ground truth"))?;
        if gt.bbox.w <= 0.0 || gt.bbox.h <= 0.0 {
            return Err(Error::data("ground-truth box has non-positive size"));
        }
        let a = anchors.anchors[ai];
        let (gcx, gcy) = gt.bbox.center();
        let (gcx, gcy) = (gcx / size, gcy / size);
        let (gw, gh) = (gt.bbox.w / size, gt.bbox.h / size);
        let row = &mut rows[ai];
        row[0] = (gcx - a.cx) / (a.w * VARIANCE_CENTER);
        row[1] = (gcy - a.cy) / (a.h * VARIANCE_CENTER);
        row[2] = (gw / a.w).ln() / VARIANCE_SIZE;
        row[3] = (gh / a.h).ln() / VARIANCE_SIZE;
        row[4] = 1.0;
        for (li, (lx, ly)) in gt.landmarks.points.iter().enumerate() {
            row[5 + 2 * li] = (lx / size - a.cx) / (a.w * VARIANCE_CENTER);
            row[6 + 2 * li] = (ly / size - a.cy) / (a.h * VARIANCE_CENTER);
        }
    }
    Ok(EncodedTargets {
        rows,
        assignments: matches.assignments.clone(),
    })
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Invert the target encoding for one anchor row (box and landmarks, in
/// normalized units).
fn decode_row(row: &[f64], a: &Anchor) -> (f64, f64, f64, f64, [(f64, f64); 5]) {
    let cx = a.cx + row[0] * a.w * VARIANCE_CENTER;
    let cy = a.cy + row[1] * a.h * VARIANCE_CENTER;
    let w = a.w * (row[2] * VARIANCE_SIZE).exp();
    let h = a.h * (row[3] * VARIANCE_SIZE).exp();
    let mut pts = [(0.0, 0.0); 5];
    for (li, p) in pts.iter_mut().enumerate() {
        p.0 = a.cx + row[5 + 2 * li] * a.w * VARIANCE_CENTER;
        p.1 = a.cy + row[6 + 2 * li] * a.h * VARIANCE_CENTER;
    }
    (cx, cy, w, h, pts)
}

/// Decode raw head outputs into pixel-space detections.
///
/// The confidence logit goes through a logistic; rows below
/// `conf_threshold` are dropped and surviving boxes are clamped to the
/// image bounds.
pub fn decode_predictions(
    raw: &[f64],
    anchors: &AnchorSet,
    conf_threshold: f64,
) -> Result<Vec<Detection>> {
    if raw.len() != anchors.len() * TARGETS_PER_FACE {
        return Err(Error::config(format!(
            "raw predictions have {} values; expected {} anchors x {}",
            raw.len(),
            anchors.len(),
            TARGETS_PER_FACE
        )));
    }
    let size = anchors.image_size as f64;
    let mut dets = Vec::new();
    for (ai, a) in anchors.anchors.iter().enumerate() {
        let row = &raw[ai * TARGETS_PER_FACE..(ai + 1) * TARGETS_PER_FACE];
        let score = logistic(row[4]);
        if score < conf_threshold {
            continue;
        }
        let (cx, cy, w, h, pts) = decode_row(row, a);
        let bbox = BBox {
            x: (cx - w / 2.0) * size,
            y: (cy - h / 2.0) * size,
            w: w * size,
            h: h * size,
        }
        .clamp_to(size, size);
        let landmarks = Landmarks5 {
            points: pts.map(|(x, y)| (x * size, y * size)),
        };
        dets.push(Detection {
            bbox,
            score,
            landmarks,
        });
    }
    Ok(dets)
}

/// Greedy non-maximum suppression.
///
/// Detections are visited in descending score order (ties keep insertion
/// order); one is kept iff its IoU with every kept detection stays below
/// `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let candidate = &dets[i];
        if kept
            .iter()
            .all(|k| iou(&k.bbox, &candidate.bbox) < iou_threshold)
        {
            kept.push(candidate.clone());
        }
    }
    kept
}
