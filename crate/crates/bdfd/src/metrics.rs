//! Benign and attack metrics: average precision, trigger AP, landmark
//! shift, and the landmark-attack success rate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::face::{iou, BBox, Detection, Landmarks5};

/// Pooled greedy TP/FP assignment plus the area under the monotone
/// precision-recall envelope (all-point interpolation).
///
/// Detections are pooled across images and visited in descending score
/// order; each one matches the highest-IoU still-unmatched ground truth in
/// its own image when that IoU reaches `iou_threshold`.
pub fn average_precision(
    dets_per_image: &[Vec<Detection>],
    gts_per_image: &[Vec<BBox>],
    iou_threshold: f64,
) -> Result<f64> {
    if dets_per_image.len() != gts_per_image.len() {
        return Err(Error::config("detection and ground-truth image counts differ"));
    }
    let total_gt: usize = gts_per_image.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::data("average precision undefined without ground truths"));
    }

    // (image index, detection) pool, sorted by score descending. The sort
    // is stable so equal scores keep pool order.
    let mut pool: Vec<(usize, &Detection)> = Vec::new();
    for (img, dets) in dets_per_image.iter().enumerate() {
        for d in dets {
            if !d.score.is_finite() {
                return Err(Error::data("detection score is not finite"));
            }
            pool.push((img, d));
        }
    }
    pool.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap());

    let mut matched: Vec<Vec<bool>> = gts_per_image.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut fp = 0usize;
    // (recall, precision) after each detection.
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(pool.len());
    for (img, det) in pool {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts_per_image[img].iter().enumerate() {
            if matched[img][gi] {
                continue;
            }
            let v = iou(&det.bbox, gt);
            if v >= iou_threshold && best.map_or(true, |(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[img][gi] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        points.push((tp as f64 / total_gt as f64, tp as f64 / (tp + fp) as f64));
    }

    // Monotone envelope from the right, integrated over recall steps.
    let mut ap = 0.0;
    let mut best_precision = 0.0f64;
    let mut prev_recall = points.last().map_or(0.0, |p| p.0);
    for &(recall, precision) in points.iter().rev() {
        best_precision = best_precision.max(precision);
        // Width of the recall step ending at this point.
        ap += (prev_recall - recall) * best_precision;
        prev_recall = recall;
    }
    ap += prev_recall * best_precision;
    Ok(ap)
}

/// Attack success for fake-face poisoning: AP with the trigger rectangles
/// as the only ground truths.
///
/// Detections that match a genuine face are removed before scoring rather
/// than counted as false positives, isolating trigger detectability.
pub fn fga_asr(
    dets_per_image: &[Vec<Detection>],
    trigger_gts: &[Vec<BBox>],
    genuine_gts: &[Vec<BBox>],
    iou_threshold: f64,
) -> Result<f64> {
    if trigger_gts.iter().all(Vec::is_empty) {
        return Err(Error::data("no triggers in evaluation set"));
    }
    let mut filtered: Vec<Vec<Detection>> = Vec::with_capacity(dets_per_image.len());
    for (img, dets) in dets_per_image.iter().enumerate() {
        let keep: Vec<Detection> = dets
            .iter()
            .filter(|d| {
                genuine_gts[img]
                    .iter()
                    .all(|g| iou(&d.bbox, g) < iou_threshold)
            })
            .cloned()
            .collect();
        filtered.push(keep);
    }
    average_precision(&filtered, trigger_gts, iou_threshold)
}

/// Mean Euclidean distance across the five landmark slots, in pixels.
pub fn landmark_shift(a: &Landmarks5, b: &Landmarks5) -> f64 {
    a.points
        .iter()
        .zip(b.points.iter())
        .map(|(p, q)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
        .sum::<f64>()
        / 5.0
}

/// One poisoned face paired with its prediction (absent when no detection
/// matched the face).
#[derive(Debug, Clone, Copy)]
pub struct LsaTriple {
    pub benign: Landmarks5,
    pub poisoned: Landmarks5,
    pub prediction: Option<Landmarks5>,
}

/// Fraction of poisoned faces whose prediction lands strictly closer to
/// the poisoned landmarks than to the benign ones. Unmatched faces count
/// as failures; ties count as failures.
pub fn lsa_asr(triples: &[LsaTriple]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::data("landmark attack success rate needs at least one face"));
    }
    let successes = triples
        .iter()
        .filter(|t| {
            t.prediction.as_ref().is_some_and(|pred| {
                landmark_shift(&t.poisoned, pred) < landmark_shift(&t.benign, pred)
            })
        })
        .count();
    Ok(successes as f64 / triples.len() as f64)
}

/// Match each face box to the highest-IoU detection at or above the
/// threshold; `None` when nothing reaches it.
pub fn match_detection<'d>(
    face: &BBox,
    dets: &'d [Detection],
    iou_threshold: f64,
) -> Option<&'d Detection> {
    let mut best: Option<(&Detection, f64)> = None;
    for d in dets {
        let v = iou(&d.bbox, face);
        if v >= iou_threshold && best.map_or(true, |(_, b)| v > b) {
            best = Some((d, v));
        }
    }
    best.map(|(d, _)| d)
}

/// Simple tallies carried alongside the metric values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EvalCounts {
    pub images: usize,
    pub faces: usize,
    pub triggers: usize,
}

/// Aggregated evaluation output; attack fields stay absent on benign data.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    pub ap_benign: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap_trigger: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ls_benign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ls_poisoned: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lsa_asr: Option<f64>,
    pub counts: EvalCounts,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn det(x: f64, y: f64, s: f64, score: f64) -> Detection {
        let bbox = BBox::new(x, y, s, s).unwrap();
        Detection {
            landmarks: Landmarks5 {
                points: [(x + 1.0, y + 1.0); 5],
            },
            bbox,
            score,
        }
    }

    fn gt(x: f64, y: f64, s: f64) -> BBox {
        BBox::new(x, y, s, s).unwrap()
    }

    /// Brute-force AP: same greedy matching, then for each recall step the
    /// best precision at recall >= r found by a nested scan.
    fn reference_ap(dets: &[Vec<Detection>], gts: &[Vec<BBox>], thr: f64) -> f64 {
        let total_gt: usize = gts.iter().map(Vec::len).sum();
        let mut pool: Vec<(usize, Detection)> = Vec::new();
        for (i, ds) in dets.iter().enumerate() {
            for d in ds {
                pool.push((i, d.clone()));
            }
        }
        pool.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap());
        let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
        let mut flags = Vec::new();
        for (img, d) in &pool {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts[*img].iter().enumerate() {
                if matched[*img][gi] {
                    continue;
                }
                let v = iou(&d.bbox, g);
                if v >= thr && best.map_or(true, |(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            if let Some((gi, _)) = best {
                matched[*img][gi] = true;
                flags.push(true);
            } else {
                flags.push(false);
            }
        }
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0.0f64, 0.0f64);
        for f in flags {
            if f {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            points.push((tp / total_gt as f64, tp / (tp + fp)));
        }
        // Area: for each point where recall increased, width times the max
        // precision among all points with recall >= this recall.
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for i in 0..points.len() {
            let (r, _) = points[i];
            if r > prev_r {
                let pmax = points
                    .iter()
                    .filter(|(r2, _)| *r2 >= r)
                    .map(|(_, p)| *p)
                    .fold(0.0f64, f64::max);
                ap += (r - prev_r) * pmax;
                prev_r = r;
            }
        }
        ap
    }

    #[test]
    fn perfect_detector_scores_one() {
        let gts = vec![vec![gt(0.0, 0.0, 10.0), gt(20.0, 20.0, 10.0)]];
        let dets = vec![vec![det(0.0, 0.0, 10.0, 0.9), det(20.0, 20.0, 10.0, 0.8)]];
        assert_eq!(average_precision(&dets, &gts, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn zero_detections_score_zero() {
        let gts = vec![vec![gt(0.0, 0.0, 10.0)]];
        assert_eq!(average_precision(&[vec![]], &gts, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn zero_ground_truth_is_an_error() {
        assert!(average_precision(&[vec![]], &[vec![]], 0.5).is_err());
    }

    #[test]
    fn hand_enumerated_pr_case() {
        // 2 gts; detections scored 0.9 (TP), 0.8 (FP), 0.7 (TP)
        // => AP = 0.5 * 1 + 0.5 * (2/3).
        let gts = vec![vec![gt(0.0, 0.0, 10.0), gt(30.0, 30.0, 10.0)]];
        let dets = vec![vec![
            det(0.0, 0.0, 10.0, 0.9),
            det(15.0, 15.0, 5.0, 0.8),
            det(30.0, 30.0, 10.0, 0.7),
        ]];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12, "ap {ap}");
    }

    #[test]
    fn matches_reference_on_100_random_micro_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for case in 0..100 {
            let n_img = rng.random_range(1..=3);
            let mut gts = Vec::new();
            let mut dets = Vec::new();
            for _ in 0..n_img {
                let n_gt = rng.random_range(0..=3);
                gts.push(
                    (0..n_gt)
                        .map(|_| {
                            gt(
                                rng.random_range(0.0..30.0),
                                rng.random_range(0.0..30.0),
                                rng.random_range(4.0..12.0),
                            )
                        })
                        .collect::<Vec<_>>(),
                );
                let n_det = rng.random_range(0..=6);
                dets.push(
                    (0..n_det)
                        .map(|_| {
                            det(
                                rng.random_range(0.0..30.0),
                                rng.random_range(0.0..30.0),
                                rng.random_range(4.0..12.0),
                                rng.random_range(0.01..1.0),
                            )
                        })
                        .collect::<Vec<_>>(),
                );
            }
            if gts.iter().all(Vec::is_empty) {
                gts[0].push(gt(0.0, 0.0, 5.0));
            }
            let ap = average_precision(&dets, &gts, 0.5).unwrap();
            let expected = reference_ap(&dets, &gts, 0.5);
            assert!((ap - expected).abs() <= 1e-9, "case {case}: {ap} vs {expected}");
        }
    }

    #[test]
    fn fga_asr_perfect_and_failed_attack() {
        let triggers = vec![vec![gt(5.0, 5.0, 8.0)]];
        let genuine = vec![vec![gt(30.0, 30.0, 12.0)]];
        // Confident trigger hit plus a genuine-face detection to drop.
        let dets = vec![vec![det(30.0, 30.0, 12.0, 0.95), det(5.0, 5.0, 8.0, 0.9)]];
        assert_eq!(fga_asr(&dets, &triggers, &genuine, 0.5).unwrap(), 1.0);
        let misses = vec![vec![det(40.0, 40.0, 8.0, 0.9)]];
        assert_eq!(fga_asr(&misses, &triggers, &genuine, 0.5).unwrap(), 0.0);
        assert!(fga_asr(&dets, &[vec![]], &genuine, 0.5).is_err());
    }

    #[test]
    fn fga_asr_hand_built_mixed_case() {
        // 3 triggers; hits on two of them plus one stray false positive.
        let triggers = vec![vec![
            gt(0.0, 0.0, 8.0),
            gt(20.0, 0.0, 8.0),
            gt(40.0, 0.0, 8.0),
        ]];
        let genuine = vec![vec![]];
        let dets = vec![vec![
            det(0.0, 0.0, 8.0, 0.9),
            det(20.0, 20.0, 8.0, 0.8),
            det(20.0, 0.0, 8.0, 0.7),
        ]];
        // PR points: (1/3, 1), (1/3, 1/2), (2/3, 2/3)
        // => AP = 1/3 * 1 + 1/3 * 2/3.
        let expected = 1.0 / 3.0 + (1.0 / 3.0) * (2.0 / 3.0);
        let asr = fga_asr(&dets, &triggers, &genuine, 0.5).unwrap();
        assert!((asr - expected).abs() < 1e-12, "{asr} vs {expected}");
    }

    #[test]
    fn landmark_shift_cases() {
        let a = Landmarks5 {
            points: [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)],
        };
        assert_eq!(landmark_shift(&a, &a), 0.0);
        let mut b = a;
        b.points[2] = (2.0 + 3.0, 0.0 + 4.0);
        assert!((landmark_shift(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(landmark_shift(&a, &b), landmark_shift(&b, &a));
    }

    #[test]
    fn lsa_asr_extremes_and_fraction() {
        let benign = Landmarks5 {
            points: [(0.0, 0.0), (4.0, 0.0), (2.0, 2.0), (0.5, 4.0), (3.5, 4.0)],
        };
        let poisoned = crate::face::rotate_landmarks(&benign, 30.0, (2.0, 2.0));
        let exact = LsaTriple {
            benign,
            poisoned,
            prediction: Some(poisoned),
        };
        assert_eq!(lsa_asr(std::slice::from_ref(&exact)).unwrap(), 1.0);

        let benign_pred = LsaTriple {
            benign,
            poisoned,
            prediction: Some(benign),
        };
        assert_eq!(lsa_asr(&[benign_pred.clone()]).unwrap(), 0.0);

        let unmatched = LsaTriple {
            benign,
            poisoned,
            prediction: None,
        };
        let four = vec![exact, exact, exact, benign_pred];
        assert_eq!(lsa_asr(&four).unwrap(), 0.75);
        let with_miss = vec![exact, exact, exact, unmatched];
        assert_eq!(lsa_asr(&with_miss).unwrap(), 0.75);
        assert!(lsa_asr(&[]).is_err());
    }

    #[test]
    fn ties_count_as_failures() {
        // Prediction equidistant from benign and poisoned landmarks.
        let benign = Landmarks5 {
            points: [(0.0, 0.0); 5],
        };
        let poisoned = Landmarks5 {
            points: [(2.0, 0.0); 5],
        };
        let midpoint = Landmarks5 {
            points: [(1.0, 0.0); 5],
        };
        let t = LsaTriple {
            benign,
            poisoned,
            prediction: Some(midpoint),
        };
        assert_eq!(lsa_asr(&[t]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn ap_invariant_to_order_and_score_rescale(seed in 0u64..200) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let gts = vec![vec![gt(0.0, 0.0, 10.0), gt(25.0, 25.0, 10.0)]];
            let n = rng.random_range(1..8);
            let mut dets: Vec<Detection> = (0..n).map(|i| det(
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..30.0),
                rng.random_range(4.0..12.0),
                // Distinct scores.
                0.05 + (i as f64) * 0.1,
            )).collect();
            let base = average_precision(&[dets.clone()], &gts, 0.5).unwrap();
            dets.shuffle(&mut rng);
            let shuffled = average_precision(&[dets.clone()], &gts, 0.5).unwrap();
            prop_assert!((base - shuffled).abs() < 1e-12);
            for d in dets.iter_mut() {
                d.score *= 0.37;
            }
            let rescaled = average_precision(&[dets], &gts, 0.5).unwrap();
            prop_assert!((base - rescaled).abs() < 1e-12);
        }

        #[test]
        fn landmark_shift_triangle_inequality(
            a in proptest::array::uniform5((0.0..64.0f64, 0.0..64.0f64)),
            b in proptest::array::uniform5((0.0..64.0f64, 0.0..64.0f64)),
            c in proptest::array::uniform5((0.0..64.0f64, 0.0..64.0f64)),
        ) {
            let (la, lb, lc) = (
                Landmarks5 { points: a },
                Landmarks5 { points: b },
                Landmarks5 { points: c },
            );
            prop_assert!(
                landmark_shift(&la, &lc)
                    <= landmark_shift(&la, &lb) + landmark_shift(&lb, &lc) + 1e-9
            );
        }
    }
}
