//! Procedural generator of face-like scenes with exact ground truth.
//!
//! Scenes are cluttered noise backgrounds with schematic faces: a
//! skin-tone ellipse, dark eye dots, a nose dot, and a mouth bar, each
//! rendered exactly at the annotated landmark positions so the ground
//! truth is correct by construction.

use rand::Rng;

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::face::{iou, BBox, FaceAnnotation, Landmarks5};
use crate::image::ImageBuffer;
use crate::seed::item_rng;

/// Box-normalized landmark layout used by every rendered face.
pub const FACE_LAYOUT: [(f64, f64); 5] = [
    (0.30, 0.35),
    (0.70, 0.35),
    (0.50, 0.55),
    (0.32, 0.75),
    (0.68, 0.75),
];

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub image_size: usize,
    pub faces_per_image: (usize, usize),
    /// Face box side as a fraction of the image side.
    pub face_scale: (f64, f64),
    pub clutter_count: (usize, usize),
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            image_size: 64,
            faces_per_image: (1, 3),
            face_scale: (0.2, 0.5),
            clutter_count: (0, 5),
            seed: 0,
        }
    }
}

impl SceneParams {
    fn validate(&self) -> Result<()> {
        if self.image_size < ImageBuffer::MIN_SIDE {
            return Err(Error::config("image size too small"));
        }
        if self.faces_per_image.0 < 1 || self.faces_per_image.0 > self.faces_per_image.1 {
            return Err(Error::config("faces per image range is empty or zero"));
        }
        if !(self.face_scale.0 > 0.0
            && self.face_scale.0 <= self.face_scale.1
            && self.face_scale.1 < 1.0)
        {
            return Err(Error::config("face scale range invalid"));
        }
        if self.clutter_count.0 > self.clutter_count.1 {
            return Err(Error::config("clutter count range is empty"));
        }
        Ok(())
    }
}

/// Landmarks for a face box under the fixed layout.
pub fn face_landmarks(bbox: &BBox) -> Landmarks5 {
    Landmarks5 {
        points: FACE_LAYOUT.map(|(fx, fy)| (bbox.x + fx * bbox.w, bbox.y + fy * bbox.h)),
    }
}

fn fill_ellipse(img: &mut ImageBuffer, cx: f64, cy: f64, rx: f64, ry: f64, color: [f32; 3]) {
    let x0 = ((cx - rx).floor().max(0.0)) as usize;
    let x1 = ((cx + rx).ceil().min(img.width() as f64 - 1.0)) as usize;
    let y0 = ((cy - ry).floor().max(0.0)) as usize;
    let y1 = ((cy + ry).ceil().min(img.height() as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.set_pixel(x, y, color);
            }
        }
    }
}

fn fill_rect(img: &mut ImageBuffer, x0: f64, y0: f64, x1: f64, y1: f64, color: [f32; 3]) {
    let xa = x0.floor().max(0.0) as usize;
    let xb = (x1.ceil().min(img.width() as f64) as usize).min(img.width());
    let ya = y0.floor().max(0.0) as usize;
    let yb = (y1.ceil().min(img.height() as f64) as usize).min(img.height());
    for y in ya..yb {
        for x in xa..xb {
            img.set_pixel(x, y, color);
        }
    }
}

/// Clutter color: anything not skin-like and not trigger-blue, so the
/// background cannot impersonate faces or triggers.
fn clutter_color(rng: &mut impl Rng) -> [f32; 3] {
    loop {
        let c = [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()];
        let skin_like = c[0] > 0.6 && c[1] > 0.4 && c[1] < c[0] && c[2] < c[1];
        let blue_like = c[2] - c[0].max(c[1]) > 0.3;
        if !skin_like && !blue_like {
            return c;
        }
    }
}

fn render_face(img: &mut ImageBuffer, bbox: &BBox, rng: &mut impl Rng) {
    let (cx, cy) = bbox.center();
    let skin = [
        0.85 + rng.random_range(-0.06..0.06),
        0.62 + rng.random_range(-0.06..0.06),
        0.48 + rng.random_range(-0.06..0.06),
    ];
    fill_ellipse(img, cx, cy, bbox.w / 2.0, bbox.h / 2.0, skin);

    let lm = face_landmarks(bbox);
    let side = bbox.w.min(bbox.h);
    let eye_r = (0.07 * side).max(0.6);
    let dark = [0.08, 0.08, 0.10];
    for eye in [lm.points[0], lm.points[1]] {
        fill_ellipse(img, eye.0, eye.1, eye_r, eye_r, dark);
    }
    let nose = lm.points[2];
    fill_ellipse(
        img,
        nose.0,
        nose.1,
        (0.05 * side).max(0.5),
        (0.05 * side).max(0.5),
        [0.55, 0.30, 0.22],
    );
    // Mouth bar spanning the two mouth corners.
    let (ml, mr) = (lm.points[3], lm.points[4]);
    let half_h = (0.04 * side).max(0.5);
    fill_rect(
        img,
        ml.0,
        ml.1 - half_h,
        mr.0,
        mr.1 + half_h,
        [0.45, 0.12, 0.14],
    );
}

/// Render one scene. Faces never overlap; placement retries up to 100
/// times per face and gives up gracefully, but at least one face always
/// lands.
pub fn render_scene(
    params: &SceneParams,
    rng: &mut impl Rng,
) -> Result<(ImageBuffer, Vec<FaceAnnotation>)> {
    params.validate()?;
    let size = params.image_size;
    let sizef = size as f64;

    // Background: mid-gray base with low-amplitude per-pixel noise.
    let base: f32 = rng.random_range(0.35..0.60);
    let mut data = vec![0.0f32; size * size * 3];
    for v in data.iter_mut() {
        *v = (base + rng.random_range(-0.05f32..0.05)).clamp(0.0, 1.0);
    }
    let mut img = ImageBuffer::from_data(size, size, data)?;

    let n_clutter = rng.random_range(params.clutter_count.0..=params.clutter_count.1);
    for _ in 0..n_clutter {
        let w = rng.random_range(0.05 * sizef..0.25 * sizef);
        let h = rng.random_range(0.05 * sizef..0.25 * sizef);
        let x = rng.random_range(0.0..sizef - w);
        let y = rng.random_range(0.0..sizef - h);
        let color = clutter_color(rng);
        if rng.random::<bool>() {
            fill_rect(&mut img, x, y, x + w, y + h, color);
        } else {
            fill_ellipse(&mut img, x + w / 2.0, y + h / 2.0, w / 2.0, h / 2.0, color);
        }
    }

    let want = rng.random_range(params.faces_per_image.0..=params.faces_per_image.1);
    let mut boxes: Vec<BBox> = Vec::new();
    for _ in 0..want {
        for _attempt in 0..100 {
            let side = rng.random_range(params.face_scale.0..=params.face_scale.1) * sizef;
            let x = rng.random_range(0.0..sizef - side);
            let y = rng.random_range(0.0..sizef - side);
            let candidate = BBox::new(x, y, side, side)?;
            if boxes.iter().all(|b| iou(b, &candidate) == 0.0) {
                boxes.push(candidate);
                break;
            }
        }
    }
    // The first face has no competitors, so this cannot trigger; it guards
    // the every-scene-has-a-face contract all the same.
    if boxes.is_empty() {
        return Err(Error::data("failed to place any face"));
    }

    let mut faces = Vec::with_capacity(boxes.len());
    for bbox in boxes {
        render_face(&mut img, &bbox, rng);
        faces.push(FaceAnnotation::ground_truth(bbox, face_landmarks(&bbox)));
    }
    Ok((img, faces))
}

/// Generate `n` scenes; scene `i` draws from an independent stream of the
/// dataset seed so subsets reproduce exactly.
pub fn generate_dataset(n: usize, params: &SceneParams) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    params.validate()?;
    let digits = (n.max(2) as f64).log10().ceil() as usize;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = item_rng(params.seed, "synth", i as u64);
        let (image, faces) = render_scene(params, &mut rng)?;
        samples.push(Sample {
            id: format!("{i:0width$}", width = digits.max(5)),
            image,
            faces,
            poison: None,
        });
    }
    Ok(Dataset { samples })
}
