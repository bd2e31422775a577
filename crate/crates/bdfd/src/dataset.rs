//! On-disk dataset layout and the JSON-lines manifest format.
//!
//! A dataset directory holds `manifest.jsonl` plus an `images/` directory
//! of 8-bit RGB PNGs. Each manifest line describes one image: its path,
//! its face rows, and (when poisoned) a poison block that keeps the
//! original annotations so the sample can be restored.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::face::{AttackTag, BBox, FaceAnnotation, Landmarks5};
use crate::image::{ImageBuffer, CHANNELS};
use crate::poison::AttackKind;

/// One image with its annotations, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageBuffer,
    pub faces: Vec<FaceAnnotation>,
    pub poison: Option<PoisonBlock>,
}

/// Poison metadata attached to a manipulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonBlock {
    pub attack: AttackKind,
    pub alpha: f64,
    pub masks: Vec<BBox>,
    pub original_faces: Vec<FaceAnnotation>,
}

/// An ordered collection of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

// --- manifest records -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestRecord {
    image: String,
    faces: Vec<FaceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poison: Option<PoisonRecord>,
    #[serde(flatten)]
    extra: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FaceRecord {
    bbox: Vec<f64>,
    confidence: f64,
    landmarks: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attack_tag: Option<AttackTag>,
    #[serde(flatten)]
    extra: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoisonRecord {
    attack: AttackKind,
    alpha: f64,
    masks: Vec<Vec<f64>>,
    original_faces: Vec<FaceRecord>,
    #[serde(flatten)]
    extra: serde_json::Map<String, Value>,
}

impl FaceRecord {
    fn from_face(face: &FaceAnnotation) -> Self {
        FaceRecord {
            bbox: vec![face.bbox.x, face.bbox.y, face.bbox.w, face.bbox.h],
            confidence: face.confidence,
            landmarks: face
                .landmarks
                .points
                .iter()
                .flat_map(|(x, y)| [*x, *y])
                .collect(),
            attack_tag: (face.attack_tag != AttackTag::None).then_some(face.attack_tag),
            extra: serde_json::Map::new(),
        }
    }

    fn into_face(self, poisoned: bool) -> Result<FaceAnnotation> {
        if self.bbox.len() != 4 {
            return Err(Error::data(format!(
                "bbox must have 4 values, got {}",
                self.bbox.len()
            )));
        }
        if self.landmarks.len() != 10 {
            return Err(Error::data(format!(
                "landmarks must have 10 values, got {}",
                self.landmarks.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::data(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        let mut points = [(0.0, 0.0); 5];
        for (i, p) in points.iter_mut().enumerate() {
            *p = (self.landmarks[2 * i], self.landmarks[2 * i + 1]);
        }
        let attack_tag = self.attack_tag.unwrap_or_default();
        Ok(FaceAnnotation {
            bbox: BBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])?,
            confidence: self.confidence,
            landmarks: Landmarks5::new(points)?,
            attack_tag,
            poisoned: poisoned && attack_tag != AttackTag::None,
        })
    }
}

fn rect_to_vec(b: &BBox) -> Vec<f64> {
    vec![b.x, b.y, b.w, b.h]
}

fn rect_from_vec(v: &[f64]) -> Result<BBox> {
    if v.len() != 4 {
        return Err(Error::data("mask rect must have 4 values"));
    }
    BBox::new(v[0], v[1], v[2], v[3])
}

// --- PNG conversion ----------------------------------------------------

/// Quantize to 8-bit RGB.
pub fn to_rgb8(img: &ImageBuffer) -> image::RgbImage {
    let mut out = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel(x, y);
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb(p.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)),
            );
        }
    }
    out
}

/// Load an 8-bit RGB raster back into the normalized buffer.
pub fn from_rgb8(img: &image::RgbImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; w * h * CHANNELS];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..CHANNELS {
            data[i * CHANNELS + c] = p.0[c] as f32 / 255.0;
        }
    }
    ImageBuffer::from_data(w, h, data)
}

fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::data(format!("failed to write {}: {e}", path.display())))
}

fn load_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| Error::data(format!("failed to read {}: {e}", path.display())))?
        .into_rgb8();
    let buf = from_rgb8(&img)?;
    buf.check_scene_size()?;
    Ok(buf)
}

// --- directory IO ------------------------------------------------------

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";

fn record_for_sample(sample: &Sample) -> ManifestRecord {
    ManifestRecord {
        image: format!("{IMAGES_DIR}/{}.png", sample.id),
        faces: sample.faces.iter().map(FaceRecord::from_face).collect(),
        poison: sample.poison.as_ref().map(|p| PoisonRecord {
            attack: p.attack,
            alpha: p.alpha,
            masks: p.masks.iter().map(rect_to_vec).collect(),
            original_faces: p.original_faces.iter().map(FaceRecord::from_face).collect(),
            extra: serde_json::Map::new(),
        }),
        extra: serde_json::Map::new(),
    }
}

fn sample_from_record(record: ManifestRecord, dir: &Path, line: usize) -> Result<Sample> {
    let at_line = |e: Error| Error::data(format!("manifest line {line}: {e}"));
    if record.faces.is_empty() {
        return Err(Error::data(format!(
            "manifest line {line}: record has zero faces"
        )));
    }
    let poisoned = record.poison.is_some();
    let mut faces = Vec::with_capacity(record.faces.len());
    for f in record.faces {
        faces.push(f.into_face(poisoned).map_err(at_line)?);
    }
    let poison = match record.poison {
        None => None,
        Some(p) => {
            let mut masks = Vec::with_capacity(p.masks.len());
            for m in &p.masks {
                masks.push(rect_from_vec(m).map_err(at_line)?);
            }
            let mut original_faces = Vec::with_capacity(p.original_faces.len());
            for f in p.original_faces {
                original_faces.push(f.into_face(false).map_err(at_line)?);
            }
            Some(PoisonBlock {
                attack: p.attack,
                alpha: p.alpha,
                masks,
                original_faces,
            })
        }
    };
    let image_path = dir.join(&record.image);
    let id = Path::new(&record.image)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::data(format!("manifest line {line}: bad image path")))?
        .to_string();
    Ok(Sample {
        id,
        image: load_png(&image_path)?,
        faces,
        poison,
    })
}

/// Write a dataset directory: PNGs plus the JSON-lines manifest.
pub fn write_manifest(dataset: &Dataset, dir: &Path) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let manifest_path = dir.join(MANIFEST_NAME);
    let mut out = Vec::new();
    for sample in &dataset.samples {
        save_png(&sample.image, &images.join(format!("{}.png", sample.id)))?;
        let record = record_for_sample(sample);
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::data(format!("failed to serialize record: {e}")))?;
        out.push(line);
    }
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for line in &out {
        writeln!(file, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    Ok(())
}

/// Read a dataset directory written by [`write_manifest`].
pub fn read_manifest(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let file = fs::File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("manifest line {}: {e}", i + 1)))?;
        samples.push(sample_from_record(record, dir, i + 1)?);
    }
    Ok(Dataset { samples })
}

/// Path to a dataset's manifest file.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_NAME)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::{AttackTag, Landmarks5};

    fn tiny_sample(id: &str) -> Sample {
        let bbox = BBox::new(8.0, 8.0, 20.0, 20.0).unwrap();
        let landmarks = Landmarks5::new([
            (14.0, 15.0),
            (22.0, 15.0),
            (18.0, 19.0),
            (14.4, 23.0),
            (21.6, 23.0),
        ])
        .unwrap();
        // Pixel values on the 8-bit grid so the PNG round trip is exact.
        Sample {
            id: id.to_string(),
            image: ImageBuffer::filled(32, 32, [102.0 / 255.0, 128.0 / 255.0, 153.0 / 255.0])
                .unwrap(),
            faces: vec![FaceAnnotation::ground_truth(bbox, landmarks)],
            poison: None,
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut sample = tiny_sample("00000");
        sample.poison = Some(PoisonBlock {
            attack: AttackKind::LsaRotate,
            alpha: 1.0,
            masks: vec![BBox::new(10.0, 10.0, 5.0, 5.0).unwrap()],
            original_faces: sample.faces.clone(),
        });
        let mut flagged = sample.clone();
        for f in &mut flagged.faces {
            f.attack_tag = AttackTag::LsaRotated;
            f.poisoned = true;
        }
        let ds = Dataset {
            samples: vec![flagged, tiny_sample("00001")],
        };
        write_manifest(&ds, dir.path()).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn wrong_landmark_arity_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(
            &Dataset {
                samples: vec![tiny_sample("00000"), tiny_sample("00001")],
            },
            dir.path(),
        )
        .unwrap();
        let path = manifest_path(dir.path());
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // Drop one landmark value from the second record.
        lines[1] = lines[1].replacen(",23.0]", "]", 1);
        fs::write(&path, lines.join("\n")).unwrap();
        let err = read_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "error should name line 2: {err}");
        assert!(err.contains("10 values"), "error should name arity: {err}");
    }

    #[test]
    fn zero_face_record_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(
            &Dataset {
                samples: vec![tiny_sample("00000")],
            },
            dir.path(),
        )
        .unwrap();
        let path = manifest_path(dir.path());
        let text = fs::read_to_string(&path).unwrap();
        let record: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut gutted = record.clone();
        gutted["faces"] = serde_json::json!([]);
        fs::write(&path, serde_json::to_string(&gutted).unwrap()).unwrap();
        let err = read_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("zero faces"), "{err}");
    }

    #[test]
    fn unknown_keys_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(
            &Dataset {
                samples: vec![tiny_sample("00000")],
            },
            dir.path(),
        )
        .unwrap();
        let path = manifest_path(dir.path());
        let text = fs::read_to_string(&path).unwrap();
        let mut record: serde_json::Value =
            serde_json::from_str(text.lines().next().unwrap()).unwrap();
        record["note"] = serde_json::json!("hand-labeled");
        fs::write(&path, serde_json::to_string(&record).unwrap()).unwrap();

        // Parse, re-serialize, and check the stranger key is still there.
        let line = fs::read_to_string(&path).unwrap();
        let parsed: ManifestRecord = serde_json::from_str(line.trim()).unwrap();
        let rewritten = serde_json::to_string(&parsed).unwrap();
        assert!(rewritten.contains("hand-labeled"));
    }

    #[test]
    fn png_round_trip_is_lossless_at_8_bit() {
        let mut img = ImageBuffer::filled(16, 16, [0.0; 3]).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                img.set_pixel(x, y, [(x as f32) / 15.0, (y as f32) / 15.0, 0.5]);
            }
        }
        let rgb = to_rgb8(&img);
        let back = from_rgb8(&rgb).unwrap();
        let again = to_rgb8(&back);
        assert_eq!(rgb.as_raw(), again.as_raw());
    }
}
