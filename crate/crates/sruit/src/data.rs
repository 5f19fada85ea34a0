//! Paired-scene tiling, pixel normalization, and dataset manifests.
//!
//! A scene is a pair of co-registered rasters (plus an optional binary
//! change mask). Scenes are cut into overlapping square patches on a
//! regular grid whose final row/column anchors are clamped to the image
//! boundary, and the patches are stored as lossless PNGs referenced by a
//! line-delimited manifest.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::model::ImagePatch;
use crate::{Error, Result};

/// Co-registered domain-A/domain-B rasters with an optional change mask
/// (255 = changed, 0 = unchanged).
pub struct PairedScene {
    pub image_a: RgbImage,
    pub image_b: RgbImage,
    pub change_mask: Option<GrayImage>,
}

impl PairedScene {
    pub fn new(image_a: RgbImage, image_b: RgbImage, change_mask: Option<GrayImage>) -> Result<Self> {
        if image_a.dimensions() != image_b.dimensions() {
            return Err(Error::Dimension(format!(
                "scene rasters differ: A is {:?}, B is {:?}",
                image_a.dimensions(),
                image_b.dimensions()
            )));
        }
        if let Some(mask) = &change_mask {
            if mask.dimensions() != image_a.dimensions() {
                return Err(Error::Dimension(format!(
                    "mask dimensions {:?} do not match images {:?}",
                    mask.dimensions(),
                    image_a.dimensions()
                )));
            }
        }
        Ok(Self { image_a, image_b, change_mask })
    }

    /// (height, width)
    pub fn dims(&self) -> (usize, usize) {
        let (w, h) = self.image_a.dimensions();
        (h as usize, w as usize)
    }
}

/// Top-left patch anchors over a scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    /// (row, col) anchors, row-major, unique.
    pub anchors: Vec<(usize, usize)>,
}

fn axis_anchors(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let span = dim - patch;
    let count = span.div_ceil(stride) + 1;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push((i * stride).min(span));
    }
    out.dedup();
    out
}

/// Regular overlapping grid: stride is `patch_size * (1 - overlap)` and
/// the last anchor of each axis is clamped so the patch fits the image.
pub fn compute_patch_grid(
    height: usize,
    width: usize,
    patch_size: usize,
    overlap: f64,
) -> Result<PatchGrid> {
    if patch_size == 0 || patch_size > height.min(width) {
        return Err(Error::Dimension(format!(
            "patch size {patch_size} does not fit a {height}x{width} image"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let stride = ((patch_size as f64 * (1.0 - overlap)).round() as usize).max(1);
    let rows = axis_anchors(height, patch_size, stride);
    let cols = axis_anchors(width, patch_size, stride);
    let mut anchors = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            anchors.push((r, c));
        }
    }
    Ok(PatchGrid { patch_size, stride, anchors })
}

/// One co-registered patch triple cut from a scene.
#[derive(Debug, Clone)]
pub struct PairedPatchSample {
    pub scene_id: String,
    pub anchor: (usize, usize),
    pub patch_a: RgbImage,
    pub patch_b: RgbImage,
    pub mask: Option<GrayImage>,
}

fn crop_rgb(img: &RgbImage, row: usize, col: usize, size: usize) -> RgbImage {
    let mut out = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            out.put_pixel(x as u32, y as u32, *img.get_pixel((col + x) as u32, (row + y) as u32));
        }
    }
    out
}

fn crop_gray(img: &GrayImage, row: usize, col: usize, size: usize) -> GrayImage {
    let mut out = GrayImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            out.put_pixel(x as u32, y as u32, *img.get_pixel((col + x) as u32, (row + y) as u32));
        }
    }
    out
}

/// Cut the scene at every grid anchor; A, B and mask are cropped at
/// identical coordinates.
pub fn tile(scene: &PairedScene, scene_id: &str, grid: &PatchGrid) -> Result<Vec<PairedPatchSample>> {
    let (h, w) = scene.dims();
    let size = grid.patch_size;
    let mut out = Vec::with_capacity(grid.anchors.len());
    for &(row, col) in &grid.anchors {
        if row + size > h || col + size > w {
            return Err(Error::Dimension(format!(
                "anchor ({row}, {col}) + patch {size} exceeds scene {h}x{w}"
            )));
        }
        out.push(PairedPatchSample {
            scene_id: scene_id.to_string(),
            anchor: (row, col),
            patch_a: crop_rgb(&scene.image_a, row, col, size),
            patch_b: crop_rgb(&scene.image_b, row, col, size),
            mask: scene.change_mask.as_ref().map(|m| crop_gray(m, row, col, size)),
        });
    }
    Ok(out)
}

/// Affine map from 8-bit pixels to the model range: 0 -> -1, 255 -> +1.
pub fn normalize(img: &RgbImage) -> Result<ImagePatch> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px.0[c] as f32 * (2.0 / 255.0) - 1.0;
            }
        }
    }
    let t = Tensor::from_vec(data, (3, h, w), &Device::Cpu)?;
    ImagePatch::new(t)
}

/// Inverse of [`normalize`] with rounding to the nearest 8-bit value.
pub fn denormalize(patch: &ImagePatch) -> Result<RgbImage> {
    let (c, h, w) = patch.dims();
    if c != 3 {
        return Err(Error::Dimension(format!("expected 3 channels, got {c}")));
    }
    let data = patch.tensor().flatten_all()?.to_vec1::<f32>()?;
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut px = [0u8; 3];
            for (ch, slot) in px.iter_mut().enumerate() {
                let v = (data[ch * h * w + y * w + x] + 1.0) * (255.0 / 2.0);
                *slot = v.round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One manifest line. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub scene_id: String,
    pub row: usize,
    pub col: usize,
    pub split: Split,
    pub a_path: String,
    pub b_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

/// An on-disk dataset: patch files under `root`, described by records.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl DatasetManifest {
    pub fn subset(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            root: self.root.clone(),
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn load_pair(&self, record: &ManifestRecord) -> Result<(ImagePatch, ImagePatch)> {
        let a = load_rgb(&self.root.join(&record.a_path))?;
        let b = load_rgb(&self.root.join(&record.b_path))?;
        Ok((normalize(&a)?, normalize(&b)?))
    }

    pub fn load_mask(&self, record: &ManifestRecord) -> Result<Option<GrayImage>> {
        match &record.mask_path {
            None => Ok(None),
            Some(p) => {
                let img = image::open(self.root.join(p))
                    .map_err(|e| Error::Integrity(format!("cannot read mask {p}: {e}")))?;
                Ok(Some(img.to_luma8()))
            }
        }
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|e| Error::Integrity(format!("cannot read image {}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

fn record_stem(record_scene: &str, row: usize, col: usize) -> String {
    format!("{record_scene}_r{row}_c{col}")
}

/// Write patches as PNGs under `root` and a manifest describing them.
pub fn write_manifest(
    samples: &[(PairedPatchSample, Split)],
    root: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(root.join("a"))?;
    fs::create_dir_all(root.join("b"))?;
    if samples.iter().any(|(s, _)| s.mask.is_some()) {
        fs::create_dir_all(root.join("mask"))?;
    }
    let mut records = Vec::with_capacity(samples.len());
    for (sample, split) in samples {
        let stem = record_stem(&sample.scene_id, sample.anchor.0, sample.anchor.1);
        let a_path = format!("a/{stem}.png");
        let b_path = format!("b/{stem}.png");
        sample
            .patch_a
            .save(root.join(&a_path))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        sample
            .patch_b
            .save(root.join(&b_path))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mask_path = match &sample.mask {
            None => None,
            Some(mask) => {
                let p = format!("mask/{stem}.png");
                mask.save(root.join(&p)).map_err(|e| Error::Io(std::io::Error::other(e)))?;
                Some(p)
            }
        };
        records.push(ManifestRecord {
            scene_id: sample.scene_id.clone(),
            row: sample.anchor.0,
            col: sample.anchor.1,
            split: *split,
            a_path,
            b_path,
            mask_path,
        });
    }
    let mut file = fs::File::create(root.join(MANIFEST_FILE))?;
    for record in &records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Integrity(format!("cannot encode manifest record: {e}")))?;
        writeln!(file, "{line}")?;
    }
    Ok(DatasetManifest { root: root.to_path_buf(), records })
}

/// Parse manifest text into records. Pure; does not touch the filesystem.
pub fn parse_manifest_str(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::Integrity(format!("manifest line {}: {e}", i + 1)))?;
        if !seen.insert((record.scene_id.clone(), record.row, record.col)) {
            return Err(Error::Integrity(format!(
                "manifest line {}: duplicate anchor ({}, {}) for scene {}",
                i + 1,
                record.row,
                record.col,
                record.scene_id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Read a manifest file and verify that every referenced patch exists.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let file = fs::File::open(&path)
        .map_err(|e| Error::Integrity(format!("cannot open manifest {}: {e}", path.display())))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let records = parse_manifest_str(&text)?;
    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    for record in &records {
        let mut referenced = vec![&record.a_path, &record.b_path];
        if let Some(m) = &record.mask_path {
            referenced.push(m);
        }
        for rel in referenced {
            if !root.join(rel).is_file() {
                return Err(Error::Integrity(format!("manifest references missing file {rel}")));
            }
        }
    }
    Ok(DatasetManifest { root, records })
}
