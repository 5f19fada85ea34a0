//! Change-detection evaluation: differencing detector, confusion-matrix
//! metrics, and the total-variation image statistic.
//!
//! The detector thresholds the per-pixel mean absolute channel difference
//! of an image pair, either at a fixed value or by Otsu's method, and the
//! resulting binary map is scored against the ground-truth change mask.
//! Counts are pooled over the whole evaluation set into a single
//! confusion matrix.

use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::data::{load_rgb, normalize, DatasetManifest};
use crate::model::{Domain, GeneratorPair, ImagePatch};
use crate::{Error, Result};

/// Plain binary raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMap {
    pub fn from_gray(mask: &GrayImage) -> Self {
        let (w, h) = mask.dimensions();
        let data = mask.pixels().map(|p| p.0[0] >= 128).collect();
        Self { height: h as usize, width: w as usize, data }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdMethod {
    /// Mark pixels whose mean absolute difference exceeds `t` (on the
    /// model's [-1, 1] value scale, so differences live in [0, 2]).
    Fixed(f64),
    Otsu,
}

/// Binary change prediction plus the threshold that produced it.
#[derive(Debug, Clone)]
pub struct ChangeMap {
    pub map: BinaryMap,
    pub threshold: f64,
    pub method: ThresholdMethod,
}

fn mean_abs_diff(x: &ImagePatch, y: &ImagePatch) -> Result<Vec<f64>> {
    if x.dims() != y.dims() {
        return Err(Error::Dimension(format!(
            "change map operands differ: {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let (c, h, w) = x.dims();
    let xv = x.tensor().flatten_all()?.to_vec1::<f32>()?;
    let yv = y.tensor().flatten_all()?.to_vec1::<f32>()?;
    let mut diff = vec![0f64; h * w];
    for ch in 0..c {
        let base = ch * h * w;
        for (i, d) in diff.iter_mut().enumerate() {
            *d += (xv[base + i] as f64 - yv[base + i] as f64).abs();
        }
    }
    for d in &mut diff {
        *d /= c as f64;
    }
    Ok(diff)
}

/// Otsu's threshold over a 256-bin histogram of values in [0, 2].
fn otsu_threshold(values: &[f64]) -> f64 {
    const BINS: usize = 256;
    const RANGE: f64 = 2.0;
    let binw = RANGE / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        let bin = ((v / binw) as usize).min(BINS - 1);
        hist[bin] += 1;
    }
    let total = values.len() as f64;
    let total_sum: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let mut best_k = 0usize;
    let mut best_var = -1.0f64;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    for k in 0..BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_sum - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_k = k;
        }
    }
    (best_k as f64 + 1.0) * binw
}

/// Threshold the per-pixel mean absolute channel difference of a pair.
pub fn difference_change_map(
    x: &ImagePatch,
    y: &ImagePatch,
    method: ThresholdMethod,
) -> Result<ChangeMap> {
    let diff = mean_abs_diff(x, y)?;
    let threshold = match method {
        ThresholdMethod::Fixed(t) => t,
        ThresholdMethod::Otsu => otsu_threshold(&diff),
    };
    let (_, h, w) = x.dims();
    let data = diff.iter().map(|&d| d > threshold).collect();
    Ok(ChangeMap { map: BinaryMap { height: h, width: w, data }, threshold, method })
}

/// Pixel counts with "changed" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

pub fn confusion(pred: &ChangeMap, gt: &BinaryMap) -> Result<ConfusionCounts> {
    if pred.map.height != gt.height || pred.map.width != gt.width {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.map.height, pred.map.width, gt.height, gt.width
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &g) in pred.map.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// Marks which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub miou: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CDMetrics {
    pub accuracy: f64,
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flags: DegenerateFlags,
}

/// Ratio with zero-denominator reported as 0 plus a raised flag.
fn guarded(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

pub fn cd_metrics(c: &ConfusionCounts) -> Result<CDMetrics> {
    if c.total() == 0 {
        return Err(Error::Config("cannot compute metrics of an empty confusion matrix".into()));
    }
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let mut flags = DegenerateFlags::default();
    let accuracy = (tp + tn) / c.total() as f64;
    let precision = guarded(tp, tp + fp, &mut flags.precision);
    let recall = guarded(tp, tp + fn_, &mut flags.recall);
    let f1 = guarded(2.0 * precision * recall, precision + recall, &mut flags.f1);
    // Mean IoU over {change, no-change}; a class with an empty union
    // contributes 0 and raises the flag.
    let iou_change = guarded(tp, tp + fp + fn_, &mut flags.miou);
    let iou_nochange = guarded(tn, tn + fp + fn_, &mut flags.miou);
    let miou = 0.5 * (iou_change + iou_nochange);
    Ok(CDMetrics { accuracy, miou, precision, recall, f1, flags })
}

/// Anisotropic total variation via forward differences, averaged over
/// channels, per pixel, on the 8-bit [0, 255] scale.
pub fn total_variation(image: &ImagePatch) -> Result<f64> {
    let (c, h, w) = image.dims();
    let v = image.tensor().flatten_all()?.to_vec1::<f32>()?;
    let scale = 255.0 / 2.0;
    let mut per_channel_sum = 0.0f64;
    for ch in 0..c {
        let base = ch * h * w;
        let px = |y: usize, x: usize| (v[base + y * w + x] as f64 + 1.0) * scale;
        let mut tv = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    tv += (px(y, x + 1) - px(y, x)).abs();
                }
                if y + 1 < h {
                    tv += (px(y + 1, x) - px(y, x)).abs();
                }
            }
        }
        per_channel_sum += tv / (h * w) as f64;
    }
    Ok(per_channel_sum / c as f64)
}

/// Total variation of the pixelwise difference image; alternative detail
/// statistic for paired readings.
pub fn total_variation_of_difference(a: &ImagePatch, b: &ImagePatch) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!("tv operands differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let half = ((a.tensor() - b.tensor())? / 2.0)?;
    total_variation(&ImagePatch::new(half)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    A2b,
    B2a,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::A2b => Domain::A,
            Direction::B2a => Domain::B,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::A2b => f.write_str("a2b"),
            Direction::B2a => f.write_str("b2a"),
        }
    }
}

/// Where the candidate image of each evaluated pair comes from.
pub enum TranslationSource<'a> {
    /// No translation: compare the raw bi-temporal pair (the "base"
    /// protocol row).
    Identity,
    /// Translate on the fly with a generator pair.
    Model { pair: &'a GeneratorPair, direction: Direction },
    /// Pre-translated patches stored on disk, named `<stem>.png` like the
    /// dataset patches.
    Directory { dir: &'a Path, direction: Direction },
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub threshold: ThresholdMethod,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { threshold: ThresholdMethod::Otsu }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scene_id: String,
    pub row: usize,
    pub col: usize,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub tv: f64,
}

/// Pooled evaluation result for one method row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub counts: ConfusionCounts,
    pub metrics: CDMetrics,
    pub mean_tv: f64,
    pub samples: Vec<SampleRecord>,
}

impl EvalReport {
    /// Fixed-width text table, one row per report.
    pub fn table(rows: &[EvalReport]) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>8} {:>8} {:>10} {:>8} {:>8} {:>10}\n",
            "method", "acc", "miou", "precision", "recall", "f1", "tv"
        ));
        for r in rows {
            out.push_str(&format!(
                "{:<20} {:>8.4} {:>8.4} {:>10.4} {:>8.4} {:>8.4} {:>10.3}\n",
                r.label,
                r.metrics.accuracy,
                r.metrics.miou,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                r.mean_tv
            ));
        }
        out
    }
}

/// Run change detection over every manifest record and pool the counts.
///
/// For each sample the candidate is compared against the *other* epoch's
/// original: with `a2b`, translated A against real B; identity compares A
/// against B directly.
pub fn evaluate_translation(
    source: &TranslationSource,
    manifest: &DatasetManifest,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Config("evaluation manifest is empty".into()));
    }
    let mut pooled = ConfusionCounts::default();
    let mut tv_sum = 0.0f64;
    let mut samples = Vec::with_capacity(manifest.len());
    for record in &manifest.records {
        let mask = manifest
            .load_mask(record)?
            .ok_or_else(|| Error::Config(format!("record {} has no change mask", record.scene_id)))?;
        let gt = BinaryMap::from_gray(&mask);
        let (a, b) = manifest.load_pair(record)?;
        let (candidate, reference) = match source {
            TranslationSource::Identity => (a, b),
            TranslationSource::Model { pair, direction } => {
                let src = direction.source();
                let input = if src == Domain::A { &a } else { &b };
                let translated = pair.translate(src, input)?;
                let reference = if src == Domain::A { b } else { a };
                (translated, reference)
            }
            TranslationSource::Directory { dir, direction } => {
                let stem = format!("{}_r{}_c{}.png", record.scene_id, record.row, record.col);
                let img = load_rgb(&dir.join(&stem))?;
                let translated = normalize(&img)?;
                let reference = match direction {
                    Direction::A2b => b,
                    Direction::B2a => a,
                };
                (translated, reference)
            }
        };
        let pred = difference_change_map(&candidate, &reference, opts.threshold)?;
        let counts = confusion(&pred, &gt)?;
        let tv = total_variation(&candidate)?;
        pooled.merge(&counts);
        tv_sum += tv;
        samples.push(SampleRecord {
            scene_id: record.scene_id.clone(),
            row: record.row,
            col: record.col,
            threshold: pred.threshold,
            counts,
            tv,
        });
    }
    let label = match source {
        TranslationSource::Identity => "base".to_string(),
        TranslationSource::Model { direction, .. } => format!("model_{direction}"),
        TranslationSource::Directory { direction, .. } => format!("dir_{direction}"),
    };
    Ok(EvalReport {
        label,
        counts: pooled,
        metrics: cd_metrics(&pooled)?,
        mean_tv: tv_sum / manifest.len() as f64,
        samples,
    })
}

/// Write per-sample records as JSON lines next to the pooled table.
pub fn write_sample_records(report: &EvalReport, path: &PathBuf) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for s in &report.samples {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Integrity(format!("cannot encode sample record: {e}")))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Tensor};

    fn patch_from(vals: Vec<f32>, c: usize, h: usize, w: usize) -> ImagePatch {
        ImagePatch::new(Tensor::from_vec(vals, (c, h, w), &Device::Cpu).unwrap()).unwrap()
    }

    fn uniform_patch(v: f32, c: usize, h: usize, w: usize) -> ImagePatch {
        patch_from(vec![v; c * h * w], c, h, w)
    }

    #[test]
    fn identical_pair_yields_empty_map() {
        let x = uniform_patch(0.25, 3, 8, 8);
        let map = difference_change_map(&x, &x, ThresholdMethod::Otsu).unwrap();
        assert_eq!(map.map.count_ones(), 0);
    }

    #[test]
    fn fixed_zero_threshold_marks_every_differing_pixel() {
        let mut vals = vec![0.0f32; 3 * 4 * 4];
        vals[5] = 0.5;
        vals[3 * 4 * 4 - 1] = -0.25;
        let x = patch_from(vals, 3, 4, 4);
        let y = uniform_patch(0.0, 3, 4, 4);
        let map = difference_change_map(&x, &y, ThresholdMethod::Fixed(0.0)).unwrap();
        assert_eq!(map.map.count_ones(), 2);
        assert!(map.map.data[5]);
        assert!(map.map.data[15]);
    }

    #[test]
    fn otsu_recovers_a_changed_square() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (h, w) = (32, 32);
        let mut xv = vec![0.0f32; 3 * h * w];
        let mut yv = vec![0.0f32; 3 * h * w];
        for i in 0..xv.len() {
            let noise: f32 = rng.random_range(-0.05..0.05);
            xv[i] = noise;
            yv[i] = rng.random_range(-0.05..0.05);
        }
        // changed square: rows 8..16, cols 8..16
        let mut gt = vec![false; h * w];
        for y in 8..16 {
            for x in 8..16 {
                for c in 0..3 {
                    xv[c * h * w + y * w + x] += 0.5;
                }
                gt[y * w + x] = true;
            }
        }
        let pred = difference_change_map(
            &patch_from(xv, 3, h, w),
            &patch_from(yv, 3, h, w),
            ThresholdMethod::Otsu,
        )
        .unwrap();
        let inter = pred.map.data.iter().zip(&gt).filter(|(p, g)| **p && **g).count();
        let union = pred.map.data.iter().zip(&gt).filter(|(p, g)| **p || **g).count();
        assert!(inter as f64 / union as f64 >= 0.9, "IoU {}", inter as f64 / union as f64);
    }

    #[test]
    fn confusion_counts_simple_cases() {
        let mut gt_data = vec![false; 1000];
        for slot in gt_data.iter_mut().take(100) {
            *slot = true;
        }
        let gt = BinaryMap { height: 20, width: 50, data: gt_data.clone() };
        let pred = ChangeMap {
            map: BinaryMap { height: 20, width: 50, data: gt_data.clone() },
            threshold: 0.0,
            method: ThresholdMethod::Fixed(0.0),
        };
        let c = confusion(&pred, &gt).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (100, 0, 0, 900));

        let inverted = ChangeMap {
            map: BinaryMap { height: 20, width: 50, data: gt_data.iter().map(|b| !b).collect() },
            threshold: 0.0,
            method: ThresholdMethod::Fixed(0.0),
        };
        let c = confusion(&inverted, &gt).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!((c.fp, c.fn_), (900, 100));
    }

    #[test]
    fn confusion_matches_pixel_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let pred_data: Vec<bool> = (0..256).map(|_| rng.random()).collect();
            let gt_data: Vec<bool> = (0..256).map(|_| rng.random()).collect();
            let pred = ChangeMap {
                map: BinaryMap { height: 16, width: 16, data: pred_data.clone() },
                threshold: 0.0,
                method: ThresholdMethod::Fixed(0.0),
            };
            let gt = BinaryMap { height: 16, width: 16, data: gt_data.clone() };
            let got = confusion(&pred, &gt).unwrap();
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for i in 0..256 {
                match (pred_data[i], gt_data[i]) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            assert_eq!((got.tp, got.fp, got.fn_, got.tn), (tp, fp, fn_, tn));
        }
    }

    #[test]
    fn confusion_rejects_shape_mismatch() {
        let pred = ChangeMap {
            map: BinaryMap { height: 4, width: 4, data: vec![false; 16] },
            threshold: 0.0,
            method: ThresholdMethod::Fixed(0.0),
        };
        let gt = BinaryMap { height: 4, width: 5, data: vec![false; 20] };
        assert!(matches!(confusion(&pred, &gt), Err(Error::Dimension(_))));
    }

    #[test]
    fn metrics_worked_example() {
        let c = ConfusionCounts { tp: 50, fp: 10, fn_: 10, tn: 930 };
        let m = cd_metrics(&c).unwrap();
        assert!((m.precision - 0.8333).abs() < 1e-4);
        assert!((m.recall - 0.8333).abs() < 1e-4);
        assert!((m.f1 - 0.8333).abs() < 1e-4);
        assert!((m.accuracy - 0.98).abs() < 1e-12);
        let want_miou = 0.5 * (50.0 / 70.0 + 930.0 / 950.0);
        assert!((m.miou - want_miou).abs() < 1e-12);
        assert_eq!(m.flags, DegenerateFlags::default());
    }

    #[test]
    fn metrics_perfect_prediction() {
        let c = ConfusionCounts { tp: 40, fp: 0, fn_: 0, tn: 60 };
        let m = cd_metrics(&c).unwrap();
        for v in [m.accuracy, m.miou, m.precision, m.recall, m.f1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn metrics_vacuous_case_flags_zero_denominators() {
        let c = ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 100 };
        let m = cd_metrics(&c).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert!(m.flags.precision && m.flags.recall && m.flags.f1 && m.flags.miou);
        assert!(matches!(cd_metrics(&ConfusionCounts::default()), Err(Error::Config(_))));
    }

    #[test]
    fn tv_constant_and_ramp() {
        let flat = uniform_patch(0.3, 3, 8, 8);
        assert_eq!(total_variation(&flat).unwrap(), 0.0);

        // Ramp with slope exactly 1 (on the 8-bit scale) per pixel along x.
        let (h, w) = (8, 16);
        let mut vals = vec![0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                vals[y * w + x] = (x as f32) * (2.0 / 255.0) - 1.0;
            }
        }
        let ramp = patch_from(vals, 1, h, w);
        let tv = total_variation(&ramp).unwrap();
        let want = (w - 1) as f64 / w as f64; // one unit per interior step
        assert!((tv - want).abs() < 1e-6, "tv {tv} want {want}");
    }

    #[test]
    fn tv_matches_nested_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let vals: Vec<f32> = (0..3 * 8 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let patch = patch_from(vals.clone(), 3, 8, 8);
        let got = total_variation(&patch).unwrap();
        // Independent nested-loop accumulation in a different order.
        let mut want = 0.0f64;
        let to255 = |v: f32| (v as f64 + 1.0) * 127.5;
        for c in 0..3 {
            let at = |y: usize, x: usize| to255(vals[c * 64 + y * 8 + x]);
            let mut acc = 0.0;
            for y in 0..8 {
                for x in 0..7 {
                    acc += (at(y, x + 1) - at(y, x)).abs();
                }
            }
            for x in 0..8 {
                for y in 0..7 {
                    acc += (at(y + 1, x) - at(y, x)).abs();
                }
            }
            want += acc / 64.0;
        }
        want /= 3.0;
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn exhaustive_tiny_masks_match_brute_force() {
        // All 65,536 4x4 prediction masks against 3 fixed ground truths.
        let gts: [u16; 3] = [0x0000, 0x00ff, 0xad05];
        for gt_bits in gts {
            let gt = BinaryMap {
                height: 4,
                width: 4,
                data: (0..16).map(|i| gt_bits >> i & 1 == 1).collect(),
            };
            for pred_bits in 0..=u16::MAX {
                let pred = ChangeMap {
                    map: BinaryMap {
                        height: 4,
                        width: 4,
                        data: (0..16).map(|i| pred_bits >> i & 1 == 1).collect(),
                    },
                    threshold: 0.0,
                    method: ThresholdMethod::Fixed(0.0),
                };
                let got = cd_metrics(&confusion(&pred, &gt).unwrap()).unwrap();

                // Single-pass brute force, recomputed from the bit masks.
                let (mut tp, mut fp, mut fn_, mut tn) = (0f64, 0f64, 0f64, 0f64);
                for i in 0..16 {
                    let p = pred_bits >> i & 1 == 1;
                    let g = gt_bits >> i & 1 == 1;
                    match (p, g) {
                        (true, true) => tp += 1.0,
                        (true, false) => fp += 1.0,
                        (false, true) => fn_ += 1.0,
                        (false, false) => tn += 1.0,
                    }
                }
                let acc = (tp + tn) / 16.0;
                let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
                let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
                let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
                let iou_c = if tp + fp + fn_ == 0.0 { 0.0 } else { tp / (tp + fp + fn_) };
                let iou_n = if tn + fp + fn_ == 0.0 { 0.0 } else { tn / (tn + fp + fn_) };
                let miou = 0.5 * (iou_c + iou_n);
                assert_eq!(got.accuracy, acc);
                assert_eq!(got.precision, prec);
                assert_eq!(got.recall, rec);
                assert_eq!(got.f1, f1);
                assert_eq!(got.miou, miou);
            }
        }
    }

    #[test]
    fn adding_a_correct_positive_never_decreases_recall_or_f1() {
        // Move one pixel from fn to tp repeatedly.
        let mut c = ConfusionCounts { tp: 3, fp: 7, fn_: 20, tn: 70 };
        let mut prev = cd_metrics(&c).unwrap();
        while c.fn_ > 0 {
            c.tp += 1;
            c.fn_ -= 1;
            let next = cd_metrics(&c).unwrap();
            assert!(next.recall >= prev.recall - 1e-12);
            assert!(next.f1 >= prev.f1 - 1e-12);
            prev = next;
        }
    }
}
