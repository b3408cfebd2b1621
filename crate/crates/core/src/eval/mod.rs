//! Instance-segmentation evaluation under the COCO protocol: polygon
//! rasterization, mask IoU, greedy matching and 101-point interpolated AP
//! averaged over IoU thresholds 0.50:0.05:0.95.

mod coco;
mod mask;
mod protocol;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coco::{
    predictions_from_coco, read_annotations, read_predictions, write_annotations, write_predictions, CocoAnnotation,
    CocoDataset, CocoPrediction,
};
pub use mask::{mask_iou, polygon_from_flat, rasterize, rasterize_polygons, BinaryMask};
pub use protocol::{
    average_precision, iou_thresholds, match_instances, mean_average_precision, recall_points, Assignment,
    EvalParams,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid polygon: {0}")]
    BadPolygon(String),
    #[error("mask size mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("unknown image id {0}")]
    UnknownImage(u64),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("instances from different images ({0} and {1}) passed to a per-image operation")]
    MixedImages(u64, u64),
    #[error("invalid score {0} (must be finite)")]
    BadScore(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

/// One ground-truth or predicted instance. `score` is ignored for ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub mask: BinaryMask,
    pub score: f64,
}

/// Images plus ground-truth instances.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub images: BTreeMap<u64, ImageInfo>,
    pub instances: Vec<Instance>,
}

impl GroundTruth {
    /// Checks unique ids, known images and mask sizes.
    pub fn validate(&self) -> Result<(), EvalError> {
        check_instances(&self.images, &self.instances, "annotation")
    }

    /// Keeps only the given images and their instances.
    pub fn restrict(&self, keep: &BTreeSet<u64>) -> GroundTruth {
        GroundTruth {
            images: self
                .images
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(&id, info)| (id, info.clone()))
                .collect(),
            instances: self
                .instances
                .iter()
                .filter(|i| keep.contains(&i.image_id))
                .cloned()
                .collect(),
        }
    }

    /// `n` image ids drawn without replacement, reproducible for a seed.
    /// Returns every image when `n` is at least the image count.
    pub fn sample_images(&self, n: usize, seed: u64) -> BTreeSet<u64> {
        use rand::SeedableRng;
        let ids: Vec<u64> = self.images.keys().copied().collect();
        if n >= ids.len() {
            return ids.into_iter().collect();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, ids.len(), n)
            .into_iter()
            .map(|k| ids[k])
            .collect()
    }
}

/// Scored predicted instances.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    pub instances: Vec<Instance>,
}

impl Predictions {
    pub fn validate(&self, gt: &GroundTruth) -> Result<(), EvalError> {
        check_instances(&gt.images, &self.instances, "prediction")?;
        if let Some(p) = self.instances.iter().find(|p| !p.score.is_finite()) {
            return Err(EvalError::BadScore(p.score));
        }
        Ok(())
    }

    pub fn restrict(&self, keep: &BTreeSet<u64>) -> Predictions {
        Predictions {
            instances: self
                .instances
                .iter()
                .filter(|i| keep.contains(&i.image_id))
                .cloned()
                .collect(),
        }
    }
}

fn check_instances(
    images: &BTreeMap<u64, ImageInfo>,
    instances: &[Instance],
    kind: &'static str,
) -> Result<(), EvalError> {
    let mut seen = HashSet::with_capacity(instances.len());
    for inst in instances {
        if !seen.insert(inst.id) {
            return Err(EvalError::DuplicateId { kind, id: inst.id });
        }
        let info = images.get(&inst.image_id).ok_or(EvalError::UnknownImage(inst.image_id))?;
        let dims = (inst.mask.width(), inst.mask.height());
        if dims != (info.width, info.height) {
            return Err(EvalError::DimensionMismatch {
                a: dims,
                b: (info.width, info.height),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// `(TP / (TP + FP), TP / (TP + FN))`, each 0 when its denominator is 0.
pub fn precision_recall(t: &Tally) -> (f64, f64) {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(t.tp, t.tp + t.fp), ratio(t.tp, t.tp + t.fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou_threshold: f64,
    /// 0 to 100; absent when there is no ground truth.
    pub ap: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    #[serde(flatten)]
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub ground_truths: usize,
    pub predictions: usize,
    pub per_threshold: Vec<ThresholdResult>,
    /// Mean of the per-threshold AP values, 0 to 100.
    pub map: Option<f64>,
    pub precision_at_50: f64,
    pub recall_at_50: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>9} {:>7} {:>6} {:>6} {:>6}",
            "IoU", "AP", "Precision", "Recall", "TP", "FP", "FN"
        );
        for r in &self.per_threshold {
            let _ = writeln!(
                out,
                "{:<6.2} {:>6} {:>9.3} {:>7.3} {:>6} {:>6} {:>6}",
                r.iou_threshold,
                fmt_opt(r.ap),
                r.precision,
                r.recall,
                r.tally.tp,
                r.tally.fp,
                r.tally.fn_
            );
        }
        let _ = writeln!(out, "{:<6} {:>6}", "mAP", fmt_opt(self.map));
        let _ = writeln!(
            out,
            "images {}  ground truth {}  predictions {}  precision@0.5 {:.3}  recall@0.5 {:.3}",
            self.images, self.ground_truths, self.predictions, self.precision_at_50, self.recall_at_50
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// mAP comparison grid: one row per condition, one column per input variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl MapTable {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics when the row length differs from the column count.
    pub fn push_row(&mut self, condition: impl Into<String>, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.columns.len(), "row length");
        self.rows.push((condition.into(), values));
    }

    /// Tab-separated, `"<variant> (mAP)"` headers, one decimal, `-` when absent.
    pub fn to_table(&self) -> String {
        let mut out = String::from("Light condition");
        for c in &self.columns {
            let _ = write!(out, "\t{c} (mAP)");
        }
        out.push('\n');
        for (cond, values) in &self.rows {
            out.push_str(cond);
            for v in values {
                let _ = write!(out, "\t{}", fmt_opt(*v));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_denominators() {
        assert_eq!(precision_recall(&Tally { tp: 0, fp: 0, fn_: 5 }), (0.0, 0.0));
        assert_eq!(precision_recall(&Tally { tp: 8, fp: 2, fn_: 0 }), (0.8, 1.0));
    }

    #[test]
    fn sampling_is_seeded() {
        let mut gt = GroundTruth::default();
        for id in 0..50 {
            gt.images.insert(
                id,
                ImageInfo {
                    id,
                    file_name: format!("{id}.png"),
                    width: 4,
                    height: 4,
                },
            );
        }
        let a = gt.sample_images(10, 7);
        assert_eq!(a.len(), 10);
        assert_eq!(a, gt.sample_images(10, 7));
        assert_ne!(a, gt.sample_images(10, 8));
        assert_eq!(gt.sample_images(80, 7).len(), 50);
    }
}
