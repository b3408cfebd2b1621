use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mask_iou, precision_recall, EvalError, EvalReport, GroundTruth, Instance, Predictions, Tally, ThresholdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// Highest-scored predictions kept per image and category.
    pub max_dets: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { max_dets: 100 }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// 0.00, 0.01, ..., 1.00.
pub fn recall_points() -> [f64; 101] {
    std::array::from_fn(|k| k as f64 * 0.01)
}

/// Greedy matching of one image's predictions against its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// For each prediction (input order), the matched ground-truth index.
    pub matches: Vec<Option<usize>>,
    pub tally: Tally,
}

/// Score-descending order, lower id first on ties.
fn by_score<'a>(preds: impl Iterator<Item = &'a Instance>) -> Vec<&'a Instance> {
    let mut v: Vec<&Instance> = preds.collect();
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    v
}

/// Each prediction, in score order, takes the unmatched same-category
/// ground truth with the highest IoU at or above `iou_t` (lowest id on ties).
pub fn match_instances(preds: &[Instance], gts: &[Instance], iou_t: f64) -> Result<Assignment, EvalError> {
    if let Some(first) = preds.iter().chain(gts).next() {
        if let Some(other) = preds.iter().chain(gts).find(|i| i.image_id != first.image_id) {
            return Err(EvalError::MixedImages(first.image_id, other.image_id));
        }
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(preds[a].id.cmp(&preds[b].id)));
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&g| gts[g].id);

    let mut taken = vec![false; gts.len()];
    let mut matches = vec![None; preds.len()];
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for &g in &gt_order {
            if taken[g] || gts[g].category_id != preds[p].category_id {
                continue;
            }
            let iou = mask_iou(&preds[p].mask, &gts[g].mask)?;
            if iou >= iou_t && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matches[p] = Some(g);
        }
    }
    let tp = matches.iter().flatten().count() as u64;
    Ok(Assignment {
        matches,
        tally: Tally {
            tp,
            fp: preds.len() as u64 - tp,
            fn_: gts.len() as u64 - tp,
        },
    })
}

/// One (image, category) cell with its IoU matrix precomputed.
struct Cell {
    image_id: u64,
    category_id: u64,
    /// `(score, id)` in score order, truncated to `max_dets`.
    preds: Vec<(f64, u64)>,
    n_gt: usize,
    /// Row per prediction, column per ground truth (ascending id).
    ious: Vec<f64>,
}

impl Cell {
    fn greedy(&self, iou_t: f64) -> Vec<bool> {
        let mut taken = vec![false; self.n_gt];
        let mut tp = vec![false; self.preds.len()];
        for (p, flag) in tp.iter_mut().enumerate() {
            let row = &self.ious[p * self.n_gt..(p + 1) * self.n_gt];
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if !taken[g] && iou >= iou_t && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                *flag = true;
            }
        }
        tp
    }
}

struct Prepared {
    cells: Vec<Cell>,
}

fn prepare(preds: &Predictions, gt: &GroundTruth, params: &EvalParams) -> Result<Prepared, EvalError> {
    if params.max_dets == 0 {
        return Err(EvalError::InvalidParams("max_dets must be at least 1".into()));
    }
    gt.validate()?;
    preds.validate(gt)?;
    type Slot<'a> = (Vec<&'a Instance>, Vec<&'a Instance>);
    let mut slots: BTreeMap<(u64, u64), Slot> = BTreeMap::new();
    for g in &gt.instances {
        slots.entry((g.image_id, g.category_id)).or_default().0.push(g);
    }
    for p in &preds.instances {
        slots.entry((p.image_id, p.category_id)).or_default().1.push(p);
    }
    let slots: Vec<((u64, u64), Slot)> = slots.into_iter().collect();
    let cells = slots
        .into_par_iter()
        .map(|((image_id, category_id), (mut gts, ps))| {
            gts.sort_by_key(|g| g.id);
            let mut ps = by_score(ps.into_iter());
            ps.truncate(params.max_dets);
            let mut ious = Vec::with_capacity(ps.len() * gts.len());
            for p in &ps {
                for g in &gts {
                    ious.push(mask_iou(&p.mask, &g.mask)?);
                }
            }
            Ok(Cell {
                image_id,
                category_id,
                preds: ps.iter().map(|p| (p.score, p.id)).collect(),
                n_gt: gts.len(),
                ious,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Prepared { cells })
}

/// Interpolated AP of one category as a fraction.
/// `ranked` holds `(score, image_id, id, is_tp)`.
fn category_ap(ranked: &mut [(f64, u64, u64, bool)], n_gt: usize) -> f64 {
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for &(_, _, _, hit) in ranked.iter() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in recall_points() {
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}

fn evaluate_threshold(prep: &Prepared, iou_t: f64) -> (Option<f64>, Tally) {
    type Ranked = (Vec<(f64, u64, u64, bool)>, usize);
    let mut per_category: BTreeMap<u64, Ranked> = BTreeMap::new();
    let mut tally = Tally::default();
    for cell in &prep.cells {
        let hits = cell.greedy(iou_t);
        let tp = hits.iter().filter(|&&h| h).count() as u64;
        tally.tp += tp;
        tally.fp += hits.len() as u64 - tp;
        tally.fn_ += cell.n_gt as u64 - tp;
        let entry = per_category.entry(cell.category_id).or_default();
        entry.1 += cell.n_gt;
        entry
            .0
            .extend(cell.preds.iter().zip(hits).map(|(&(s, id), h)| (s, cell.image_id, id, h)));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ranked, n_gt) in per_category.values_mut() {
        if *n_gt == 0 {
            continue;
        }
        sum += category_ap(ranked, *n_gt);
        n += 1;
    }
    let ap = (n > 0).then(|| sum / n as f64 * 100.0);
    (ap, tally)
}

/// AP (0 to 100) at one IoU threshold, averaged over categories that have
/// ground truth; `None` when no category does.
pub fn average_precision(preds: &Predictions, gt: &GroundTruth, iou_t: f64) -> Result<Option<f64>, EvalError> {
    let prep = prepare(preds, gt, &EvalParams::default())?;
    Ok(evaluate_threshold(&prep, iou_t).0)
}

/// AP at each threshold of [`iou_thresholds`] and their mean.
pub fn mean_average_precision(
    preds: &Predictions,
    gt: &GroundTruth,
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    let prep = prepare(preds, gt, params)?;
    let per_threshold: Vec<ThresholdResult> = iou_thresholds()
        .into_iter()
        .map(|t| {
            let (ap, tally) = evaluate_threshold(&prep, t);
            let (precision, recall) = precision_recall(&tally);
            ThresholdResult {
                iou_threshold: t,
                ap,
                precision,
                recall,
                tally,
            }
        })
        .collect();
    let map = per_threshold
        .iter()
        .map(|r| r.ap)
        .sum::<Option<f64>>()
        .map(|s| s / per_threshold.len() as f64);
    let at_50 = &per_threshold[0];
    Ok(EvalReport {
        images: gt.images.len(),
        ground_truths: gt.instances.len(),
        predictions: preds.instances.len(),
        precision_at_50: at_50.precision,
        recall_at_50: at_50.recall,
        map,
        per_threshold,
    })
}
