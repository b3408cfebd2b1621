use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_f_8point, sampson_distance, FundamentalMatrix, GeometryError, PointPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    /// Inlier bound on the Sampson distance, in pixels (compared squared).
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold_px: 1.0,
            confidence: 0.999,
            max_iters: 2000,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.threshold_px > 0.0) {
            return Err(GeometryError::InvalidParams("threshold_px must be > 0".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(GeometryError::InvalidParams("confidence must be in (0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(GeometryError::InvalidParams("max_iters must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobustFit {
    pub f: FundamentalMatrix,
    pub inlier_mask: Vec<bool>,
    pub iterations_used: usize,
    /// Root-mean-square Sampson error of the inliers, in pixels.
    pub inlier_rms_sampson: f64,
}

impl RobustFit {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&m| m).count()
    }

    pub fn inliers<'a>(&'a self, pairs: &'a [PointPair]) -> impl Iterator<Item = &'a PointPair> + 'a {
        pairs
            .iter()
            .zip(&self.inlier_mask)
            .filter_map(|(p, &m)| m.then_some(p))
    }
}

fn score(f: &FundamentalMatrix, pairs: &[PointPair], thr2: f64) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = pairs.iter().map(|p| sampson_distance(f, p) < thr2).collect();
    let count = mask.iter().filter(|&&m| m).count();
    (mask, count)
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let good_sample = inlier_ratio.powi(8);
    if good_sample >= 1.0 {
        return 1;
    }
    if good_sample <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good_sample).ln();
    if n.is_finite() { n.ceil().max(1.0) as usize } else { usize::MAX }
}

/// Seeded eight-point RANSAC with adaptive termination and a final
/// re-estimate on all inliers.
pub fn ransac_f(pairs: &[PointPair], params: &RansacParams) -> Result<RobustFit, GeometryError> {
    params.validate()?;
    if pairs.len() < 8 {
        return Err(GeometryError::NotEnoughPoints {
            needed: 8,
            got: pairs.len(),
        });
    }
    let thr2 = params.threshold_px * params.threshold_px;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(FundamentalMatrix, Vec<bool>, usize)> = None;
    let mut needed = params.max_iters;
    let mut iterations = 0;
    let mut subset = Vec::with_capacity(8);
    while iterations < needed.min(params.max_iters) {
        iterations += 1;
        subset.clear();
        subset.extend(sample(&mut rng, pairs.len(), 8).into_iter().map(|i| pairs[i]));
        let Ok(f) = estimate_f_8point(&subset) else {
            continue;
        };
        let (mask, count) = score(&f, pairs, thr2);
        if best.as_ref().is_none_or(|b| count > b.2) {
            needed = required_iterations(count as f64 / pairs.len() as f64, params.confidence);
            best = Some((f, mask, count));
        }
    }
    let found = best.as_ref().map_or(0, |b| b.2);
    let Some((mut f, mut mask, mut count)) = best.filter(|b| b.2 >= 8) else {
        return Err(GeometryError::TooFewInliers { found, iterations });
    };
    let inliers: Vec<PointPair> = pairs.iter().zip(&mask).filter_map(|(p, &m)| m.then_some(*p)).collect();
    if let Ok(refit) = estimate_f_8point(&inliers) {
        let (refit_mask, refit_count) = score(&refit, pairs, thr2);
        if refit_count >= 8 && refit_count >= count {
            f = refit;
            mask = refit_mask;
            count = refit_count;
        }
    }
    let sum: f64 = pairs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| sampson_distance(&f, p))
        .sum();
    Ok(RobustFit {
        f,
        inlier_mask: mask,
        iterations_used: iterations,
        inlier_rms_sampson: (sum / count as f64).sqrt(),
    })
}
