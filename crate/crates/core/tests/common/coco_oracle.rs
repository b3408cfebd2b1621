//! Brute-force COCO segm mAP over explicit pixel sets, written without
//! reference to the library's matching or accumulation code.

use std::collections::{BTreeSet, HashSet};

use depthstack::eval::{BinaryMask, GroundTruth, Instance, Predictions};
use rand::Rng;

type PixelSet = HashSet<(u32, u32)>;

fn pixel_set(m: &BinaryMask) -> PixelSet {
    let mut s = HashSet::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) {
                s.insert((x, y));
            }
        }
    }
    s
}

fn iou(a: &PixelSet, b: &PixelSet) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Returns per-threshold AP (0-100, `None` without ground truth) and the mAP.
pub fn oracle_map(preds: &Predictions, gt: &GroundTruth) -> (Vec<Option<f64>>, Option<f64>) {
    let gt_px: Vec<PixelSet> = gt.instances.iter().map(|g| pixel_set(&g.mask)).collect();
    let pr_px: Vec<PixelSet> = preds.instances.iter().map(|p| pixel_set(&p.mask)).collect();
    let categories: BTreeSet<u64> = gt
        .instances
        .iter()
        .chain(&preds.instances)
        .map(|i| i.category_id)
        .collect();
    let images: BTreeSet<u64> = gt.images.keys().copied().collect();

    let mut aps = Vec::new();
    for k in 0..10 {
        let t = (50 + 5 * k) as f64 / 100.0;
        let mut sum = 0.0;
        let mut counted = 0;
        for &c in &categories {
            let n_gt = gt.instances.iter().filter(|g| g.category_id == c).count();
            if n_gt == 0 {
                continue;
            }
            // (score, image, id, hit)
            let mut detections: Vec<(f64, u64, u64, bool)> = Vec::new();
            for &img in &images {
                let mut gts: Vec<usize> = (0..gt.instances.len())
                    .filter(|&i| gt.instances[i].image_id == img && gt.instances[i].category_id == c)
                    .collect();
                gts.sort_by_key(|&i| gt.instances[i].id);
                let mut ps: Vec<usize> = (0..preds.instances.len())
                    .filter(|&i| preds.instances[i].image_id == img && preds.instances[i].category_id == c)
                    .collect();
                // selection sort on (score desc, id asc)
                let mut ordered = Vec::new();
                while !ps.is_empty() {
                    let mut best = 0;
                    for j in 1..ps.len() {
                        let (a, b) = (&preds.instances[ps[j]], &preds.instances[ps[best]]);
                        if a.score > b.score || (a.score == b.score && a.id < b.id) {
                            best = j;
                        }
                    }
                    ordered.push(ps.remove(best));
                }
                ordered.truncate(100);
                let mut used: HashSet<usize> = HashSet::new();
                for &p in &ordered {
                    let candidates: Vec<(usize, f64)> = gts
                        .iter()
                        .filter(|g| !used.contains(g))
                        .map(|&g| (g, iou(&pr_px[p], &gt_px[g])))
                        .filter(|&(_, v)| v >= t)
                        .collect();
                    let pick = candidates.iter().copied().reduce(|a, b| {
                        if b.1 > a.1 || (b.1 == a.1 && gt.instances[b.0].id < gt.instances[a.0].id) {
                            b
                        } else {
                            a
                        }
                    });
                    if let Some((g, _)) = pick {
                        used.insert(g);
                    }
                    let inst = &preds.instances[p];
                    detections.push((inst.score, inst.image_id, inst.id, pick.is_some()));
                }
            }
            detections.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut points = Vec::new();
            let (mut tp, mut fp) = (0u64, 0u64);
            for d in &detections {
                if d.3 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
            }
            let mut acc = 0.0;
            for r in 0..=100 {
                let r = r as f64 * 0.01;
                let best = points
                    .iter()
                    .filter(|(rec, _)| *rec >= r)
                    .map(|(_, p)| *p)
                    .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
                acc += best.unwrap_or(0.0);
            }
            sum += acc / 101.0;
            counted += 1;
        }
        aps.push((counted > 0).then(|| sum / counted as f64 * 100.0));
    }
    let map = aps.iter().copied().sum::<Option<f64>>().map(|s| s / 10.0);
    (aps, map)
}

fn random_rect(rng: &mut impl Rng, w: u32, h: u32) -> BinaryMask {
    let x0 = rng.random_range(0..w);
    let y0 = rng.random_range(0..h);
    let x1 = rng.random_range(x0 + 1..=w);
    let y1 = rng.random_range(y0 + 1..=h);
    BinaryMask::from_pixels(w, h, (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y))))
}

fn jitter(rng: &mut impl Rng, m: &BinaryMask) -> BinaryMask {
    let mut out = m.clone();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if rng.random_bool(0.12) {
                out.set(x, y, !m.get(x, y));
            }
        }
    }
    out
}

/// Up to 5 images with up to 6 ground-truth and 6 predicted masks each,
/// over two categories, with coarse scores so ties occur.
pub fn random_instance(rng: &mut impl Rng) -> (GroundTruth, Predictions) {
    let mut gt = GroundTruth::default();
    let mut preds = Predictions::default();
    let n_images = rng.random_range(1..=5);
    let (mut gid, mut pid) = (0u64, 0u64);
    for img in 0..n_images {
        let (w, h) = (rng.random_range(4..=12), rng.random_range(4..=12));
        let image_id = 10 + img as u64 * 3;
        gt.images.insert(
            image_id,
            depthstack::eval::ImageInfo {
                id: image_id,
                file_name: format!("img{img}.png"),
                width: w,
                height: h,
            },
        );
        let n_gt = rng.random_range(0..=6);
        let mut masks = Vec::new();
        for _ in 0..n_gt {
            let m = random_rect(rng, w, h);
            let category_id = rng.random_range(1..=2);
            masks.push((m.clone(), category_id));
            gt.instances.push(Instance {
                id: gid,
                image_id,
                category_id,
                mask: m,
                score: 1.0,
            });
            gid += 1;
        }
        let n_pred = rng.random_range(0..=6);
        for _ in 0..n_pred {
            let (mask, category_id) = if !masks.is_empty() && rng.random_bool(0.7) {
                let (m, c) = &masks[rng.random_range(0..masks.len())];
                let c = if rng.random_bool(0.1) { 3 - *c } else { *c };
                let m = if rng.random_bool(0.2) { m.clone() } else { jitter(rng, m) };
                (m, c)
            } else {
                (random_rect(rng, w, h), rng.random_range(1..=2))
            };
            preds.instances.push(Instance {
                id: pid,
                image_id,
                category_id,
                mask,
                score: rng.random_range(1..=5) as f64 / 5.0,
            });
            pid += 1;
        }
    }
    (gt, preds)
}
