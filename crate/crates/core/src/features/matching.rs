use rayon::prelude::*;

use super::{Descriptor, MatchPair};

/// Nearest and second-nearest neighbour of `q` in `set` (lowest index wins ties).
fn two_nearest(q: &Descriptor, set: &[Descriptor]) -> Option<(usize, f32, Option<f32>)> {
    let mut best: Option<(usize, f32)> = None;
    let mut second: Option<f32> = None;
    for (j, d) in set.iter().enumerate() {
        let dist = q.distance(d);
        match best {
            None => best = Some((j, dist)),
            Some((_, b)) if dist < b => {
                second = Some(b);
                best = Some((j, dist));
            }
            Some(_) => {
                if second.is_none_or(|s| dist < s) {
                    second = Some(dist);
                }
            }
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Lowe ratio test with a mutual nearest-neighbour cross-check.
///
/// The output is one-to-one and ordered by `index_a`.
pub fn match_features(a: &[Descriptor], b: &[Descriptor], ratio_max: f32) -> Vec<MatchPair> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let back: Vec<usize> = b
        .par_iter()
        .map(|d| two_nearest(d, a).map(|(j, _, _)| j).unwrap_or(usize::MAX))
        .collect();
    a.par_iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let (j, dist, second) = two_nearest(d, b)?;
            let ratio = match second {
                None => 0.0,
                Some(s) if s > 0.0 => dist / s,
                // two exact duplicates in `b`: ambiguous unless both are zero away
                Some(_) => 1.0,
            };
            (back[j] == i && ratio <= ratio_max).then_some(MatchPair {
                index_a: i,
                index_b: j,
                distance: dist,
                ratio,
            })
        })
        .collect()
}
