//! Synthetic inputs for the criterion benches.

use depthstack::eval::{BinaryMask, GroundTruth, ImageInfo, Instance, Predictions};
use depthstack::raster::{GrayImage, MultiChannelImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lightly smoothed uniform noise in `[0, 1]`.
pub fn textured_gray(w: u32, h: u32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = GrayImage::from_fn(w, h, |_, _| rng.random::<f32>());
    GrayImage::from_fn(w, h, |x, y| {
        let x1 = (x + 1).min(w - 1);
        let y1 = (y + 1).min(h - 1);
        (2.0 * n.get(x, y) + n.get(x1, y) + n.get(x, y1)) / 4.0
    })
}

/// Rectified pair with a constant disparity `d`.
pub fn shifted_pair(w: u32, h: u32, d: u32, seed: u64) -> (GrayImage, GrayImage) {
    let wide = textured_gray(w + d, h, seed);
    let left = GrayImage::from_fn(w, h, |x, y| wide.get(x, y));
    let right = GrayImage::from_fn(w, h, |x, y| wide.get(x + d, y));
    (left, right)
}

pub fn random_frame(w: u32, h: u32, seed: u64) -> MultiChannelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MultiChannelImage::rgb_from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}

fn rect(w: u32, h: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
    BinaryMask::from_pixels(w, h, (y0..y0 + bh).flat_map(|y| (x0..x0 + bw).map(move |x| (x, y))))
}

/// `images` images of `side`² pixels, each with `per_image` rectangular
/// objects and one jittered prediction per object plus a false positive.
pub fn eval_dataset(images: u64, per_image: u64, side: u32, seed: u64) -> (GroundTruth, Predictions) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gt = GroundTruth::default();
    let mut preds = Predictions::default();
    let mut next_id = 0u64;
    for img in 0..images {
        gt.images.insert(
            img,
            ImageInfo {
                id: img,
                file_name: format!("{img:05}.png"),
                width: side,
                height: side,
            },
        );
        for k in 0..=per_image {
            let bw = rng.random_range(side / 8..side / 3);
            let bh = rng.random_range(side / 8..side / 3);
            let x0 = rng.random_range(0..side - bw);
            let y0 = rng.random_range(0..side - bh);
            let category_id = 1 + k % 3;
            if k < per_image {
                gt.instances.push(Instance {
                    id: next_id,
                    image_id: img,
                    category_id,
                    mask: rect(side, side, x0, y0, bw, bh),
                    score: 1.0,
                });
            }
            let dx = rng.random_range(0..=bw / 4).min(side - x0 - bw);
            preds.instances.push(Instance {
                id: next_id,
                image_id: img,
                category_id,
                mask: rect(side, side, x0 + dx, y0, bw, bh),
                score: rng.random(),
            });
            next_id += 1;
        }
    }
    (gt, preds)
}
