use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::MultiChannelImage;

/// Texture with blob structure (for the detector) and pixel noise (for
/// census matching), values in `[0, 1]`, row-major.
pub fn texture(width: u32, height: u32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as usize, height as usize);
    let mut t = vec![0.5f32; w * h];
    let blobs = (w * h / 150).max(8);
    for _ in 0..blobs {
        let cx = rng.random_range(0.0..w as f32);
        let cy = rng.random_range(0.0..h as f32);
        let r = rng.random_range(2.5f32..9.0);
        let amp = rng.random_range(-0.35f32..0.35);
        let reach = (3.0 * r).ceil() as i64;
        for y in (cy as i64 - reach).max(0)..(cy as i64 + reach).min(h as i64) {
            for x in (cx as i64 - reach).max(0)..(cx as i64 + reach).min(w as i64) {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                t[y as usize * w + x as usize] += amp * (-d2 / (2.0 * r * r)).exp();
            }
        }
    }
    for v in t.iter_mut() {
        *v = (*v + rng.random_range(-0.08f32..0.08)).clamp(0.0, 1.0);
    }
    t
}

/// `n` RGB frames of a camera panning across one texture by `shift_px`
/// per frame: frame `k` at `(x, y)` shows texture column `x + k * shift_px`.
pub fn panning_sequence(width: u32, height: u32, n: usize, shift_px: u32, seed: u64) -> Vec<MultiChannelImage> {
    let tw = width + shift_px * n.saturating_sub(1) as u32;
    let tex = texture(tw, height, seed);
    (0..n)
        .map(|k| {
            let off = k as u32 * shift_px;
            MultiChannelImage::rgb_from_fn(width, height, |x, y| {
                let v = tex[(y * tw + x + off) as usize];
                let q = |g: f32, o: f32| ((g * v + o) * 255.0).round().clamp(0.0, 255.0) as u8;
                [q(0.9, 0.05), q(0.8, 0.15), q(0.6, 0.1)]
            })
        })
        .collect()
}
