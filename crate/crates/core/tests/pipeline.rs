use std::path::{Path, PathBuf};

use depthstack::pipeline::{
    depth_from_frames, ingest, make_triples, panning_sequence, run_pipeline, FrameOrdering, FrameSource,
    PipelineConfig, PipelineError, RectificationMode, Stage,
};
use depthstack::raster::{save_raster, MultiChannelImage};
use depthstack::stack::{read_stack, StackSpec};
use depthstack::stereo::DisparityRange;

fn small_config(frames: &Path, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.frames.dir = frames.to_path_buf();
    c.output_dir = out.to_path_buf();
    c.sgm.range = DisparityRange::new(0, 16);
    c.fusion.normalization = depthstack::fusion::DepthNormalization::fixed(DisparityRange::new(0, 16));
    c
}

fn write_frames(dir: &Path, frames: &[MultiChannelImage]) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let p = dir.join(format!("frame_{k:03}.png"));
            save_raster(f, &p).unwrap();
            p
        })
        .collect()
}

#[test]
fn windowing_examples() {
    let names = |n: usize| (0..n).map(|k| PathBuf::from(format!("f{k:03}.png"))).collect::<Vec<_>>();
    let t = make_triples(&names(5), 1).unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t[0].frame_indices, [0, 1, 2]);
    assert_eq!(t[2].frame_indices, [2, 3, 4]);
    assert!(matches!(make_triples(&names(2), 1), Err(PipelineError::Ingest(_))));
    let t = make_triples(&names(100), 3).unwrap();
    // centres 3..=96
    assert_eq!(t.len(), 100 - 2 * 3);
    for (k, tr) in t.iter().enumerate() {
        let [p, c, n] = tr.frame_indices;
        assert_eq!((tr.index, c - p, n - c), (k, 3, 3));
    }
    assert!(make_triples(&names(6), 3).is_err());
}

#[test]
fn ingest_filters_and_orders() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["b.png", "a.PNG", "c.jpg", "notes.txt", "d.png"] {
        std::fs::write(dir.path().join(name), b"").unwrap();
    }
    let src = FrameSource {
        dir: dir.path().to_path_buf(),
        ordering: FrameOrdering::Lexicographic,
        stride: 1,
        extensions: vec!["png".into(), "jpg".into()],
    };
    let t = ingest(&src).unwrap();
    let centres: Vec<_> = t.iter().map(|t| t.center.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(centres, ["b.png", "c.jpg"]);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let mut c = PipelineConfig::default();
    c.seed = 42;
    c.stack.specs = StackSpec::ALL.to_vec();
    c.fusion.normalization = depthstack::fusion::DepthNormalization::PerImage;
    let text = c.to_toml_string();
    assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);
    let reference = PipelineConfig::reference_toml();
    assert_eq!(PipelineConfig::from_toml_str(&reference).unwrap(), PipelineConfig::default());
    for key in ["p1 = 10", "p2 = 120", "stride = 1", "agree_tol = 1.0", "max_dets = 100", "hessian_threshold"] {
        assert!(reference.contains(key), "reference config lacks {key}");
    }
    assert!(PipelineConfig::from_toml_str("[sgm]\np3 = 1\n").is_err());
    assert!(PipelineConfig::from_toml_str("bogus = 1\n").is_err());
    let partial = PipelineConfig::from_toml_str("seed = 7\n[sgm]\np2 = 200\n").unwrap();
    assert_eq!((partial.seed, partial.sgm.p2, partial.sgm.p1), (7, 200, 10));
}

#[test]
fn config_validation() {
    let mut c = PipelineConfig::default();
    c.frames.stride = 0;
    assert!(matches!(c.validate_params(), Err(PipelineError::Config(_))));
    let mut c = PipelineConfig::default();
    c.stack.specs.clear();
    assert!(c.validate_params().is_err());
    let mut c = PipelineConfig::default();
    c.frames.dir = PathBuf::from("/definitely/not/here");
    assert!(c.validate_params().is_ok());
    assert!(c.validate().is_err());
}

#[test]
fn synthetic_triple_recovers_shift() {
    let frames = panning_sequence(320, 240, 3, 5, 11);
    let c = small_config(Path::new("."), Path::new("."));
    let r = depth_from_frames(&frames[0], &frames[1], &frames[2], &c, 1).unwrap();
    let d = &r.diagnostics;
    assert!(d.prev.mirrored && !d.next.mirrored);
    assert_eq!(d.prev.rectification, RectificationMode::RowAligned);
    let median = d.median_disparity.unwrap();
    assert!((median - 5.0).abs() <= 0.25, "median {median}");
    assert!(d.rejected_fraction < 0.05, "rejected {}", d.rejected_fraction);
    assert!(d.fused_valid_fraction >= r.prev_map.valid_fraction());
    assert!(d.fused_valid_fraction >= r.next_map.valid_fraction());
}

#[test]
fn guards_name_the_failure() {
    let frames = panning_sequence(256, 192, 3, 5, 12);
    let c = small_config(Path::new("."), Path::new("."));
    let e = depth_from_frames(&frames[1], &frames[1], &frames[1], &c, 1).unwrap_err();
    assert_eq!(e.stage, Stage::Geometry);
    assert!(e.message.contains("insufficient parallax"), "{e}");
    let flat = MultiChannelImage::rgb_from_fn(256, 192, |_, _| [90, 120, 60]);
    let e = depth_from_frames(&flat, &flat, &flat, &c, 1).unwrap_err();
    assert!(e.message.contains("too few matches"), "{e}");
}

#[test]
fn pipeline_writes_stacks_exposure_and_summary() {
    let root = tempfile::tempdir().unwrap();
    let frames_dir = root.path().join("frames");
    write_frames(&frames_dir, &panning_sequence(256, 192, 5, 4, 3));
    let mut c = small_config(&frames_dir, &root.path().join("out"));
    c.stack.specs = vec![StackSpec::RGB_D];
    let s = run_pipeline(&c).unwrap();
    assert_eq!((s.triples, s.succeeded, s.failed), (3, 3, 0), "{:?}", s.failures);
    for t in 0..3 {
        let st = read_stack(c.output_dir.join(format!("triple_{t:05}_RGB-D.mcim"))).unwrap();
        assert_eq!(st.image.channel_count(), 4);
    }
    assert!(c.output_dir.join("exposure.txt").is_file());
    assert!(c.output_dir.join("exposure.json").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c.output_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["succeeded"], 3);
}

#[test]
fn failed_triples_do_not_stop_the_batch() {
    let root = tempfile::tempdir().unwrap();
    let frames_dir = root.path().join("frames");
    let mut frames = panning_sequence(256, 192, 5, 4, 5);
    // a repeated frame makes the middle triple's two pairs degenerate on one side
    frames[2] = frames[1].clone();
    frames[3] = frames[1].clone();
    write_frames(&frames_dir, &frames);
    let c = small_config(&frames_dir, &root.path().join("out"));
    let s = run_pipeline(&c).unwrap();
    assert_eq!(s.succeeded + s.failed, s.triples);
    assert!(s.failed >= 1);
    assert!(s.failures.iter().all(|f| !f.message.is_empty()));
}

#[test]
fn config_errors_abort_before_processing() {
    let root = tempfile::tempdir().unwrap();
    let frames_dir = root.path().join("frames");
    write_frames(&frames_dir, &panning_sequence(64, 48, 3, 4, 5));
    let mut c = small_config(&frames_dir, &root.path().join("out"));
    // 128-pixel disparity cannot fit a 64-pixel frame
    c.sgm.range = DisparityRange::new(0, 128);
    assert!(matches!(run_pipeline(&c), Err(PipelineError::Config(_))));
    assert!(!c.output_dir.exists());
}

/// Background plane and a nearer disk, seen from a camera that translates
/// horizontally and rolls by `angle` about the image centre.
fn two_layer_view(shift_bg: f64, shift_fg: f64, angle: f64) -> MultiChannelImage {
    use depthstack::pipeline::texture;
    let (w, h, pad) = (320u32, 240u32, 40u32);
    let (tw, th) = (w + 2 * pad, h + 2 * pad);
    let bg = texture(tw, th, 21);
    let fg = texture(tw, th, 22);
    let sample = |x: f64, y: f64, t: &[f32]| {
        let xi = (x + pad as f64).round().clamp(0.0, tw as f64 - 1.0) as u32;
        let yi = (y + pad as f64).round().clamp(0.0, th as f64 - 1.0) as u32;
        t[(yi * tw + xi) as usize]
    };
    let (s, c) = angle.sin_cos();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    MultiChannelImage::rgb_from_fn(w, h, |qx, qy| {
        let (dx, dy) = (qx as f64 - cx, qy as f64 - cy);
        let px = c * dx + s * dy + cx;
        let py = -s * dx + c * dy + cy;
        let v = if in_disk(px + shift_fg, py) {
            sample(px + shift_fg, py, &fg)
        } else {
            sample(px + shift_bg, py, &bg)
        };
        let q = |g: f32, o: f32| ((g * v + o) * 255.0).round().clamp(0.0, 255.0) as u8;
        [q(0.9, 0.05), q(0.8, 0.15), q(0.6, 0.1)]
    })
}

fn in_disk(x: f64, y: f64) -> bool {
    (x - 170.0).hypot(y - 120.0) < 70.0
}

#[test]
fn rolled_camera_goes_through_rectification() {
    let a = 2f64.to_radians();
    let center = two_layer_view(0.0, 0.0, 0.0);
    let next = two_layer_view(4.0, 8.0, a);
    let prev = two_layer_view(-4.0, -8.0, -a);
    let mut c = PipelineConfig::default();
    c.sgm.range = DisparityRange::new(0, 24);
    let r = depth_from_frames(&prev, &center, &next, &c, 1).unwrap();
    for d in [&r.diagnostics.prev, &r.diagnostics.next] {
        assert_eq!(d.rectification, RectificationMode::Projective);
        assert!(d.vertical_rms_px < 0.5, "{d:?}");
    }
    let median = |pick: &dyn Fn(f64) -> bool| {
        let mut v: Vec<f32> = (20..220u32)
            .flat_map(|y| (30..290u32).map(move |x| (x, y)))
            .filter(|&(x, y)| pick((x as f64 - 170.0).hypot(y as f64 - 120.0)))
            .map(|(x, y)| r.fused.map.get(x, y))
            .filter(|v| !v.is_nan())
            .collect();
        v.sort_by(f32::total_cmp);
        v[v.len() / 2]
    };
    let (near, far) = (median(&|r| r < 60.0), median(&|r| r > 80.0));
    // rectification rescales disparity, but depth order survives
    assert!(near > far + 2.0, "near {near}, far {far}");
}

#[test]
fn reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let frames_dir = root.path().join("frames");
    write_frames(&frames_dir, &panning_sequence(256, 192, 4, 4, 8));
    let mut outputs = Vec::new();
    for run in 0..2 {
        let mut c = small_config(&frames_dir, &root.path().join(format!("out{run}")));
        c.stack.specs = vec![StackSpec::LAB_D, StackSpec::DEPTH];
        c.seed = 99;
        c.workers = 1 + run * 2;
        let s = run_pipeline(&c).unwrap();
        assert_eq!(s.failed, 0);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&c.output_dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 2 * 2 + 3);
    assert_eq!(outputs[0], outputs[1]);
}
