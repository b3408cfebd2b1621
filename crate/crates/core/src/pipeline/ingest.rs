use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{FrameOrdering, FrameSource};
use super::PipelineError;

/// A centre frame with its neighbours `stride` frames before and after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameTriple {
    /// Position in the triple list; names the output files.
    pub index: usize,
    pub prev: PathBuf,
    pub center: PathBuf,
    pub next: PathBuf,
    /// Positions of (prev, center, next) in the ordered frame list.
    pub frame_indices: [usize; 3],
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a, b);
    loop {
        match (a.chars().next(), b.chars().next()) {
            (None, None) => return Ordering::Equal,
            (None, _) => return Ordering::Less,
            (_, None) => return Ordering::Greater,
            (Some(ca), Some(cb)) if ca.is_ascii_digit() && cb.is_ascii_digit() => {
                let ea = a.find(|c: char| !c.is_ascii_digit()).unwrap_or(a.len());
                let eb = b.find(|c: char| !c.is_ascii_digit()).unwrap_or(b.len());
                let (da, db) = (a[..ea].trim_start_matches('0'), b[..eb].trim_start_matches('0'));
                let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db)).then_with(|| ea.cmp(&eb));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[ea..];
                b = &b[eb..];
            }
            (Some(ca), Some(cb)) => {
                if ca != cb {
                    return ca.cmp(&cb);
                }
                a = &a[ca.len_utf8()..];
                b = &b[cb.len_utf8()..];
            }
        }
    }
}

/// Sorts file paths by name under `ordering`.
pub fn order_frames(paths: &mut [PathBuf], ordering: FrameOrdering) {
    let name = |p: &PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match ordering {
        FrameOrdering::Lexicographic => paths.sort_by_key(name),
        FrameOrdering::Natural => paths.sort_by(|a, b| natural_cmp(&name(a), &name(b)).then_with(|| name(a).cmp(&name(b)))),
    }
}

/// Frame files in `dir` with one of `extensions`, ordered.
pub fn list_frames(dir: &Path, ordering: FrameOrdering, extensions: &[String]) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let matches = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(&e)));
        if matches && path.is_file() {
            frames.push(path);
        }
    }
    order_frames(&mut frames, ordering);
    Ok(frames)
}

/// Overlapping triples `(f[i - s], f[i], f[i + s])` for every valid centre `i`.
pub fn make_triples(frames: &[PathBuf], stride: usize) -> Result<Vec<FrameTriple>, PipelineError> {
    if stride == 0 {
        return Err(PipelineError::Config("frames.stride must be >= 1".into()));
    }
    if frames.len() < 3 {
        return Err(PipelineError::Ingest(format!("need at least 3 frames, found {}", frames.len())));
    }
    if frames.len() < 2 * stride + 1 {
        return Err(PipelineError::Ingest(format!(
            "{} frames are too few for stride {stride} (need {})",
            frames.len(),
            2 * stride + 1
        )));
    }
    Ok((stride..frames.len() - stride)
        .enumerate()
        .map(|(index, c)| FrameTriple {
            index,
            prev: frames[c - stride].clone(),
            center: frames[c].clone(),
            next: frames[c + stride].clone(),
            frame_indices: [c - stride, c, c + stride],
        })
        .collect())
}

pub fn ingest(source: &FrameSource) -> Result<Vec<FrameTriple>, PipelineError> {
    let frames = list_frames(&source.dir, source.ordering, &source.extensions)?;
    make_triples(&frames, source.stride)
}
