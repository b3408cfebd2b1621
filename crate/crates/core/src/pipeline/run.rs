use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::depth::{depth_from_frames, load_frame, DepthDiagnostics, Stage, StageError};
use super::ingest::{ingest, FrameTriple};
use super::PipelineError;
use crate::color::ExposureAccumulator;
use crate::fusion::normalize_depth;
use crate::stack::{export_png, stack, write_stack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub triple: usize,
    pub center: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub triple: usize,
    pub frames: [String; 3],
    /// Output file names, relative to the output directory.
    pub outputs: Vec<String>,
    pub diagnostics: Option<DepthDiagnostics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_fused_valid_fraction: f64,
    pub mean_rejected_fraction: f64,
    pub mean_inliers: f64,
    pub mean_vertical_rms_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSummary {
    pub condition: String,
    pub dataset_stddev: f64,
    pub table: String,
    pub records: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub triples: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub specs: Vec<String>,
    pub records: Vec<TripleRecord>,
    pub failures: Vec<FailureRecord>,
    pub aggregate: Aggregate,
    pub exposure: Option<ExposureSummary>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn output_name(triple: usize, tag: &str) -> String {
    format!("triple_{triple:05}_{tag}.mcim")
}

fn process(triple: &FrameTriple, config: &PipelineConfig) -> Result<TripleRecord, StageError> {
    let prev = load_frame(&triple.prev)?;
    let center = load_frame(&triple.center)?;
    let next = load_frame(&triple.next)?;
    let depth = depth_from_frames(&prev, &center, &next, config, triple.frame_indices[1])?;
    let plane = normalize_depth(&depth.fused.map, &config.fusion.normalization)
        .map_err(|e| StageError::new(Stage::Fusion, e))?;
    let mut outputs = Vec::new();
    for spec in &config.stack.specs {
        let tag = spec.file_tag();
        let s = stack(&center, spec.include_depth.then_some(&plane), *spec)
            .map_err(|e| StageError::new(Stage::Stack, e))?;
        let name = output_name(triple.index, &tag);
        write_stack(&s, config.output_dir.join(&name)).map_err(|e| StageError::new(Stage::Write, e))?;
        outputs.push(name);
        if config.stack.export_png {
            let stem = format!("triple_{:05}_{tag}", triple.index);
            for p in export_png(&s, &config.output_dir, &stem).map_err(|e| StageError::new(Stage::Write, e))? {
                outputs.push(file_name(&p));
            }
        }
    }
    Ok(TripleRecord {
        triple: triple.index,
        frames: [file_name(&triple.prev), file_name(&triple.center), file_name(&triple.next)],
        outputs,
        diagnostics: Some(depth.diagnostics),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Depth, stacks and exposure for every triple of the configured frames.
///
/// Configuration and ingest problems abort; per-triple problems are
/// recorded and the batch continues. Writes `summary.json` and the
/// exposure report into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let triples = ingest(&config.frames)?;
    let first = load_frame(&triples[0].center).map_err(|e| PipelineError::Ingest(e.to_string()))?;
    config
        .sgm
        .validate(first.width())
        .map_err(|e| PipelineError::Config(format!("sgm: {e}")))?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| PipelineError::Io {
        path: config.output_dir.display().to_string(),
        source,
    })?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<TripleRecord, StageError>> =
        pool.install(|| triples.par_iter().map(|t| process(t, config)).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in triples.iter().zip(results) {
        match r {
            Ok(rec) => {
                if let Some(d) = &rec.diagnostics {
                    log::info!(
                        "triple {:05} ({}): valid {:.3}, rejected {:.3}, inliers {}/{}",
                        t.index,
                        file_name(&t.center),
                        d.fused_valid_fraction,
                        d.rejected_fraction,
                        d.prev.inliers,
                        d.next.inliers
                    );
                }
                records.push(rec);
            }
            Err(e) => {
                log::warn!("triple {:05} ({}) failed at {}", t.index, file_name(&t.center), e);
                failures.push(FailureRecord {
                    triple: t.index,
                    center: file_name(&t.center),
                    stage: e.stage,
                    message: e.message,
                });
            }
        }
    }

    let mut acc = ExposureAccumulator::new();
    for t in &triples {
        // unreadable centres already appear as failures
        if let Ok(frame) = load_frame(&t.center) {
            acc.add(file_name(&t.center), &frame)
                .map_err(|e| PipelineError::Ingest(e.to_string()))?;
        }
    }
    let exposure = match acc.finish(&config.exposure.condition) {
        Ok(report) => {
            let (table, records_name) = ("exposure.txt".to_string(), "exposure.json".to_string());
            write_text(&config.output_dir.join(&table), &report.to_table())?;
            write_text(
                &config.output_dir.join(&records_name),
                &serde_json::to_string_pretty(&report).expect("report serializes"),
            )?;
            Some(ExposureSummary {
                condition: report.condition.clone(),
                dataset_stddev: report.dataset_stddev,
                table,
                records: records_name,
            })
        }
        Err(_) => None,
    };

    let diags: Vec<&DepthDiagnostics> = records.iter().filter_map(|r| r.diagnostics.as_ref()).collect();
    let aggregate = Aggregate {
        mean_fused_valid_fraction: mean(diags.iter().map(|d| d.fused_valid_fraction)),
        mean_rejected_fraction: mean(diags.iter().map(|d| d.rejected_fraction)),
        mean_inliers: mean(diags.iter().flat_map(|d| [d.prev.inliers as f64, d.next.inliers as f64])),
        mean_vertical_rms_px: mean(diags.iter().flat_map(|d| [d.prev.vertical_rms_px, d.next.vertical_rms_px])),
    };
    let summary = PipelineSummary {
        triples: triples.len(),
        succeeded: records.len(),
        failed: failures.len(),
        specs: config.stack.specs.iter().map(|s| s.to_string()).collect(),
        records,
        failures,
        aggregate,
        exposure,
    };
    write_text(
        &config.output_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

/// Output paths of a finished run, for callers that want absolute paths.
pub fn output_paths(config: &PipelineConfig, summary: &PipelineSummary) -> Vec<PathBuf> {
    summary
        .records
        .iter()
        .flat_map(|r| r.outputs.iter().map(|o| config.output_dir.join(o)))
        .collect()
}
