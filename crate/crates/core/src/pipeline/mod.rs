//! Frames in, fused depth, channel stacks and exposure reports out.

mod config;
mod depth;
mod ingest;
mod run;
mod synthetic;

use thiserror::Error;

pub use config::{
    ExposureParams, FrameOrdering, FrameSource, FusionParams, GuardParams, MatchingParams, PipelineConfig, RansacConfig,
    StackParams,
};
pub use depth::{
    depth_from_frames, load_frame, pair_disparity, pair_seed, run_depth, DepthDiagnostics, DepthResult, FrameFeatures,
    PairDiagnostics, RectificationMode, Stage, StageError,
};
pub use ingest::{ingest, list_frames, make_triples, order_frames, FrameTriple};
pub use run::{output_name, output_paths, run_pipeline, Aggregate, ExposureSummary, FailureRecord, PipelineSummary, TripleRecord};
pub use synthetic::{panning_sequence, texture};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
