//! Core algorithms for the `remn` video-object-segmentation pipeline:
//! dense tensor kernels, mask-gated local attention, the dynamic memory
//! bank with adaptive sampling and recurrent compression, the synthetic
//! scenario generator, and the benchmark harness.

pub mod asm;
pub mod benchmark;
pub mod config;
pub mod error;
pub mod frm;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod pnm;
pub mod rrm;
pub mod synth;
pub mod tensor;

pub use benchmark::{run_benchmark, BenchmarkReport, BenchmarkRun, Policy};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{segment_video, Frame, FrameResult, PipelineConfig, PipelineParams};
pub use synth::{generate_synthetic_video, ScenarioKind, ScenarioSpec};
pub use tensor::{DenseArray, LabelMask};
