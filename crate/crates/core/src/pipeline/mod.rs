//! Scene I/O, preprocessing, chunk planning, budgeted execution and
//! composite-back.

pub mod cli;
pub mod config;
pub mod engine;
pub mod io;
pub mod plan;
pub mod preprocess;
pub mod report;
pub mod residency;
pub mod run;

pub use config::{Mode, SceneConfig};
pub use engine::{inpaint_sequence, residual_fill, FlowSource, InpaintStats, Inpainter, StageTimings};
pub use io::load_scene;
pub use plan::{plan_chunks, ChunkGroup, ChunkPlan};
pub use preprocess::{postprocess, preprocess, PreprocessRecord};
pub use report::RunReport;
pub use residency::{Backing, FrameStore, ResidencyTracker, Resident, Ticket};
pub use run::{run_inpaint, run_inpaint_with, InpaintRequest};
