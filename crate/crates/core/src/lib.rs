//! Dynamic-occlusion scene simulation with paired frames and event streams,
//! event-based background reconstruction, and image-quality evaluation.
//!
//! The pipeline, end to end:
//!
//! 1. [`scene`] samples discs over a background and renders them at any time.
//! 2. [`events`] converts a densely rendered sequence into an event stream.
//! 3. [`repr`] bins a stream into fixed-interval signed-count frames.
//! 4. [`recon`] integrates events onto the first frame's log intensities to
//!    recover what the discs hide.
//! 5. [`metrics`] scores reconstructions, stratified by coverage.
//! 6. [`dataset`] stores all of the above in a checksummed directory layout.

pub mod background;
pub mod checksum;
pub mod dataset;
pub mod error;
pub mod events;
pub mod frame;
pub mod metrics;
pub mod recon;
pub mod repr;
pub mod scene;
pub mod sequence;

pub use error::{Error, Result};
pub use events::{EventCameraParams, EventRecord, EventStream, LogFrame};
pub use frame::IntensityFrame;
pub use metrics::MetricsReport;
pub use recon::AccumParams;
pub use scene::{OcclusionMask, Particle, SceneConfig, SceneScript};
