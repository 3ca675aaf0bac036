//! One simulated sequence: scene, first frame, ground truth and events.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::background::procedural_background;
use crate::checksum::mix_seed;
use crate::error::{Error, Result};
use crate::events::{generate_events, EventCameraParams, EventStream};
use crate::frame::IntensityFrame;
use crate::repr::{build_representations, default_tau, ReprStack, DEFAULT_N_REPR};
use crate::scene::{sample_scene, OcclusionMask, SceneConfig, SceneScript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundSource {
    Procedural { seed: u64 },
    /// 8-bit grayscale PNG/PGM with the scene's dimensions.
    File { path: PathBuf },
}

impl BackgroundSource {
    pub fn load(&self, width: usize, height: usize) -> Result<IntensityFrame> {
        let frame = match self {
            BackgroundSource::Procedural { seed } => procedural_background(width, height, *seed),
            BackgroundSource::File { path } => IntensityFrame::read_image(path)?,
        };
        frame.ensure_dims(width, height)?;
        Ok(frame)
    }
}

/// Everything needed to regenerate a sequence bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub scene: SceneConfig,
    pub camera: EventCameraParams,
    pub n_repr: usize,
    /// Representation interval; `None` splits the sequence evenly.
    pub tau_us: Option<u64>,
    pub background: BackgroundSource,
}

impl SequenceSpec {
    /// Spec for sequence `index` of a dataset: scene and background seeds
    /// are derived from the base seed.
    pub fn derived(base_seed: u64, index: u64, scene: SceneConfig, camera: EventCameraParams) -> Self {
        let seq_seed = mix_seed(base_seed, index);
        Self {
            scene: SceneConfig {
                seed: mix_seed(seq_seed, 1),
                ..scene
            },
            camera,
            n_repr: DEFAULT_N_REPR,
            tau_us: None,
            background: BackgroundSource::Procedural {
                seed: mix_seed(seq_seed, 2),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.validate()?;
        if self.n_repr == 0 {
            return Err(Error::Config("at least one event representation is required".into()));
        }
        if self.tau_us == Some(0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SequenceArtifacts {
    pub script: SceneScript,
    /// Occluded frame at t = 0.
    pub occluded: IntensityFrame,
    /// Occlusion-free background.
    pub gt: IntensityFrame,
    /// Ground-truth occlusion at t = 0.
    pub mask: OcclusionMask,
    pub events: EventStream,
    pub repr: ReprStack,
}

impl SequenceArtifacts {
    pub fn coverage(&self) -> f64 {
        self.mask.coverage_ratio()
    }
}

pub fn simulate_sequence(spec: &SequenceSpec) -> Result<SequenceArtifacts> {
    spec.validate()?;
    let scene = &spec.scene;
    let background = Arc::new(spec.background.load(scene.width, scene.height)?);
    let script = sample_scene(scene, background.clone())?;
    let (occluded, mask) = script.render_frame(0.0);
    let events = generate_events(&script, &spec.camera, 0.0, scene.duration)?;
    let tau = spec.tau_us.unwrap_or_else(|| default_tau(&events, spec.n_repr));
    let repr = build_representations(&events, spec.n_repr, tau)?;
    Ok(SequenceArtifacts {
        script,
        occluded,
        gt: background.as_ref().clone(),
        mask,
        events,
        repr,
    })
}
