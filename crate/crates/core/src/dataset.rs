//! On-disk sequence layout.
//!
//! ```text
//! <root>/<seq_id>/manifest.json
//!                 occluded.png  occluded.f32
//!                 gt.png        gt.f32
//!                 mask.png
//!                 events.evb
//!                 scene.json
//!                 repr/NN.s16   repr/NN.json
//! ```
//!
//! Data files are written and synced first; the manifest goes last via an
//! atomic rename. A directory without `manifest.json` is incomplete.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checksum::checksum64;
use crate::error::{Error, Result};
use crate::events::{decode_evb, encode_evb, EventCameraParams, EventStream};
use crate::frame::IntensityFrame;
use crate::repr::{AccumFrame, ReprStack};
use crate::scene::{OcclusionMask, SceneConfig};
use crate::sequence::{BackgroundSource, SequenceArtifacts, SequenceSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub occluded_png: String,
    pub occluded_f32: String,
    pub gt_png: String,
    pub gt_f32: String,
    pub mask_png: String,
    pub events: String,
    pub scene_script: String,
    pub repr: Vec<String>,
}

impl ManifestFiles {
    fn standard(n_repr: usize) -> Self {
        Self {
            occluded_png: "occluded.png".into(),
            occluded_f32: "occluded.f32".into(),
            gt_png: "gt.png".into(),
            gt_f32: "gt.f32".into(),
            mask_png: "mask.png".into(),
            events: "events.evb".into(),
            scene_script: "scene.json".into(),
            repr: (0..n_repr).map(|k| format!("repr/{k:02}.s16")).collect(),
        }
    }
}

/// Checksums are hex strings so that JSON readers without 64-bit integers
/// see them intact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub schema_version: u32,
    pub seq_id: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub scene: SceneConfig,
    pub camera: EventCameraParams,
    pub n_repr: usize,
    pub tau_us: Option<u64>,
    pub background: BackgroundSource,
    pub files: ManifestFiles,
    pub event_count: u64,
    pub event_span_us: (u64, u64),
    pub measured_coverage: f64,
    pub warnings: Vec<String>,
    pub checksums: BTreeMap<String, String>,
}

impl SequenceManifest {
    pub fn spec(&self) -> SequenceSpec {
        SequenceSpec {
            scene: self.scene,
            camera: self.camera,
            n_repr: self.n_repr,
            tau_us: self.tau_us,
            background: self.background.clone(),
        }
    }

    pub fn checksum_of(&self, file: &str) -> Option<u64> {
        self.checksums.get(file).and_then(|h| u64::from_str_radix(h, 16).ok())
    }
}

/// A validated, fully decoded sequence directory.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub dir: PathBuf,
    pub manifest: SequenceManifest,
    pub occluded: IntensityFrame,
    pub gt: IntensityFrame,
    pub mask: OcclusionMask,
    pub events: EventStream,
    pub repr: ReprStack,
    pub scene_json: String,
}

fn png_bytes(frame: &IntensityFrame) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    frame.to_gray8().write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    Ok(())
}

fn sync_dir(dir: &Path) -> Result<()> {
    // directories can be opened for fsync on unix; elsewhere this is a no-op
    #[cfg(unix)]
    fs::File::open(dir)?.sync_all()?;
    #[cfg(not(unix))]
    let _ = dir;
    Ok(())
}

pub fn write_sequence(dir: impl AsRef<Path>, spec: &SequenceSpec, artifacts: &SequenceArtifacts) -> Result<SequenceManifest> {
    let dir = dir.as_ref();
    let (w, h) = artifacts.occluded.dims();
    artifacts.gt.ensure_dims(w, h)?;
    artifacts.events.ensure_dims(w, h)?;
    if (artifacts.mask.width, artifacts.mask.height) != (w, h) {
        return Err(Error::Dimensions {
            expected: (w, h),
            actual: (artifacts.mask.width, artifacts.mask.height),
        });
    }

    fs::create_dir_all(dir.join("repr"))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
        sync_dir(dir)?;
    }

    let files = ManifestFiles::standard(artifacts.repr.len());
    let mut payloads: Vec<(String, Vec<u8>)> = vec![
        (files.occluded_png.clone(), png_bytes(&artifacts.occluded)?),
        (files.occluded_f32.clone(), artifacts.occluded.to_f32_bytes()),
        (files.gt_png.clone(), png_bytes(&artifacts.gt)?),
        (files.gt_f32.clone(), artifacts.gt.to_f32_bytes()),
        (files.mask_png.clone(), png_bytes(&artifacts.mask.to_frame())?),
        (files.events.clone(), encode_evb(&artifacts.events)),
        (files.scene_script.clone(), artifacts.script.to_json()?.into_bytes()),
    ];
    for (name, frame) in files.repr.iter().zip(&artifacts.repr.frames) {
        payloads.push((name.clone(), frame.to_s16_bytes()?));
        payloads.push((sidecar_name(name), frame.sidecar_json()?.into_bytes()));
    }

    let mut checksums = BTreeMap::new();
    for (name, bytes) in &payloads {
        write_synced(&dir.join(name), bytes)?;
        checksums.insert(name.clone(), format!("{:016x}", checksum64(bytes)));
    }
    sync_dir(&dir.join("repr"))?;

    let manifest = SequenceManifest {
        schema_version: SCHEMA_VERSION,
        seq_id: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        seed: spec.scene.seed,
        width: w,
        height: h,
        scene: spec.scene,
        camera: spec.camera,
        n_repr: spec.n_repr,
        tau_us: spec.tau_us,
        background: spec.background.clone(),
        files,
        event_count: artifacts.events.len() as u64,
        event_span_us: (artifacts.events.t_begin, artifacts.events.t_end),
        measured_coverage: artifacts.coverage(),
        warnings: artifacts.events.metadata.warnings.clone(),
        checksums,
    };
    let tmp = dir.join("manifest.json.tmp");
    write_synced(&tmp, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    fs::rename(&tmp, &manifest_path)?;
    sync_dir(dir)?;
    Ok(manifest)
}

fn sidecar_name(s16: &str) -> String {
    Path::new(s16).with_extension("json").to_string_lossy().into_owned()
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SequenceManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::format("manifest", "missing schema_version"))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Loads a sequence after checking every listed file against its checksum.
/// Nothing is decoded unless all files verify.
pub fn read_sequence(dir: impl AsRef<Path>) -> Result<LoadedSequence> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;

    let mut contents: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for (name, hex) in &manifest.checksums {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let expected = u64::from_str_radix(hex, 16)
            .map_err(|_| Error::format("manifest", format!("bad checksum {hex:?} for {name}")))?;
        let bytes = fs::read(&path)?;
        let actual = checksum64(&bytes);
        if actual != expected {
            return Err(Error::Checksum { path, expected, actual });
        }
        contents.insert(name.as_str(), bytes);
    }
    let files = &manifest.files;
    let mut take = |name: &str| -> Result<Vec<u8>> {
        contents
            .remove(name)
            .ok_or_else(|| Error::format("manifest", format!("{name} has no checksum entry")))
    };

    let (w, h) = (manifest.width, manifest.height);
    let occluded = IntensityFrame::from_f32_bytes(w, h, &take(&files.occluded_f32)?)?;
    let gt = IntensityFrame::from_f32_bytes(w, h, &take(&files.gt_f32)?)?;
    let mask_img = image::load_from_memory(&take(&files.mask_png)?)?.into_luma8();
    let mask_frame = IntensityFrame::new(
        mask_img.width() as usize,
        mask_img.height() as usize,
        mask_img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect(),
    )?;
    mask_frame.ensure_dims(w, h)?;
    let mask = OcclusionMask::from_frame(&mask_frame, 0.0);

    let mut events = decode_evb(&take(&files.events)?)?;
    events.ensure_dims(w, h)?;
    (events.t_begin, events.t_end) = manifest.event_span_us;
    events.metadata.warnings = manifest.warnings.clone();
    events.validate()?;

    let mut frames = Vec::with_capacity(files.repr.len());
    for name in &files.repr {
        let grid = take(name)?;
        let sidecar = String::from_utf8(take(&sidecar_name(name))?)
            .map_err(|_| Error::format("repr sidecar", format!("{name} sidecar is not UTF-8")))?;
        frames.push(AccumFrame::from_s16_bytes(&grid, &sidecar)?);
    }
    let scene_json = String::from_utf8(take(&files.scene_script)?)
        .map_err(|_| Error::format("scene script", "not UTF-8"))?;

    Ok(LoadedSequence {
        dir: dir.to_path_buf(),
        manifest,
        occluded,
        gt,
        mask,
        events,
        repr: ReprStack { frames },
        scene_json,
    })
}

/// Sequence directories under `root` that carry a manifest, sorted by name.
pub fn list_sequences(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    if !root.exists() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
