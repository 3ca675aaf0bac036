use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EventCameraParams, EventRecord, EventStream, StreamMetadata};
use crate::checksum::mix_seed;
use crate::error::{Error, Result};
use crate::frame::IntensityFrame;
use crate::scene::{SceneScript, NO_PARTICLE};

/// Largest per-frame particle displacement, in pixels, that is not reported
/// as aliasing.
pub const MAX_DISPLACEMENT_PER_FRAME: f64 = 0.5;

const NO_EVENT: u64 = u64::MAX;

/// Rounding guard on the crossing test, in log units. A pixel returning to
/// a level it left reaches `reference + k * C` only up to float error;
/// without the guard the last crossing of the return can be lost.
const CROSSING_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Seconds.
    pub t: f64,
}

impl LogFrame {
    pub fn at(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// `ln(intensity + log_eps)` elementwise.
pub fn log_transform(frame: &IntensityFrame, log_eps: f64) -> LogFrame {
    LogFrame {
        width: frame.width(),
        height: frame.height(),
        values: frame.as_slice().iter().map(|&v| (f64::from(v) + log_eps).ln()).collect(),
        t: 0.0,
    }
}

/// Per-pixel threshold-crossing state.
///
/// Each pixel keeps a reference log level. When a new sample moves the log
/// level at least one threshold away from the reference, one event is emitted
/// per threshold multiple crossed, time-stamped by linear interpolation
/// between the previous and the current sample, and the reference advances by
/// the crossed multiples only. The sub-threshold residual is kept.
pub struct EventEmitter {
    width: usize,
    height: usize,
    threshold: f64,
    jitter: Option<Normal<f64>>,
    refractory_us: u64,
    reference: Vec<f64>,
    previous: Vec<f64>,
    last_t: Vec<u64>,
    /// Threshold for the next crossing per pixel; empty when noiseless.
    pending_threshold: Vec<f64>,
    noise: Vec<Option<ChaCha8Rng>>,
    noise_seed: u64,
    t_prev: f64,
    t_begin: f64,
    records: Vec<EventRecord>,
}

impl EventEmitter {
    pub fn new(initial: &LogFrame, params: &EventCameraParams, noise_seed: u64) -> Result<Self> {
        params.validate()?;
        let n = initial.width * initial.height;
        let jitter = (params.threshold_jitter_sigma > 0.0).then(|| {
            Normal::new(params.contrast_threshold, params.threshold_jitter_sigma).expect("validated sigma")
        });
        let mut emitter = Self {
            width: initial.width,
            height: initial.height,
            threshold: params.contrast_threshold,
            jitter,
            refractory_us: params.refractory_us,
            reference: initial.values.clone(),
            previous: initial.values.clone(),
            last_t: vec![NO_EVENT; n],
            pending_threshold: Vec::new(),
            noise: Vec::new(),
            noise_seed,
            t_prev: initial.t,
            t_begin: initial.t,
            records: Vec::new(),
        };
        if emitter.jitter.is_some() {
            emitter.noise = (0..n).map(|_| None).collect();
            emitter.pending_threshold = (0..n).map(|i| emitter.draw_threshold(i)).collect();
        }
        Ok(emitter)
    }

    fn draw_threshold(&mut self, idx: usize) -> f64 {
        let Some(dist) = self.jitter else {
            return self.threshold;
        };
        let seed = mix_seed(self.noise_seed, idx as u64);
        let rng = self.noise[idx].get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed));
        // truncated to stay positive
        for _ in 0..64 {
            let c = dist.sample(rng);
            if c > 0.0 {
                return c;
            }
        }
        self.threshold
    }

    #[inline]
    fn current_threshold(&self, idx: usize) -> f64 {
        if self.pending_threshold.is_empty() {
            self.threshold
        } else {
            self.pending_threshold[idx]
        }
    }

    /// Feeds a dense log frame sampled at `frame.t`.
    pub fn step_frame(&mut self, frame: &LogFrame) -> Result<()> {
        if (frame.width, frame.height) != (self.width, self.height) {
            return Err(Error::Dimensions {
                expected: (self.width, self.height),
                actual: (frame.width, frame.height),
            });
        }
        if frame.t < self.t_prev {
            return Err(Error::Config(format!(
                "frame at t={} precedes the previous sample at t={}",
                frame.t, self.t_prev
            )));
        }
        let t_prev = self.t_prev;
        for (idx, &l_new) in frame.values.iter().enumerate() {
            self.step_pixel(idx, l_new, t_prev, frame.t);
        }
        self.t_prev = frame.t;
        Ok(())
    }

    /// Feeds only the pixels whose value changed since the previous sample.
    fn step_sparse(&mut self, changes: &[(usize, f64)], t_new: f64) {
        let t_prev = self.t_prev;
        for &(idx, l_new) in changes {
            self.step_pixel(idx, l_new, t_prev, t_new);
        }
        self.t_prev = t_new;
    }

    fn step_pixel(&mut self, idx: usize, l_new: f64, t_prev: f64, t_new: f64) {
        let l_prev = self.previous[idx];
        loop {
            let c = self.current_threshold(idx);
            let diff = l_new - self.reference[idx];
            if diff.abs() < c - CROSSING_GUARD {
                break;
            }
            let p: i8 = if diff > 0.0 { 1 } else { -1 };
            let level = self.reference[idx] + f64::from(p) * c;
            let frac = if l_new != l_prev {
                ((level - l_prev) / (l_new - l_prev)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let t = t_prev + frac * (t_new - t_prev);
            let mut t_us = (t * 1e6).round() as u64;
            let last = self.last_t[idx];
            if last != NO_EVENT && t_us <= last {
                t_us = last + 1;
            }
            self.reference[idx] = level;
            if !self.pending_threshold.is_empty() {
                self.pending_threshold[idx] = self.draw_threshold(idx);
            }
            if last != NO_EVENT && t_us - last < self.refractory_us {
                continue;
            }
            self.last_t[idx] = t_us;
            self.records.push(EventRecord {
                t: t_us,
                x: (idx % self.width) as u16,
                y: (idx / self.width) as u16,
                p,
            });
        }
        self.previous[idx] = l_new;
    }

    /// Sorts the emitted records into a stream spanning the fed samples.
    pub fn finish(self) -> EventStream {
        let t_begin = (self.t_begin * 1e6).round() as u64;
        let mut records = self.records;
        records.sort_unstable_by_key(EventRecord::sort_key);
        let last = records.last().map_or(t_begin, |e| e.t);
        let t_end = ((self.t_prev * 1e6).round() as u64).max(last);
        EventStream {
            width: self.width,
            height: self.height,
            records,
            t_begin,
            t_end,
            metadata: StreamMetadata::default(),
        }
    }
}

/// Renders the scene at `params.render_rate` over `[t0, t1]` seconds and
/// converts the rendered sequence into events.
///
/// Only pixels whose covering particle changed between consecutive renders are
/// revisited; all others hold their log value and cannot fire.
pub fn generate_events(script: &SceneScript, params: &EventCameraParams, t0: f64, t1: f64) -> Result<EventStream> {
    params.validate()?;
    if !(t0 >= 0.0 && t0 < t1 && t1 <= script.config.duration) {
        return Err(Error::Config(format!(
            "event window [{t0}, {t1}] must be non-empty and inside [0, {}]",
            script.config.duration
        )));
    }
    let (w, h) = (script.width(), script.height());
    let log_bg: Vec<f64> = script
        .background
        .as_slice()
        .iter()
        .map(|&v| (f64::from(v) + params.log_eps).ln())
        .collect();
    let log_particle: Vec<f64> = script
        .particles
        .iter()
        .map(|p| (p.intensity + params.log_eps).ln())
        .collect();
    let level = |owner: u32, idx: usize| {
        if owner == NO_PARTICLE {
            log_bg[idx]
        } else {
            log_particle[owner as usize]
        }
    };

    let mut owner_prev = Vec::new();
    let mut owner_cur = Vec::new();
    script.render_owner_into(t0, &mut owner_prev);
    let initial = LogFrame {
        width: w,
        height: h,
        values: owner_prev.iter().enumerate().map(|(i, &o)| level(o, i)).collect(),
        t: t0,
    };
    let mut emitter = EventEmitter::new(&initial, params, mix_seed(script.config.seed, 0xe7e7))?;

    let frame_dt = 1.0 / params.render_rate;
    let n_frames = ((t1 - t0) / frame_dt).ceil() as usize;
    let mut changes = Vec::new();
    for k in 1..=n_frames {
        let t = if k == n_frames { t1 } else { t0 + k as f64 * frame_dt };
        script.render_owner_into(t, &mut owner_cur);
        changes.clear();
        for (i, (&a, &b)) in owner_prev.iter().zip(&owner_cur).enumerate() {
            if a != b {
                changes.push((i, level(b, i)));
            }
        }
        emitter.step_sparse(&changes, t);
        std::mem::swap(&mut owner_prev, &mut owner_cur);
    }

    let mut stream = emitter.finish();
    let displacement = script.max_speed() * frame_dt;
    if displacement > MAX_DISPLACEMENT_PER_FRAME {
        stream.metadata.warnings.push(format!(
            "aliasing: fastest particle moves {displacement:.3} px per rendered frame at {} fps (limit {MAX_DISPLACEMENT_PER_FRAME})",
            params.render_rate
        ));
    }
    Ok(stream)
}
