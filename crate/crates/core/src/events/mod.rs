//! Asynchronous event streams and the contrast-threshold event model.

mod io;
mod sim;

pub use io::{
    decode_evb, encode_evb, read_csv, read_evb, write_csv, write_evb, EVB_HEADER_LEN, EVB_MAGIC, EVB_RECORD_LEN,
};
pub use sim::{generate_events, log_transform, EventEmitter, LogFrame, MAX_DISPLACEMENT_PER_FRAME};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCameraParams {
    /// Contrast threshold C in log-intensity units.
    pub contrast_threshold: f64,
    /// Intensity floor added before taking the log.
    pub log_eps: f64,
    /// Standard deviation of the per-crossing threshold perturbation.
    pub threshold_jitter_sigma: f64,
    pub refractory_us: u64,
    /// Frames per second of the internal rendering.
    pub render_rate: f64,
}

impl Default for EventCameraParams {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.15,
            log_eps: 1e-3,
            threshold_jitter_sigma: 0.0,
            refractory_us: 0,
            render_rate: 5000.0,
        }
    }
}

impl EventCameraParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold.is_finite() && self.contrast_threshold > 0.0) {
            return Err(Error::Config(format!(
                "contrast threshold must be positive, got {}",
                self.contrast_threshold
            )));
        }
        if !(self.log_eps.is_finite() && self.log_eps > 0.0) {
            return Err(Error::Config(format!("log_eps must be positive, got {}", self.log_eps)));
        }
        if !(self.threshold_jitter_sigma.is_finite() && self.threshold_jitter_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "threshold jitter must be non-negative, got {}",
                self.threshold_jitter_sigma
            )));
        }
        if !(self.render_rate.is_finite() && self.render_rate >= 100.0) {
            return Err(Error::Config(format!(
                "render rate must be at least 100 fps, got {}",
                self.render_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    /// -1 or +1.
    pub p: i8,
}

impl EventRecord {
    #[inline]
    pub fn sort_key(&self) -> (u64, u16, u16, i8) {
        (self.t, self.y, self.x, self.p)
    }
}

/// Non-fatal observations made while generating a stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: usize,
    pub height: usize,
    /// Sorted by `(t, y, x, p)`.
    pub records: Vec<EventRecord>,
    pub t_begin: u64,
    pub t_end: u64,
    pub metadata: StreamMetadata,
}

impl EventStream {
    pub fn empty(width: usize, height: usize, t_begin: u64, t_end: u64) -> Self {
        Self {
            width,
            height,
            records: Vec::new(),
            t_begin,
            t_end,
            metadata: StreamMetadata::default(),
        }
    }

    /// Builds a stream from unordered records, sorting them canonically.
    pub fn from_unsorted(
        width: usize,
        height: usize,
        mut records: Vec<EventRecord>,
        t_begin: u64,
        t_end: u64,
    ) -> Result<Self> {
        records.sort_unstable_by_key(EventRecord::sort_key);
        let stream = Self {
            width,
            height,
            records,
            t_begin,
            t_end,
            metadata: StreamMetadata::default(),
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn span_us(&self) -> u64 {
        self.t_end.saturating_sub(self.t_begin)
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<()> {
        if (self.width, self.height) != (width, height) {
            return Err(Error::Dimensions {
                expected: (width, height),
                actual: (self.width, self.height),
            });
        }
        Ok(())
    }

    /// Checks every stream invariant: bounds, polarity, canonical order,
    /// per-pixel strictly increasing timestamps, and the time span.
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::format("event stream", detail));
        if self.t_begin > self.t_end {
            return bad(format!("t_begin {} after t_end {}", self.t_begin, self.t_end));
        }
        let mut last_t = vec![None::<u64>; self.width * self.height];
        let mut prev: Option<&EventRecord> = None;
        for (i, e) in self.records.iter().enumerate() {
            if e.x as usize >= self.width || e.y as usize >= self.height {
                return bad(format!("record {i} at ({}, {}) outside {}x{}", e.x, e.y, self.width, self.height));
            }
            if e.p != 1 && e.p != -1 {
                return bad(format!("record {i} has polarity {}", e.p));
            }
            if e.t < self.t_begin || e.t > self.t_end {
                return bad(format!("record {i} at t={} outside [{}, {}]", e.t, self.t_begin, self.t_end));
            }
            if let Some(p) = prev {
                if p.sort_key() > e.sort_key() {
                    return bad(format!("record {i} out of (t, y, x, p) order"));
                }
            }
            let slot = &mut last_t[e.y as usize * self.width + e.x as usize];
            if slot.is_some_and(|t| t >= e.t) {
                return bad(format!("record {i}: pixel timestamps not strictly increasing"));
            }
            *slot = Some(e.t);
            prev = Some(e);
        }
        Ok(())
    }

    /// Per-pixel sum of polarities over the whole stream.
    pub fn signed_counts(&self) -> Vec<i32> {
        let mut counts = vec![0i32; self.width * self.height];
        for e in &self.records {
            counts[e.y as usize * self.width + e.x as usize] += i32::from(e.p);
        }
        counts
    }
}

/// Sub-stream of records with `t0 <= t < t1`.
pub fn events_between(stream: &EventStream, t0: u64, t1: u64) -> EventStream {
    let t1 = t1.max(t0);
    let lo = stream.records.partition_point(|e| e.t < t0);
    let hi = stream.records.partition_point(|e| e.t < t1);
    let t_begin = t0.max(stream.t_begin);
    let t_end = t1.min(stream.t_end).max(t_begin);
    EventStream {
        width: stream.width,
        height: stream.height,
        records: stream.records[lo..hi.max(lo)].to_vec(),
        t_begin,
        t_end,
        metadata: stream.metadata.clone(),
    }
}
