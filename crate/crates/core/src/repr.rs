//! Fixed-interval event representations.
//!
//! An [`AccumFrame`] holds the exact signed polarity count of every pixel over
//! a half-open interval `[t_start, t_end)`. Scaling by the contrast threshold is
//! left to consumers so that sums over adjacent intervals stay exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStream;

/// Number of representations stacked per sequence by default.
pub const DEFAULT_N_REPR: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<i32>,
    /// Half-open `[start, end)` in microseconds.
    pub interval: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AccumSidecar {
    width: usize,
    height: usize,
    interval: (u64, u64),
}

impl AccumFrame {
    pub fn zeros(width: usize, height: usize, interval: (u64, u64)) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
            interval,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.values[y * self.width + x]
    }

    /// Raw little-endian `i16` grid. Counts outside the `i16` range are an error.
    pub fn to_s16_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.values.len() * 2);
        for &v in &self.values {
            let v = i16::try_from(v)
                .map_err(|_| Error::format("accumulation frame", format!("count {v} does not fit in i16")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&AccumSidecar {
            width: self.width,
            height: self.height,
            interval: self.interval,
        })?)
    }

    pub fn from_s16_bytes(bytes: &[u8], sidecar_json: &str) -> Result<Self> {
        let meta: AccumSidecar = serde_json::from_str(sidecar_json)?;
        if bytes.len() != meta.width * meta.height * 2 {
            return Err(Error::format(
                "accumulation frame",
                format!("{} bytes for a {}x{} grid", bytes.len(), meta.width, meta.height),
            ));
        }
        let values = bytes
            .chunks_exact(2)
            .map(|c| i32::from(i16::from_le_bytes([c[0], c[1]])))
            .collect();
        Ok(Self {
            width: meta.width,
            height: meta.height,
            values,
            interval: meta.interval,
        })
    }

    /// Writes `<stem>.s16` and its `<stem>.json` sidecar.
    pub fn write(&self, s16_path: impl AsRef<Path>) -> Result<()> {
        let s16_path = s16_path.as_ref();
        let mut file = fs::File::create(s16_path)?;
        file.write_all(&self.to_s16_bytes()?)?;
        file.sync_all()?;
        let mut side = fs::File::create(s16_path.with_extension("json"))?;
        side.write_all(self.sidecar_json()?.as_bytes())?;
        side.sync_all()?;
        Ok(())
    }

    pub fn read(s16_path: impl AsRef<Path>) -> Result<Self> {
        let s16_path = s16_path.as_ref();
        let side = s16_path.with_extension("json");
        for p in [s16_path, side.as_path()] {
            if !p.exists() {
                return Err(Error::MissingFile(p.to_path_buf()));
            }
        }
        Self::from_s16_bytes(&fs::read(s16_path)?, &fs::read_to_string(side)?)
    }
}

/// Per-pixel polarity sum over events with `t0 <= t < t1`.
pub fn accumulate(stream: &EventStream, t0: u64, t1: u64) -> Result<AccumFrame> {
    if t0 >= t1 {
        return Err(Error::Config(format!("empty accumulation interval [{t0}, {t1})")));
    }
    let mut frame = AccumFrame::zeros(stream.width, stream.height, (t0, t1));
    let lo = stream.records.partition_point(|e| e.t < t0);
    let hi = stream.records.partition_point(|e| e.t < t1);
    for e in &stream.records[lo..hi] {
        frame.values[e.y as usize * stream.width + e.x as usize] += i32::from(e.p);
    }
    Ok(frame)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReprStack {
    pub frames: Vec<AccumFrame>,
}

impl ReprStack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Elementwise sum over the stack, covering the union of the intervals.
    pub fn sum(&self) -> Option<AccumFrame> {
        let first = self.frames.first()?;
        let last = self.frames.last()?;
        let mut total = AccumFrame::zeros(first.width, first.height, (first.interval.0, last.interval.1));
        for f in &self.frames {
            for (t, v) in total.values.iter_mut().zip(&f.values) {
                *t += v;
            }
        }
        Some(total)
    }
}

/// Default interval length: the stream span split into `n` equal parts.
pub fn default_tau(stream: &EventStream, n: usize) -> u64 {
    stream.span_us() / n.max(1) as u64
}

/// `n` contiguous accumulations of length `tau`, starting at the stream start.
pub fn build_representations(stream: &EventStream, n: usize, tau: u64) -> Result<ReprStack> {
    if n == 0 || tau == 0 {
        return Err(Error::Config(format!("need n >= 1 and tau > 0, got n={n}, tau={tau}")));
    }
    let requested = (n as u64)
        .checked_mul(tau)
        .ok_or_else(|| Error::Config("n * tau overflows".into()))?;
    if requested > stream.span_us() {
        return Err(Error::Span {
            span_us: stream.span_us(),
            requested_us: requested,
        });
    }
    let t0 = stream.t_begin;
    let frames = (0..n as u64)
        .into_par_iter()
        .map(|k| accumulate(stream, t0 + k * tau, t0 + (k + 1) * tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReprStack { frames })
}

/// Red for positive counts, blue for negative, white for zero. Color
/// saturation grows linearly with `|count|` up to `max_count`.
pub fn event_preview(frame: &AccumFrame, max_count: u32) -> RgbImage {
    let max = max_count.max(1) as f32;
    RgbImage::from_fn(frame.width as u32, frame.height as u32, |x, y| {
        let v = frame.get(x as usize, y as usize);
        let a = (v.unsigned_abs() as f32).min(max) / max;
        let fade = (255.0 * (1.0 - a)).round() as u8;
        match v.signum() {
            1 => Rgb([255, fade, fade]),
            -1 => Rgb([fade, fade, 255]),
            _ => Rgb([255, 255, 255]),
        }
    })
}
