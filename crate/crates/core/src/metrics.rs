//! Image-quality metrics and coverage-stratified reports.
//!
//! Inputs are stored as `f32` but every metric accumulates in `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::IntensityFrame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Coverage buckets in percent.
pub const BUCKETS: [u32; 6] = [10, 20, 30, 40, 50, 60];

/// Borrowed single-channel image.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a, T> {
    pub width: usize,
    pub height: usize,
    pub data: &'a [T],
}

impl<'a, T: Copy + Into<f64>> Plane<'a, T> {
    pub fn new(width: usize, height: usize, data: &'a [T]) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::format("plane", format!("{} values for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x].into()
    }
}

impl<'a> From<&'a IntensityFrame> for Plane<'a, f32> {
    fn from(frame: &'a IntensityFrame) -> Self {
        Plane {
            width: frame.width(),
            height: frame.height(),
            data: frame.as_slice(),
        }
    }
}

fn same_dims<T, U>(a: &Plane<'_, T>, b: &Plane<'_, U>) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Dimensions {
            expected: (b.width, b.height),
            actual: (a.width, a.height),
        });
    }
    Ok(())
}

pub fn mse<T: Copy + Into<f64>>(pred: Plane<'_, T>, gt: Plane<'_, T>) -> Result<f64> {
    same_dims(&pred, &gt)?;
    if pred.data.is_empty() {
        return Err(Error::Empty("frame has no pixels".into()));
    }
    let sum: f64 = pred
        .data
        .iter()
        .zip(gt.data)
        .map(|(&p, &g)| {
            let d = p.into() - g.into();
            d * d
        })
        .sum();
    Ok(sum / pred.data.len() as f64)
}

/// Peak signal-to-noise ratio with peak 1.0. Identical inputs give `+inf`.
pub fn psnr<T: Copy + Into<f64>>(pred: Plane<'_, T>, gt: Plane<'_, T>) -> Result<f64> {
    let mse = mse(pred, gt)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub fn mae<T: Copy + Into<f64>>(pred: Plane<'_, T>, gt: Plane<'_, T>) -> Result<f64> {
    same_dims(&pred, &gt)?;
    if pred.data.is_empty() {
        return Err(Error::Empty("frame has no pixels".into()));
    }
    let sum: f64 = pred.data.iter().zip(gt.data).map(|(&p, &g)| (p.into() - g.into()).abs()).sum();
    Ok(sum / pred.data.len() as f64)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Mean structural similarity over every valid (fully inside) window position,
/// with an 11x11 Gaussian window of sigma 1.5, K1 = 0.01, K2 = 0.03 and dynamic
/// range 1.0.
pub fn ssim<T: Copy + Into<f64>>(pred: Plane<'_, T>, gt: Plane<'_, T>) -> Result<f64> {
    same_dims(&pred, &gt)?;
    let (w, h) = (pred.width, pred.height);
    let win = SSIM_WINDOW;
    if w < win || h < win {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            window: win,
        });
    }
    let taps = gaussian_taps(win, SSIM_SIGMA);
    let (ow, oh) = (w - win + 1, h - win + 1);

    // horizontal pass over the five moment planes
    let mut horiz = vec![[0.0f64; 5]; ow * h];
    for y in 0..h {
        for ox in 0..ow {
            let mut acc = [0.0f64; 5];
            for (k, &tap) in taps.iter().enumerate() {
                let a = pred.at(ox + k, y);
                let b = gt.at(ox + k, y);
                acc[0] += tap * a;
                acc[1] += tap * b;
                acc[2] += tap * a * a;
                acc[3] += tap * b * b;
                acc[4] += tap * a * b;
            }
            horiz[y * ow + ox] = acc;
        }
    }

    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let rows: Vec<f64> = (0..oh)
        .into_par_iter()
        .map(|oy| {
            let mut row_sum = 0.0;
            for ox in 0..ow {
                let mut m = [0.0f64; 5];
                for (k, &tap) in taps.iter().enumerate() {
                    let hsum = &horiz[(oy + k) * ow + ox];
                    for j in 0..5 {
                        m[j] += tap * hsum[j];
                    }
                }
                row_sum += ssim_from_moments(m, c1, c2);
            }
            row_sum
        })
        .collect();
    Ok(rows.iter().sum::<f64>() / (ow * oh) as f64)
}

/// Local SSIM from windowed `[E x, E y, E x^2, E y^2, E xy]`.
#[inline]
pub(crate) fn ssim_from_moments(m: [f64; 5], c1: f64, c2: f64) -> f64 {
    let (mx, my) = (m[0], m[1]);
    let vx = m[2] - mx * mx;
    let vy = m[3] - my * my;
    let cov = m[4] - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae: f64,
}

pub fn evaluate_pair(pred: &IntensityFrame, gt: &IntensityFrame) -> Result<SampleMetrics> {
    let (p, g) = (Plane::from(pred), Plane::from(gt));
    Ok(SampleMetrics {
        psnr_db: psnr(p, g)?,
        ssim: ssim(p, g)?,
        mae: mae(p, g)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae: f64,
    /// Keyed by coverage bucket in percent; only non-empty buckets appear.
    pub per_bucket: Option<BTreeMap<u32, BucketMetrics>>,
    pub n_samples: usize,
}

/// One evaluated reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub pred: &'a IntensityFrame,
    pub gt: &'a IntensityFrame,
    /// Measured coverage fraction.
    pub coverage: f64,
}

/// Nearest decile of the coverage, limited to the reported 10..60% range.
pub fn coverage_bucket(coverage: f64) -> u32 {
    let decile = (coverage * 10.0).round().clamp(1.0, 6.0) as u32;
    decile * 10
}

/// Order-independent mean: sorts before summing so that any permutation of
/// the inputs gives bit-identical results.
fn canonical_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn summarize(metrics: &[SampleMetrics]) -> BucketMetrics {
    BucketMetrics {
        psnr_db: canonical_mean(metrics.iter().map(|m| m.psnr_db).collect()),
        ssim: canonical_mean(metrics.iter().map(|m| m.ssim).collect()),
        mae: canonical_mean(metrics.iter().map(|m| m.mae).collect()),
        n_samples: metrics.len(),
    }
}

pub fn stratified_report(samples: &[Sample<'_>]) -> Result<MetricsReport> {
    let scored = samples
        .par_iter()
        .map(|s| Ok((coverage_bucket(s.coverage), evaluate_pair(s.pred, s.gt)?)))
        .collect::<Result<Vec<_>>>()?;
    report_from_scores(&scored)
}

/// Builds a report from already computed `(bucket, metrics)` pairs.
pub fn report_from_scores(scored: &[(u32, SampleMetrics)]) -> Result<MetricsReport> {
    if scored.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let all: Vec<SampleMetrics> = scored.iter().map(|(_, m)| *m).collect();
    let overall = summarize(&all);
    let mut per_bucket = BTreeMap::new();
    for bucket in BUCKETS {
        let members: Vec<SampleMetrics> = scored.iter().filter(|(b, _)| *b == bucket).map(|(_, m)| *m).collect();
        if !members.is_empty() {
            per_bucket.insert(bucket, summarize(&members));
        }
    }
    Ok(MetricsReport {
        psnr_db: overall.psnr_db,
        ssim: overall.ssim,
        mae: overall.mae,
        per_bucket: Some(per_bucket),
        n_samples: scored.len(),
    })
}

pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl MetricsReport {
    /// Aligned table: one column per coverage bucket plus the overall mean.
    pub fn to_text_table(&self, label: &str) -> String {
        let mut out = String::new();
        let buckets = self.per_bucket.clone().unwrap_or_default();
        let _ = write!(out, "{:<10}", "Coverage");
        for b in BUCKETS {
            let _ = write!(out, "{:>10}", format!("{b}%"));
        }
        let _ = writeln!(out, "{:>10}", "Overall");
        let rows: [(&str, fn(&BucketMetrics) -> String, String); 4] = [
            ("PSNR", |m| format_db(m.psnr_db), format_db(self.psnr_db)),
            ("SSIM", |m| format!("{:.4}", m.ssim), format!("{:.4}", self.ssim)),
            ("MAE", |m| format!("{:.4}", m.mae), format!("{:.4}", self.mae)),
            ("n", |m| m.n_samples.to_string(), self.n_samples.to_string()),
        ];
        for (name, cell, overall) in rows {
            let _ = write!(out, "{:<10}", name);
            for b in BUCKETS {
                let text = buckets.get(&b).map_or_else(|| "-".to_string(), cell);
                let _ = write!(out, "{text:>10}");
            }
            let _ = writeln!(out, "{overall:>10}");
        }
        if !label.is_empty() {
            out.insert_str(0, &format!("{label}\n"));
        }
        out
    }

    /// `bucket,n,psnr_db,ssim,mae` with a final `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,n,psnr_db,ssim,mae\n");
        for (b, m) in self.per_bucket.iter().flatten() {
            let _ = writeln!(out, "{b},{},{},{:.6},{:.6}", m.n_samples, format_db(m.psnr_db), m.ssim, m.mae);
        }
        let _ = writeln!(
            out,
            "all,{},{},{:.6},{:.6}",
            self.n_samples,
            format_db(self.psnr_db),
            self.ssim,
            self.mae
        );
        out
    }
}

/// JSON cannot hold infinities, so decibel values serialize `+inf` as `"inf"`.
mod db {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad decibel value {t:?}"))),
        }
    }
}
