//! Moving-particle occlusion scenes.
//!
//! A scene is a static background covered by opaque discs that move along
//! straight lines at constant velocity. Everything here is a pure function of
//! the [`SceneConfig`] (including its seed) and the background, so a scene can
//! be rendered at any continuous time and re-rendered bit-identically.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::IntensityFrame;

/// Allowed deviation of the measured t=0 coverage from the target.
pub const COVERAGE_TOLERANCE: f64 = 0.02;
/// Refinement budget of [`calibrate_count`].
pub const CALIBRATION_ITERATIONS: usize = 20;
pub const MAX_TARGET_COVERAGE: f64 = 0.9;

/// Owner value for pixels not covered by any particle.
pub const NO_PARTICLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Sequence length in seconds.
    pub duration: f64,
    pub target_coverage: f64,
    /// Disc radius bounds in pixels.
    pub radius_range: (f64, f64),
    pub intensity_range: (f64, f64),
    /// Speed bounds in pixels per second.
    pub speed_range: (f64, f64),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 384,
            duration: 0.1,
            target_coverage: 0.3,
            radius_range: (4.0, 16.0),
            intensity_range: (0.065, 0.075),
            speed_range: (300.0, 1500.0),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.width < 16 || self.height < 16 {
            return bad(format!("frame {}x{} is below the 16x16 minimum", self.width, self.height));
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return bad(format!("frame {}x{} exceeds 16-bit pixel addressing", self.width, self.height));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(0.0..=MAX_TARGET_COVERAGE).contains(&self.target_coverage) {
            return bad(format!(
                "target coverage {} outside [0, {MAX_TARGET_COVERAGE}]",
                self.target_coverage
            ));
        }
        for (name, (lo, hi)) in [
            ("radius", self.radius_range),
            ("intensity", self.intensity_range),
            ("speed", self.speed_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is not ordered"));
            }
        }
        if self.radius_range.0 < 1.0 {
            return bad(format!("minimum radius {} is below 1 px", self.radius_range.0));
        }
        if self.intensity_range.0 < 0.0 || self.intensity_range.1 > 1.0 {
            return bad(format!("intensity range {:?} outside [0, 1]", self.intensity_range));
        }
        if self.speed_range.0 < 0.0 {
            return bad(format!("negative speed {}", self.speed_range.0));
        }
        Ok(())
    }

    fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// E[r^2] for the uniform radius distribution.
    fn mean_square_radius(&self) -> f64 {
        let (a, b) = self.radius_range;
        (a * a + a * b + b * b) / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Sub-pixel center at t = 0, `[x, y]`.
    pub center0: [f64; 2],
    /// Pixels per second, `[vx, vy]`.
    pub velocity: [f64; 2],
    pub radius: f64,
    pub intensity: f64,
    /// Draw order; higher is drawn on top.
    pub z: u32,
}

/// Linear motion: `center0 + velocity * t`.
#[inline]
pub fn particle_position(p: &Particle, t: f64) -> [f64; 2] {
    [p.center0[0] + p.velocity[0] * t, p.center0[1] + p.velocity[1] * t]
}

impl Particle {
    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    /// Pixel-center occlusion predicate.
    #[inline]
    pub fn covers(&self, t: f64, x: usize, y: usize) -> bool {
        let [cx, cy] = particle_position(self, t);
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        dx * dx + dy * dy < self.radius * self.radius
    }
}

/// Infinite, seeded sequence of particles. Calibration draws prefixes of it,
/// so the coverage of the first `n` particles is monotone in `n`.
struct ParticleSource {
    rng: ChaCha8Rng,
    config: SceneConfig,
    drawn: Vec<Particle>,
}

impl ParticleSource {
    fn new(config: &SceneConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config: *config,
            drawn: Vec::new(),
        }
    }

    fn prefix(&mut self, n: usize) -> &[Particle] {
        while self.drawn.len() < n {
            let z = self.drawn.len() as u32;
            let p = self.draw(z);
            self.drawn.push(p);
        }
        &self.drawn[..n]
    }

    fn draw(&mut self, z: u32) -> Particle {
        let c = &self.config;
        let rng = &mut self.rng;
        let x = rng.random_range(0.0..c.width as f64);
        let y = rng.random_range(0.0..c.height as f64);
        let radius = uniform(rng, c.radius_range);
        let intensity = uniform(rng, c.intensity_range);
        let speed = uniform(rng, c.speed_range);
        let heading = rng.random_range(0.0..2.0 * PI);
        Particle {
            center0: [x, y],
            velocity: [speed * heading.cos(), speed * heading.sin()],
            radius,
            intensity,
            z,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Calls `f(index)` for every pixel whose center lies strictly inside the disc.
pub(crate) fn raster_disc(
    center: [f64; 2],
    radius: f64,
    width: usize,
    height: usize,
    mut f: impl FnMut(usize),
) {
    let [cx, cy] = center;
    let r2 = radius * radius;
    let y_lo = (cy - radius).ceil().max(0.0);
    let y_hi = (cy + radius).floor().min(height as f64 - 1.0);
    if y_lo > y_hi {
        return;
    }
    for y in y_lo as usize..=y_hi as usize {
        let dy = y as f64 - cy;
        let rem = r2 - dy * dy;
        if rem <= 0.0 {
            continue;
        }
        let inside = |x: i64| {
            let dx = x as f64 - cx;
            dx * dx + dy * dy < r2
        };
        let half = rem.sqrt();
        let mut lo = (cx - half).ceil() as i64;
        let mut hi = (cx + half).floor() as i64;
        // sqrt rounding can be off by one either way at the boundary
        while lo <= hi && !inside(lo) {
            lo += 1;
        }
        while inside(lo - 1) {
            lo -= 1;
        }
        while hi >= lo && !inside(hi) {
            hi -= 1;
        }
        while inside(hi + 1) {
            hi += 1;
        }
        let lo = lo.max(0);
        let hi = hi.min(width as i64 - 1);
        if lo > hi {
            continue;
        }
        let row = y * width;
        for x in lo as usize..=hi as usize {
            f(row + x);
        }
    }
}

fn measure_coverage(particles: &[Particle], width: usize, height: usize, scratch: &mut Vec<bool>) -> f64 {
    scratch.clear();
    scratch.resize(width * height, false);
    let mut covered = 0usize;
    for p in particles {
        raster_disc(p.center0, p.radius, width, height, |i| {
            if !scratch[i] {
                scratch[i] = true;
                covered += 1;
            }
        });
    }
    covered as f64 / (width * height) as f64
}

/// Particle count whose t=0 coverage is within [`COVERAGE_TOLERANCE`] of the
/// target.
///
/// Starts from the Boolean-model estimate `n = -ln(1 - target) * W * H / (pi * E[r^2])`
/// and refines it by rasterizing the seeded particle prefix. Coverage of a
/// prefix grows monotonically with its length, so the refinement keeps a
/// bracket and falls back to bisection whenever the model-based step leaves it.
pub fn calibrate_count(config: &SceneConfig) -> Result<usize> {
    config.validate()?;
    let target = config.target_coverage;
    if target == 0.0 {
        return Ok(0);
    }
    let mut source = ParticleSource::new(config);
    let mut scratch = Vec::new();
    let (w, h) = (config.width, config.height);

    let boolean_model = |coverage_ratio: f64| -> f64 {
        -(1.0 - coverage_ratio).ln() * config.pixel_count() as f64 / (PI * config.mean_square_radius())
    };
    let mut n = boolean_model(target).round() as usize;
    // lo: largest count known to under-cover; hi: smallest known to over-cover
    let mut lo = 0usize;
    let mut hi: Option<usize> = None;

    for _ in 0..CALIBRATION_ITERATIONS {
        let measured = measure_coverage(source.prefix(n), w, h, &mut scratch);
        if (measured - target).abs() <= COVERAGE_TOLERANCE {
            return Ok(n);
        }
        if measured < target {
            lo = lo.max(n);
        } else {
            hi = Some(hi.map_or(n, |h| h.min(n)));
        }
        if let Some(h) = hi {
            if h - lo <= 1 {
                // zero particles cover nothing; that count is never measured
                if lo == 0 && target <= COVERAGE_TOLERANCE {
                    return Ok(0);
                }
                return Err(Error::Calibration(format!(
                    "coverage {target} unreachable: {lo} particles under-cover and {h} over-cover \
                     (radius range {:?} too coarse for the frame)",
                    config.radius_range
                )));
            }
        }
        // Boolean-model fixed-point step, scaled by the measured deficit
        let proposal = if measured <= 0.0 {
            n.saturating_mul(2).max(1)
        } else if measured >= 1.0 {
            n / 2
        } else {
            (n as f64 * (1.0 - target).ln() / (1.0 - measured).ln()).round() as usize
        };
        let upper = hi.unwrap_or(usize::MAX);
        n = if proposal > lo && proposal < upper {
            proposal
        } else {
            match hi {
                Some(h) => lo + (h - lo) / 2,
                None => n.saturating_mul(2).max(1),
            }
        };
        // a huge count means the frame cannot be covered at all
        if n > config.pixel_count() * 4 {
            return Err(Error::Calibration(format!(
                "coverage {target} unreachable with radius range {:?}",
                config.radius_range
            )));
        }
    }
    Err(Error::Calibration(format!(
        "no particle count within {COVERAGE_TOLERANCE} of coverage {target} after {CALIBRATION_ITERATIONS} iterations"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub config: SceneConfig,
    /// Ordered by `z`, which equals spawn order.
    pub particles: Vec<Particle>,
    pub background: Arc<IntensityFrame>,
}

/// Serialized stand-in for the background: enough to verify identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundRef {
    pub width: usize,
    pub height: usize,
    pub checksum: u64,
}

#[derive(Serialize, Deserialize)]
struct SceneScriptDoc {
    config: SceneConfig,
    particles: Vec<Particle>,
    background: BackgroundRef,
}

pub fn sample_scene(config: &SceneConfig, background: Arc<IntensityFrame>) -> Result<SceneScript> {
    config.validate()?;
    background.ensure_dims(config.width, config.height)?;
    let n = calibrate_count(config)?;
    let particles = ParticleSource::new(config).prefix(n).to_vec();
    Ok(SceneScript {
        config: *config,
        particles,
        background,
    })
}

impl SceneScript {
    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn background_ref(&self) -> BackgroundRef {
        BackgroundRef {
            width: self.background.width(),
            height: self.background.height(),
            checksum: self.background.checksum(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SceneScriptDoc {
            config: self.config,
            particles: self.particles.clone(),
            background: self.background_ref(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Rebuilds a script from its JSON form; the background must match the
    /// recorded reference.
    pub fn from_json(json: &str, background: Arc<IntensityFrame>) -> Result<Self> {
        let doc: SceneScriptDoc = serde_json::from_str(json)?;
        let actual = BackgroundRef {
            width: background.width(),
            height: background.height(),
            checksum: background.checksum(),
        };
        if actual != doc.background {
            return Err(Error::format(
                "scene script",
                format!("background {actual:?} does not match recorded {:?}", doc.background),
            ));
        }
        doc.config.validate()?;
        Ok(Self {
            config: doc.config,
            particles: doc.particles,
            background,
        })
    }

    pub fn max_speed(&self) -> f64 {
        self.particles.iter().map(Particle::speed).fold(0.0, f64::max)
    }

    /// Index of the topmost covering particle per pixel, or [`NO_PARTICLE`].
    pub fn render_owner_into(&self, t: f64, owner: &mut Vec<u32>) {
        let (w, h) = (self.width(), self.height());
        owner.clear();
        owner.resize(w * h, NO_PARTICLE);
        // particles are stored in ascending z, so later writes win
        for (i, p) in self.particles.iter().enumerate() {
            raster_disc(particle_position(p, t), p.radius, w, h, |idx| owner[idx] = i as u32);
        }
    }

    pub fn render_frame(&self, t: f64) -> (IntensityFrame, OcclusionMask) {
        let mut owner = Vec::new();
        self.render_owner_into(t, &mut owner);
        let bg = self.background.as_slice();
        let values = owner
            .iter()
            .zip(bg)
            .map(|(&o, &b)| if o == NO_PARTICLE { b } else { self.particles[o as usize].intensity as f32 })
            .collect();
        let bits = owner.iter().map(|&o| o != NO_PARTICLE).collect();
        let frame = IntensityFrame::new(self.width(), self.height(), values).expect("scene dims");
        let mask = OcclusionMask {
            width: self.width(),
            height: self.height(),
            bits,
            t,
        };
        (frame, mask)
    }
}

/// Free-function form of [`SceneScript::render_frame`].
pub fn render_frame(script: &SceneScript, t: f64) -> (IntensityFrame, OcclusionMask) {
    script.render_frame(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub t: f64,
}

impl OcclusionMask {
    pub fn empty(width: usize, height: usize, t: f64) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            t,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage_ratio(&self) -> f64 {
        coverage_ratio(self)
    }

    /// 8-bit PNG form: 255 for occluded, 0 otherwise.
    pub fn to_frame(&self) -> IntensityFrame {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        IntensityFrame::new(self.width, self.height, data).expect("mask dims")
    }

    pub fn from_frame(frame: &IntensityFrame, t: f64) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            bits: frame.as_slice().iter().map(|&v| v >= 0.5).collect(),
            t,
        }
    }
}

pub fn coverage_ratio(mask: &OcclusionMask) -> f64 {
    if mask.bits.is_empty() {
        return 0.0;
    }
    mask.count() as f64 / mask.bits.len() as f64
}
