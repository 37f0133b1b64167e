//! Synthetic CSI with ground-truth targets and hardware impairments.
//!
//! Each frame is generated from its own ChaCha8 stream keyed by
//! `(rng_seed, m)`, so frames are pure functions of `(scene, config, m)` and
//! may be generated in any order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SensingConfig;
use crate::error::ConfigError;
use crate::kv;
use crate::types::CsiFrame;
use crate::{C64, SPEED_OF_LIGHT};

/// Sinusoidal range modulation, e.g. chest motion while breathing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroMotion {
    pub amp_m: f64,
    pub freq_hz: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub range0_m: f64,
    pub velocity_mps: f64,
    pub amplitude: f64,
    pub micro_motion: Option<MicroMotion>,
}

impl TargetSpec {
    pub fn new(range0_m: f64, velocity_mps: f64, amplitude: f64) -> Self {
        Self {
            range0_m,
            velocity_mps,
            amplitude,
            micro_motion: None,
        }
    }

    pub fn with_micro_motion(mut self, amp_m: f64, freq_hz: f64, phase_rad: f64) -> Self {
        self.micro_motion = Some(MicroMotion {
            amp_m,
            freq_hz,
            phase_rad,
        });
        self
    }

    /// Range at time `t`.
    pub fn range_at(&self, t: f64) -> f64 {
        let mut r = self.range0_m + self.velocity_mps * t;
        if let Some(mm) = &self.micro_motion {
            r += mm.amp_m * (2.0 * PI * mm.freq_hz * t + mm.phase_rad).sin();
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leakage {
    pub amplitude: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentModel {
    pub leakage: Leakage,
    /// Complex Gaussian variance per subcarrier.
    pub noise_power: f64,
    /// Draw a uniform common phase offset per frame.
    pub cpo: bool,
    /// Sampling-frequency offset; adds a delay drift of `sfo_ppm·1e-6·m·T`.
    pub sfo_ppm: f64,
    /// Gaussian jitter added to the per-frame delay (seconds).
    pub sfo_jitter_std_s: f64,
    /// Gaussian timestamp jitter (seconds), clipped to ±0.45·T.
    pub timing_jitter_s: f64,
    pub drop_prob: f64,
}

impl Default for ImpairmentModel {
    fn default() -> Self {
        Self {
            leakage: Leakage {
                amplitude: 1.0,
                delay_s: 0.0,
            },
            noise_power: 0.0,
            cpo: false,
            sfo_ppm: 0.0,
            sfo_jitter_std_s: 0.0,
            timing_jitter_s: 0.0,
            drop_prob: 0.0,
        }
    }
}

impl ImpairmentModel {
    /// No leakage, noise or clock effects.
    pub fn clean() -> Self {
        Self {
            leakage: Leakage {
                amplitude: 0.0,
                delay_s: 0.0,
            },
            ..Self::default()
        }
    }

    /// Unit leakage, random CPO, 20 ppm SFO with 0.2 ns delay jitter,
    /// 2 ms timestamp jitter and 2% frame loss.
    pub fn full(noise_power: f64) -> Self {
        Self {
            leakage: Leakage {
                amplitude: 1.0,
                delay_s: 0.0,
            },
            noise_power,
            cpo: true,
            sfo_ppm: 20.0,
            sfo_jitter_std_s: 0.2e-9,
            timing_jitter_s: 2e-3,
            drop_prob: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub targets: Vec<TargetSpec>,
    pub impairments: ImpairmentModel,
    pub rng_seed: u64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            impairments: ImpairmentModel::default(),
            rng_seed: 1,
        }
    }
}

/// Per-frame random draws, in the order they are taken from the stream.
struct Draws {
    dropped: bool,
    cpo: f64,
    timestamp_jitter: f64,
    delay_jitter: f64,
}

fn frame_rng(seed: u64, m: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draws(scene: &Scene, config: &SensingConfig, rng: &mut ChaCha8Rng) -> Draws {
    let imp = &scene.impairments;
    let u_drop: f64 = rng.random();
    let u_cpo: f64 = rng.random();
    let g_ts = gauss(rng);
    let g_delay = gauss(rng);
    let clip = 0.45 * config.frame_interval_s;
    Draws {
        dropped: u_drop < imp.drop_prob,
        cpo: if imp.cpo { (2.0 * u_cpo - 1.0) * PI } else { 0.0 },
        timestamp_jitter: (g_ts * imp.timing_jitter_s).clamp(-clip, clip),
        delay_jitter: g_delay * imp.sfo_jitter_std_s,
    }
}

/// CSI frame `m` of the scene (drops are not applied here).
pub fn generate_frame(scene: &Scene, config: &SensingConfig, m: u64) -> CsiFrame {
    let mut rng = frame_rng(scene.rng_seed, m);
    let d = draws(scene, config, &mut rng);
    build_frame(scene, config, m, &d, &mut rng)
}

fn build_frame(
    scene: &Scene,
    config: &SensingConfig,
    m: u64,
    d: &Draws,
    rng: &mut ChaCha8Rng,
) -> CsiFrame {
    let imp = &scene.impairments;
    let n = config.n_subcarriers;
    let t = m as f64 * config.frame_interval_s;
    let fc = config.carrier_freq_hz;
    let freqs = config.subcarrier_freqs();

    let mut csi = vec![C64::new(0.0, 0.0); n];
    if imp.leakage.amplitude != 0.0 {
        for (x, &f) in csi.iter_mut().zip(&freqs) {
            *x += C64::from_polar(imp.leakage.amplitude, -2.0 * PI * f * imp.leakage.delay_s);
        }
    }
    for target in &scene.targets {
        let r = target.range_at(t);
        let carrier = C64::from_polar(target.amplitude, -4.0 * PI * fc * r / SPEED_OF_LIGHT);
        for (x, &f) in csi.iter_mut().zip(&freqs) {
            *x += carrier * C64::from_polar(1.0, -4.0 * PI * f * r / SPEED_OF_LIGHT);
        }
    }
    if imp.noise_power > 0.0 {
        let s = (imp.noise_power / 2.0).sqrt();
        for x in csi.iter_mut() {
            let re = gauss(rng);
            let im = gauss(rng);
            *x += C64::new(re * s, im * s);
        }
    }

    let delay = imp.sfo_ppm * 1e-6 * t + d.delay_jitter;
    if d.cpo != 0.0 || delay != 0.0 {
        for (x, &f) in csi.iter_mut().zip(&freqs) {
            *x *= C64::from_polar(1.0, d.cpo - 2.0 * PI * f * delay);
        }
    }

    CsiFrame::new(t + d.timestamp_jitter, m as u32, csi)
}

/// Frames `0..n_frames` with dropped frames removed; `seq` keeps the frame
/// index so drops show up as gaps.
pub fn generate_trace(scene: &Scene, config: &SensingConfig, n_frames: u64) -> Vec<CsiFrame> {
    TraceIter::new(scene.clone(), config.clone()).take_while_index(n_frames).collect()
}

/// Endless frame source over the scene, skipping dropped frames.
#[derive(Debug, Clone)]
pub struct TraceIter {
    scene: Scene,
    config: SensingConfig,
    next_m: u64,
    limit: Option<u64>,
}

impl TraceIter {
    pub fn new(scene: Scene, config: SensingConfig) -> Self {
        Self {
            scene,
            config,
            next_m: 0,
            limit: None,
        }
    }

    /// Starts at frame index `m`.
    pub fn starting_at(mut self, m: u64) -> Self {
        self.next_m = m;
        self
    }

    fn take_while_index(mut self, n_frames: u64) -> Self {
        self.limit = Some(n_frames);
        self
    }

    /// Index of the next frame slot that will be considered.
    pub fn next_index(&self) -> u64 {
        self.next_m
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }
}

impl Iterator for TraceIter {
    type Item = CsiFrame;

    fn next(&mut self) -> Option<CsiFrame> {
        loop {
            let m = self.next_m;
            if self.limit.is_some_and(|l| m >= l) {
                return None;
            }
            self.next_m += 1;
            let mut rng = frame_rng(self.scene.rng_seed, m);
            let d = draws(&self.scene, &self.config, &mut rng);
            if d.dropped {
                continue;
            }
            return Some(build_frame(&self.scene, &self.config, m, &d, &mut rng));
        }
    }
}

impl Scene {
    /// Parses a scene document: top-level impairment keys followed by any
    /// number of `[target]` blocks.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let sections = kv::parse(text)?;
        let mut scene = Scene::default();
        for section in sections {
            match section.name.as_deref() {
                None => {
                    for e in &section.entries {
                        scene.set(&e.key, &e.value)?;
                    }
                }
                Some("target") => {
                    let mut t = TargetSpec::new(0.0, 0.0, 1.0);
                    let mut mm = MicroMotion {
                        amp_m: 0.0,
                        freq_hz: 0.0,
                        phase_rad: 0.0,
                    };
                    let mut has_mm = false;
                    for e in &section.entries {
                        let k = e.key.as_str();
                        let v = e.value.as_str();
                        match k {
                            "range0_m" | "range_m" => t.range0_m = kv::parse_f64(k, v)?,
                            "velocity_mps" => t.velocity_mps = kv::parse_f64(k, v)?,
                            "amplitude" => t.amplitude = kv::parse_f64(k, v)?,
                            "micro_amp_m" => {
                                mm.amp_m = kv::parse_f64(k, v)?;
                                has_mm = true;
                            }
                            "micro_freq_hz" => {
                                mm.freq_hz = kv::parse_f64(k, v)?;
                                has_mm = true;
                            }
                            "micro_phase_rad" => {
                                mm.phase_rad = kv::parse_f64(k, v)?;
                                has_mm = true;
                            }
                            other => return Err(ConfigError::UnknownKey(format!("target.{other}"))),
                        }
                    }
                    if has_mm {
                        t.micro_motion = Some(mm);
                    }
                    scene.targets.push(t);
                }
                Some(other) => {
                    return Err(ConfigError::Syntax {
                        line: section.line,
                        message: format!("unknown section `[{other}]`"),
                    })
                }
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let imp = &mut self.impairments;
        match key {
            "rng_seed" | "seed" => self.rng_seed = kv::parse_u64(key, value)?,
            "leakage.amplitude" => imp.leakage.amplitude = kv::parse_f64(key, value)?,
            "leakage.delay_s" => imp.leakage.delay_s = kv::parse_f64(key, value)?,
            "noise_power" => imp.noise_power = kv::parse_f64(key, value)?,
            "cpo" => imp.cpo = kv::parse_bool(key, value)?,
            "sfo_ppm" => imp.sfo_ppm = kv::parse_f64(key, value)?,
            "sfo_jitter_std_s" => imp.sfo_jitter_std_s = kv::parse_f64(key, value)?,
            "timing_jitter_s" | "timing_jitter_frames" => {
                imp.timing_jitter_s = kv::parse_f64(key, value)?
            }
            "drop_prob" => imp.drop_prob = kv::parse_f64(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let imp = &self.impairments;
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, "must be >= 0"))
            }
        };
        nonneg("leakage.amplitude", imp.leakage.amplitude)?;
        nonneg("leakage.delay_s", imp.leakage.delay_s)?;
        nonneg("noise_power", imp.noise_power)?;
        nonneg("sfo_ppm", imp.sfo_ppm)?;
        nonneg("sfo_jitter_std_s", imp.sfo_jitter_std_s)?;
        nonneg("timing_jitter_s", imp.timing_jitter_s)?;
        if !(0.0..1.0).contains(&imp.drop_prob) {
            return Err(ConfigError::invalid("drop_prob", "must be in [0, 1)"));
        }
        for t in &self.targets {
            nonneg("target.range0_m", t.range0_m)?;
            if !(t.amplitude > 0.0) {
                return Err(ConfigError::invalid("target.amplitude", "must be > 0"));
            }
            if let Some(mm) = &t.micro_motion {
                nonneg("target.micro_amp_m", mm.amp_m)?;
                nonneg("target.micro_freq_hz", mm.freq_hz)?;
            }
        }
        Ok(())
    }
}
