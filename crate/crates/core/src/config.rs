//! Runtime parameters and their `key = value` file representation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kv;
use crate::SPEED_OF_LIGHT;

/// Operating mode. Each mode picks a range zero-pad factor; efficiency mode
/// also decimates subcarriers 4×.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Short range, fine range grid (Z = 8).
    Gesture,
    /// Occupancy / long range (Z = 2).
    Presence,
    /// Cheapest: Z = 1 and N/4 subcarriers.
    Efficiency,
}

impl Mode {
    pub fn default_zero_pad(self) -> usize {
        match self {
            Mode::Gesture => 8,
            Mode::Presence => 2,
            Mode::Efficiency => 1,
        }
    }

    pub fn subcarrier_decimation(self) -> usize {
        match self {
            Mode::Efficiency => 4,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gesture => "gesture",
            Mode::Presence => "presence",
            Mode::Efficiency => "efficiency",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gesture" => Ok(Mode::Gesture),
            "presence" => Ok(Mode::Presence),
            "efficiency" => Ok(Mode::Efficiency),
            other => Err(format!("unknown mode `{other}` (gesture|presence|efficiency)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SicKind {
    SlidingMean,
    Ema,
    /// Sliding mean frozen once `window_k` frames have been seen.
    Template,
    /// No background subtraction.
    None,
}

impl SicKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SicKind::SlidingMean => "sliding_mean",
            SicKind::Ema => "ema",
            SicKind::Template => "template",
            SicKind::None => "none",
        }
    }
}

impl FromStr for SicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sliding_mean" => Ok(SicKind::SlidingMean),
            "ema" => Ok(SicKind::Ema),
            "template" => Ok(SicKind::Template),
            "none" => Ok(SicKind::None),
            other => Err(format!(
                "unknown SIC kind `{other}` (sliding_mean|ema|template|none)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicConfig {
    pub kind: SicKind,
    pub window_k: usize,
    pub alpha: f64,
}

/// CA-CFAR window. Range cells are in native range-resolution cells and get
/// multiplied by the zero-pad factor; Doppler cells are map rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    pub guard_r: usize,
    pub guard_d: usize,
    pub train_r: usize,
    pub train_d: usize,
    pub pfa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub gate_range_m: f64,
    pub gate_vel_mps: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsConfig {
    pub window_frames: usize,
    pub band_hz: [f64; 2],
    pub prominence_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub carrier_freq_hz: f64,
    pub frame_interval_s: f64,
    pub doppler_batch: usize,
    pub buffer_factor: usize,
    pub mode: Mode,
    pub max_range_m: f64,
    /// Overrides the mode's zero-pad factor when set.
    pub zero_pad_factor: Option<usize>,
    pub sic: SicConfig,
    pub cfar: CfarConfig,
    pub track: TrackConfig,
    pub vitals: VitalsConfig,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 160e6,
            n_subcarriers: 512,
            carrier_freq_hz: 6e9,
            frame_interval_s: 0.025,
            doppler_batch: 32,
            buffer_factor: 4,
            mode: Mode::Presence,
            max_range_m: 5.0,
            zero_pad_factor: None,
            sic: SicConfig {
                kind: SicKind::SlidingMean,
                window_k: 64,
                alpha: 0.02,
            },
            cfar: CfarConfig {
                guard_r: 1,
                guard_d: 2,
                train_r: 2,
                train_d: 4,
                pfa: 1e-4,
            },
            track: TrackConfig {
                gate_range_m: 0.5,
                gate_vel_mps: 0.15,
                confirm_hits: 3,
                delete_misses: 3,
            },
            vitals: VitalsConfig {
                window_frames: 1200,
                band_hz: [0.1, 0.5],
                prominence_db: 12.0,
            },
        }
    }
}

/// Every accepted key, in file order.
pub const KEYS: &[&str] = &[
    "bandwidth_hz",
    "n_subcarriers",
    "carrier_freq_hz",
    "frame_interval_s",
    "doppler_batch",
    "buffer_factor",
    "mode",
    "max_range_m",
    "zero_pad_factor",
    "sic.kind",
    "sic.window_k",
    "sic.alpha",
    "cfar.guard_r",
    "cfar.guard_d",
    "cfar.train_r",
    "cfar.train_d",
    "cfar.pfa",
    "track.gate_range_m",
    "track.gate_vel_mps",
    "track.confirm_hits",
    "track.delete_misses",
    "vitals.window_frames",
    "vitals.band_hz",
    "vitals.prominence_db",
];

/// Keys fixed for the lifetime of a session.
pub const STRUCTURAL_KEYS: &[&str] = &[
    "bandwidth_hz",
    "n_subcarriers",
    "frame_interval_s",
    "doppler_batch",
    "buffer_factor",
];

impl SensingConfig {
    /// Subcarrier spacing Δf = B/N.
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    /// Carrier wavelength λ = c/f_c.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn zero_pad(&self) -> usize {
        self.zero_pad_factor
            .unwrap_or_else(|| self.mode.default_zero_pad())
    }

    /// Subcarriers entering the range transform after mode decimation.
    pub fn effective_subcarriers(&self) -> usize {
        self.n_subcarriers / self.mode.subcarrier_decimation()
    }

    /// Baseband frequency of subcarrier `k`: `(k - N/2)·Δf`.
    pub fn subcarrier_freq_hz(&self, k: usize) -> f64 {
        (k as f64 - (self.n_subcarriers / 2) as f64) * self.subcarrier_spacing_hz()
    }

    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        (0..self.n_subcarriers)
            .map(|k| self.subcarrier_freq_hz(k))
            .collect()
    }

    /// Largest unambiguous velocity magnitude λ/(4T).
    pub fn max_velocity_mps(&self) -> f64 {
        self.wavelength_m() / (4.0 * self.frame_interval_s)
    }

    pub fn buffer_capacity(&self) -> usize {
        self.buffer_factor * self.doppler_batch
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, "must be positive"))
            }
        };
        pos("bandwidth_hz", self.bandwidth_hz)?;
        pos("carrier_freq_hz", self.carrier_freq_hz)?;
        pos("frame_interval_s", self.frame_interval_s)?;
        pos("max_range_m", self.max_range_m)?;
        if !self.n_subcarriers.is_power_of_two() || self.n_subcarriers < 8 {
            return Err(ConfigError::invalid(
                "n_subcarriers",
                "must be a power of two >= 8",
            ));
        }
        if !self.doppler_batch.is_power_of_two() || self.doppler_batch < 2 {
            return Err(ConfigError::invalid(
                "doppler_batch",
                "must be a power of two >= 2",
            ));
        }
        if self.buffer_factor < 1 {
            return Err(ConfigError::invalid("buffer_factor", "must be >= 1"));
        }
        if self.zero_pad_factor == Some(0) {
            return Err(ConfigError::invalid("zero_pad_factor", "must be >= 1"));
        }
        if self.sic.window_k < 1 {
            return Err(ConfigError::invalid("sic.window_k", "must be >= 1"));
        }
        if !(self.sic.alpha > 0.0 && self.sic.alpha <= 1.0) {
            return Err(ConfigError::invalid("sic.alpha", "must be in (0, 1]"));
        }
        if self.cfar.train_r < 1 {
            return Err(ConfigError::invalid("cfar.train_r", "must be >= 1"));
        }
        if self.cfar.train_d < 1 {
            return Err(ConfigError::invalid("cfar.train_d", "must be >= 1"));
        }
        if !(self.cfar.pfa > 0.0 && self.cfar.pfa < 1.0) {
            return Err(ConfigError::invalid("cfar.pfa", "must be in (0, 1)"));
        }
        pos("track.gate_range_m", self.track.gate_range_m)?;
        pos("track.gate_vel_mps", self.track.gate_vel_mps)?;
        if self.track.confirm_hits < 1 {
            return Err(ConfigError::invalid("track.confirm_hits", "must be >= 1"));
        }
        if self.track.delete_misses < 1 {
            return Err(ConfigError::invalid("track.delete_misses", "must be >= 1"));
        }
        if self.vitals.window_frames < 16 {
            return Err(ConfigError::invalid("vitals.window_frames", "must be >= 16"));
        }
        let [lo, hi] = self.vitals.band_hz;
        let nyquist = 0.5 / self.frame_interval_s;
        if !(lo >= 0.0 && lo < hi && hi <= nyquist) {
            return Err(ConfigError::invalid(
                "vitals.band_hz",
                format!("need 0 <= lo < hi <= {nyquist} Hz"),
            ));
        }
        if !(self.vitals.prominence_db >= 0.0) {
            return Err(ConfigError::invalid("vitals.prominence_db", "must be >= 0"));
        }
        Ok(())
    }

    /// Sets one key from its text form without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |m: String| ConfigError::invalid(key, m);
        match key {
            "bandwidth_hz" => self.bandwidth_hz = kv::parse_f64(key, value)?,
            "n_subcarriers" => self.n_subcarriers = kv::parse_usize(key, value)?,
            "carrier_freq_hz" => self.carrier_freq_hz = kv::parse_f64(key, value)?,
            "frame_interval_s" => self.frame_interval_s = kv::parse_f64(key, value)?,
            "doppler_batch" => self.doppler_batch = kv::parse_usize(key, value)?,
            "buffer_factor" => self.buffer_factor = kv::parse_usize(key, value)?,
            "mode" => self.mode = value.parse().map_err(bad)?,
            "max_range_m" => self.max_range_m = kv::parse_f64(key, value)?,
            "zero_pad_factor" => {
                self.zero_pad_factor = match value {
                    "auto" | "" => None,
                    v => Some(kv::parse_usize(key, v)?),
                }
            }
            "sic.kind" => self.sic.kind = value.parse().map_err(bad)?,
            "sic.window_k" => self.sic.window_k = kv::parse_usize(key, value)?,
            "sic.alpha" => self.sic.alpha = kv::parse_f64(key, value)?,
            "cfar.guard_r" => self.cfar.guard_r = kv::parse_usize(key, value)?,
            "cfar.guard_d" => self.cfar.guard_d = kv::parse_usize(key, value)?,
            "cfar.train_r" => self.cfar.train_r = kv::parse_usize(key, value)?,
            "cfar.train_d" => self.cfar.train_d = kv::parse_usize(key, value)?,
            "cfar.pfa" => self.cfar.pfa = kv::parse_f64(key, value)?,
            "track.gate_range_m" => self.track.gate_range_m = kv::parse_f64(key, value)?,
            "track.gate_vel_mps" => self.track.gate_vel_mps = kv::parse_f64(key, value)?,
            "track.confirm_hits" => {
                self.track.confirm_hits = kv::parse_u64(key, value)?
                    .try_into()
                    .map_err(|_| bad("too large".into()))?
            }
            "track.delete_misses" => {
                self.track.delete_misses = kv::parse_u64(key, value)?
                    .try_into()
                    .map_err(|_| bad("too large".into()))?
            }
            "vitals.window_frames" => self.vitals.window_frames = kv::parse_usize(key, value)?,
            "vitals.band_hz" => self.vitals.band_hz = kv::parse_pair(key, value)?,
            "vitals.prominence_db" => self.vitals.prominence_db = kv::parse_f64(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Text form of one key's current value.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "bandwidth_hz" => self.bandwidth_hz.to_string(),
            "n_subcarriers" => self.n_subcarriers.to_string(),
            "carrier_freq_hz" => self.carrier_freq_hz.to_string(),
            "frame_interval_s" => self.frame_interval_s.to_string(),
            "doppler_batch" => self.doppler_batch.to_string(),
            "buffer_factor" => self.buffer_factor.to_string(),
            "mode" => self.mode.to_string(),
            "max_range_m" => self.max_range_m.to_string(),
            "zero_pad_factor" => match self.zero_pad_factor {
                Some(z) => z.to_string(),
                None => "auto".to_string(),
            },
            "sic.kind" => self.sic.kind.as_str().to_string(),
            "sic.window_k" => self.sic.window_k.to_string(),
            "sic.alpha" => self.sic.alpha.to_string(),
            "cfar.guard_r" => self.cfar.guard_r.to_string(),
            "cfar.guard_d" => self.cfar.guard_d.to_string(),
            "cfar.train_r" => self.cfar.train_r.to_string(),
            "cfar.train_d" => self.cfar.train_d.to_string(),
            "cfar.pfa" => self.cfar.pfa.to_string(),
            "track.gate_range_m" => self.track.gate_range_m.to_string(),
            "track.gate_vel_mps" => self.track.gate_vel_mps.to_string(),
            "track.confirm_hits" => self.track.confirm_hits.to_string(),
            "track.delete_misses" => self.track.delete_misses.to_string(),
            "vitals.window_frames" => self.vitals.window_frames.to_string(),
            "vitals.band_hz" => format!("{}, {}", self.vitals.band_hz[0], self.vitals.band_hz[1]),
            "vitals.prominence_db" => self.vitals.prominence_db.to_string(),
            _ => return None,
        })
    }

    /// All keys with their current text values.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|k| (*k, self.get(k).expect("KEYS are all gettable")))
            .collect()
    }

    /// Parses a config document. Keys not present keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let sections = kv::parse(text)?;
        let mut cfg = SensingConfig::default();
        for section in &sections {
            if let Some(name) = &section.name {
                return Err(ConfigError::Syntax {
                    line: section.line,
                    message: format!("sections are not allowed in config files (`[{name}]`)"),
                });
            }
            for e in &section.entries {
                cfg.set(&e.key, &e.value).map_err(|err| match err {
                    ConfigError::InvalidValue { key, message } => ConfigError::InvalidValue {
                        key,
                        message: format!("line {}: {message}", e.line),
                    },
                    other => other,
                })?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Returns the config with `patch` applied. Structural keys are rejected
    /// even when the value is unchanged. A `mode` change without an explicit
    /// `zero_pad_factor` resets the zero-pad override.
    pub fn patched(&self, patch: &[(String, String)]) -> Result<SensingConfig, ConfigError> {
        let mut next = self.clone();
        let sets_zero_pad = patch.iter().any(|(k, _)| k == "zero_pad_factor");
        for (key, value) in patch {
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
            if STRUCTURAL_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::RestartRequired(key.clone()));
            }
            next.set(key, value)?;
            if key == "mode" && !sets_zero_pad {
                next.zero_pad_factor = None;
            }
        }
        next.validate()?;
        Ok(next)
    }
}
