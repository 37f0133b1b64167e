//! Physical axes of the range–Doppler map.

use crate::config::SensingConfig;
use crate::SPEED_OF_LIGHT;

/// Range bin spacing `c / (2·B·Z)` in metres.
pub fn range_spacing(config: &SensingConfig) -> f64 {
    SPEED_OF_LIGHT / (2.0 * config.bandwidth_hz * config.zero_pad() as f64)
}

/// Number of range bins kept after cropping to `max_range_m`.
pub fn range_bins(config: &SensingConfig) -> usize {
    let spacing = range_spacing(config);
    // tolerate max_range landing exactly on a bin centre
    let n = (config.max_range_m / spacing + 1e-9).floor() as usize + 1;
    n.min(config.effective_subcarriers() * config.zero_pad())
}

/// Range bin centres starting at zero delay.
pub fn range_axis(config: &SensingConfig) -> Vec<f64> {
    let spacing = range_spacing(config);
    (0..range_bins(config)).map(|i| i as f64 * spacing).collect()
}

/// Doppler bin spacing `λ / (2·M·T)` in m/s.
pub fn velocity_spacing(config: &SensingConfig) -> f64 {
    config.wavelength_m() / (2.0 * config.doppler_batch as f64 * config.frame_interval_s)
}

/// Zero-centred velocity bins, ascending from `-λ/(4T)`.
pub fn velocity_axis(config: &SensingConfig) -> Vec<f64> {
    let m = config.doppler_batch;
    let spacing = velocity_spacing(config);
    (0..m)
        .map(|i| (i as f64 - (m / 2) as f64) * spacing)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    fn cfg() -> SensingConfig {
        SensingConfig::default()
    }

    #[test]
    fn presence_axis() {
        let mut c = cfg();
        c.zero_pad_factor = Some(1);
        let axis = range_axis(&c);
        let s = 299_792_458.0 / (2.0 * 160e6);
        assert_eq!(axis.len(), 6);
        for (i, r) in axis.iter().enumerate() {
            assert!((r - i as f64 * s).abs() < 1e-12);
        }
        assert!((axis[5] - 4.684_257_156_25).abs() < 1e-9);
    }

    #[test]
    fn gesture_spacing() {
        let mut c = cfg();
        c.mode = Mode::Gesture;
        assert!((range_spacing(&c) - 0.117_106_428_906_25).abs() < 1e-12);
        assert_eq!(range_axis(&c).len(), 43);
    }

    #[test]
    fn velocity_defaults() {
        let v = velocity_axis(&cfg());
        assert_eq!(v.len(), 32);
        assert_eq!(v[16], 0.0);
        let lambda = 299_792_458.0 / 6e9;
        let dv = lambda / (2.0 * 32.0 * 0.025);
        assert!((v[1] - v[0] - dv).abs() < 1e-15);
        assert!((v[0] + 0.499_654_096_666_666_7).abs() < 1e-12);
        assert!((v[31] - 0.468_425_715_625).abs() < 1e-12);
    }

    #[test]
    fn two_bin_axis() {
        let mut c = cfg();
        c.doppler_batch = 2;
        let v = velocity_axis(&c);
        assert_eq!(v, vec![-c.max_velocity_mps(), 0.0]);
    }
}
