//! Seeded synthetic 15-minute flow series: a base level, morning and
//! evening gaussian peaks, and an AR(1) disturbance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::TimeSeries;
use crate::error::{Error, Result};

pub const POINTS_PER_DAY: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Slot of day (0..96) at the bump's maximum.
    pub center: f64,
    /// Standard deviation of the bump, in slots.
    pub width: f64,
    /// Height in veh/h.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub days: usize,
    pub base_flow: f64,
    pub morning_peak: Peak,
    pub evening_peak: Peak,
    /// Stationary standard deviation of the AR(1) disturbance, veh/h.
    pub noise_std: f64,
    pub ar_coeff: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 25,
            base_flow: 250.0,
            morning_peak: Peak {
                center: 32.0,
                width: 5.0,
                amplitude: 900.0,
            },
            evening_peak: Peak {
                center: 71.0,
                width: 7.0,
                amplitude: 750.0,
            },
            noise_std: 80.0,
            ar_coeff: 0.6,
            seed: 2002,
        }
    }
}

impl SynthConfig {
    pub fn points_per_day(&self) -> usize {
        POINTS_PER_DAY
    }

    pub fn num_points(&self) -> usize {
        self.days * POINTS_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("SynthConfig: {msg}")));
        if self.days == 0 {
            return bad("days must be >= 1");
        }
        if !(self.base_flow >= 0.0 && self.base_flow.is_finite()) {
            return bad("base_flow must be >= 0");
        }
        for p in [self.morning_peak, self.evening_peak] {
            if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
                return bad("peak amplitudes must be >= 0");
            }
            if !(p.width > 0.0 && p.width.is_finite() && p.center.is_finite()) {
                return bad("peak width must be > 0 and center finite");
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be >= 0");
        }
        if !(0.0..1.0).contains(&self.ar_coeff) {
            return bad("ar_coeff must lie in [0, 1)");
        }
        Ok(())
    }

    /// Noise-free daily profile, one value per slot.
    pub fn daily_profile(&self) -> Vec<f64> {
        (0..POINTS_PER_DAY)
            .map(|slot| {
                self.base_flow
                    + bump(slot as f64, self.morning_peak)
                    + bump(slot as f64, self.evening_peak)
            })
            .collect()
    }
}

/// Gaussian bump on the daily circle, so the profile wraps at midnight.
fn bump(slot: f64, p: Peak) -> f64 {
    let n = POINTS_PER_DAY as f64;
    let d = (slot - p.center).rem_euclid(n);
    let d = d.min(n - d);
    p.amplitude * (-0.5 * (d / p.width).powi(2)).exp()
}

/// The AR(1) disturbance alone, before it is added to the profile.
pub fn ar_noise(cfg: &SynthConfig) -> Vec<f64> {
    let n = cfg.num_points();
    if cfg.noise_std == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stationary = Normal::new(0.0, cfg.noise_std).expect("valid std");
    let innovation = Normal::new(0.0, cfg.noise_std * (1.0 - cfg.ar_coeff * cfg.ar_coeff).sqrt())
        .expect("valid std");
    let mut out = Vec::with_capacity(n);
    let mut eps = stationary.sample(&mut rng);
    out.push(eps);
    for _ in 1..n {
        eps = cfg.ar_coeff * eps + innovation.sample(&mut rng);
        out.push(eps);
    }
    out
}

pub fn generate(cfg: &SynthConfig, link_id: &str) -> Result<TimeSeries> {
    cfg.validate()?;
    let profile = cfg.daily_profile();
    let values = ar_noise(cfg)
        .into_iter()
        .enumerate()
        .map(|(t, eps)| (profile[t % POINTS_PER_DAY] + eps).max(0.0))
        .collect();
    TimeSeries::new(link_id, values)
}
