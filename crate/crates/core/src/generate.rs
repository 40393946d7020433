//! Seeded random instances.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::ComplexPower;
use crate::error::{CspError, Result};
use crate::model::{validate, DemandPreference, Elasticity, Instance, User};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityProfile {
    /// Every slot gets the base capacity.
    Constant,
    /// Uniform in `[base / 2, 3 base / 2]` per slot.
    Random,
    /// Lowest in the middle of the horizon, rising to `2 base` at the ends.
    Valley,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityModel {
    /// Sum of magnitudes times a factor in `[0.5, 1.5)`.
    Proportional,
    /// Uniform in `[1, 10)`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowModel {
    Full,
    RandomContiguous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n: usize,
    pub max_prefs_per_user: usize,
    pub m: usize,
    /// Largest demand argument, in `[0, pi)`.
    pub angle_max: f64,
    pub capacity_profile: CapacityProfile,
    pub capacity: f64,
    /// Magnitudes are drawn uniformly from this range, then clamped to the
    /// smallest capacity of the window.
    pub magnitude_range: (f64, f64),
    pub utility_model: UtilityModel,
    pub elastic_fraction: f64,
    pub window_model: WindowModel,
    /// One value per preference, repeated over its window.
    pub constant_demands: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n: 6,
            max_prefs_per_user: 2,
            m: 1,
            angle_max: FRAC_PI_2,
            capacity_profile: CapacityProfile::Constant,
            capacity: 10.0,
            magnitude_range: (1.0, 6.0),
            utility_model: UtilityModel::Proportional,
            elastic_fraction: 0.0,
            window_model: WindowModel::Full,
            constant_demands: false,
        }
    }
}

impl GeneratorConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(CspError::InvalidArgument(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.max_prefs_per_user == 0 {
            return bad("max_prefs_per_user must be positive".into());
        }
        if !(0.0..std::f64::consts::PI).contains(&self.angle_max) {
            return bad(format!("angle_max {} is outside [0, pi)", self.angle_max));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return bad(format!("capacity {} is not positive", self.capacity));
        }
        let (lo, hi) = self.magnitude_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("magnitude range ({lo}, {hi}) is invalid"));
        }
        if !(0.0..=1.0).contains(&self.elastic_fraction) {
            return bad(format!(
                "elastic_fraction {} is outside [0, 1]",
                self.elastic_fraction
            ));
        }
        Ok(())
    }
}

/// Builds an instance that always passes [`validate`].
pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.m;
    let base = config.capacity;
    let capacities: Vec<f64> = (0..m)
        .map(|t| match config.capacity_profile {
            CapacityProfile::Constant => base,
            CapacityProfile::Random => rng.random_range(0.5 * base..1.5 * base),
            CapacityProfile::Valley => {
                let mid = (m as f64 - 1.0) / 2.0;
                let d = if mid > 0.0 { (t as f64 - mid).abs() / mid } else { 0.0 };
                base * (1.0 + d)
            }
        })
        .collect();
    let (lo, hi) = config.magnitude_range;
    let second_quadrant_possible = config.angle_max > FRAC_PI_2;
    let mut users = Vec::with_capacity(config.n);
    for k in 0..config.n {
        // Users share a quadrant across all their values.
        let negative = second_quadrant_possible && rng.random_bool(0.5);
        let (a_lo, a_hi) = if negative {
            (FRAC_PI_2, config.angle_max)
        } else {
            (0.0, config.angle_max.min(FRAC_PI_2))
        };
        let count = rng.random_range(1..=config.max_prefs_per_user);
        let mut prefs = Vec::with_capacity(count);
        for j in 0..count {
            let window: Vec<usize> = match config.window_model {
                WindowModel::Full => (0..m).collect(),
                WindowModel::RandomContiguous => {
                    let a = rng.random_range(0..m);
                    let b = rng.random_range(a..m);
                    (a..=b).collect()
                }
            };
            let elastic = config.elastic_fraction > 0.0 && rng.random_bool(config.elastic_fraction);
            let window_cap = window
                .iter()
                .map(|&t| capacities[t])
                .fold(f64::INFINITY, f64::min);
            let draw = |rng: &mut ChaCha8Rng| {
                let mag = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let mag = if elastic { mag } else { mag.min(window_cap) };
                let arg = if a_hi > a_lo {
                    rng.random_range(a_lo..a_hi)
                } else {
                    a_lo
                };
                let mut v = ComplexPower::from_polar(mag, arg);
                if negative {
                    // Strictly left of the imaginary axis, on or above the real one.
                    v.re = v.re.min(-1e-9 * mag.max(1.0));
                    v.im = v.im.max(0.0);
                } else {
                    v.re = v.re.max(0.0);
                    v.im = v.im.max(0.0);
                }
                v
            };
            let values: Vec<ComplexPower> = if config.constant_demands {
                let v = draw(&mut rng);
                vec![v; window.len()]
            } else {
                window.iter().map(|_| draw(&mut rng)).collect()
            };
            let utility = match config.utility_model {
                UtilityModel::Proportional => {
                    let s: f64 = values.iter().map(|v| v.norm()).sum();
                    (s * rng.random_range(0.5..1.5)).max(1e-3)
                }
                UtilityModel::Uniform => rng.random_range(1.0..10.0),
            };
            prefs.push(DemandPreference {
                id: format!("p{j}"),
                window,
                values,
                utility,
                elasticity: if elastic {
                    Elasticity::Elastic
                } else {
                    Elasticity::Inelastic
                },
            });
        }
        users.push(User::new(format!("u{k}"), prefs));
    }
    let instance = Instance::new(capacities, users);
    let violations = validate(&instance);
    if !violations.is_empty() {
        return Err(CspError::InvalidInstance(violations));
    }
    Ok(instance)
}
