//! Seeded synthetic households built from semi-Markov appliance models.
//!
//! Each appliance stays in a state for a geometric number of minutes with the
//! configured mean, then jumps according to its transition matrix. Mains is
//! the exact sum of the appliance traces.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Home, PowerSeries, DISHWASHER, MAINS, MICROWAVE, REFRIGERATOR};
use crate::error::{NilmError, Result};

/// First timestamp of every generated home (epoch seconds).
pub const START_EPOCH: i64 = 1_303_084_800;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceState {
    pub power_watts: f64,
    pub mean_dwell_minutes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceModel {
    pub name: String,
    pub states: Vec<ApplianceState>,
    /// Row-stochastic jump matrix between states.
    pub transition: Vec<Vec<f64>>,
    /// Per-home relative perturbation of every mean dwell, drawn uniformly
    /// from `[-duty_jitter, duty_jitter]`.
    pub duty_jitter: f64,
    /// Per-home relative perturbation of every state power, drawn the same
    /// way and rounded to whole watts.
    #[serde(default)]
    pub power_jitter: f64,
}

fn state(power_watts: f64, mean_dwell_minutes: f64) -> ApplianceState {
    ApplianceState {
        power_watts,
        mean_dwell_minutes,
    }
}

impl ApplianceModel {
    /// Compressor cycling between OFF (0 W) and ON (188 W), with an
    /// occasional defrost heater burst.
    pub fn refrigerator() -> Self {
        ApplianceModel {
            name: REFRIGERATOR.into(),
            states: vec![state(0.0, 22.0), state(188.0, 16.0), state(300.0, 25.0)],
            transition: vec![
                vec![0.0, 1.0, 0.0],
                vec![0.95, 0.0, 0.05],
                vec![1.0, 0.0, 0.0],
            ],
            duty_jitter: 0.15,
            power_jitter: 0.0,
        }
    }

    /// Idle, then a wash pump / heater / rinse pump / drying cycle.
    pub fn dishwasher() -> Self {
        ApplianceModel {
            name: DISHWASHER.into(),
            states: vec![
                state(0.0, 300.0),
                state(190.0, 60.0),
                state(1150.0, 10.0),
                state(190.0, 60.0),
                state(650.0, 10.0),
            ],
            transition: vec![
                vec![0.0, 1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 0.0, 0.0],
            ],
            duty_jitter: 0.2,
            power_jitter: 0.2,
        }
    }

    pub fn microwave() -> Self {
        ApplianceModel {
            name: MICROWAVE.into(),
            states: vec![state(0.0, 240.0), state(1250.0, 3.0)],
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            duty_jitter: 0.2,
            power_jitter: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NilmError::Config(format!("appliance {}: {msg}", self.name)));
        if self.states.is_empty() {
            return bad("no states".into());
        }
        for s in &self.states {
            if !(s.power_watts >= 0.0) || !s.power_watts.is_finite() {
                return bad(format!("power {} must be non-negative", s.power_watts));
            }
            if !(s.mean_dwell_minutes >= 1.0) || !s.mean_dwell_minutes.is_finite() {
                return bad(format!("mean dwell {} must be at least 1 minute", s.mean_dwell_minutes));
            }
        }
        if self.transition.len() != self.states.len() {
            return bad("transition matrix must be square over the states".into());
        }
        for row in &self.transition {
            if row.len() != self.states.len() || row.iter().any(|p| !(*p >= 0.0)) {
                return bad("transition rows must be non-negative, one entry per state".into());
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("transition rows must sum to 1".into());
            }
        }
        if !(0.0..1.0).contains(&self.duty_jitter) {
            return bad(format!("duty_jitter {} must lie in [0, 1)", self.duty_jitter));
        }
        if !(0.0..1.0).contains(&self.power_jitter) {
            return bad(format!("power_jitter {} must lie in [0, 1)", self.power_jitter));
        }
        Ok(())
    }

    /// Minute-resolution trace of `minutes` readings.
    fn simulate<R: Rng>(&self, minutes: usize, rng: &mut R) -> Vec<f64> {
        let dwell: Vec<f64> = self
            .states
            .iter()
            .map(|s| {
                let j = if self.duty_jitter > 0.0 {
                    rng.random_range(-self.duty_jitter..=self.duty_jitter)
                } else {
                    0.0
                };
                (s.mean_dwell_minutes * (1.0 + j)).max(1.0)
            })
            .collect();
        let power: Vec<f64> = self
            .states
            .iter()
            .map(|s| {
                if self.power_jitter > 0.0 {
                    let j = rng.random_range(-self.power_jitter..=self.power_jitter);
                    (s.power_watts * (1.0 + j)).round()
                } else {
                    s.power_watts
                }
            })
            .collect();
        let geo: Vec<Geometric> = dwell
            .iter()
            .map(|m| Geometric::new(1.0 / m).expect("dwell >= 1 gives p in (0, 1]"))
            .collect();
        let mut out = Vec::with_capacity(minutes);
        let mut current = rng.random_range(0..self.states.len());
        // the first visit is cut at a random point so homes do not all start in phase
        let mut remaining = 1 + geo[current].sample(rng) as usize;
        remaining = rng.random_range(1..=remaining);
        while out.len() < minutes {
            let take = remaining.min(minutes - out.len());
            out.extend(std::iter::repeat_n(power[current], take));
            let u: f64 = rng.random();
            let row = &self.transition[current];
            let mut acc = 0.0;
            let mut next = row.len() - 1;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            current = next;
            remaining = 1 + geo[current].sample(rng) as usize;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_homes: usize,
    pub minutes_per_home: usize,
    pub seed: u64,
    pub appliance_models: Vec<ApplianceModel>,
    /// Standard deviation of optional Gaussian measurement noise on each
    /// appliance channel (clipped at 0 W). Zero disables it.
    pub noise_watts: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_homes: 3,
            minutes_per_home: 5000,
            seed: 2023,
            appliance_models: vec![
                ApplianceModel::refrigerator(),
                ApplianceModel::dishwasher(),
                ApplianceModel::microwave(),
            ],
            noise_watts: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_homes < 2 {
            return Err(NilmError::Config("synthetic data needs at least 2 homes".into()));
        }
        if self.minutes_per_home < 500 {
            return Err(NilmError::Config("homes need at least 500 minutes".into()));
        }
        if !(self.noise_watts >= 0.0) {
            return Err(NilmError::Config("noise_watts must be non-negative".into()));
        }
        for m in &self.appliance_models {
            m.validate()?;
        }
        Ok(())
    }

    pub fn home_id(&self, home_index: usize) -> String {
        format!("house_{}", home_index + 1)
    }
}

/// splitmix64 finalizer, used to give each home its own stream.
fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_home(cfg: &SynthConfig, home_index: usize) -> Result<Home> {
    cfg.validate()?;
    if home_index >= cfg.n_homes {
        return Err(NilmError::Config(format!(
            "home index {home_index} out of range for {} homes",
            cfg.n_homes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, home_index as u64));
    let minutes = cfg.minutes_per_home;
    let timestamps: Vec<i64> = (0..minutes as i64).map(|m| START_EPOCH + 60 * m).collect();
    let noise = (cfg.noise_watts > 0.0)
        .then(|| Normal::new(0.0, cfg.noise_watts).expect("positive standard deviation"));
    let mut appliances = BTreeMap::new();
    let mut mains = vec![0.0; minutes];
    for model in &cfg.appliance_models {
        let mut trace = model.simulate(minutes, &mut rng);
        if let Some(noise) = &noise {
            trace.iter_mut().for_each(|w| *w = (*w + noise.sample(&mut rng)).max(0.0));
        }
        for (m, w) in mains.iter_mut().zip(&trace) {
            *m += w;
        }
        appliances.insert(
            model.name.clone(),
            PowerSeries::new(model.name.clone(), timestamps.clone(), trace)?,
        );
    }
    Ok(Home {
        home_id: cfg.home_id(home_index),
        mains: Some(PowerSeries::new(MAINS, timestamps, mains)?),
        appliances,
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<Home>> {
    (0..cfg.n_homes).map(|i| generate_home(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn small() -> SynthConfig {
        SynthConfig {
            minutes_per_home: 2000,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_home() {
        let cfg = small();
        assert_eq!(generate_home(&cfg, 1).unwrap(), generate_home(&cfg, 1).unwrap());
    }

    #[test]
    fn homes_differ_by_index() {
        let cfg = small();
        let a = generate_home(&cfg, 0).unwrap();
        let b = generate_home(&cfg, 1).unwrap();
        assert_ne!(a.appliances[REFRIGERATOR].watts, b.appliances[REFRIGERATOR].watts);
    }

    #[test]
    fn mains_is_exact_sum() {
        let home = generate_home(&small(), 2).unwrap();
        let mains = home.mains.as_ref().unwrap();
        for i in 0..mains.len() {
            let s: f64 = home.appliances.values().map(|a| a.watts[i]).sum();
            assert_eq!(mains.watts[i] - s, 0.0);
        }
        assert_eq!(data::artificial_aggregate(&home).unwrap(), *mains);
    }

    #[test]
    fn powers_come_from_configured_states() {
        let cfg = small();
        let home = generate_home(&cfg, 0).unwrap();
        for model in &cfg.appliance_models {
            let trace = &home.appliances[&model.name].watts;
            let near_a_state = |w: f64| {
                model.states.iter().any(|s| {
                    (w - s.power_watts).abs() <= model.power_jitter * s.power_watts + 0.5
                })
            };
            assert!(trace.iter().all(|w| near_a_state(*w) && w.fract() == 0.0));
            let mut levels: Vec<u64> = trace.iter().map(|w| w.to_bits()).collect();
            levels.sort_unstable();
            levels.dedup();
            assert!(levels.len() <= model.states.len());
            if model.power_jitter == 0.0 {
                let allowed: Vec<f64> = model.states.iter().map(|s| s.power_watts).collect();
                assert!(trace.iter().all(|w| allowed.contains(w)));
            }
        }
    }

    #[test]
    fn refrigerator_visits_every_state() {
        let home = generate_home(&small(), 0).unwrap();
        let fridge = &home.appliances[REFRIGERATOR].watts;
        for p in [0.0, 188.0, 300.0] {
            assert!(fridge.contains(&p), "{p} never generated");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small();
        cfg.n_homes = 1;
        assert!(matches!(generate_home(&cfg, 0), Err(NilmError::Config(_))));
        let mut cfg = small();
        cfg.minutes_per_home = 100;
        assert!(generate_home(&cfg, 0).is_err());
        let mut cfg = small();
        cfg.appliance_models[0].transition[0] = vec![0.5, 0.6, 0.0];
        assert!(generate_home(&cfg, 0).is_err());
        let mut cfg = small();
        cfg.appliance_models[0].states[1].mean_dwell_minutes = 0.5;
        assert!(generate_home(&cfg, 0).is_err());
        assert!(generate_home(&small(), 3).is_err());
    }

    #[test]
    fn noise_flag_perturbs_readings() {
        let cfg = SynthConfig {
            noise_watts: 5.0,
            ..small()
        };
        let home = generate_home(&cfg, 0).unwrap();
        assert!(home.appliances[REFRIGERATOR].watts.iter().any(|w| ![0.0, 188.0, 300.0].contains(w)));
        assert!(home.appliances[REFRIGERATOR].watts.iter().all(|w| *w >= 0.0));
    }
}
