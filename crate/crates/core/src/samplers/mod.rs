//! MCMC kernels and the heavy-tailed trajectory generator.

mod gibbs;
mod langevin;
mod rwm;
mod trajectory;

pub use gibbs::{gibbs_probit_chain, sample_truncated_below, ProbitGibbs};
pub use langevin::{langevin_chain, langevin_step};
pub use rwm::{rwm_chain, RwmOutcome};
pub use trajectory::{t4_trajectory, Trajectory};

use crate::draws::ChainDraws;
use crate::error::{Error, Result};
use crate::executor::{stream_rng, StreamTag};
use crate::targets::Target;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Langevin,
    Rwm,
    GibbsProbit,
}

/// Starting state of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    Point { value: Vec<f64> },
    /// Independent uniforms on `[lower_d, upper_d)`.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// `logit(u)` with `u` uniform on `(0, 1)^dim`.
    LogitUniform { dim: usize },
    /// Independent normals.
    Normal { mean: Vec<f64>, sd: Vec<f64> },
}

impl Init {
    pub fn uniform_box(dim: usize, lower: f64, upper: f64) -> Self {
        Init::UniformBox {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Init::Point { value } => value.len(),
            Init::UniformBox { lower, .. } => lower.len(),
            Init::LogitUniform { dim } => *dim,
            Init::Normal { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Init::UniformBox { lower, upper } => {
                if lower.len() != upper.len() || lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(Error::InvalidParameter("uniform init box is empty".into()));
                }
            }
            Init::Normal { mean, sd } => {
                if mean.len() != sd.len() || sd.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::InvalidParameter("normal init needs one sd >= 0 per mean".into()));
                }
            }
            Init::Point { value } => {
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("init point".into()));
                }
            }
            Init::LogitUniform { .. } => {}
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Init::Point { value } => value.clone(),
            Init::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
            Init::LogitUniform { dim } => (0..*dim)
                .map(|_| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    crate::special::logit(u)
                })
                .collect(),
            Init::Normal { mean, sd } => mean
                .iter()
                .zip(sd)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// Robbins-Monro tuning of the random-walk scale on the log scale:
/// `ln s <- ln s + t^(-gain_exponent) (a_t - target_accept)` for the first
/// `window` iterations, frozen afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Adaptation {
    pub window: usize,
    pub target_accept: f64,
    pub gain_exponent: f64,
}

impl Default for Adaptation {
    fn default() -> Self {
        Self {
            window: 1000,
            target_accept: 0.234,
            gain_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub kernel: Kernel,
    /// Langevin `sigma` or the initial random-walk scale. Unused by Gibbs.
    pub step_scale: f64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Master seed; chain `l` draws from stream `l`.
    pub seed: u64,
    pub init: Init,
    /// Random-walk scale adaptation; `None` keeps the scale fixed.
    pub adaptation: Option<Adaptation>,
}

impl ChainConfig {
    pub fn new(kernel: Kernel, step_scale: f64, iterations: usize, burn_in: usize, seed: u64, init: Init) -> Self {
        Self {
            kernel,
            step_scale,
            iterations,
            burn_in,
            seed,
            init,
            adaptation: None,
        }
    }

    pub fn with_adaptation(mut self, adaptation: Adaptation) -> Self {
        self.adaptation = Some(adaptation);
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        let scale_ok = match self.kernel {
            Kernel::Langevin => self.step_scale >= 0.0 && self.step_scale.is_finite(),
            Kernel::Rwm => self.step_scale > 0.0 && self.step_scale.is_finite(),
            Kernel::GibbsProbit => true,
        };
        if !scale_ok {
            return Err(Error::InvalidParameter(format!("step scale {}", self.step_scale)));
        }
        if let Some(a) = &self.adaptation {
            if !(a.target_accept > 0.0 && a.target_accept < 1.0) || !(a.gain_exponent > 0.0) {
                return Err(Error::InvalidParameter("adaptation settings out of range".into()));
            }
        }
        self.init.validate()?;
        if self.init.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.init.dim(),
            });
        }
        Ok(())
    }
}

/// Runs chain `chain_id` of `cfg` on its private stream.
pub fn run_chain<T: Target + ?Sized>(target: &T, cfg: &ChainConfig, chain_id: usize) -> Result<ChainDraws> {
    cfg.validate(target.dim())?;
    let mut rng = stream_rng(cfg.seed, StreamTag::Chain, chain_id as u64);
    match cfg.kernel {
        Kernel::Langevin => langevin_chain(target, cfg, chain_id, &mut rng),
        Kernel::Rwm => rwm_chain(target, cfg, chain_id, &mut rng).map(|o| o.draws),
        Kernel::GibbsProbit => {
            let model = target.as_probit().ok_or_else(|| {
                Error::InvalidParameter("the Gibbs kernel needs a probit target".into())
            })?;
            gibbs_probit_chain(model, cfg, chain_id, &mut rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ChainConfig::new(Kernel::Rwm, 1.0, 10, 2, 0, Init::uniform_box(2, 0.0, 1.0));
        assert!(ok.validate(2).is_ok());
        assert!(ok.validate(3).is_err());
        let mut bad = ok.clone();
        bad.burn_in = 10;
        assert!(bad.validate(2).is_err());
        let mut bad = ok.clone();
        bad.step_scale = 0.0;
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn logit_uniform_init_is_finite() {
        let mut rng = stream_rng(0, StreamTag::Auxiliary(0), 0);
        let init = Init::LogitUniform { dim: 4 };
        for _ in 0..1000 {
            assert!(init.sample(&mut rng).iter().all(|v| v.is_finite()));
        }
    }
}
