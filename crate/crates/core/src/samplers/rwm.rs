use super::ChainConfig;
use crate::draws::ChainDraws;
use crate::error::{Error, Result};
use crate::targets::Target;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RwmOutcome {
    pub draws: ChainDraws,
    /// Scale after adaptation (the initial scale when not adapting).
    pub scale: f64,
    /// Acceptance rate over the non-adaptive iterations.
    pub acceptance_rate: f64,
}

/// Metropolis with spherical normal proposals `theta + s z`.
///
/// With adaptation, iterations inside the window are tuned and flagged
/// burn-in regardless of `cfg.burn_in`.
pub fn rwm_chain<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &ChainConfig,
    chain_id: usize,
    rng: &mut R,
) -> Result<RwmOutcome> {
    let p = target.dim();
    let mut theta = cfg.init.sample(rng);
    let mut log_g = target.log_density(&theta);
    if log_g == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!(
            "chain {chain_id} starts outside the target support"
        )));
    }
    let mut log_scale = cfg.step_scale.ln();
    let window = cfg.adaptation.map_or(0, |a| a.window);
    let burn = cfg.burn_in.max(window);
    let mut out = ChainDraws::with_capacity(chain_id, p, cfg.iterations);
    let mut proposal = vec![0.0; p];
    let (mut accepted, mut counted) = (0usize, 0usize);
    for it in 0..cfg.iterations {
        let scale = log_scale.exp();
        for (q, t) in proposal.iter_mut().zip(&theta) {
            *q = t + scale * rng.sample::<f64, _>(StandardNormal);
        }
        let log_prop = target.log_density(&proposal);
        let log_ratio = log_prop - log_g;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let accept = accept_prob >= 1.0 || rng.random::<f64>() < accept_prob;
        if accept {
            theta.copy_from_slice(&proposal);
            log_g = log_prop;
        }
        match cfg.adaptation {
            Some(a) if it < a.window => {
                let gain = ((it + 1) as f64).powf(-a.gain_exponent);
                log_scale += gain * (accept_prob - a.target_accept);
            }
            _ => {
                counted += 1;
                accepted += usize::from(accept);
            }
        }
        out.push(it as u64, &theta, it < burn)?;
    }
    Ok(RwmOutcome {
        draws: out,
        scale: log_scale.exp(),
        acceptance_rate: if counted > 0 { accepted as f64 / counted as f64 } else { f64::NAN },
    })
}
