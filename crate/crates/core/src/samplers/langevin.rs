use super::ChainConfig;
use crate::draws::ChainDraws;
use crate::error::{Error, Result};
use crate::targets::Target;
use rand::Rng;
use rand_distr::StandardNormal;

/// One Euler-Maruyama step of `d theta = sigma^2 / 2 grad ln g dt + sigma dW`,
/// without Metropolis correction.
pub fn langevin_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    theta: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !target.has_gradient() {
        return Err(Error::GradientUnavailable);
    }
    if sigma == 0.0 {
        return Ok(theta.to_vec());
    }
    let grad = target.grad_log_density(theta).ok_or(Error::GradientUnavailable)?;
    let half_var = 0.5 * sigma * sigma;
    Ok(theta
        .iter()
        .zip(&grad)
        .map(|(t, g)| t + half_var * g + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

pub fn langevin_chain<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    cfg: &ChainConfig,
    chain_id: usize,
    rng: &mut R,
) -> Result<ChainDraws> {
    if !target.has_gradient() {
        return Err(Error::GradientUnavailable);
    }
    let sigma = cfg.step_scale;
    if sigma * sigma > 0.5 {
        log::warn!("Langevin sigma^2 = {} is not small; discretization bias will be large", sigma * sigma);
    }
    let mut theta = cfg.init.sample(rng);
    let mut out = ChainDraws::with_capacity(chain_id, target.dim(), cfg.iterations);
    for it in 0..cfg.iterations {
        theta = langevin_step(target, &theta, sigma, rng)?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Langevin state diverged at iteration {it}")));
        }
        out.push(it as u64, &theta, it < cfg.burn_in)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{stream_rng, StreamTag};
    use crate::partition::Partition;
    use crate::samplers::{Init, Kernel};
    use crate::targets::{paper_mixture, FnTarget};

    fn std_normal() -> FnTarget {
        FnTarget::new(1, |x| -0.5 * x[0] * x[0]).with_gradient(|x| vec![-x[0]])
    }

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = stream_rng(0, StreamTag::Auxiliary(1), 0);
        let t = paper_mixture();
        assert_eq!(langevin_step(&t, &[1.0, -2.0], 0.0, &mut rng).unwrap(), vec![1.0, -2.0]);
        let flat = FnTarget::new(2, |_| 0.0).with_gradient(|_| vec![0.0, 0.0]);
        let x = langevin_step(&flat, &[1.0, -2.0], 1e-300, &mut rng).unwrap();
        assert_eq!(x, vec![1.0, -2.0]);
    }

    #[test]
    fn needs_gradient() {
        let t = FnTarget::new(1, |x| -x[0] * x[0]);
        let mut rng = stream_rng(0, StreamTag::Auxiliary(1), 0);
        assert!(matches!(langevin_step(&t, &[0.0], 0.1, &mut rng), Err(Error::GradientUnavailable)));
    }

    #[test]
    fn standard_normal_stationary_variance() {
        let sigma2: f64 = 0.01;
        let cfg = ChainConfig::new(Kernel::Langevin, sigma2.sqrt(), 1_000_000 + 5_000, 5_000, 3, Init::Point { value: vec![0.0] });
        let mut rng = stream_rng(3, StreamTag::Chain, 0);
        let c = langevin_chain(&std_normal(), &cfg, 0, &mut rng).unwrap();
        let xs = c.coordinate(0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let var = sq.iter().sum::<f64>() / n;
        // MCSE of the variance by batch means on the squared deviations
        let b = 50;
        let len = sq.len() / b;
        let bm: Vec<f64> = (0..b).map(|i| sq[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64).collect();
        let bmean = bm.iter().sum::<f64>() / b as f64;
        let mcse = (bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / ((b - 1) * b) as f64).sqrt();
        assert!((var - 1.0).abs() <= 5.0 * sigma2 + 3.0 * mcse, "var {var}, mcse {mcse}");
    }

    #[test]
    fn stays_in_starting_mode() {
        let t = paper_mixture();
        let mu4 = t.means()[3].clone();
        let cfg = ChainConfig::new(Kernel::Langevin, 0.1, 25_000, 250, 8, Init::Point { value: mu4 });
        let mut rng = stream_rng(8, StreamTag::Chain, 0);
        let c = langevin_chain(&t, &cfg, 0, &mut rng).unwrap();
        let n = c.n_post_burnin() as f64;
        let mean = [
            c.coordinate(0).iter().sum::<f64>() / n,
            c.coordinate(1).iter().sum::<f64>() / n,
        ];
        let modes = Partition::from_centers(t.means().to_vec()).unwrap();
        assert_eq!(modes.assign(&mean).unwrap(), 3);
    }
}
