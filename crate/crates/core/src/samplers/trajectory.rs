use crate::error::{check_dim, Error, Result};
use crate::mvt::{MvtDist, DEFAULT_NU};
use crate::targets::Target;
use rand::Rng;

/// Short path started from an instrumental and driven by heavy-tailed
/// innovations.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Density of each state under its own instrumental: the starting
    /// distribution for the first, the one-step innovation density given the
    /// previous state for the rest.
    pub state_log_densities: Vec<f64>,
    /// Joint log density of the whole path.
    pub log_forward_density: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `theta_1 ~ start`, then
/// `theta_t = theta_{t-1} + sigma^2 / 2 grad ln g(theta_{t-1}) + sigma eta_t`
/// with `eta_t` standard multivariate t4. `drift = false` drops the gradient
/// term (pure t4 random walk).
///
/// With `sigma = 0` the path is constant and every state is weighted by the
/// starting density.
pub fn t4_trajectory<T: Target + ?Sized, R: Rng + ?Sized>(
    start: &MvtDist,
    target: &T,
    len: usize,
    sigma: f64,
    drift: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    if len == 0 {
        return Err(Error::InvalidParameter("trajectory length must be at least 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("trajectory sigma {sigma}")));
    }
    let p = target.dim();
    check_dim(p, start.dim())?;
    let use_drift = drift && sigma > 0.0;
    if use_drift && !target.has_gradient() && len > 1 {
        return Err(Error::GradientUnavailable);
    }
    let first = start.sample(rng);
    let log_q1 = start.log_density(&first);
    let mut states = Vec::with_capacity(len);
    let mut dens = Vec::with_capacity(len);
    states.push(first);
    dens.push(log_q1);
    let mut log_forward = log_q1;
    if sigma == 0.0 {
        for _ in 1..len {
            states.push(states[0].clone());
            dens.push(log_q1);
        }
        return Ok(Trajectory {
            states,
            state_log_densities: dens,
            log_forward_density: log_q1,
        });
    }
    let innovation = MvtDist::standard(p, DEFAULT_NU)?;
    let log_sigma_p = p as f64 * sigma.ln();
    let half_var = 0.5 * sigma * sigma;
    let mut eta = vec![0.0; p];
    for _ in 1..len {
        let prev = states.last().expect("non-empty");
        let mut next = prev.clone();
        if use_drift {
            let g = target.grad_log_density(prev).ok_or(Error::GradientUnavailable)?;
            for (n, gi) in next.iter_mut().zip(&g) {
                *n += half_var * gi;
            }
        }
        innovation.sample_into(rng, &mut eta);
        for (n, e) in next.iter_mut().zip(&eta) {
            *n += sigma * e;
        }
        // change of variables theta_t = drift point + sigma eta
        let log_q = innovation.log_density(&eta) - log_sigma_p;
        log_forward += log_q;
        states.push(next);
        dens.push(log_q);
    }
    Ok(Trajectory {
        states,
        state_log_densities: dens,
        log_forward_density: log_forward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{stream_rng, StreamTag};
    use crate::targets::{paper_mixture, FnTarget};
    use nalgebra::DMatrix;

    fn start() -> MvtDist {
        MvtDist::new(vec![-5.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.5]), 4.0).unwrap()
    }

    #[test]
    fn single_state_is_a_start_draw() {
        let mut rng = stream_rng(0, StreamTag::Auxiliary(4), 0);
        let tr = t4_trajectory(&start(), &paper_mixture(), 1, 0.5, true, &mut rng).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.log_forward_density, start().log_density(&tr.states[0]));
    }

    #[test]
    fn zero_sigma_is_constant() {
        let mut rng = stream_rng(0, StreamTag::Auxiliary(4), 1);
        let tr = t4_trajectory(&start(), &paper_mixture(), 5, 0.0, true, &mut rng).unwrap();
        assert!(tr.states.iter().all(|s| s == &tr.states[0]));
        assert!(tr.log_forward_density.is_finite());
    }

    #[test]
    fn forward_density_sums_state_densities() {
        let mut rng = stream_rng(0, StreamTag::Auxiliary(4), 2);
        let tr = t4_trajectory(&start(), &paper_mixture(), 5, 0.7, true, &mut rng).unwrap();
        let s: f64 = tr.state_log_densities.iter().sum();
        assert!((s - tr.log_forward_density).abs() < 1e-12);
    }

    #[test]
    fn drift_requires_gradient() {
        let t = FnTarget::new(2, |x| -x[0] * x[0] - x[1] * x[1]);
        let mut rng = stream_rng(0, StreamTag::Auxiliary(4), 3);
        assert!(matches!(t4_trajectory(&start(), &t, 3, 0.5, true, &mut rng), Err(Error::GradientUnavailable)));
        assert!(t4_trajectory(&start(), &t, 3, 0.5, false, &mut rng).is_ok());
    }

    /// Kolmogorov-Smirnov statistic against a cdf.
    fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = cdf(*x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn undrifted_increments_are_scaled_t4() {
        // marginals of a standard bivariate t4 are univariate t4
        let t = FnTarget::new(2, |_| 0.0);
        let sigma = 0.3;
        let mut rng = stream_rng(5, StreamTag::Auxiliary(4), 4);
        let reps = 10_000;
        let mut inc = [Vec::with_capacity(reps), Vec::with_capacity(reps)];
        for _ in 0..reps {
            let tr = t4_trajectory(&start(), &t, 2, sigma, false, &mut rng).unwrap();
            for d in 0..2 {
                inc[d].push((tr.states[1][d] - tr.states[0][d]) / sigma);
            }
        }
        // closed-form t4 cdf: 1/2 + x (x^2 + 6) / (2 (x^2 + 4)^(3/2))
        let t4_cdf = |x: f64| 0.5 + x * (x * x + 6.0) / (2.0 * (x * x + 4.0).powf(1.5));
        for d in 0..2 {
            let stat = ks(inc[d].clone(), t4_cdf);
            // 1% critical value 1.63 / sqrt(n)
            assert!(stat < 1.63 / (reps as f64).sqrt(), "coordinate {d}: D = {stat}");
        }
    }
}
