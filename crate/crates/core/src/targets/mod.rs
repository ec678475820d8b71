//! Unnormalized target densities.
//!
//! A target is a log density `ln g` on R^p known up to an additive constant,
//! optionally with its gradient.

mod loh;
mod mixture;
mod probit;

pub use loh::{LohModel, LohParameters, LOH_PRIOR_HALF_WIDTH};
pub use mixture::{paper_mixture, random_mixture, GaussianMixture, RandomMixtureOptions};
pub use probit::{ProbitData, ProbitModel};

use std::sync::Arc;

pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// `ln g(theta)`: finite, or `-inf` outside the support. Never NaN.
    fn log_density(&self, theta: &[f64]) -> f64;

    /// Gradient of `ln g`, when available.
    fn grad_log_density(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_gradient(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("target on R^{}", self.dim())
    }

    /// The probit model behind this target, for the data-augmentation Gibbs kernel.
    fn as_probit(&self) -> Option<&ProbitModel> {
        None
    }
}

macro_rules! forward_target {
    ($($ty:ty),*) => {$(
        impl<T: Target + ?Sized> Target for $ty {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn log_density(&self, theta: &[f64]) -> f64 {
                (**self).log_density(theta)
            }
            fn grad_log_density(&self, theta: &[f64]) -> Option<Vec<f64>> {
                (**self).grad_log_density(theta)
            }
            fn has_gradient(&self) -> bool {
                (**self).has_gradient()
            }
            fn describe(&self) -> String {
                (**self).describe()
            }
            fn as_probit(&self) -> Option<&ProbitModel> {
                (**self).as_probit()
            }
        }
    )*};
}

forward_target!(&T, Box<T>, Arc<T>);

type LogFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// User-supplied target from closures. NaN log densities are mapped to `-inf`.
pub struct FnTarget {
    dim: usize,
    log_g: Box<LogFn>,
    grad: Option<Box<GradFn>>,
    description: String,
}

impl FnTarget {
    pub fn new(dim: usize, log_g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            log_g: Box::new(log_g),
            grad: None,
            description: format!("user target on R^{dim}"),
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

impl Target for FnTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let v = (self.log_g)(theta);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn grad_log_density(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(theta))
    }

    fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    fn describe(&self) -> String {
        self.description.clone()
    }
}

/// Central finite-difference gradient of `ln g`.
pub fn finite_difference_gradient<T: Target + ?Sized>(target: &T, theta: &[f64], h: f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + h;
            let up = target.log_density(&x);
            x[i] = theta[i] - h;
            let down = target.log_density(&x);
            x[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fn_target_maps_nan() {
        let t = FnTarget::new(1, |x| if x[0] > 0.0 { f64::NAN } else { -x[0] * x[0] });
        assert_eq!(t.log_density(&[1.0]), f64::NEG_INFINITY);
        assert_eq!(t.log_density(&[-1.0]), -1.0);
        assert!(!t.has_gradient());
    }

    #[test]
    fn forwarding_impls() {
        let t = Arc::new(FnTarget::new(2, |x| -x[0]).with_gradient(|_| vec![-1.0, 0.0]));
        let r: &dyn Target = &t;
        assert_eq!(r.dim(), 2);
        assert!(r.has_gradient());
        assert_eq!(r.grad_log_density(&[0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
    }
}
