//! Experiment configuration files.
//!
//! Configs are TOML documents (flat `key = value` lines grouped under
//! `[section]` headers). Relative data paths resolve against the directory
//! holding the config file.

use parallel_mcmc::partition::{ClusterOptions, Transform};
use parallel_mcmc::samplers::{Adaptation, ChainConfig, Init, Kernel};
use parallel_mcmc::weights::{CenterMode, Estimator, InstrumentalOptions, WeightMethod};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory; relative to the working directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub target: TargetSpec,
    pub chains: ChainSpec,
    pub partition: PartitionSpec,
    pub weights: WeightSpec,
    #[serde(default)]
    pub combine: CombineSpec,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsSpec>,
}

fn default_seed() -> u64 {
    1
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// The four-component bivariate mixture.
    PaperMixture,
    RandomMixture {
        dim: usize,
        components: usize,
        mixture_seed: u64,
    },
    Probit {
        /// CSV with columns `x_1..x_p,y`; exclusive with `simulate`.
        #[serde(default)]
        data: Option<PathBuf>,
        #[serde(default)]
        simulate: Option<SimulateSpec>,
        prior_variance: f64,
    },
    Loh {
        /// CSV with columns `x,n`.
        data: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// One `Bern(1/2)` covariate.
    Single,
    /// Eight covariates of mixed type, the first constant.
    Multi,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub design: Design,
    pub n_obs: usize,
    pub beta: Vec<f64>,
    pub data_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub count: usize,
    pub kernel: Kernel,
    #[serde(default)]
    pub step_scale: f64,
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub init: Init,
    #[serde(default)]
    pub adaptation: Option<Adaptation>,
}

impl ChainSpec {
    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            kernel: self.kernel,
            step_scale: self.step_scale,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed,
            init: self.init.clone(),
            adaptation: self.adaptation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// Adaptive clustering of the pooled draws.
    Cluster {
        epsilon2: f64,
        alpha: f64,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        transform: Transform,
        #[serde(default = "default_max_points")]
        max_points: usize,
        /// Cluster only the first this-many post-burn-in draws of each chain.
        #[serde(default)]
        draws_per_chain: Option<usize>,
    },
    /// Cells centered at the local modes of a mixture target's components.
    Modes,
    /// One-dimensional cells centered at interior quantiles of one coordinate.
    Quantiles {
        #[serde(default)]
        coordinate: usize,
        elements: usize,
    },
}

fn default_max_points() -> usize {
    10_000
}

impl PartitionSpec {
    pub fn cluster_options(&self) -> Option<ClusterOptions> {
        match self {
            PartitionSpec::Cluster {
                epsilon2,
                alpha,
                normalize,
                transform,
                max_points,
                ..
            } => Some(
                ClusterOptions::new(*epsilon2, *alpha)
                    .normalized(*normalize)
                    .with_transform(*transform)
                    .with_max_points(*max_points),
            ),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentalKind {
    /// Moments of the element's draws.
    #[default]
    Fitted,
    /// Local mode with the inverse negative Hessian as scale.
    Laplace,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default)]
    pub method: WeightMethod,
    /// `n`, replicate estimates per element.
    pub replicates: usize,
    /// `T`, instrumental draws (or trajectory length) per replicate.
    pub length: usize,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub instrumental: InstrumentalKind,
    #[serde(default)]
    pub center: CenterMode,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    /// Pseudo-marginal chain length.
    #[serde(default = "default_pm_iterations")]
    pub pm_iterations: usize,
}

fn default_nu() -> f64 {
    4.0
}

fn default_inflation() -> f64 {
    1.0
}

fn default_pm_iterations() -> usize {
    100_000
}

impl WeightSpec {
    pub fn instrumental_options(&self) -> InstrumentalOptions {
        InstrumentalOptions {
            center_mode: self.center,
            nu: self.nu,
            inflation: self.inflation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    #[default]
    Identity,
    /// `(eta, pi1, pi2, gamma)` from the unconstrained LOH coordinates.
    LohNatural,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombineSpec {
    #[serde(default)]
    pub functional: Functional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedBins {
    ProbitSingle,
    ProbitMulti,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BinSpec {
    Named(NamedBins),
    Edges(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Exact draws by rejection (single-covariate probit).
    ProbitRejection,
    /// Long full-covariance random-walk Metropolis run from the mode.
    Metropolis,
    /// Independent draws from a mixture target.
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Coordinate whose marginal is compared (0-based).
    #[serde(default)]
    pub coordinate: usize,
    pub bins: BinSpec,
    pub reference: ReferenceKind,
    pub reference_draws: usize,
    #[serde(default)]
    pub reference_burn_in: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
    /// Length of a single serial chain run for comparison.
    #[serde(default)]
    pub serial_iterations: Option<usize>,
    #[serde(default)]
    pub serial_init: Option<Init>,
}

fn default_threshold() -> f64 {
    0.1
}

fn default_every() -> usize {
    parallel_mcmc::diagnostics::CHECKPOINT_EVERY
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_str_at(&text, path)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn from_str_at(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_str_at(text, Path::new("<string>"))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.target {
            TargetSpec::Probit { data: Some(p), .. } => fix(p),
            TargetSpec::Loh { data } => fix(data),
            _ => {}
        }
    }

    /// Range checks that need no data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        let c = &self.chains;
        if c.count == 0 {
            return Err(invalid("chains.count must be at least 1"));
        }
        if c.burn_in >= c.iterations {
            return Err(invalid("chains.burn_in must be below chains.iterations"));
        }
        match &self.target {
            TargetSpec::Probit { data, simulate, prior_variance } => {
                if data.is_some() == simulate.is_some() {
                    return Err(invalid("probit target needs exactly one of `data` or `simulate`"));
                }
                if !(*prior_variance > 0.0) {
                    return Err(invalid("target.prior_variance must be positive"));
                }
                if let Some(p) = data {
                    if !p.exists() {
                        return Err(invalid(format!("data file {} does not exist", p.display())));
                    }
                }
            }
            TargetSpec::Loh { data } => {
                if !data.exists() {
                    return Err(invalid(format!("data file {} does not exist", data.display())));
                }
                if c.kernel == Kernel::GibbsProbit {
                    return Err(invalid("gibbs_probit kernel needs a probit target"));
                }
            }
            TargetSpec::RandomMixture { dim, components, .. } => {
                if *dim == 0 || *components == 0 {
                    return Err(invalid("random mixture needs dim and components >= 1"));
                }
                if c.kernel == Kernel::GibbsProbit {
                    return Err(invalid("gibbs_probit kernel needs a probit target"));
                }
            }
            TargetSpec::PaperMixture => {
                if c.kernel == Kernel::GibbsProbit {
                    return Err(invalid("gibbs_probit kernel needs a probit target"));
                }
            }
        }
        match &self.partition {
            PartitionSpec::Cluster { epsilon2, alpha, max_points, draws_per_chain, .. } => {
                if !(*epsilon2 > 0.0) {
                    return Err(invalid("partition.epsilon2 must be positive"));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(invalid("partition.alpha must lie in (0, 1)"));
                }
                if *max_points == 0 || *draws_per_chain == Some(0) {
                    return Err(invalid("partition sizes must be positive"));
                }
            }
            PartitionSpec::Modes => {
                if !matches!(self.target, TargetSpec::PaperMixture | TargetSpec::RandomMixture { .. }) {
                    return Err(invalid("partition.method = \"modes\" needs a mixture target"));
                }
            }
            PartitionSpec::Quantiles { elements, .. } => {
                if *elements < 2 {
                    return Err(invalid("partition.elements must be at least 2"));
                }
            }
        }
        let w = &self.weights;
        if w.replicates == 0 || w.length == 0 || w.pm_iterations == 0 {
            return Err(invalid("weights.replicates, weights.length and weights.pm_iterations must be positive"));
        }
        if !(w.nu > 0.0) || !(w.inflation > 0.0 && w.inflation.is_finite()) {
            return Err(invalid("weights.nu and weights.inflation must be positive"));
        }
        if let Estimator::Trajectory { sigma, .. } = w.estimator {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(invalid("weights.estimator.sigma must be non-negative"));
            }
        }
        if self.combine.functional == Functional::LohNatural && !matches!(self.target, TargetSpec::Loh { .. }) {
            return Err(invalid("combine.functional = \"loh_natural\" needs the loh target"));
        }
        if let Some(d) = &self.diagnostics {
            if !(d.threshold > 0.0 && d.threshold <= 1.0) {
                return Err(invalid("diagnostics.threshold must lie in (0, 1]"));
            }
            if d.checkpoint_every == 0 || d.checkpoint_every % c.count != 0 {
                return Err(invalid("diagnostics.checkpoint_every must be a positive multiple of chains.count"));
            }
            if d.reference_draws == 0 {
                return Err(invalid("diagnostics.reference_draws must be positive"));
            }
            let mixture = matches!(self.target, TargetSpec::PaperMixture | TargetSpec::RandomMixture { .. });
            let ok = match d.reference {
                ReferenceKind::ProbitRejection => matches!(self.target, TargetSpec::Probit { .. }),
                ReferenceKind::Metropolis => !mixture,
                ReferenceKind::Mixture => mixture,
            };
            if !ok {
                return Err(invalid("diagnostics.reference does not suit the target"));
            }
        }
        Ok(())
    }
}
