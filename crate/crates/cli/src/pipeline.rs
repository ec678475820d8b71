//! Stage orchestration: sample, partition, weights, combine, diagnose.
//!
//! Every stage is a pure function of its inputs and the master seed, so a
//! full run and a sequence of staged runs over the written files produce the
//! same bytes.

use crate::config::{
    BinSpec, Design, ExperimentConfig, Functional, InstrumentalKind, NamedBins, PartitionSpec,
    ReferenceKind, TargetSpec,
};
use parallel_mcmc::combine::{self, element_means, weighted_empirical, Report};
use parallel_mcmc::diagnostics::{
    iterations_to_threshold, lag_autocorrelation, metropolis_reference, mixture_reference,
    posterior_mode, probit_rejection_sample, tv_distance, tv_trace, tv_trace_combined,
    write_trace_csv, Discretization,
};
use parallel_mcmc::linalg::spd_inverse;
use parallel_mcmc::partition::{cluster, Partition};
use parallel_mcmc::samplers::run_chain;
use parallel_mcmc::targets::{GaussianMixture, LohModel, LohParameters, ProbitData, ProbitModel};
use parallel_mcmc::targets::{paper_mixture, random_mixture, RandomMixtureOptions};
use parallel_mcmc::weights::{
    estimate_c_hats, fit_instrumentals, laplace_instrumental, WeightEstimate, WeightMethod,
    WeightsReport,
};
use parallel_mcmc::{run_parallel_chains, DrawStore, MvtDist, Target};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Sample,
    Partition,
    Weights,
    Combine,
    Diagnose,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Sample => "sample",
            Stage::Partition => "partition",
            Stage::Weights => "weights",
            Stage::Combine => "combine",
            Stage::Diagnose => "diagnose",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: parallel_mcmc::Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T, E: Into<parallel_mcmc::Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

fn fail(stage: Stage, msg: impl Into<String>) -> StageError {
    StageError {
        stage,
        source: parallel_mcmc::Error::InvalidParameter(msg.into()),
    }
}

/// File names inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn draws(&self) -> PathBuf {
        self.root.join("draws")
    }

    pub fn partition(&self) -> PathBuf {
        self.root.join("partition.json")
    }

    pub fn weights(&self) -> PathBuf {
        self.root.join("weights.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn reference(&self) -> PathBuf {
        self.root.join("reference.csv")
    }

    pub fn trace(&self) -> PathBuf {
        self.root.join("diagnostics.csv")
    }

    pub fn serial_trace(&self) -> PathBuf {
        self.root.join("diagnostics_serial.csv")
    }

    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics.json")
    }
}

pub enum Model {
    Mixture(GaussianMixture),
    Probit(ProbitModel),
    Loh(LohModel),
}

impl Model {
    pub fn build(spec: &TargetSpec) -> StageResult<Self> {
        let st = Stage::Load;
        Ok(match spec {
            TargetSpec::PaperMixture => Model::Mixture(paper_mixture()),
            TargetSpec::RandomMixture { dim, components, mixture_seed } => Model::Mixture(
                random_mixture(*dim, *components, *mixture_seed, RandomMixtureOptions::default()).at(st)?,
            ),
            TargetSpec::Probit { data, simulate, prior_variance } => {
                let data = match (data, simulate) {
                    (Some(path), _) => ProbitData::read_csv(open(path, st)?).at(st)?,
                    (None, Some(s)) => simulate_probit(s.design, s.n_obs, &s.beta, s.data_seed).at(st)?,
                    (None, None) => return Err(fail(st, "probit target without data")),
                };
                Model::Probit(ProbitModel::new(data, vec![*prior_variance]).at(st)?)
            }
            TargetSpec::Loh { data } => Model::Loh(LohModel::read_csv(open(data, st)?).at(st)?),
        })
    }

    pub fn target(&self) -> &dyn Target {
        match self {
            Model::Mixture(m) => m,
            Model::Probit(m) => m,
            Model::Loh(m) => m,
        }
    }
}

pub fn simulate_probit(design: Design, n: usize, beta: &[f64], seed: u64) -> parallel_mcmc::Result<ProbitData> {
    match design {
        Design::Single => {
            if beta.len() != 1 {
                return Err(parallel_mcmc::Error::DimensionMismatch {
                    expected: 1,
                    got: beta.len(),
                });
            }
            Ok(ProbitData::simulate_single(n, beta[0], seed))
        }
        Design::Multi => ProbitData::simulate_multi(n, beta, seed),
    }
}

fn open(path: &Path, stage: Stage) -> StageResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| fail(stage, format!("{}: {e}", path.display())))
}

fn create(path: &Path, stage: Stage) -> StageResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).at(stage)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail(stage, format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, stage: Stage) -> StageResult<()> {
    w.flush().at(stage)
}

/// Summary written to `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub coordinate: usize,
    pub threshold: f64,
    pub n_bins: usize,
    pub parallel: ParallelSummary,
    #[serde(default)]
    pub serial: Option<SerialSummary>,
    #[serde(default)]
    pub mixture: Option<MixtureSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSummary {
    pub chains: usize,
    /// Pooled post-burn-in draws.
    pub draws: usize,
    /// TV of the weighted pooled histogram against the reference.
    pub tv: f64,
    /// TV of the unweighted pooled histogram.
    pub tv_unweighted: f64,
    /// Pooled draws at the first checkpoint at or below the threshold.
    pub draws_to_threshold: Option<usize>,
    /// Lag-1 autocorrelation of the coordinate, averaged over chains.
    pub mean_lag1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialSummary {
    pub iterations: usize,
    pub tv: f64,
    /// Serial TV after as many draws as the parallel pool holds.
    pub tv_at_parallel_draws: Option<f64>,
    pub iterations_to_threshold: Option<usize>,
    /// First checkpoint where the serial TV is at or below the parallel TV.
    pub iterations_to_parallel_tv: Option<usize>,
    pub lag1: f64,
    /// Serial iterations over per-chain parallel iterations at the threshold.
    pub speedup: Option<f64>,
    /// True when the serial chain never reached the threshold, so `speedup`
    /// uses its full length and is only a lower bound.
    pub speedup_is_lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    /// Weights summed over cells whose center is nearest each true mean.
    pub component_weights: Vec<f64>,
    /// Occupancy of the cells by independent mixture draws.
    pub occupancy: Vec<f64>,
    pub occupancy_tv: f64,
    /// Mean absolute error of the combined mean over coordinates.
    pub mean_abs_error: f64,
}

/// Stage-by-stage driver for one configuration.
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub model: Model,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> StageResult<Self> {
        let model = Model::build(&cfg.target)?;
        Ok(Self { cfg, model })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn workers(&self) -> usize {
        self.cfg.workers
    }

    /// Lines describing what `run` would do.
    pub fn plan(&self) -> Vec<String> {
        let c = &self.cfg;
        let mut out = vec![
            format!("target: {}", self.model.target().describe()),
            format!(
                "sample: {} {:?} chains x {} iterations (burn-in {}), seed {}, {} workers",
                c.chains.count, c.chains.kernel, c.chains.iterations, c.chains.burn_in, c.seed, c.workers
            ),
            format!("partition: {:?}", c.partition),
            format!(
                "weights: {:?}, n = {}, T = {}, {:?}",
                c.weights.method, c.weights.replicates, c.weights.length, c.weights.estimator
            ),
            format!("combine: {:?}", c.combine.functional),
        ];
        match &c.diagnostics {
            Some(d) => out.push(format!(
                "diagnose: coordinate {}, {:?} reference ({} draws), threshold {}",
                d.coordinate, d.reference, d.reference_draws, d.threshold
            )),
            None => out.push("diagnose: skipped".into()),
        }
        out
    }

    pub fn sample(&self) -> StageResult<DrawStore> {
        let chain = self.cfg.chains.chain_config(self.seed());
        let cfgs = vec![chain; self.cfg.chains.count];
        run_parallel_chains(self.model.target(), &cfgs, self.workers()).at(Stage::Sample)
    }

    /// `prefix` overrides the configured per-chain clustering prefix.
    pub fn partition(&self, draws: &DrawStore, prefix: Option<usize>) -> StageResult<Partition> {
        let st = Stage::Partition;
        check_dim(draws, self.model.target().dim(), st)?;
        match &self.cfg.partition {
            spec @ PartitionSpec::Cluster { draws_per_chain, .. } => {
                let opts = spec.cluster_options().expect("cluster spec");
                match prefix.or(*draws_per_chain) {
                    Some(k) => cluster(&draws.post_burnin_prefix(k), &opts).at(st),
                    None => cluster(draws, &opts).at(st),
                }
            }
            PartitionSpec::Modes => {
                let Model::Mixture(m) = &self.model else {
                    return Err(fail(st, "mode partition needs a mixture target"));
                };
                let modes = m.means().iter().map(|mu| m.local_mode(mu)).collect::<Result<Vec<_>, _>>().at(st)?;
                Partition::from_centers(modes).at(st)
            }
            PartitionSpec::Quantiles { coordinate, elements } => {
                if draws.dim() != 1 {
                    return Err(fail(st, "quantile partitions are one-dimensional"));
                }
                Partition::from_quantiles(&draws.coordinate(*coordinate), *elements).at(st)
            }
        }
    }

    fn instrumentals(&self, draws: &DrawStore, partition: &Partition) -> StageResult<Vec<MvtDist>> {
        let st = Stage::Weights;
        let w = &self.cfg.weights;
        let target = self.model.target();
        match w.instrumental {
            InstrumentalKind::Fitted => fit_instrumentals(target, draws, partition, &w.instrumental_options()).at(st),
            InstrumentalKind::Laplace => partition
                .centers_original()
                .into_iter()
                .map(|c| {
                    let (mode, neg_h) = match &self.model {
                        Model::Mixture(m) => {
                            let mode = m.local_mode(&c)?;
                            let h = m.hessian(&mode)?;
                            (mode, -h)
                        }
                        _ => posterior_mode(target, &c)?,
                    };
                    laplace_instrumental(mode, &neg_h, w.nu, w.inflation)
                })
                .collect::<parallel_mcmc::Result<Vec<_>>>()
                .at(st),
        }
    }

    pub fn weights(&self, draws: &DrawStore, partition: &Partition) -> StageResult<WeightsReport> {
        let st = Stage::Weights;
        let w = &self.cfg.weights;
        let qs = self.instrumentals(draws, partition)?;
        let c = estimate_c_hats(
            self.model.target(),
            partition,
            &qs,
            w.replicates,
            w.length,
            w.estimator,
            self.seed(),
            self.workers(),
        )
        .at(st)?;
        let est = match w.method {
            WeightMethod::Ratio => WeightEstimate::ratio(c, w.length),
            WeightMethod::PseudoMarginal => WeightEstimate::pseudo_marginal(c, w.length, w.pm_iterations, self.seed()),
        }
        .at(st)?;
        Ok(est.report())
    }

    fn functional(&self) -> fn(&[f64]) -> Vec<f64> {
        match self.cfg.combine.functional {
            Functional::Identity => |x| x.to_vec(),
            Functional::LohNatural => |x| {
                let p = LohParameters::from_unconstrained(x);
                vec![p.eta, p.pi1, p.pi2, p.gamma]
            },
        }
    }

    pub fn combine(&self, draws: &DrawStore, partition: &Partition, weights: &WeightsReport) -> StageResult<Report> {
        let st = Stage::Combine;
        if weights.w_hat.len() != partition.n_elements() {
            return Err(StageError {
                stage: st,
                source: parallel_mcmc::Error::DimensionMismatch {
                    expected: partition.n_elements(),
                    got: weights.w_hat.len(),
                },
            });
        }
        let em = element_means(draws, partition, self.functional()).at(st)?;
        let se = (weights.w_se.len() == weights.w_hat.len()).then_some(weights.w_se.as_slice());
        let est = combine::combine(&em, &weights.w_hat, se).at(st)?;
        Ok(Report::new(&weights.w_hat, &est))
    }

    /// Reference draws of the diagnostic coordinate.
    pub fn reference(&self) -> StageResult<Vec<f64>> {
        let st = Stage::Diagnose;
        let d = self.diagnostics_spec(st)?;
        let seed = self.seed();
        let k = d.coordinate;
        match (d.reference, &self.model) {
            (ReferenceKind::ProbitRejection, Model::Probit(m)) => {
                if k != 0 {
                    return Err(fail(st, "rejection reference has a single coordinate"));
                }
                probit_rejection_sample(m, d.reference_draws, seed).at(st)
            }
            (ReferenceKind::Mixture, Model::Mixture(m)) => {
                let (_, x) = mixture_reference(m, d.reference_draws, seed);
                Ok(x.iter().map(|v| v[k]).collect())
            }
            (ReferenceKind::Metropolis, _) => {
                let target = self.model.target();
                let (mode, neg_h) = posterior_mode(target, &vec![0.0; target.dim()]).at(st)?;
                let cov = spd_inverse(&neg_h).at(st)?;
                let x = metropolis_reference(target, &mode, &cov, d.reference_draws, d.reference_burn_in, seed).at(st)?;
                Ok(x.iter().map(|v| v[k]).collect())
            }
            _ => Err(fail(st, "reference kind does not suit the target")),
        }
    }

    fn diagnostics_spec(&self, st: Stage) -> StageResult<&crate::config::DiagnosticsSpec> {
        self.cfg
            .diagnostics
            .as_ref()
            .ok_or_else(|| fail(st, "config has no [diagnostics] section"))
    }

    pub fn discretization(&self) -> StageResult<Discretization> {
        let d = self.diagnostics_spec(Stage::Diagnose)?;
        match &d.bins {
            BinSpec::Named(NamedBins::ProbitSingle) => Ok(Discretization::probit_single()),
            BinSpec::Named(NamedBins::ProbitMulti) => Ok(Discretization::probit_multi()),
            BinSpec::Edges(e) => Discretization::from_edges(e).at(Stage::Diagnose),
        }
    }

    /// Traces and summary. The serial comparison chain is chain `L` of the
    /// master seed.
    pub fn diagnose(
        &self,
        draws: &DrawStore,
        partition: &Partition,
        weights: &WeightsReport,
        reference: &[f64],
    ) -> StageResult<Diagnosis> {
        let st = Stage::Diagnose;
        let d = self.diagnostics_spec(st)?;
        let k = d.coordinate;
        if k >= draws.dim() {
            return Err(fail(st, format!("coordinate {k} out of range")));
        }
        let disc = self.discretization()?;
        let ref_p = disc.probabilities(reference, None).at(st)?;
        let w = &weights.w_hat;
        let labels = partition.labels(draws).at(st)?;
        let mut values = Vec::with_capacity(draws.n_chains());
        let mut chain_labels = Vec::with_capacity(draws.n_chains());
        let mut off = 0;
        let mut lag_sum = 0.0;
        for ch in draws.chains() {
            let n = ch.n_post_burnin();
            let v: Vec<f64> = ch.post_burnin().map(|p| p[k]).collect();
            lag_sum += lag_autocorrelation(&v, 1).at(st)?;
            values.push(v);
            chain_labels.push(labels[off..off + n].to_vec());
            off += n;
        }
        let pooled = draws.coordinate(k);
        let emp = weighted_empirical(draws, partition, w).at(st)?;
        let tv = tv_distance(&disc.probabilities(&pooled, Some(&emp.masses)).at(st)?, &ref_p).at(st)?;
        let tv_unweighted = tv_distance(&disc.probabilities(&pooled, None).at(st)?, &ref_p).at(st)?;
        let trace = tv_trace_combined(&values, &chain_labels, w, &ref_p, &disc, d.checkpoint_every).at(st)?;
        let parallel = ParallelSummary {
            chains: draws.n_chains(),
            draws: pooled.len(),
            tv,
            tv_unweighted,
            draws_to_threshold: iterations_to_threshold(&trace, d.threshold).at(st)?,
            mean_lag1: lag_sum / draws.n_chains() as f64,
        };

        let mut serial_trace = None;
        let serial = match d.serial_iterations {
            None => None,
            Some(iters) => {
                let mut cfg = self.cfg.chains.chain_config(self.seed());
                cfg.iterations = iters;
                cfg.burn_in = 0;
                if let Some(init) = &d.serial_init {
                    cfg.init = init.clone();
                }
                let ch = run_chain(self.model.target(), &cfg, self.cfg.chains.count).at(st)?;
                let v = ch.coordinate(k);
                let tr = tv_trace(&v, &ref_p, &disc, d.checkpoint_every).at(st)?;
                let hit = iterations_to_threshold(&tr, d.threshold).at(st)?;
                let per_chain = parallel.draws_to_threshold.map(|p| p as f64 / parallel.chains as f64);
                let speedup = per_chain.map(|p| hit.unwrap_or(iters) as f64 / p);
                let summary = SerialSummary {
                    iterations: iters,
                    tv: tv_distance(&disc.probabilities(&v, None).at(st)?, &ref_p).at(st)?,
                    tv_at_parallel_draws: tr.iter().find(|(n, _)| *n == parallel.draws).map(|t| t.1),
                    iterations_to_threshold: hit,
                    iterations_to_parallel_tv: iterations_to_threshold(&tr, parallel.tv).at(st)?,
                    lag1: lag_autocorrelation(&v, 1).at(st)?,
                    speedup,
                    speedup_is_lower_bound: speedup.is_some() && hit.is_none(),
                };
                serial_trace = Some(tr);
                Some(summary)
            }
        };

        let mixture = match &self.model {
            Model::Mixture(m) if d.reference == ReferenceKind::Mixture => {
                Some(self.mixture_summary(m, draws, partition, weights, d.reference_draws)?)
            }
            _ => None,
        };
        Ok(Diagnosis {
            summary: DiagnosticsSummary {
                coordinate: k,
                threshold: d.threshold,
                n_bins: disc.n_bins(),
                parallel,
                serial,
                mixture,
            },
            trace,
            serial_trace,
        })
    }

    fn mixture_summary(
        &self,
        m: &GaussianMixture,
        draws: &DrawStore,
        partition: &Partition,
        weights: &WeightsReport,
        n_ref: usize,
    ) -> StageResult<MixtureSummary> {
        let st = Stage::Diagnose;
        let w = &weights.w_hat;
        let mut component_weights = vec![0.0; m.n_components()];
        for (j, c) in partition.centers_original().iter().enumerate() {
            let dist = |mu: &Vec<f64>| mu.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let nearest = (0..m.n_components())
                .min_by(|&a, &b| dist(&m.means()[a]).total_cmp(&dist(&m.means()[b])))
                .expect("mixture has components");
            component_weights[nearest] += w[j];
        }
        let (_, x) = mixture_reference(m, n_ref, self.seed());
        let mut occupancy = vec![0.0; partition.n_elements()];
        for v in &x {
            occupancy[partition.assign(v).at(st)?] += 1.0;
        }
        occupancy.iter_mut().for_each(|o| *o /= n_ref as f64);
        let occupancy_tv = tv_distance(w, &occupancy).at(st)?;
        let report = self.combine(draws, partition, weights).map_err(|e| StageError { stage: st, ..e })?;
        let truth = m.mean();
        let mean_abs_error = report
            .combined
            .mean
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / truth.len() as f64;
        Ok(MixtureSummary {
            component_weights,
            occupancy,
            occupancy_tv,
            mean_abs_error,
        })
    }

    /// Full pipeline; writes every output under `layout`.
    pub fn run(&self, layout: &Layout) -> StageResult<RunOutputs> {
        let draws = self.sample()?;
        write_draws(&draws, layout)?;
        let partition = self.partition(&draws, None)?;
        write_partition(&partition, layout)?;
        let weights = self.weights(&draws, &partition)?;
        write_weights(&weights, layout)?;
        let report = self.combine(&draws, &partition, &weights)?;
        write_report(&report, layout)?;
        let diagnosis = match self.cfg.diagnostics {
            Some(_) => {
                let reference = self.reference()?;
                write_reference(&reference, layout)?;
                let d = self.diagnose(&draws, &partition, &weights, &reference)?;
                write_diagnosis(&d, layout)?;
                Some(d)
            }
            None => None,
        };
        Ok(RunOutputs {
            draws,
            partition,
            weights,
            report,
            diagnosis,
        })
    }
}

fn check_dim(draws: &DrawStore, dim: usize, st: Stage) -> StageResult<()> {
    if draws.dim() != dim {
        return Err(StageError {
            stage: st,
            source: parallel_mcmc::Error::DimensionMismatch {
                expected: dim,
                got: draws.dim(),
            },
        });
    }
    Ok(())
}

pub struct Diagnosis {
    pub summary: DiagnosticsSummary,
    pub trace: Vec<(usize, f64)>,
    pub serial_trace: Option<Vec<(usize, f64)>>,
}

pub struct RunOutputs {
    pub draws: DrawStore,
    pub partition: Partition,
    pub weights: WeightsReport,
    pub report: Report,
    pub diagnosis: Option<Diagnosis>,
}

pub fn write_draws(draws: &DrawStore, layout: &Layout) -> StageResult<()> {
    let dir = layout.draws();
    if dir.exists() {
        // stale chains from an earlier run with more chains would be merged on read
        std::fs::remove_dir_all(&dir).at(Stage::Sample)?;
    }
    draws.write_dir(&dir).at(Stage::Sample).map(|_| ())
}

pub fn read_draws(dir: &Path) -> StageResult<DrawStore> {
    DrawStore::read_dir(dir).at(Stage::Load)
}

pub fn write_partition(p: &Partition, layout: &Layout) -> StageResult<()> {
    let st = Stage::Partition;
    let mut w = create(&layout.partition(), st)?;
    p.to_json(&mut w).at(st)?;
    finish(w, st)
}

pub fn read_partition(path: &Path) -> StageResult<Partition> {
    Partition::from_json(open(path, Stage::Load)?).at(Stage::Load)
}

pub fn write_weights(r: &WeightsReport, layout: &Layout) -> StageResult<()> {
    let st = Stage::Weights;
    let mut w = create(&layout.weights(), st)?;
    r.to_json(&mut w).at(st)?;
    finish(w, st)
}

pub fn read_weights(path: &Path) -> StageResult<WeightsReport> {
    WeightsReport::from_json(open(path, Stage::Load)?).at(Stage::Load)
}

pub fn write_report(r: &Report, layout: &Layout) -> StageResult<()> {
    let st = Stage::Combine;
    let mut w = create(&layout.report(), st)?;
    r.to_json(&mut w).at(st)?;
    finish(w, st)
}

pub fn read_report(path: &Path) -> StageResult<Report> {
    Report::from_json(open(path, Stage::Load)?).at(Stage::Load)
}

/// One `value` column.
pub fn write_reference(values: &[f64], layout: &Layout) -> StageResult<()> {
    let st = Stage::Diagnose;
    let mut w = create(&layout.reference(), st)?;
    writeln!(w, "value").at(st)?;
    for v in values {
        writeln!(w, "{v}").at(st)?;
    }
    finish(w, st)
}

pub fn read_reference(path: &Path) -> StageResult<Vec<f64>> {
    let st = Stage::Load;
    let mut rdr = csv::Reader::from_reader(open(path, st)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.at(st)?;
        let v = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse::<f64>()
            .map_err(|e| fail(st, format!("{}: {e}", path.display())))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(fail(st, format!("{} holds no reference draws", path.display())));
    }
    Ok(out)
}

pub fn write_diagnosis(d: &Diagnosis, layout: &Layout) -> StageResult<()> {
    let st = Stage::Diagnose;
    let mut w = create(&layout.trace(), st)?;
    write_trace_csv(&d.trace, &mut w).at(st)?;
    finish(w, st)?;
    if let Some(tr) = &d.serial_trace {
        let mut w = create(&layout.serial_trace(), st)?;
        write_trace_csv(tr, &mut w).at(st)?;
        finish(w, st)?;
    }
    let mut w = create(&layout.diagnostics(), st)?;
    serde_json::to_writer_pretty(&mut w, &d.summary).at(st)?;
    finish(w, st)
}

pub fn read_diagnostics(path: &Path) -> StageResult<DiagnosticsSummary> {
    serde_json::from_reader(open(path, Stage::Load)?).at(Stage::Load)
}
