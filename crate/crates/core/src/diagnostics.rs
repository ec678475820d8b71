//! Total-variation distances on discretized marginals, autocorrelation,
//! convergence checkpoints and reference samplers.

use crate::error::{Error, Result};
use crate::executor::{stream_rng, StreamTag};
use crate::linalg::{cholesky_lower, lower_mul, spd_inverse, symmetrize};
use crate::special::log_std_normal_cdf;
use crate::targets::{GaussianMixture, ProbitModel, Target};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::io::{Read, Write};

/// Draws between two convergence checkpoints.
pub const CHECKPOINT_EVERY: usize = 10_000;

/// A finite family of disjoint left-open, right-closed intervals `(lo, hi]`.
/// End intervals may be unbounded. Mass outside every interval is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    intervals: Vec<(f64, f64)>,
}

impl Discretization {
    /// `(-inf, e_0], (e_0, e_1], ..., (e_last, inf)`.
    pub fn from_edges(edges: &[f64]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Empty("bin edges".into()));
        }
        let mut bounds = Vec::with_capacity(edges.len() + 2);
        bounds.push(f64::NEG_INFINITY);
        bounds.extend_from_slice(edges);
        bounds.push(f64::INFINITY);
        Self::from_intervals(bounds.windows(2).map(|w| (w[0], w[1])).collect())
    }

    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Empty("intervals".into()));
        }
        for &(lo, hi) in &intervals {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::InvalidParameter(format!("interval ({lo}, {hi}]")));
            }
        }
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidParameter("intervals must be increasing and disjoint".into()));
            }
        }
        Ok(Self { intervals })
    }

    /// `(-inf, 0]`, half-unit bins up to 25, then `(25, inf)`.
    pub fn probit_single() -> Self {
        let edges: Vec<f64> = (0..=50).map(|i| f64::from(i) / 2.0).collect();
        Self::from_edges(&edges).expect("static bins")
    }

    /// `(-inf, 3.5]`, half-unit bins to 15, unit bins from 16 to 25, then
    /// `(25, inf)`. The interval (15, 16] is not covered.
    pub fn probit_multi() -> Self {
        let mut iv = vec![(f64::NEG_INFINITY, 3.5)];
        iv.extend((7..30).map(|i| (f64::from(i) / 2.0, f64::from(i + 1) / 2.0)));
        iv.extend((16..25).map(|i| (f64::from(i), f64::from(i + 1))));
        iv.push((25.0, f64::INFINITY));
        Self::from_intervals(iv).expect("static bins")
    }

    pub fn n_bins(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn bin(&self, x: f64) -> Option<usize> {
        if x.is_nan() {
            return None;
        }
        // first interval whose upper bound is >= x
        let k = self.intervals.partition_point(|&(_, hi)| hi < x);
        match self.intervals.get(k) {
            Some(&(lo, _)) if x > lo => Some(k),
            _ => None,
        }
    }

    /// Fraction of the total mass in each bin.
    pub fn probabilities(&self, values: &[f64], masses: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut probs = vec![0.0; self.n_bins()];
        match masses {
            None => {
                if values.is_empty() {
                    return Err(Error::Empty("sample".into()));
                }
                let inc = 1.0 / values.len() as f64;
                for &v in values {
                    if let Some(b) = self.bin(v) {
                        probs[b] += inc;
                    }
                }
            }
            Some(m) => {
                if m.len() != values.len() {
                    return Err(Error::DimensionMismatch { expected: values.len(), got: m.len() });
                }
                let total: f64 = m.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Empty("sample mass".into()));
                }
                for (&v, &w) in values.iter().zip(m) {
                    if let Some(b) = self.bin(v) {
                        probs[b] += w / total;
                    }
                }
            }
        }
        Ok(probs)
    }
}

/// `0.5 * sum |p_b - q_b|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// TV distance between discrete distributions on the same support
/// (e.g. weights vs occupancy frequencies).
pub fn tv_simplex(p: &[f64], q: &[f64]) -> Result<f64> {
    tv_distance(p, q)
}

/// Sample autocorrelation at `lag`, with the usual `1/n` normalization.
pub fn lag_autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    let n = series.len();
    if n <= lag {
        return Err(Error::InvalidParameter(format!("series of length {n} at lag {lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    if c0 == 0.0 {
        return if lag == 0 { Ok(1.0) } else { Err(Error::ConstantSeries(lag)) };
    }
    let ck: f64 = series[..n - lag]
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    Ok(ck / c0)
}

/// `(checkpoint, tv)` for successive prefixes of a single stream.
pub fn tv_trace(values: &[f64], reference: &[f64], d: &Discretization, every: usize) -> Result<Vec<(usize, f64)>> {
    if every == 0 {
        return Err(Error::InvalidParameter("checkpoint spacing must be positive".into()));
    }
    let mut counts = vec![0usize; d.n_bins()];
    let mut out = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if let Some(b) = d.bin(v) {
            counts[b] += 1;
        }
        let n = i + 1;
        if n % every == 0 {
            let p: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            out.push((n, tv_distance(&p, reference)?));
        }
    }
    Ok(out)
}

/// `(checkpoint, tv)` for the weighted combination of parallel chains run in
/// lockstep: at pooled checkpoint `m` each chain contributes its first
/// `m / L` draws, and element `j` carries weight `w_j` spread evenly over
/// its draws so far. Weights of elements not yet visited are redistributed.
///
/// `values[l]` and `labels[l]` are the coordinate and element label series of
/// chain `l`.
pub fn tv_trace_combined(
    values: &[Vec<f64>],
    labels: &[Vec<usize>],
    weights: &[f64],
    reference: &[f64],
    d: &Discretization,
    every: usize,
) -> Result<Vec<(usize, f64)>> {
    let l_count = values.len();
    if l_count == 0 || labels.len() != l_count {
        return Err(Error::InvalidParameter("need one label series per chain".into()));
    }
    if every == 0 || every % l_count != 0 {
        return Err(Error::InvalidParameter(format!(
            "checkpoint spacing {every} must be a positive multiple of the chain count {l_count}"
        )));
    }
    let len = values.iter().map(Vec::len).min().unwrap_or(0);
    for (v, l) in values.iter().zip(labels) {
        if v.len() != l.len() {
            return Err(Error::DimensionMismatch { expected: v.len(), got: l.len() });
        }
    }
    let j_count = weights.len();
    let mut hist = vec![vec![0usize; d.n_bins()]; j_count];
    let mut n_j = vec![0usize; j_count];
    let per_chain = every / l_count;
    let mut out = Vec::new();
    for s in 0..len {
        for l in 0..l_count {
            let j = labels[l][s];
            if j >= j_count {
                return Err(Error::InvalidParameter(format!("label {j} out of range")));
            }
            n_j[j] += 1;
            if let Some(b) = d.bin(values[l][s]) {
                hist[j][b] += 1;
            }
        }
        if (s + 1) % per_chain == 0 {
            let visited: f64 = (0..j_count).filter(|&j| n_j[j] > 0).map(|j| weights[j]).sum();
            if !(visited > 0.0) {
                continue;
            }
            let mut p = vec![0.0; d.n_bins()];
            for j in (0..j_count).filter(|&j| n_j[j] > 0) {
                let scale = weights[j] / visited / n_j[j] as f64;
                for (pb, &c) in p.iter_mut().zip(&hist[j]) {
                    *pb += scale * c as f64;
                }
            }
            out.push(((s + 1) * l_count, tv_distance(&p, reference)?));
        }
    }
    Ok(out)
}

/// First checkpoint whose distance is at most `threshold`.
pub fn iterations_to_threshold(trace: &[(usize, f64)], threshold: f64) -> Result<Option<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold}")));
    }
    Ok(trace.iter().find(|(_, tv)| *tv <= threshold).map(|(n, _)| *n))
}

pub fn write_trace_csv<W: Write>(trace: &[(usize, f64)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["checkpoint", "tv"])?;
    for (n, tv) in trace {
        wr.write_record([n.to_string(), format!("{tv:?}")])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<(usize, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["checkpoint", "tv"] {
        return Err(Error::Parse(format!("unexpected trace header {headers:?}")));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let n = rec[0].parse().map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
            let tv = rec[1].parse().map_err(|e| Error::Parse(format!("tv: {e}")))?;
            Ok((n, tv))
        })
        .collect()
}

/// Exact posterior draws for a one-covariate probit model by rejection from
/// the prior, accepting with probability `L(beta) / sup L`.
pub fn probit_rejection_sample(model: &ProbitModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if model.data().n_covariates() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: model.data().n_covariates() });
    }
    // the likelihood depends on the data only through counts of distinct (x, y)
    let mut groups: std::collections::BTreeMap<(u64, u8), f64> = std::collections::BTreeMap::new();
    for (i, &y) in model.data().y().iter().enumerate() {
        *groups.entry((model.data().row(i)[0].to_bits(), y)).or_insert(0.0) += 1.0;
    }
    let groups: Vec<(f64, u8, f64)> = groups.into_iter().map(|((x, y), n)| (f64::from_bits(x), y, n)).collect();
    let ll = |b: f64| -> f64 {
        groups
            .iter()
            .map(|&(x, y, n)| {
                let eta = x * b;
                n * if y == 1 { log_std_normal_cdf(eta) } else { log_std_normal_cdf(-eta) }
            })
            .sum()
    };
    // the probit log-likelihood is concave, so golden-section search finds its supremum
    let (mut lo, mut hi) = (-1e3, 1e3);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (ll(a), ll(b));
    for _ in 0..200 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = ll(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = ll(a);
        }
    }
    let ends = [ll(-1e3), ll(1e3), fa, fb];
    let log_sup = ends.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1e-9;
    if !log_sup.is_finite() {
        return Err(Error::NonFinite("probit likelihood supremum".into()));
    }
    let prior = Normal::new(0.0, model.prior_variance()[0].sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream_rng(seed, StreamTag::Reference, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let b = prior.sample(&mut rng);
        let u: f64 = rng.random();
        if u.ln() < ll(b) - log_sup {
            out.push(b);
        }
    }
    Ok(out)
}

/// Posterior mode by damped Newton steps with a finite-difference Hessian
/// of the analytic gradient. Returns the mode and the negative Hessian.
pub fn posterior_mode<T: Target + ?Sized>(target: &T, start: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = target.dim();
    let grad = |x: &[f64]| target.grad_log_density(x).ok_or(Error::GradientUnavailable);
    let mut x = start.to_vec();
    let mut fx = target.log_density(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("log density at the starting point".into()));
    }
    let hessian = |x: &[f64]| -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(p, p);
        for k in 0..p {
            let step = 1e-5 * x[k].abs().max(1.0);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[k] += step;
            dn[k] -= step;
            let (gu, gd) = (grad(&up)?, grad(&dn)?);
            for i in 0..p {
                h[(i, k)] = (gu[i] - gd[i]) / (2.0 * step);
            }
        }
        Ok(symmetrize(h))
    };
    for _ in 0..200 {
        let g = DVector::from_vec(grad(&x)?);
        let neg_h = -hessian(&x)?;
        let dir = match cholesky_lower(&neg_h) {
            Ok(_) => spd_inverse(&neg_h)? * &g,
            Err(_) => g.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let fc = target.log_density(&cand);
            if fc >= fx {
                moved = (fc - fx).abs() > 1e-12 * fx.abs().max(1.0);
                x = cand;
                fx = fc;
                break;
            }
            t /= 2.0;
        }
        if !moved {
            break;
        }
    }
    let neg_h = -hessian(&x)?;
    cholesky_lower(&neg_h)?;
    Ok((x, neg_h))
}

/// Random-walk Metropolis with a fixed full covariance proposal
/// `N(theta, 2.38^2 / p * cov)`; returns `n` draws after `burn_in`.
pub fn metropolis_reference<T: Target + ?Sized>(
    target: &T,
    start: &[f64],
    cov: &DMatrix<f64>,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let p = target.dim();
    let chol = cholesky_lower(&(cov * (2.38f64.powi(2) / p as f64)))?;
    let mut rng = stream_rng(seed, StreamTag::Reference, 1);
    let mut x = start.to_vec();
    let mut fx = target.log_density(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("log density at the starting point".into()));
    }
    let mut z = vec![0.0; p];
    let mut step = vec![0.0; p];
    let mut out = Vec::with_capacity(n);
    for it in 0..n + burn_in {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        lower_mul(&chol, &z, &mut step);
        let cand: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let fc = target.log_density(&cand);
        let u: f64 = rng.random();
        if u.ln() < fc - fx {
            x = cand;
            fx = fc;
        }
        if it >= burn_in {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Independent mixture draws with their component labels.
pub fn mixture_reference(mixture: &GaussianMixture, n: usize, seed: u64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut rng = stream_rng(seed, StreamTag::Reference, 2);
    (0..n).map(|_| mixture.sample(&mut rng)).unzip()
}
