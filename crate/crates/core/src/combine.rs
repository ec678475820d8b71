//! Within-element averages and the weighted combination.

use crate::draws::DrawStore;
use crate::error::{Error, Result};
use crate::partition::Partition;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Elements with no draws may carry at most this much weight; they are then
/// dropped and the remaining weights renormalized.
pub const EMPTY_WEIGHT_TOLERANCE: f64 = 0.001;

/// Batches used for within-element standard errors.
pub const SE_BATCHES: usize = 20;

/// Batch-means standard error of the mean of `x`.
///
/// Series shorter than `2 * n_batches` fall back to the iid formula; fewer
/// than two values give NaN.
pub fn batch_means_se(x: &[f64], n_batches: usize) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    if n_batches < 2 || n < 2 * n_batches {
        let m = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (var / n as f64).sqrt();
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let (lo, hi) = (b * n / n_batches, (b + 1) * n / n_batches);
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (var / n_batches as f64).sqrt()
}

/// Per-element averages of a vector functional.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMeans {
    pub counts: Vec<usize>,
    /// `None` for empty elements.
    pub means: Vec<Option<Vec<f64>>>,
    /// Batch-means SE per coordinate; `None` when fewer than two draws.
    pub se: Vec<Option<Vec<f64>>>,
}

impl ElementMeans {
    pub fn n_elements(&self) -> usize {
        self.counts.len()
    }

    pub fn empty_elements(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&j| self.counts[j] == 0).collect()
    }

    /// Relabels elements: element `j` of the result is element `perm[j]` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            counts: perm.iter().map(|&j| self.counts[j]).collect(),
            means: perm.iter().map(|&j| self.means[j].clone()).collect(),
            se: perm.iter().map(|&j| self.se[j].clone()).collect(),
        }
    }
}

/// Averages `f` over the post-burn-in draws of each element, pooled across
/// chains in canonical order.
pub fn element_means<F>(draws: &DrawStore, partition: &Partition, f: F) -> Result<ElementMeans>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let labels = partition.labels(draws)?;
    let j_count = partition.n_elements();
    let mut series: Vec<Vec<Vec<f64>>> = vec![Vec::new(); j_count];
    let mut out_dim = None;
    for (x, l) in draws.post_burnin().zip(labels) {
        let v = f(x);
        match out_dim {
            None => out_dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(Error::DimensionMismatch { expected: d, got: v.len() }),
            _ => {}
        }
        series[l].push(v);
    }
    let d = out_dim.unwrap_or(0);
    let mut means = Vec::with_capacity(j_count);
    let mut se = Vec::with_capacity(j_count);
    for s in &series {
        if s.is_empty() {
            means.push(None);
            se.push(None);
            continue;
        }
        let n = s.len() as f64;
        let mut m = vec![0.0; d];
        for v in s {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= n);
        means.push(Some(m));
        se.push(if s.len() < 2 {
            None
        } else {
            Some(
                (0..d)
                    .map(|k| {
                        let col: Vec<f64> = s.iter().map(|v| v[k]).collect();
                        batch_means_se(&col, SE_BATCHES)
                    })
                    .collect(),
            )
        });
    }
    for (j, s) in series.iter().enumerate() {
        if s.is_empty() {
            log::debug!("element {j} has no post-burn-in draws");
        }
    }
    Ok(ElementMeans {
        counts: series.iter().map(Vec::len).collect(),
        means,
        se,
    })
}

/// Weights with empty elements removed: errors if an empty element carries
/// more than [`EMPTY_WEIGHT_TOLERANCE`], otherwise zeroes it and renormalizes.
pub fn effective_weights(weights: &[f64], counts: &[usize]) -> Result<Vec<f64>> {
    if weights.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let mut w = weights.to_vec();
    let mut dropped = false;
    for (j, (wj, &n)) in w.iter_mut().zip(counts).enumerate() {
        if n == 0 && *wj > 0.0 {
            if *wj > EMPTY_WEIGHT_TOLERANCE {
                return Err(Error::UnexploredElement { element: j, weight: *wj });
            }
            log::warn!("dropping unexplored element {j} with weight {wj}");
            *wj = 0.0;
            dropped = true;
        }
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroEstimates);
    }
    if dropped {
        w.iter_mut().for_each(|v| *v /= total);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedEstimate {
    pub elements: ElementMeans,
    /// Weights actually used, after dropping empty elements.
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// `mu = sum_j w_j mu_j`.
///
/// Standard errors treat elements and weights as independent (delta method):
/// `SE(mu)^2 = sum_j w_j^2 SE(mu_j)^2 + sum_j (mu_j - mu)^2 SE(w_j)^2`.
/// The second term is skipped when `weight_se` is `None`. Elements with
/// fewer than two draws contribute no first-term variance.
pub fn combine(elements: &ElementMeans, weights: &[f64], weight_se: Option<&[f64]>) -> Result<CombinedEstimate> {
    let w = effective_weights(weights, &elements.counts)?;
    if let Some(s) = weight_se {
        if s.len() != w.len() {
            return Err(Error::DimensionMismatch { expected: w.len(), got: s.len() });
        }
    }
    let d = elements
        .means
        .iter()
        .flatten()
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::Empty("no element has draws".into()))?;
    let mut mean = vec![0.0; d];
    for (wj, mj) in w.iter().zip(&elements.means) {
        if let Some(m) = mj {
            for (a, b) in mean.iter_mut().zip(m) {
                *a += wj * b;
            }
        }
    }
    let mut var = vec![0.0; d];
    for (j, (wj, mj)) in w.iter().zip(&elements.means).enumerate() {
        let Some(m) = mj else { continue };
        if let Some(s) = &elements.se[j] {
            for (v, sk) in var.iter_mut().zip(s) {
                if sk.is_finite() {
                    *v += wj * wj * sk * sk;
                }
            }
        }
        if let Some(ws) = weight_se {
            for k in 0..d {
                var[k] += (m[k] - mean[k]).powi(2) * ws[j] * ws[j];
            }
        }
    }
    Ok(CombinedEstimate {
        elements: elements.clone(),
        weights: w,
        mean,
        se: var.into_iter().map(f64::sqrt).collect(),
    })
}

/// Draws with masses `w_j / n_j`, aligned with the post-burn-in order of
/// the store they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmpirical {
    pub masses: Vec<f64>,
    pub labels: Vec<usize>,
}

pub fn weighted_empirical(draws: &DrawStore, partition: &Partition, weights: &[f64]) -> Result<WeightedEmpirical> {
    let labels = partition.labels(draws)?;
    let mut counts = vec![0usize; partition.n_elements()];
    for &l in &labels {
        counts[l] += 1;
    }
    let w = effective_weights(weights, &counts)?;
    let masses = labels.iter().map(|&l| w[l] / counts[l] as f64).collect();
    Ok(WeightedEmpirical { masses, labels })
}

impl WeightedEmpirical {
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `sum_i m_i f(theta_i)`, accumulated per element first so the result
    /// matches [`combine`].
    pub fn expectation<F>(&self, draws: &DrawStore, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        if draws.n_post_burnin() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: draws.n_post_burnin(),
            });
        }
        let j_count = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut sums: Vec<Option<Vec<f64>>> = vec![None; j_count];
        let mut counts = vec![0usize; j_count];
        let mut wj = vec![0.0; j_count];
        for ((x, &l), &m) in draws.post_burnin().zip(&self.labels).zip(&self.masses) {
            let v = f(x);
            let s = sums[l].get_or_insert_with(|| vec![0.0; v.len()]);
            for (a, b) in s.iter_mut().zip(&v) {
                *a += b;
            }
            counts[l] += 1;
            wj[l] = m * counts[l] as f64;
        }
        let d = sums.iter().flatten().map(Vec::len).next().unwrap_or(0);
        let mut out = vec![0.0; d];
        for j in 0..j_count {
            if let Some(s) = &sums[j] {
                let n = counts[j] as f64;
                for (o, a) in out.iter_mut().zip(s) {
                    *o += wj[j] * (a / n);
                }
            }
        }
        Ok(out)
    }

    /// Multinomial resample of `n` indices into the post-burn-in draws.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        let dist = rand::distr::weighted::WeightedIndex::new(&self.masses)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok((0..n).map(|_| rng.sample(&dist)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub n: Vec<usize>,
    pub mean: Vec<Option<Vec<f64>>>,
    pub se: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSummary {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Report file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub w_hat: Vec<f64>,
    pub per_element: ElementSummary,
    pub combined: CombinedSummary,
}

impl Report {
    pub fn new(w_hat: &[f64], est: &CombinedEstimate) -> Self {
        Self {
            w_hat: w_hat.to_vec(),
            per_element: ElementSummary {
                n: est.elements.counts.clone(),
                mean: est.elements.means.clone(),
                se: est.elements.se.clone(),
            },
            combined: CombinedSummary {
                mean: est.mean.clone(),
                se: est.se.clone(),
            },
        }
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draws::ChainDraws;
    use crate::executor::{stream_rng, StreamTag};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn store(points: &[Vec<f64>], chains: usize) -> DrawStore {
        let dim = points[0].len();
        let per = points.len().div_ceil(chains);
        let cs = points
            .chunks(per)
            .enumerate()
            .map(|(c, pts)| {
                let mut ch = ChainDraws::new(c, dim);
                ch.push(0, &vec![1e9; dim], true).unwrap();
                for (i, p) in pts.iter().enumerate() {
                    ch.push(i as u64 + 1, p, false).unwrap();
                }
                ch
            })
            .collect();
        DrawStore::from_chains(dim, cs).unwrap()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed, StreamTag::Auxiliary(9), 0);
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![4.0 * a, 4.0 * b]
            })
            .collect()
    }

    fn quadrants() -> Partition {
        Partition::from_centers(vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn batch_se_matches_iid_formula_for_iid() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let se = batch_means_se(&x, 20);
        assert!((se - (55.0f64 / 6.0 / 10.0).sqrt()).abs() < 1e-12);
        assert!(batch_means_se(&[1.0], 20).is_nan());
    }

    #[test]
    fn proportions_reproduce_pooled_mean() {
        let pts = random_points(5000, 1);
        let draws = store(&pts, 3);
        let part = quadrants();
        let em = element_means(&draws, &part, |x| x.to_vec()).unwrap();
        let n: usize = em.counts.iter().sum();
        let w: Vec<f64> = em.counts.iter().map(|&c| c as f64 / n as f64).collect();
        let est = combine(&em, &w, None).unwrap();
        for d in 0..2 {
            let pooled = pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64;
            assert!((est.mean[d] - pooled).abs() < 1e-12, "{} vs {pooled}", est.mean[d]);
        }
    }

    #[test]
    fn indicator_and_single_element() {
        let pts = random_points(500, 2);
        let draws = store(&pts, 2);
        let part = quadrants();
        let em = element_means(&draws, &part, |x| {
            vec![f64::from(u8::from(part.assign(x).unwrap() == 2))]
        })
        .unwrap();
        for (j, m) in em.means.iter().enumerate() {
            assert_eq!(m.as_ref().unwrap()[0], f64::from(u8::from(j == 2)));
        }
        let one = Partition::from_centers(vec![vec![0.0, 0.0]]).unwrap();
        let em = element_means(&draws, &one, |x| x.to_vec()).unwrap();
        let est = combine(&em, &[1.0], None).unwrap();
        assert_eq!(&est.mean, em.means[0].as_ref().unwrap());
    }

    #[test]
    fn empty_element_rules() {
        let em = ElementMeans {
            counts: vec![10, 0, 5],
            means: vec![Some(vec![1.0]), None, Some(vec![3.0])],
            se: vec![Some(vec![0.1]), None, Some(vec![0.1])],
        };
        let err = combine(&em, &[0.5, 0.01, 0.49], None).unwrap_err();
        assert!(matches!(err, Error::UnexploredElement { element: 1, .. }));
        let est = combine(&em, &[0.5, 0.0005, 0.4995], None).unwrap();
        assert!((est.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(est.weights[1], 0.0);
        assert!((est.mean[0] - (0.5 + 3.0 * 0.4995) / 0.9995).abs() < 1e-12);
    }

    #[test]
    fn se_formula() {
        let em = ElementMeans {
            counts: vec![10, 10],
            means: vec![Some(vec![0.0]), Some(vec![2.0])],
            se: vec![Some(vec![0.3]), Some(vec![0.4])],
        };
        let est = combine(&em, &[0.5, 0.5], Some(&[0.1, 0.1])).unwrap();
        let expected = (0.25 * 0.09 + 0.25 * 0.16 + 2.0 * 0.01f64).sqrt();
        assert!((est.se[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn component_sums_of_seven_element_weights() {
        // element -> component map read off the clustering figure
        let w = [0.378, 0.201, 0.201, 0.105, 0.020, 0.093, 0.002];
        let component = [3usize, 2, 1, 3, 0, 3, 3];
        let mut sums = [0.0f64; 4];
        for (wj, &c) in w.iter().zip(&component) {
            sums[c] += wj;
        }
        for (s, e) in sums.iter().zip([0.020, 0.201, 0.201, 0.578]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_sample_identities() {
        let pts = random_points(3000, 3);
        let draws = store(&pts, 4);
        let part = quadrants();
        let w = [0.1, 0.2, 0.3, 0.4];
        let emp = weighted_empirical(&draws, &part, &w).unwrap();
        assert!((emp.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let em = element_means(&draws, &part, |x| vec![x[0], x[1] * x[1]]).unwrap();
        let est = combine(&em, &w, None).unwrap();
        let e = emp.expectation(&draws, |x| vec![x[0], x[1] * x[1]]).unwrap();
        for (a, b) in e.iter().zip(&est.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = Partition::from_centers(vec![vec![0.0, 0.0]]).unwrap();
        let u = weighted_empirical(&draws, &one, &[1.0]).unwrap();
        assert!(u.masses.iter().all(|m| (m - 1.0 / 3000.0).abs() < 1e-15));
    }

    #[test]
    fn resampling_recovers_weights() {
        let pts = random_points(4000, 4);
        let draws = store(&pts, 2);
        let part = quadrants();
        let w = [0.02, 0.2, 0.2, 0.58];
        let emp = weighted_empirical(&draws, &part, &w).unwrap();
        let mut rng = stream_rng(4, StreamTag::Auxiliary(9), 1);
        let idx = emp.resample(100_000, &mut rng).unwrap();
        let mut occ = [0.0; 4];
        for i in idx {
            occ[emp.labels[i]] += 1e-5;
        }
        for (o, e) in occ.iter().zip(w) {
            assert!((o - e).abs() < 0.01, "{occ:?}");
        }
    }

    #[test]
    fn report_roundtrip() {
        let em = ElementMeans {
            counts: vec![3, 0],
            means: vec![Some(vec![1.0, 2.0]), None],
            se: vec![Some(vec![0.5, 0.25]), None],
        };
        let est = combine(&em, &[1.0, 0.0], None).unwrap();
        let rep = Report::new(&[1.0, 0.0], &est);
        let mut buf = Vec::new();
        rep.to_json(&mut buf).unwrap();
        assert_eq!(Report::from_json(buf.as_slice()).unwrap(), rep);
    }

    proptest! {
        #[test]
        fn linear_and_label_free(
            seed in 0u64..1000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            raw in proptest::collection::vec(0.01f64..1.0, 4),
            shift in 0usize..4,
        ) {
            let draws = store(&random_points(400, seed), 2);
            let part = quadrants();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let f = |x: &[f64]| vec![x[0] * x[1]];
            let g = |x: &[f64]| vec![x[0].sin()];
            let cf = combine(&element_means(&draws, &part, f).unwrap(), &w, None).unwrap().mean[0];
            let cg = combine(&element_means(&draws, &part, g).unwrap(), &w, None).unwrap().mean[0];
            let h = |x: &[f64]| vec![a * f(x)[0] + b * g(x)[0]];
            let em_h = element_means(&draws, &part, h).unwrap();
            let ch = combine(&em_h, &w, None).unwrap().mean[0];
            prop_assert!((ch - (a * cf + b * cg)).abs() < 1e-12);

            let perm: Vec<usize> = (0..4).map(|j| (j + shift) % 4).collect();
            let wp: Vec<f64> = perm.iter().map(|&j| w[j]).collect();
            let cp = combine(&em_h.permuted(&perm), &wp, None).unwrap().mean[0];
            prop_assert!((cp - ch).abs() < 1e-12);
        }
    }
}
