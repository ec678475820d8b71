//! Voronoi partitions from adaptively clustered draws.
//!
//! Clustering runs in "clustering coordinates": draws are optionally mapped
//! through a componentwise transform and divided by per-dimension scales.
//! Centers are stored transformed but unscaled; distances divide by the
//! scales.

use crate::draws::DrawStore;
use crate::error::{check_dim, Error, Result};
use crate::special::{logistic, logit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    /// Componentwise logistic into `(0, 1)`; inverse is `logit`.
    Logistic,
}

impl Transform {
    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        match self {
            Transform::Identity => x.to_vec(),
            Transform::Logistic => x.iter().map(|v| logistic(*v)).collect(),
        }
    }

    pub fn inverse(self, y: &[f64]) -> Vec<f64> {
        match self {
            Transform::Identity => y.to_vec(),
            Transform::Logistic => y.iter().map(|v| logit(*v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOptions {
    pub epsilon2: f64,
    pub alpha: f64,
    /// Rescale each coordinate to unit standard deviation before clustering.
    pub normalize: bool,
    pub transform: Transform,
    /// Inputs above this size are uniformly thinned (clustering is quadratic).
    pub max_points: usize,
}

impl ClusterOptions {
    pub fn new(epsilon2: f64, alpha: f64) -> Self {
        Self {
            epsilon2,
            alpha,
            normalize: false,
            transform: Transform::Identity,
            max_points: 10_000,
        }
    }

    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_max_points(mut self, max_points: usize) -> Self {
        self.max_points = max_points;
        self
    }
}

/// Partition of the state space into the Voronoi cells of `centers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    centers: Vec<Vec<f64>>,
    #[serde(rename = "epsilon2")]
    epsilon2: Option<f64>,
    alpha: Option<f64>,
    normalization: Vec<f64>,
    transform: Transform,
}

impl Partition {
    /// Cells of the given centers under plain Euclidean distance.
    pub fn from_centers(centers: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centers.first().map_or(0, |c| c.len());
        Self::with_geometry(centers, vec![1.0; dim], Transform::Identity)
    }

    /// `centers` in transformed coordinates, `scales` dividing each coordinate.
    pub fn with_geometry(centers: Vec<Vec<f64>>, scales: Vec<f64>, transform: Transform) -> Result<Self> {
        let p = Self {
            centers,
            epsilon2: None,
            alpha: None,
            normalization: scales,
            transform,
        };
        p.validate()?;
        Ok(p)
    }

    /// One-dimensional partition centered at the `k - 1` interior `k`-quantiles
    /// of `values` (deciles for `k = 10`).
    pub fn from_quantiles(values: &[f64], k: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no values for quantile centers".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParameter("need at least two quantile groups".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut centers: Vec<Vec<f64>> = Vec::new();
        for i in 1..k {
            // type-7 quantile
            let h = (n - 1) as f64 * i as f64 / k as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let q = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
            if centers.last().map_or(true, |c| c[0] != q) {
                centers.push(vec![q]);
            }
        }
        Self::from_centers(centers)
    }

    fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::Empty("partition has no centers".into()));
        }
        let dim = self.normalization.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("zero-dimensional partition".into()));
        }
        for c in &self.centers {
            check_dim(dim, c.len())?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("partition center".into()));
            }
        }
        if self.normalization.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("normalization scales must be positive".into()));
        }
        for i in 0..self.centers.len() {
            for j in 0..i {
                if self.centers[i] == self.centers[j] {
                    return Err(Error::InvalidParameter(format!("centers {j} and {i} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.normalization.len()
    }

    /// Centers in clustering (transformed, unscaled) coordinates.
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Centers mapped back to the sampled space.
    pub fn centers_original(&self) -> Vec<Vec<f64>> {
        self.centers.iter().map(|c| self.transform.inverse(c)).collect()
    }

    pub fn normalization(&self) -> &[f64] {
        &self.normalization
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn epsilon2(&self) -> Option<f64> {
        self.epsilon2
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    fn nearest(&self, y: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.centers.iter().enumerate() {
            let d: f64 = y
                .iter()
                .zip(c)
                .zip(&self.normalization)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum();
            // strict comparison: ties go to the lowest index
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    /// Index of the nearest center to `theta` (a point of the sampled space).
    pub fn assign(&self, theta: &[f64]) -> Result<usize> {
        check_dim(self.dim(), theta.len())?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point to assign".into()));
        }
        Ok(self.assign_unchecked(theta))
    }

    pub(crate) fn assign_unchecked(&self, theta: &[f64]) -> usize {
        match self.transform {
            Transform::Identity => self.nearest(theta),
            t => self.nearest(&t.forward(theta)),
        }
    }

    /// Index of the nearest center to a point already in clustering coordinates.
    pub fn assign_transformed(&self, y: &[f64]) -> Result<usize> {
        check_dim(self.dim(), y.len())?;
        Ok(self.nearest(y))
    }

    /// Element labels of all post-burn-in draws, canonical order.
    pub fn labels(&self, draws: &DrawStore) -> Result<Vec<usize>> {
        check_dim(self.dim(), draws.dim())?;
        draws.post_burnin().map(|p| self.assign(p)).collect()
    }

    /// `n_j`: post-burn-in draws falling in each element, pooled over chains.
    pub fn element_counts(&self, draws: &DrawStore) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.n_elements()];
        for l in self.labels(draws)? {
            counts[l] += 1;
        }
        Ok(counts)
    }

    pub fn to_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let p: Self = serde_json::from_reader(r)?;
        p.validate()?;
        Ok(p)
    }
}

/// Greedy density clustering: repeatedly take the unclustered draw with the
/// most `epsilon`-neighbors as a center and absorb every unclustered draw
/// within `epsilon` of it, until at least `(1 - alpha)` of the draws are
/// absorbed. The centers then define a Voronoi partition.
pub fn cluster(draws: &DrawStore, opts: &ClusterOptions) -> Result<Partition> {
    let points: Vec<&[f64]> = draws.post_burnin().collect();
    cluster_points(&points, draws.dim(), opts)
}

pub fn cluster_points(points: &[&[f64]], dim: usize, opts: &ClusterOptions) -> Result<Partition> {
    if points.is_empty() {
        return Err(Error::Empty("no draws to cluster".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", opts.alpha)));
    }
    if !(opts.epsilon2 > 0.0 && opts.epsilon2.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon^2 {}", opts.epsilon2)));
    }
    if opts.max_points == 0 {
        return Err(Error::InvalidParameter("max_points must be positive".into()));
    }
    let n_all = points.len();
    let n = n_all.min(opts.max_points);
    let mut y: Vec<f64> = Vec::with_capacity(n * dim);
    for i in 0..n {
        // uniform thinning; identity when under the cap
        let src = points[(i as u128 * n_all as u128 / n as u128) as usize];
        check_dim(dim, src.len())?;
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("draw to cluster".into()));
        }
        y.extend(opts.transform.forward(src));
    }
    let scales = if opts.normalize {
        (0..dim)
            .map(|d| {
                let mean = (0..n).map(|i| y[i * dim + d]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (y[i * dim + d] - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; dim]
    };
    let scaled: Vec<f64> = y.iter().enumerate().map(|(k, v)| v / scales[k % dim]).collect();
    let row = |i: usize| &scaled[i * dim..(i + 1) * dim];
    let eps2 = opts.epsilon2;
    let within = |a: &[f64], b: &[f64]| {
        let mut d = 0.0;
        for (x, z) in a.iter().zip(b) {
            d += (x - z) * (x - z);
            if d > eps2 {
                return false;
            }
        }
        true
    };
    let density: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| within(row(i), row(j))).count())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal densities keep first-occurrence order
    order.sort_by(|a, b| density[*b].cmp(&density[*a]));
    let needed = ((1.0 - opts.alpha) * n as f64).ceil() as usize;
    let mut clustered = vec![false; n];
    let mut n_clustered = 0;
    let mut centers = Vec::new();
    for &c in &order {
        if n_clustered >= needed {
            break;
        }
        if clustered[c] {
            continue;
        }
        centers.push(y[c * dim..(c + 1) * dim].to_vec());
        for j in 0..n {
            if !clustered[j] && within(row(c), row(j)) {
                clustered[j] = true;
                n_clustered += 1;
            }
        }
    }
    let mut p = Partition::with_geometry(centers, scales, opts.transform)?;
    p.epsilon2 = Some(opts.epsilon2);
    p.alpha = Some(opts.alpha);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::draws::ChainDraws;
    use crate::executor::{stream_rng, StreamTag};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn store(points: &[Vec<f64>]) -> DrawStore {
        let dim = points[0].len();
        let mut c = ChainDraws::new(0, dim);
        for (i, p) in points.iter().enumerate() {
            c.push(i as u64, p, false).unwrap();
        }
        DrawStore::from_chains(dim, vec![c]).unwrap()
    }

    #[test]
    fn identical_draws_give_one_center() {
        let pts = vec![vec![1.5, -2.0]; 50];
        let p = cluster(&store(&pts), &ClusterOptions::new(1.0, 0.01)).unwrap();
        assert_eq!(p.n_elements(), 1);
        assert_eq!(p.centers()[0], vec![1.5, -2.0]);
    }

    #[test]
    fn two_separated_blobs() {
        let eps: f64 = 1.0;
        let mut rng = stream_rng(1, StreamTag::Auxiliary(5), 0);
        let mut pts = Vec::new();
        let offsets = [[0.0, 0.0], [10.0 * eps, 0.0]];
        for k in 0..400 {
            let o = offsets[k % 2];
            pts.push(vec![
                o[0] + 0.15 * rng.sample::<f64, _>(StandardNormal),
                o[1] + 0.15 * rng.sample::<f64, _>(StandardNormal),
            ]);
        }
        let p = cluster(&store(&pts), &ClusterOptions::new(eps * eps, 0.01)).unwrap();
        assert_eq!(p.n_elements(), 2);
        for c in p.centers() {
            let near = offsets.iter().any(|o| ((c[0] - o[0]).powi(2) + (c[1] - o[1]).powi(2)).sqrt() < eps);
            assert!(near, "{c:?}");
        }
    }

    #[test]
    fn coverage_and_center_assignment() {
        let mut rng = stream_rng(2, StreamTag::Auxiliary(5), 0);
        let pts: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![3.0 * rng.sample::<f64, _>(StandardNormal), rng.random::<f64>() * 8.0])
            .collect();
        let opts = ClusterOptions::new(0.5, 0.05).normalized(true);
        let p = cluster(&store(&pts), &opts).unwrap();
        let covered = pts
            .iter()
            .filter(|x| {
                p.centers().iter().any(|c| {
                    x.iter().zip(c).zip(p.normalization()).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() <= 0.5
                })
            })
            .count();
        assert!(covered as f64 >= 0.95 * pts.len() as f64);
        for (j, c) in p.centers_original().iter().enumerate() {
            assert_eq!(p.assign(c).unwrap(), j);
        }
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let p = Partition::from_centers(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![50.0, 50.0]]).unwrap();
        assert_eq!(p.assign(&[1.0, 0.0]).unwrap(), 0);
        assert_eq!(p.assign(&[2.0, 0.0]).unwrap(), 1);
        assert!(p.assign(&[f64::NAN, 0.0]).is_err());
        assert!(p.assign(&[0.0]).is_err());
    }

    #[test]
    fn logistic_transform_centers_map_back() {
        let mut rng = stream_rng(3, StreamTag::Auxiliary(5), 0);
        let pts: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(-3.0..3.0), 1.0 + rng.random::<f64>()]).collect();
        let opts = ClusterOptions::new(0.01, 0.01).with_transform(Transform::Logistic);
        let p = cluster(&store(&pts), &opts).unwrap();
        for (j, c) in p.centers_original().iter().enumerate() {
            assert_eq!(p.assign(c).unwrap(), j);
            assert!((logistic(c[0]) - p.centers()[j][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_sum_to_post_burnin_total() {
        let mut a = ChainDraws::new(0, 1);
        let mut b = ChainDraws::new(1, 1);
        for i in 0..30 {
            a.push(i, &[i as f64], i < 5).unwrap();
            b.push(i, &[-(i as f64)], false).unwrap();
        }
        let s = DrawStore::from_chains(1, vec![a.clone(), b.clone()]).unwrap();
        let p = Partition::from_centers(vec![vec![-10.0], vec![0.0], vec![10.0]]).unwrap();
        let counts = p.element_counts(&s).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 55);
        let one = Partition::from_centers(vec![vec![0.0]]).unwrap();
        assert_eq!(one.element_counts(&s).unwrap(), vec![55]);
        // relabeling chains leaves counts alone
        let mut a2 = ChainDraws::new(5, 1);
        for (it, th, bi) in a.records() {
            a2.push(it, th, bi).unwrap();
        }
        let s2 = DrawStore::from_chains(1, vec![b, a2]).unwrap();
        assert_eq!(p.element_counts(&s2).unwrap(), counts);
    }

    #[test]
    fn brute_force_assignment() {
        let mut rng = stream_rng(4, StreamTag::Auxiliary(5), 0);
        let centers: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let scales = vec![0.5, 2.0];
        let p = Partition::with_geometry(centers.clone(), scales.clone(), Transform::Identity).unwrap();
        for _ in 0..100_000 {
            let x = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
            let mut best = (f64::INFINITY, 0);
            for (j, c) in centers.iter().enumerate() {
                let d = ((x[0] - c[0]) / scales[0]).powi(2) + ((x[1] - c[1]) / scales[1]).powi(2);
                if d < best.0 {
                    best = (d, j);
                }
            }
            assert_eq!(p.assign(&x).unwrap(), best.1);
        }
    }

    #[test]
    fn quantile_centers() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let p = Partition::from_quantiles(&v, 10).unwrap();
        assert_eq!(p.n_elements(), 9);
        assert_eq!(p.centers()[0], vec![10.0]);
        assert_eq!(p.centers()[8], vec![90.0]);
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let pts = vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![0.1, 0.0]];
        let p = cluster(&store(&pts), &ClusterOptions::new(1.0, 0.01)).unwrap();
        let mut buf = Vec::new();
        p.to_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"epsilon2\"") && text.contains("\"identity\""));
        assert_eq!(Partition::from_json(buf.as_slice()).unwrap(), p);
        assert!(cluster(&DrawStore::new(2), &ClusterOptions::new(1.0, 0.1)).is_err());
        assert!(cluster(&store(&pts), &ClusterOptions::new(1.0, 1.0)).is_err());
        assert!(Partition::from_centers(vec![vec![1.0], vec![1.0]]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn order_only_matters_through_ties(seed in 0u64..1000) {
            let mut rng = stream_rng(seed, StreamTag::Auxiliary(6), 0);
            let pts: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).collect();
            let opts = ClusterOptions::new(1.0, 0.1);
            let a = cluster(&store(&pts), &opts).unwrap();
            // any permutation that keeps equal-density points in their original
            // relative order; here: stable sort by ascending density
            let dens: Vec<usize> = pts
                .iter()
                .map(|x| pts.iter().filter(|y| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) <= 1.0).count())
                .collect();
            let mut idx: Vec<usize> = (0..pts.len()).collect();
            idx.sort_by_key(|&i| dens[i]);
            let permuted: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
            let b = cluster(&store(&permuted), &opts).unwrap();
            prop_assert_eq!(a.centers(), b.centers());
        }
    }
}
