use parallel_mcmc::combine::weighted_empirical;
use parallel_mcmc::partition::{cluster, ClusterOptions};
use parallel_mcmc::samplers::{ChainConfig, Init, Kernel};
use parallel_mcmc::targets::paper_mixture;
use parallel_mcmc::weights::{estimate_c_hats, fit_instrumentals, Estimator, InstrumentalOptions};
use parallel_mcmc::{combine, element_means, run_parallel_chains, stream_rng, StreamTag, WeightEstimate};

#[test]
fn mixture_pipeline_recovers_mean() -> parallel_mcmc::Result<()> {
    let target = paper_mixture();
    let chain = ChainConfig::new(Kernel::Langevin, 0.2, 10_250, 250, 1, Init::uniform_box(2, -10.0, 10.0));
    let draws = run_parallel_chains(&target, &vec![chain; 10], 2)?;
    let partition = cluster(&draws.post_burnin_prefix(1000), &ClusterOptions::new(9.0, 0.01))?;
    let q = fit_instrumentals(&target, &draws, &partition, &InstrumentalOptions::default())?;
    let c = estimate_c_hats(&target, &partition, &q, 2000, 5, Estimator::Iid, 1, 2)?;
    let w = WeightEstimate::ratio(c, 5)?;
    let est = combine(&element_means(&draws, &partition, |x| x.to_vec())?, &w.w_hat, Some(&w.mcse))?;
    let truth = target.mean();
    for d in 0..2 {
        assert!(est.se[d] > 0.0 && est.se[d].is_finite());
        // loose: a handful of chains, modest run length
        assert!((est.mean[d] - truth[d]).abs() < 0.5, "{:?} vs {:?}", est.mean, truth);
    }

    // ratio and pseudo-marginal weights agree on the same replicates
    let pm = WeightEstimate::pseudo_marginal(w.c_hats.clone(), 5, 200_000, 1)?;
    for (a, b) in w.w_hat.iter().zip(&pm.w_hat) {
        assert!((a - b).abs() < 0.02, "{:?} vs {:?}", w.w_hat, pm.w_hat);
    }

    // resampling the weighted pool reproduces the combined mean
    let emp = weighted_empirical(&draws, &partition, &w.w_hat)?;
    let mut rng = stream_rng(5, StreamTag::Auxiliary(0), 0);
    let idx = emp.resample(200_000, &mut rng)?;
    let pts: Vec<&[f64]> = draws.post_burnin().collect();
    let m0 = idx.iter().map(|&i| pts[i][0]).sum::<f64>() / idx.len() as f64;
    assert!((m0 - est.mean[0]).abs() < 0.05);
    Ok(())
}
