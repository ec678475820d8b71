//! Deterministic parallel execution of independent chains and replicates.
//!
//! Every task draws from its own ChaCha stream keyed by (master seed, task
//! family) with the task index as stream id, so results do not depend on the
//! worker count or on completion order. Outputs are collected by task index.

use crate::draws::{ChainDraws, DrawStore};
use crate::error::{Error, Result};
use crate::samplers::{run_chain, ChainConfig};
use crate::targets::Target;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Task family; keeps the streams of different pipeline stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Chain,
    /// Weight-estimation replicates for one partition element.
    Replicate(u32),
    PseudoMarginal,
    Reference,
    Auxiliary(u32),
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Chain => 1,
            StreamTag::Replicate(j) => (2 << 32) | j as u64,
            StreamTag::PseudoMarginal => 3 << 32,
            StreamTag::Reference => 4 << 32,
            StreamTag::Auxiliary(k) => (5 << 32) | k as u64,
        }
    }
}

/// Independent stream `index` of family `tag` under `master_seed`.
pub fn stream_rng(master_seed: u64, tag: StreamTag, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.code().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Runs `n` independent tasks on `workers` threads; results in task order.
pub fn run_tasks<T, F>(n: usize, workers: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = pool(workers)?;
    pool.install(|| (0..n).into_par_iter().map(&task).collect())
}

/// Runs one chain per config. Chain `l` uses stream `l` of its config seed.
pub fn run_parallel_chains<T: Target + ?Sized>(
    target: &T,
    cfgs: &[ChainConfig],
    workers: usize,
) -> Result<DrawStore> {
    let dim = target.dim();
    let chains: Vec<ChainDraws> = run_tasks(cfgs.len(), workers, |l| {
        run_chain(target, &cfgs[l], l).map_err(|e| Error::Chain {
            chain: l,
            source: Box::new(e),
        })
    })?;
    DrawStore::from_chains(dim, chains)
}

/// `n` replicates; replicate `i` gets stream `i` of family `tag`.
pub fn run_parallel_replicates<T, F>(
    n: usize,
    workers: usize,
    master_seed: u64,
    tag: StreamTag,
    replicate: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    run_tasks(n, workers, |i| {
        let mut rng = stream_rng(master_seed, tag, i as u64);
        replicate(i, &mut rng)
    })
}
