//! Pooled chain output.

use crate::error::{check_dim, Error, Result};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// One chain's records, iterations strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    chain_id: usize,
    dim: usize,
    iters: Vec<u64>,
    burn_in: Vec<bool>,
    values: Vec<f64>,
}

impl ChainDraws {
    pub fn new(chain_id: usize, dim: usize) -> Self {
        Self {
            chain_id,
            dim,
            iters: Vec::new(),
            burn_in: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(chain_id: usize, dim: usize, n: usize) -> Self {
        Self {
            chain_id,
            dim,
            iters: Vec::with_capacity(n),
            burn_in: Vec::with_capacity(n),
            values: Vec::with_capacity(n * dim),
        }
    }

    pub fn push(&mut self, iter: u64, theta: &[f64], is_burnin: bool) -> Result<()> {
        check_dim(self.dim, theta.len())?;
        if let Some(&last) = self.iters.last() {
            if iter <= last {
                return Err(Error::InvalidParameter(format!(
                    "chain {}: iteration {iter} after {last}",
                    self.chain_id
                )));
            }
        }
        self.iters.push(iter);
        self.burn_in.push(is_burnin);
        self.values.extend_from_slice(theta);
        Ok(())
    }

    pub fn chain_id(&self) -> usize {
        self.chain_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.iters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iters.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iteration(&self, i: usize) -> u64 {
        self.iters[i]
    }

    pub fn is_burnin(&self, i: usize) -> bool {
        self.burn_in[i]
    }

    /// `(iter, theta, is_burnin)` in iteration order.
    pub fn records(&self) -> impl Iterator<Item = (u64, &[f64], bool)> + '_ {
        (0..self.len()).map(move |i| (self.iters[i], self.point(i), self.burn_in[i]))
    }

    pub fn post_burnin(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).filter(move |&i| !self.burn_in[i]).map(move |i| self.point(i))
    }

    pub fn n_post_burnin(&self) -> usize {
        self.burn_in.iter().filter(|b| !**b).count()
    }

    /// Copy keeping burn-in records and the first `k` post-burn-in records.
    pub fn post_burnin_prefix(&self, k: usize) -> Self {
        let mut out = Self::new(self.chain_id, self.dim);
        let mut kept = 0;
        for (it, th, b) in self.records() {
            if !b {
                if kept == k {
                    break;
                }
                kept += 1;
            }
            out.push(it, th, b).expect("source is ordered");
        }
        out
    }

    /// Values of coordinate `d` for post-burn-in records.
    pub fn coordinate(&self, d: usize) -> Vec<f64> {
        self.post_burnin().map(|p| p[d]).collect()
    }
}

/// Draws from `L` chains, kept in canonical order (by chain id, then
/// iteration) so every reduction over it is scheduler independent.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    dim: usize,
    chains: Vec<ChainDraws>,
    normalization: Option<Vec<f64>>,
}

impl DrawStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            chains: Vec::new(),
            normalization: None,
        }
    }

    pub fn from_chains(dim: usize, chains: Vec<ChainDraws>) -> Result<Self> {
        let mut store = Self::new(dim);
        for c in chains {
            store.add_chain(c)?;
        }
        Ok(store)
    }

    pub fn add_chain(&mut self, chain: ChainDraws) -> Result<()> {
        check_dim(self.dim, chain.dim)?;
        match self.chains.binary_search_by_key(&chain.chain_id, |c| c.chain_id) {
            Ok(_) => Err(Error::InvalidParameter(format!("duplicate chain id {}", chain.chain_id))),
            Err(pos) => {
                self.chains.insert(pos, chain);
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chains(&self) -> &[ChainDraws] {
        &self.chains
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.iter().all(|c| c.is_empty())
    }

    pub fn normalization(&self) -> Option<&[f64]> {
        self.normalization.as_deref()
    }

    pub fn set_normalization(&mut self, scales: Option<Vec<f64>>) -> Result<()> {
        if let Some(s) = &scales {
            check_dim(self.dim, s.len())?;
        }
        self.normalization = scales;
        Ok(())
    }

    /// Post-burn-in points in canonical order.
    pub fn post_burnin(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(|c| c.post_burnin())
    }

    pub fn n_post_burnin(&self) -> usize {
        self.chains.iter().map(|c| c.n_post_burnin()).sum()
    }

    /// Every chain truncated to its first `k` post-burn-in records.
    pub fn post_burnin_prefix(&self, k: usize) -> Self {
        Self {
            dim: self.dim,
            chains: self.chains.iter().map(|c| c.post_burnin_prefix(k)).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Coordinate `d` of post-burn-in draws, canonical order.
    pub fn coordinate(&self, d: usize) -> Vec<f64> {
        self.post_burnin().map(|p| p[d]).collect()
    }

    pub fn write_chain_csv<W: Write>(&self, chain: &ChainDraws, w: W) -> Result<()> {
        write_chain_csv(chain, w)
    }

    /// Writes one `chain_<id>.csv` per chain into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for c in &self.chains {
            let path = dir.join(format!("chain_{:03}.csv", c.chain_id));
            let f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_chain_csv(c, f)?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Reads every `*.csv` in `dir` (files may come from separate hosts).
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Empty(format!("no draw files in {}", dir.display())));
        }
        let mut store: Option<DrawStore> = None;
        for f in files {
            let part = Self::read_csv(std::fs::File::open(&f)?)?;
            match &mut store {
                None => store = Some(part),
                Some(s) => s.merge(part)?,
            }
        }
        Ok(store.expect("at least one file"))
    }

    pub fn merge(&mut self, other: DrawStore) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        for c in other.chains {
            self.add_chain(c)?;
        }
        Ok(())
    }

    /// Reads `chain,iter,theta_1..theta_p,is_burnin` rows; several chains may
    /// share one file.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        if ncol < 4 || &headers[0] != "chain" || &headers[1] != "iter" || &headers[ncol - 1] != "is_burnin" {
            return Err(Error::Parse("draw CSV needs columns chain,iter,theta_1..theta_p,is_burnin".into()));
        }
        let dim = ncol - 3;
        let mut chains: Vec<ChainDraws> = Vec::new();
        let mut theta = vec![0.0; dim];
        for rec in rdr.records() {
            let rec = rec?;
            let parse_err = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
            let chain: usize = rec[0].trim().parse().map_err(|e| parse_err(&e))?;
            let iter: u64 = rec[1].trim().parse().map_err(|e| parse_err(&e))?;
            for d in 0..dim {
                theta[d] = rec[2 + d].trim().parse().map_err(|e| parse_err(&e))?;
            }
            let b = match rec[ncol - 1].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::Parse(format!("bad is_burnin value `{other}`"))),
            };
            let slot = match chains.iter().position(|c| c.chain_id == chain) {
                Some(i) => i,
                None => {
                    chains.push(ChainDraws::new(chain, dim));
                    chains.len() - 1
                }
            };
            chains[slot].push(iter, &theta, b)?;
        }
        Self::from_chains(dim, chains)
    }
}

pub fn write_chain_csv<W: Write>(chain: &ChainDraws, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend((1..=chain.dim).map(|i| format!("theta_{i}")));
    header.push("is_burnin".into());
    wtr.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(chain.dim + 3);
    for (it, th, b) in chain.records() {
        rec.clear();
        rec.push(chain.chain_id.to_string());
        rec.push(it.to_string());
        // Display for f64 is shortest round-trip
        rec.extend(th.iter().map(|v| v.to_string()));
        rec.push(u8::from(b).to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
