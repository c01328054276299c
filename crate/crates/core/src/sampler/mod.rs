//! Adaptive No-U-Turn sampling over an unconstrained parameter vector.

pub mod adapt;
pub mod hamiltonian;
pub mod nuts;
pub mod targets;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use hamiltonian::HamiltonianState;
use nuts::nuts_draw;

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `z` (up to a constant); writes the gradient into `grad`.
    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("z{i}")).collect()
    }

    /// Maps an unconstrained point to the reported parameters.
    fn constrain(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    /// Unconstrained starting point before jitter.
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Number of pointwise log-likelihood terms recorded per draw.
    fn pointwise_len(&self) -> usize {
        0
    }

    fn pointwise_loglik(&self, _z: &[f64], _out: &mut [f64]) {}

    /// Multiplicity of each pointwise term (observations sharing a value are grouped).
    fn pointwise_weights(&self) -> Vec<f64> {
        vec![1.0; self.pointwise_len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_draw: usize,
    pub n_tune: usize,
    pub target_accept: f64,
    pub max_tree_depth: u32,
    pub seed: u64,
    pub record_pointwise: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_draw: 4000,
            n_tune: 2000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            record_pointwise: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("at least one chain is required".into()));
        }
        if self.n_draw == 0 {
            return Err(Error::InvalidConfig("at least one draw is required".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}

/// Draws and transition statistics of one chain, stored row-major by draw.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub chain: usize,
    pub n_draw: usize,
    pub dim: usize,
    pub n_params: usize,
    pub unconstrained: Vec<f64>,
    pub constrained: Vec<f64>,
    /// `n_draw * pointwise_len` log-likelihood terms, empty when not recorded.
    pub pointwise: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub tree_depth: Vec<u32>,
    pub n_leapfrog: Vec<u32>,
    pub energy: Vec<f64>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub warmup_accept: f64,
}

impl ChainTrace {
    pub fn param(&self, j: usize) -> Vec<f64> {
        self.constrained.iter().skip(j).step_by(self.n_params).copied().collect()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.constrained[i * self.n_params..(i + 1) * self.n_params]
    }

    pub fn mean_accept(&self) -> f64 {
        self.accept_stat.iter().sum::<f64>() / self.n_draw as f64
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }
}

/// All chains of a run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub param_names: Vec<String>,
    pub chains: Vec<ChainTrace>,
    pub pointwise_len: usize,
    pub pointwise_weights: Vec<f64>,
    pub config: SamplerConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub mean_accept: f64,
    pub warmup_accept: f64,
    pub divergences: usize,
    pub max_tree_depth_hits: usize,
    pub mean_tree_depth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub config: SamplerConfig,
    pub param_names: Vec<String>,
    pub chains: Vec<ChainSummary>,
}

impl Trace {
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Per-chain draws of parameter `j`.
    pub fn param_chains(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.param(j)).collect()
    }

    /// Per-chain series of an arbitrary function of the constrained draw.
    pub fn map_chains<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| (0..c.n_draw).map(|i| f(c.draw(i))).collect())
            .collect()
    }

    pub fn n_divergent(&self) -> usize {
        self.chains.iter().map(ChainTrace::n_divergent).sum()
    }

    /// Pointwise log-likelihood matrix `[draw][term]`, pooled over chains.
    pub fn pointwise_matrix(&self) -> Option<Vec<&[f64]>> {
        if self.pointwise_len == 0 || self.chains.iter().any(|c| c.pointwise.is_empty()) {
            return None;
        }
        Some(
            self.chains
                .iter()
                .flat_map(|c| c.pointwise.chunks(self.pointwise_len))
                .collect(),
        )
    }

    /// `chain,draw,<params>...,accept_stat,divergent,tree_depth,energy`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chain,draw");
        for n in &self.param_names {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",accept_stat,divergent,tree_depth,n_leapfrog,energy\n");
        for c in &self.chains {
            for i in 0..c.n_draw {
                let _ = write!(out, "{},{}", c.chain, i);
                for v in c.draw(i) {
                    let _ = write!(out, ",{v}");
                }
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{}",
                    c.accept_stat[i],
                    u8::from(c.divergent[i]),
                    c.tree_depth[i],
                    c.n_leapfrog[i],
                    c.energy[i]
                );
            }
        }
        out
    }

    pub fn summary(&self) -> TraceSummary {
        let max_depth = self.config.max_tree_depth.max(1);
        TraceSummary {
            config: self.config,
            param_names: self.param_names.clone(),
            chains: self
                .chains
                .iter()
                .map(|c| ChainSummary {
                    chain: c.chain,
                    step_size: c.step_size,
                    inv_mass: c.inv_mass.clone(),
                    mean_accept: c.mean_accept(),
                    warmup_accept: c.warmup_accept,
                    divergences: c.n_divergent(),
                    max_tree_depth_hits: c.tree_depth.iter().filter(|d| **d >= max_depth).count(),
                    mean_tree_depth: c.tree_depth.iter().map(|d| f64::from(*d)).sum::<f64>() / c.n_draw as f64,
                })
                .collect(),
        }
    }
}

fn initial_state<T: LogDensity + ?Sized, R: Rng>(target: &T, rng: &mut R) -> Result<HamiltonianState> {
    let base = target.initial_point();
    let mut last_err = Error::NonFinite("initial log density");
    for _ in 0..100 {
        let q: Vec<f64> = base.iter().map(|b| b + rng.random_range(-1.0..=1.0)).collect();
        match HamiltonianState::new(target, q) {
            Ok(s) if s.logp.is_finite() && s.grad.iter().all(|g| g.is_finite()) => return Ok(s),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Runs one chain: warmup, then `n_draw` recorded transitions.
pub fn run_chain<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let init = initial_state(target, &mut rng)?;
    let adapted = adapt::adapt(
        target,
        init,
        cfg.n_tune,
        cfg.target_accept,
        cfg.max_tree_depth,
        chain,
        &mut rng,
    )?;

    let dim = target.dim();
    let n_params = target.param_names().len();
    let n_pw = if cfg.record_pointwise { target.pointwise_len() } else { 0 };
    let n = cfg.n_draw;
    let mut tr = ChainTrace {
        chain,
        n_draw: n,
        dim,
        n_params,
        unconstrained: Vec::with_capacity(n * dim),
        constrained: Vec::with_capacity(n * n_params),
        pointwise: vec![0.0; n * n_pw],
        accept_stat: Vec::with_capacity(n),
        divergent: Vec::with_capacity(n),
        tree_depth: Vec::with_capacity(n),
        n_leapfrog: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        step_size: adapted.step_size,
        inv_mass: adapted.inv_mass.clone(),
        warmup_accept: adapted.final_accept,
    };
    let mut state = adapted.state;
    for i in 0..n {
        let (next, stats) = nuts_draw(
            target,
            &state,
            adapted.step_size,
            &adapted.inv_mass,
            cfg.max_tree_depth,
            &mut rng,
        );
        state = next;
        tr.unconstrained.extend_from_slice(&state.q);
        tr.constrained.extend(target.constrain(&state.q));
        if n_pw > 0 {
            target.pointwise_loglik(&state.q, &mut tr.pointwise[i * n_pw..(i + 1) * n_pw]);
        }
        tr.accept_stat.push(stats.accept_stat);
        tr.divergent.push(stats.divergent);
        tr.tree_depth.push(stats.tree_depth);
        tr.n_leapfrog.push(stats.n_leapfrog);
        tr.energy.push(stats.energy);
    }
    Ok(tr)
}

/// Runs `cfg.n_chains` independent chains in parallel. Chain `k` draws from a
/// ChaCha8 stream `k` keyed by `cfg.seed`, so results do not depend on
/// scheduling.
pub fn run_chains<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<Trace> {
    cfg.validate()?;
    let chains = (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| run_chain(target, cfg, k))
        .collect::<Result<Vec<_>>>()?;
    let pointwise_len = if cfg.record_pointwise { target.pointwise_len() } else { 0 };
    Ok(Trace {
        param_names: target.param_names(),
        chains,
        pointwise_len,
        pointwise_weights: target.pointwise_weights(),
        config: *cfg,
    })
}
