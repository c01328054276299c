//! Warmup: dual-averaging step size and windowed diagonal mass estimation.

use rand::Rng;

use crate::error::{Error, Result};

use super::hamiltonian::{leapfrog, HamiltonianState};
use super::nuts::{nuts_draw, sample_momentum};
use super::LogDensity;

#[derive(Debug, Clone, Copy)]
pub struct DualAverageOptions {
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for DualAverageOptions {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

/// Nesterov dual averaging on `log(eps)` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAverage {
    opts: DualAverageOptions,
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: f64,
}

impl DualAverage {
    pub fn new(initial_eps: f64, opts: DualAverageOptions) -> Self {
        Self {
            opts,
            mu: (10.0 * initial_eps).ln(),
            h_bar: 0.0,
            log_eps: initial_eps.ln(),
            log_eps_bar: 0.0,
            count: 0.0,
        }
    }

    pub fn update(&mut self, accept_stat: f64, target: f64) {
        self.count += 1.0;
        let accept = if accept_stat.is_finite() { accept_stat.min(1.0) } else { 0.0 };
        let w = 1.0 / (self.count + self.opts.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (target - accept);
        self.log_eps = self.mu - self.count.sqrt() / self.opts.gamma * self.h_bar;
        let eta = self.count.powf(-self.opts.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged iterate used after warmup.
    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Welford accumulator of per-coordinate variances.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    /// Sample variances shrunk toward 1e-3, as in the usual diagonal metric
    /// regularization `n/(n+5) var + 1e-3 * 5/(n+5)`.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Warmup layout: an initial fast buffer, doubling slow windows for the mass
/// matrix, and a terminal fast buffer for the final step size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmupSchedule {
    pub n_tune: usize,
    pub init_buffer: usize,
    pub term_buffer: usize,
    /// Iteration indices (exclusive) at which each slow window ends.
    pub window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(n_tune: usize) -> Self {
        // A terminal buffer of a tenth of warmup keeps the averaged step size
        // from inheriting the spread of a short final run.
        let (mut init, mut term, mut base) = (75, (n_tune / 10).max(50), 25);
        if n_tune < 20 {
            return Self {
                n_tune,
                init_buffer: n_tune,
                term_buffer: 0,
                window_ends: Vec::new(),
            };
        }
        if init + term + base > n_tune {
            init = n_tune * 15 / 100;
            term = n_tune / 10;
            base = n_tune - init - term;
        }
        let slow_end = n_tune - term;
        let mut window_ends = Vec::new();
        let mut start = init;
        let mut size = base;
        while start < slow_end {
            let mut end = start + size;
            // A following window that would not fit is merged into this one.
            if end + 2 * size > slow_end {
                end = slow_end;
            }
            window_ends.push(end);
            start = end;
            size *= 2;
        }
        Self {
            n_tune,
            init_buffer: init,
            term_buffer: term,
            window_ends,
        }
    }

    pub fn in_slow_window(&self, iter: usize) -> bool {
        !self.window_ends.is_empty() && iter >= self.init_buffer && iter < self.n_tune - self.term_buffer
    }

    pub fn is_window_end(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}

/// Doubles or halves `eps` until one leapfrog step from `state` crosses an
/// acceptance of 0.8.
pub fn find_reasonable_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    state: &HamiltonianState,
    mut eps: f64,
    inv_mass: &[f64],
    rng: &mut R,
) -> f64 {
    let threshold = 0.8f64.ln();
    let delta_h = |eps: f64, rng: &mut R| {
        let mut z = state.clone();
        z.p = sample_momentum(inv_mass, rng);
        let h0 = z.energy(inv_mass);
        match leapfrog(target, &z, eps, inv_mass) {
            Ok(next) => {
                let h = next.energy(inv_mass);
                if h.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    h0 - h
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let direction = if delta_h(eps, rng) > threshold { 1 } else { -1 };
    for _ in 0..100 {
        let dh = delta_h(eps, rng);
        if (direction == 1 && !(dh > threshold)) || (direction == -1 && !(dh < threshold)) {
            break;
        }
        eps = if direction == 1 { eps * 2.0 } else { eps * 0.5 };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}

/// Result of warmup: the tuned kernel and the chain state where warmup ended.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub state: HamiltonianState,
    /// Mean acceptance statistic over the terminal buffer (or all of warmup
    /// when there is no terminal buffer).
    pub final_accept: f64,
}

/// Runs `n_tune` NUTS transitions while adapting the step size toward
/// `target_accept` and the diagonal inverse mass matrix to the posterior
/// variances observed in the slow windows.
pub fn adapt<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    init: HamiltonianState,
    n_tune: usize,
    target_accept: f64,
    max_tree_depth: u32,
    chain: usize,
    rng: &mut R,
) -> Result<Adapted> {
    let dim = init.q.len();
    let schedule = WarmupSchedule::new(n_tune);
    let mut inv_mass = vec![1.0; dim];
    let mut state = init;
    let mut eps = find_reasonable_step_size(target, &state, 1.0, &inv_mass, rng);
    let mut da = DualAverage::new(eps, DualAverageOptions::default());
    let mut var = RunningVariance::new(dim);
    let mut accept_tail = Vec::new();
    let tail_start = n_tune - schedule.term_buffer.max(n_tune.min(10)).min(n_tune);

    for iter in 0..n_tune {
        let (next, stats) = nuts_draw(target, &state, eps, &inv_mass, max_tree_depth, rng);
        state = next;
        da.update(stats.accept_stat, target_accept);
        eps = da.current();
        if iter >= tail_start {
            accept_tail.push(stats.accept_stat);
        }
        if schedule.in_slow_window(iter) {
            var.add(&state.q);
        }
        if schedule.is_window_end(iter) && var.count() >= 3 {
            inv_mass = var.regularized();
            var = RunningVariance::new(dim);
            eps = find_reasonable_step_size(target, &state, eps, &inv_mass, rng);
            da = DualAverage::new(eps, DualAverageOptions::default());
        }
    }
    let final_accept = accept_tail.iter().sum::<f64>() / accept_tail.len().max(1) as f64;
    if n_tune >= 20 && final_accept < 0.1 {
        return Err(Error::AdaptationFailed {
            chain,
            accept: final_accept,
        });
    }
    let step_size = if n_tune > 0 { da.adapted() } else { eps };
    state.p.iter_mut().for_each(|p| *p = 0.0);
    Ok(Adapted {
        step_size,
        inv_mass,
        state,
        final_accept,
    })
}
