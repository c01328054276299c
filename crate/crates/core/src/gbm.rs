//! Geometric Brownian motion first-hitting times and their closed-form law.
//!
//! With `dS = S (lambda dt + Sigma dB)` the log price is a Brownian motion with
//! drift, and the first time it moves a distance `a` away from its start has
//! density
//!
//! ```text
//! p(t) = sqrt(a^2 / (2 pi Sigma^2 t^3)) exp(-(lambda t - a)^2 / (2 Sigma^2 t))
//! ```
//!
//! with `a = rho` for the upper barrier and `a = -rho` for the lower one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

/// How a barrier crossing between two grid points is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingCheck {
    /// Only grid values are compared with the barrier.
    Grid,
    /// Grid values, plus the Brownian-bridge probability that the path crossed
    /// between two grid points that both lie inside. The recorded time is still
    /// the end of the step.
    #[default]
    BrownianBridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    /// Drift of the log price per day.
    pub lambda: f64,
    /// Diffusion per square-root day.
    pub sigma: f64,
    /// Initial log price.
    pub r0: f64,
    /// Barrier distance from `r0`.
    pub rho: f64,
    /// Euler step in days.
    pub dt: f64,
    pub n_paths: usize,
    /// Paths still inside after this many days are censored.
    pub horizon: f64,
    pub seed: u64,
    pub crossing: CrossingCheck,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            sigma: 0.3,
            r0: 0.0,
            rho: 0.3,
            dt: 1.0 / 200.0,
            n_paths: 100_000,
            horizon: 1000.0,
            seed: 0,
            crossing: CrossingCheck::BrownianBridge,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.n_paths == 0 {
            return bad("at least one path is required");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::NonPositiveRho(self.rho));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.lambda.is_finite() && self.r0.is_finite()) {
            return bad("lambda and r0 must be finite");
        }
        Ok(())
    }

    /// Signed barrier distance for a direction.
    pub fn barrier(&self, dir: Direction) -> f64 {
        dir.sign() * self.rho
    }

    fn steps(&self) -> u64 {
        (self.horizon / self.dt + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhtSample {
    /// Hitting times in days, in path order.
    pub tau: Vec<f64>,
    pub censored: usize,
}

impl FhtSample {
    pub fn n_paths(&self) -> usize {
        self.tau.len() + self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.n_paths().max(1) as f64
    }

    pub fn mean(&self) -> f64 {
        self.tau.iter().sum::<f64>() / self.tau.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# censored={}\ntau\n", self.censored);
        for t in &self.tau {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }
}

fn path_rng(seed: u64, path: usize, dir: Direction) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path as u64 + u64::from(dir == Direction::Down));
    rng
}

/// Simulates one path and returns its hitting step, if any.
fn hit_step(cfg: &GbmConfig, dir: Direction, rng: &mut ChaCha8Rng) -> Option<u64> {
    let s = dir.sign();
    let drift = s * cfg.lambda * cfg.dt;
    let vol = cfg.sigma * cfg.dt.sqrt();
    let bridge_scale = 2.0 / (cfg.sigma * cfg.sigma * cfg.dt);
    // Work with the distance to the barrier in the direction of travel.
    let mut gap = cfg.rho;
    for k in 1..=cfg.steps() {
        let xi: f64 = rng.sample(StandardNormal);
        let next = gap - drift - s * vol * xi;
        if next <= 0.0 {
            return Some(k);
        }
        if cfg.crossing == CrossingCheck::BrownianBridge {
            let e = bridge_scale * gap * next;
            let u: f64 = rng.random();
            if e < 40.0 && u < (-e).exp() {
                return Some(k);
            }
        }
        gap = next;
    }
    None
}

/// Euler simulation of `x_{k+1} = x_k + lambda dt + Sigma sqrt(dt) xi` from
/// `r0`, recording the first `k dt` at which the path is at or beyond
/// `r0 +- rho`. Each path uses its own ChaCha8 stream keyed by the seed, the
/// path index and the direction, so results do not depend on scheduling.
pub fn simulate_fht(cfg: &GbmConfig, dir: Direction) -> Result<FhtSample> {
    cfg.validate()?;
    let hits: Vec<Option<u64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| hit_step(cfg, dir, &mut path_rng(cfg.seed, i, dir)))
        .collect();
    let censored = hits.iter().filter(|h| h.is_none()).count();
    let tau = hits.into_iter().flatten().map(|k| k as f64 * cfg.dt).collect();
    Ok(FhtSample { tau, censored })
}

/// Simulates a single Euler log-price path of `n` daily closes starting at `r0`.
pub fn simulate_log_path(lambda: f64, sigma: f64, r0: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = r0;
    let mut out = Vec::with_capacity(n);
    out.push(x);
    for _ in 1..n {
        let xi: f64 = rng.sample(StandardNormal);
        x += lambda + sigma * xi;
        out.push(x);
    }
    out
}

fn density_unchecked(t: f64, lambda: f64, sigma: f64, a: f64) -> f64 {
    let s2 = sigma * sigma;
    let d = lambda * t - a;
    (a * a / (2.0 * std::f64::consts::PI * s2 * t * t * t)).sqrt() * (-(d * d) / (2.0 * s2 * t)).exp()
}

/// First-hitting density at `t` days for the barrier in direction `dir`.
pub fn fht_density(t: f64, cfg: &GbmConfig, dir: Direction) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::DomainError(format!("hitting-time density needs t > 0, got {t}")));
    }
    Ok(density_unchecked(t, cfg.lambda, cfg.sigma, cfg.barrier(dir)))
}

/// First-hitting density written with an explicit barrier distance `a` (signed).
pub fn fht_density_raw(t: f64, lambda: f64, sigma: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::DomainError(format!("hitting-time density needs t > 0, got {t}")));
    }
    Ok(density_unchecked(t, lambda, sigma, a))
}

const QUAD_TOL: f64 = 1e-12;

/// CDF of the hitting time by numerical integration of the density, evaluated
/// at sorted, non-negative points (accumulating interval by interval).
pub fn fht_cdf_sorted(points: &[f64], cfg: &GbmConfig, dir: Direction) -> Vec<f64> {
    let (lambda, sigma, a) = (cfg.lambda, cfg.sigma, cfg.barrier(dir));
    let f = |t: f64| {
        if t > 0.0 {
            density_unchecked(t, lambda, sigma, a)
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &t in points {
        debug_assert!(t >= prev);
        if t > prev {
            acc += integrate(&f, prev, t);
            prev = t;
        }
        out.push(acc);
    }
    out
}

/// Integrates over `[a, b]`, splitting long intervals so the sharp peak of the
/// density near zero is resolved.
fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    let mut width = (b - a).min(0.25_f64.max(a));
    while lo < b {
        let hi = (lo + width).min(b);
        total += quadrature::integrate(f, lo, hi, QUAD_TOL).integral;
        lo = hi;
        width *= 2.0;
    }
    total
}

pub fn fht_cdf(t: f64, cfg: &GbmConfig, dir: Direction) -> f64 {
    fht_cdf_sorted(&[t.max(0.0)], cfg, dir)[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub n: usize,
    pub censored_fraction: f64,
}

pub const MIN_KS_HITS: usize = 1000;
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

/// Largest gap between an empirical CDF (given by sorted values) and a
/// continuous model CDF evaluated at those values. Ties are handled by
/// comparing both sides of each jump.
fn ks_against(sorted: &[f64], cdf_at: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let f = cdf_at[i];
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d
}

/// One-sample Kolmogorov-Smirnov distance of simulated hitting times against
/// the integrated closed-form density. Censored paths are excluded.
pub fn ks_validate(sample: &FhtSample, cfg: &GbmConfig, dir: Direction) -> Result<KsReport> {
    if sample.tau.len() < MIN_KS_HITS {
        return Err(Error::TooFewSamples {
            need: MIN_KS_HITS,
            got: sample.tau.len(),
        });
    }
    let frac = sample.censored_fraction();
    if frac >= MAX_CENSORED_FRACTION {
        return Err(Error::ExcessCensoring(frac));
    }
    let mut sorted = sample.tau.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("hitting time"));
    }
    let cdf = fht_cdf_sorted(&sorted, cfg, dir);
    Ok(KsReport {
        statistic: ks_against(&sorted, &cdf),
        n: sorted.len(),
        censored_fraction: frac,
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample critical value `c(alpha) sqrt((n + m) / (n m))` with
/// `c(alpha) = sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn cfg() -> GbmConfig {
        GbmConfig {
            n_paths: 20_000,
            horizon: 600.0,
            seed: 3,
            ..GbmConfig::default()
        }
    }

    /// Inverse Gaussian CDF with mean `mu = a / lambda` and shape `a^2 / Sigma^2`.
    fn inverse_gaussian_cdf(t: f64, lambda: f64, sigma: f64, a: f64) -> f64 {
        let n = Normal::new(0.0, 1.0).unwrap();
        let mu = a / lambda;
        let shape = a * a / (sigma * sigma);
        let r = (shape / t).sqrt();
        n.cdf(r * (t / mu - 1.0)) + (2.0 * shape / mu).exp() * n.cdf(-r * (t / mu + 1.0))
    }

    #[test]
    fn density_integrates_to_one() {
        let c = GbmConfig::default();
        let total = fht_cdf(1e6, &c, Direction::Up);
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        // Drift away from the lower barrier leaves mass exp(-2 lambda rho / Sigma^2).
        let down = fht_cdf(1e6, &c, Direction::Down);
        assert!((down - (-2.0 * 0.05 * 0.3 / 0.09f64).exp()).abs() < 1e-4, "{down}");
    }

    #[test]
    fn cdf_matches_inverse_gaussian() {
        let c = GbmConfig::default();
        let pts: Vec<f64> = (1..200).map(|i| 0.05 * i as f64 * (1.0 + 0.02 * i as f64)).collect();
        let cdf = fht_cdf_sorted(&pts, &c, Direction::Up);
        for (t, f) in pts.iter().zip(cdf) {
            let g = inverse_gaussian_cdf(*t, 0.05, 0.3, 0.3);
            assert!((f - g).abs() < 1e-8, "t {t}: {f} vs {g}");
        }
    }

    #[test]
    fn driftless_mode_is_one_third() {
        let c = GbmConfig {
            lambda: 0.0,
            sigma: 1.0,
            rho: 1.0,
            ..GbmConfig::default()
        };
        let grid: Vec<f64> = (1..=100_000).map(|i| i as f64 * 1e-5).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                fht_density(*a, &c, Direction::Up)
                    .unwrap()
                    .total_cmp(&fht_density(*b, &c, Direction::Up).unwrap())
            })
            .unwrap();
        assert!((best - 1.0 / 3.0).abs() < 2e-5, "{best}");
    }

    #[test]
    fn density_even_in_joint_sign() {
        for t in [0.1, 1.0, 7.5, 40.0] {
            let a = fht_density_raw(t, 0.05, 0.3, 0.3).unwrap();
            let b = fht_density_raw(t, -0.05, 0.3, -0.3).unwrap();
            assert_eq!(a, b);
        }
        assert!(fht_density_raw(0.0, 0.05, 0.3, 0.3).is_err());
        assert!(fht_density(-1.0, &GbmConfig::default(), Direction::Up).is_err());
    }

    #[test]
    fn small_noise_concentrates_at_rho_over_lambda() {
        let c = GbmConfig {
            sigma: 1e-4,
            dt: 0.01,
            n_paths: 200,
            horizon: 20.0,
            ..GbmConfig::default()
        };
        let s = simulate_fht(&c, Direction::Up).unwrap();
        assert_eq!(s.censored, 0);
        for t in &s.tau {
            assert!((t - 6.0).abs() < 0.05, "{t}");
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let c = GbmConfig {
            n_paths: 500,
            horizon: 5.0,
            ..cfg()
        };
        let a = simulate_fht(&c, Direction::Up).unwrap();
        assert_eq!(a, simulate_fht(&c, Direction::Up).unwrap());
        assert_eq!(a.n_paths(), 500);
        assert!(a.censored > 0);
        assert!(a.tau.iter().all(|t| *t <= 5.0 && *t > 0.0));
    }

    #[test]
    fn wald_mean_identity() {
        let c = GbmConfig {
            dt: 1.0 / 50.0,
            n_paths: 20_000,
            horizon: 2000.0,
            ..cfg()
        };
        let s = simulate_fht(&c, Direction::Up).unwrap();
        assert_eq!(s.censored, 0);
        let m = s.mean();
        let sd = (s.tau.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (s.tau.len() - 1) as f64).sqrt();
        let se = sd / (s.tau.len() as f64).sqrt();
        assert!((m - 6.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn self_consistent_inverse_cdf_sample() {
        // Draw from the density by inverting its CDF on a fine grid.
        let c = GbmConfig::default();
        let grid: Vec<f64> = (1..=400_000).map(|i| i as f64 * 1e-3).collect();
        let cdf = fht_cdf_sorted(&grid, &c, Direction::Up);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5000;
        let tau: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let k = cdf.partition_point(|f| *f < u).min(grid.len() - 1);
                let (f0, t0) = if k == 0 { (0.0, 0.0) } else { (cdf[k - 1], grid[k - 1]) };
                t0 + (u - f0) / (cdf[k] - f0) * (grid[k] - t0)
            })
            .collect();
        let r = ks_validate(&FhtSample { tau, censored: 0 }, &c, Direction::Up).unwrap();
        assert!(r.statistic < 1.36 / (n as f64).sqrt(), "{}", r.statistic);
    }

    #[test]
    fn degenerate_sample_has_large_distance() {
        let c = GbmConfig::default();
        let r = ks_validate(
            &FhtSample {
                tau: vec![6.0; 2000],
                censored: 0,
            },
            &c,
            Direction::Up,
        )
        .unwrap();
        let f = fht_cdf(6.0, &c, Direction::Up);
        assert!((r.statistic - f.max(1.0 - f)).abs() < 1e-12);
    }

    #[test]
    fn ks_preconditions() {
        let c = GbmConfig::default();
        assert!(matches!(
            ks_validate(
                &FhtSample {
                    tau: vec![1.0; 999],
                    censored: 0
                },
                &c,
                Direction::Up
            ),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            ks_validate(
                &FhtSample {
                    tau: vec![1.0; 1000],
                    censored: 20
                },
                &c,
                Direction::Up
            ),
            Err(Error::ExcessCensoring(_))
        ));
    }

    #[test]
    fn two_sample_ks() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5]) - 0.5).abs() < 1e-15);
        assert!((ks_two_sample_critical(100_000, 100_000, 0.01) - 1.6276 * (2e-5f64).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn finer_steps_reduce_grid_bias() {
        // Averaged over seeds, quartering dt moves the grid-only sample closer
        // to the closed form.
        let base = GbmConfig {
            n_paths: 20_000,
            horizon: 1000.0,
            crossing: CrossingCheck::Grid,
            ..GbmConfig::default()
        };
        let mut coarse = 0.0;
        let mut fine = 0.0;
        for seed in 0..3 {
            let a = GbmConfig { dt: 0.02, seed, ..base };
            let b = GbmConfig { dt: 0.005, seed, ..base };
            coarse += ks_validate(&simulate_fht(&a, Direction::Up).unwrap(), &a, Direction::Up)
                .unwrap()
                .statistic;
            fine += ks_validate(&simulate_fht(&b, Direction::Up).unwrap(), &b, Direction::Up)
                .unwrap()
                .statistic;
        }
        assert!(fine < coarse, "fine {fine} coarse {coarse}");
    }
}
