//! Multinomial No-U-Turn transitions with the generalized U-turn criterion
//! checked across merged subtrees.

use rand::Rng;
use rand_distr::StandardNormal;

use super::hamiltonian::{leapfrog_in_place, HamiltonianState};
use super::LogDensity;

/// Energy error beyond which a trajectory is flagged divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Per-transition statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawStats {
    /// Mean Metropolis acceptance over all leapfrog steps of the trajectory.
    pub accept_stat: f64,
    pub tree_depth: u32,
    pub n_leapfrog: u32,
    pub divergent: bool,
    /// Hamiltonian of the selected state.
    pub energy: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Momenta and velocities at the two ends of a (sub)trajectory.
#[derive(Clone)]
struct Ends {
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
}

impl Ends {
    fn zeros(n: usize) -> Self {
        Self {
            p_beg: vec![0.0; n],
            p_end: vec![0.0; n],
            p_sharp_beg: vec![0.0; n],
            p_sharp_end: vec![0.0; n],
        }
    }
}

struct TreeBuilder<'a, T: ?Sized, R> {
    target: &'a T,
    eps: f64,
    inv_mass: &'a [f64],
    h0: f64,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    divergent: bool,
    rng: &'a mut R,
}

impl<T: LogDensity + ?Sized, R: Rng> TreeBuilder<'_, T, R> {
    /// Extends the trajectory from `z` by `2^depth` leapfrog steps in direction
    /// `sign`, leaving `z` at the new edge. Returns false on a U-turn or
    /// divergence inside the new subtree.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        depth: u32,
        z: &mut HamiltonianState,
        z_propose: &mut HamiltonianState,
        ends: &mut Ends,
        rho: &mut Vec<f64>,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.n_leapfrog += 1;
            let h = match leapfrog_in_place(self.target, z, sign * self.eps, self.inv_mass) {
                Ok(()) => {
                    let h = z.energy(self.inv_mass);
                    if h.is_nan() {
                        f64::INFINITY
                    } else {
                        h
                    }
                }
                Err(_) => f64::INFINITY,
            };
            if h - self.h0 > MAX_ENERGY_ERROR {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            z_propose.clone_from(z);
            let ps = z.p_sharp(self.inv_mass);
            *rho = add(rho, &z.p);
            ends.p_beg.clone_from(&z.p);
            ends.p_end.clone_from(&z.p);
            ends.p_sharp_beg.clone_from(&ps);
            ends.p_sharp_end = ps;
            return !self.divergent;
        }

        let n = z.q.len();
        let mut init = Ends::zeros(n);
        let mut rho_init = vec![0.0; n];
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build(depth - 1, z, z_propose, &mut init, &mut rho_init, sign, &mut lsw_init) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut fin = Ends::zeros(n);
        let mut rho_final = vec![0.0; n];
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut fin,
            &mut rho_final,
            sign,
            &mut lsw_final,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || self.rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            std::mem::swap(z_propose, &mut z_propose_final);
        }

        let rho_subtree = add(&rho_init, &rho_final);
        *rho = add(rho, &rho_subtree);

        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&rho_final, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);

        *ends = Ends {
            p_beg: init.p_beg,
            p_end: fin.p_end,
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
        };
        persist
    }
}

/// Draws a fresh momentum `p ~ N(0, M)` for a diagonal mass `M = 1 / inv_mass`.
pub fn sample_momentum<R: Rng>(inv_mass: &[f64], rng: &mut R) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|m| {
            let xi: f64 = rng.sample(StandardNormal);
            xi / m.sqrt()
        })
        .collect()
}

/// One multinomial NUTS transition from `current` (position, log density and
/// gradient are used; its momentum is resampled). Trajectories double until a
/// U-turn, a divergence, or `max_tree_depth` doublings; a depth of 0 is treated
/// as 1, i.e. a single leapfrog step with a Metropolis-type selection.
pub fn nuts_draw<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &HamiltonianState,
    eps: f64,
    inv_mass: &[f64],
    max_tree_depth: u32,
    rng: &mut R,
) -> (HamiltonianState, DrawStats) {
    let mut z = current.clone();
    z.p = sample_momentum(inv_mass, rng);
    let h0 = z.energy(inv_mass);
    let ps0 = z.p_sharp(inv_mass);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    // Momenta and velocities at the outermost forward and backward states.
    let (mut p_fwd, mut ps_fwd) = (z.p.clone(), ps0.clone());
    let (mut p_bck, mut ps_bck) = (z.p.clone(), ps0);
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;

    let mut builder = TreeBuilder {
        target,
        eps,
        inv_mass,
        h0,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
        rng,
    };

    let n = z.q.len();
    let max_depth = max_tree_depth.max(1);
    let mut depth = 0;
    while depth < max_depth {
        let mut sub = Ends::zeros(n);
        let mut rho_sub = vec![0.0; n];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let forward = builder.rng.random::<f64>() > 0.5;
        let valid = if forward {
            builder.build(
                depth,
                &mut z_fwd,
                &mut z_propose,
                &mut sub,
                &mut rho_sub,
                1.0,
                &mut lsw_subtree,
            )
        } else {
            builder.build(
                depth,
                &mut z_bck,
                &mut z_propose,
                &mut sub,
                &mut rho_sub,
                -1.0,
                &mut lsw_subtree,
            )
        };
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight || builder.rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
            z_sample.clone_from(&z_propose);
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        // `sub.p_beg` is adjacent to the old trajectory, `sub.p_end` is the new outer edge.
        let (old_inner_p, old_inner_ps, far_ps) = if forward {
            (&p_fwd, &ps_fwd, &ps_bck)
        } else {
            (&p_bck, &ps_bck, &ps_fwd)
        };
        let rho_old = rho;
        rho = add(&rho_old, &rho_sub);
        let mut persist = no_u_turn(far_ps, &sub.p_sharp_end, &rho);
        persist &= no_u_turn(far_ps, &sub.p_sharp_beg, &add(&rho_old, &sub.p_beg));
        persist &= no_u_turn(old_inner_ps, &sub.p_sharp_end, &add(&rho_sub, old_inner_p));

        if forward {
            p_fwd = sub.p_end;
            ps_fwd = sub.p_sharp_end;
        } else {
            p_bck = sub.p_end;
            ps_bck = sub.p_sharp_end;
        }
        if !persist {
            break;
        }
    }

    let accept_stat = if builder.n_leapfrog > 0 {
        builder.sum_metro_prob / f64::from(builder.n_leapfrog)
    } else {
        0.0
    };
    let stats = DrawStats {
        accept_stat,
        tree_depth: depth,
        n_leapfrog: builder.n_leapfrog,
        divergent: builder.divergent,
        energy: z_sample.energy(inv_mass),
    };
    (z_sample, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::targets::DiagGaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn bin_of(x: f64, edges: &[f64]) -> usize {
        edges.partition_point(|e| *e <= x)
    }

    /// Starting from exact draws, one transition must leave the binned
    /// distribution unchanged.
    #[test]
    fn transition_preserves_target_histogram() {
        let target = DiagGaussian::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let edges: Vec<f64> = (0..=16).map(|i| -2.4 + 0.3 * i as f64).collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 40_000;
        for (eps, depth) in [(0.9, 10), (1.7, 3), (0.5, 0)] {
            let mut counts = vec![0usize; edges.len() + 1];
            for _ in 0..n {
                let x0: f64 = rng.sample(StandardNormal);
                let s = HamiltonianState::new(&target, vec![x0]).unwrap();
                let (next, stats) = nuts_draw(&target, &s, eps, &[1.0], depth, &mut rng);
                assert!(stats.accept_stat > 0.0 && stats.accept_stat <= 1.0);
                counts[bin_of(next.q[0], &edges)] += 1;
            }
            let mut chi2 = 0.0;
            for (k, c) in counts.iter().enumerate() {
                let lo = if k == 0 { 0.0 } else { normal.cdf(edges[k - 1]) };
                let hi = if k == edges.len() { 1.0 } else { normal.cdf(edges[k]) };
                let e = (hi - lo) * n as f64;
                chi2 += (*c as f64 - e).powi(2) / e;
            }
            // 17 degrees of freedom; the 0.999 quantile is about 40.8.
            assert!(chi2 < 40.8, "eps {eps} depth {depth}: chi2 {chi2}");
        }
    }

    #[test]
    fn divergence_flagged_on_huge_step() {
        let target = DiagGaussian::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = HamiltonianState::new(&target, vec![1.0, -1.0]).unwrap();
        let (next, stats) = nuts_draw(&target, &s, 100.0, &[1.0, 1.0], 10, &mut rng);
        assert!(stats.divergent);
        assert_eq!(next.q, s.q);
    }

    #[test]
    fn depth_limit_bounds_leapfrogs() {
        let target = DiagGaussian::standard(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = HamiltonianState::new(&target, vec![0.1, 0.2, 0.3]).unwrap();
        for depth in [1u32, 2, 3] {
            for _ in 0..50 {
                let (_, st) = nuts_draw(&target, &s, 0.01, &[1.0; 3], depth, &mut rng);
                assert!(st.tree_depth <= depth);
                assert!(st.n_leapfrog < 1 << depth);
            }
        }
    }
}
