use crate::error::{Error, Result};

use super::LogDensity;

/// A point in phase space together with the cached log density and its gradient at `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

impl HamiltonianState {
    /// Evaluates the target at `q`; momentum starts at zero.
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; q.len()];
        let logp = target.logp_grad(&q, &mut grad)?;
        Ok(Self {
            p: vec![0.0; q.len()],
            q,
            logp,
            grad,
        })
    }

    pub fn potential(&self) -> f64 {
        -self.logp
    }

    /// `0.5 p' M^-1 p` for a diagonal inverse mass.
    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn energy(&self, inv_mass: &[f64]) -> f64 {
        self.potential() + self.kinetic(inv_mass)
    }

    /// Velocity `M^-1 p`.
    pub fn p_sharp(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// One kick-drift-kick step of size `eps` (negative integrates backwards).
/// A non-finite log density or gradient at the new position is an error,
/// which the tree builder records as a divergence.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    state: &HamiltonianState,
    eps: f64,
    inv_mass: &[f64],
) -> Result<HamiltonianState> {
    let mut next = state.clone();
    leapfrog_in_place(target, &mut next, eps, inv_mass)?;
    Ok(next)
}

pub(crate) fn leapfrog_in_place<T: LogDensity + ?Sized>(
    target: &T,
    s: &mut HamiltonianState,
    eps: f64,
    inv_mass: &[f64],
) -> Result<()> {
    let half = 0.5 * eps;
    for (p, g) in s.p.iter_mut().zip(&s.grad) {
        *p += half * g;
    }
    for ((q, p), m) in s.q.iter_mut().zip(&s.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    s.logp = target.logp_grad(&s.q, &mut s.grad)?;
    if !s.logp.is_finite() {
        return Err(Error::NonFinite("log density"));
    }
    for (p, g) in s.p.iter_mut().zip(&s.grad) {
        *p += half * g;
    }
    Ok(())
}
