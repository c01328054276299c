//! The two hierarchical two-group models for `x = ln(tau)`.
//!
//! Both models share normal priors on the group locations and uniform priors
//! on the group scales. The Student-t model adds a shifted exponential prior on
//! the degrees of freedom. The Inverse Gamma model is sampled in its
//! mean/std parameterization `(M, S)`, mapped to shape and scale by
//!
//! ```text
//! alpha = 2 + M^2 / S^2,    beta = M (alpha - 1)
//! ```
//!
//! Sampling happens in unconstrained coordinates:
//!
//! | parameter   | support          | map to the real line         |
//! |-------------|------------------|------------------------------|
//! | mu          | R                | identity                     |
//! | sigma, S    | (low, high)      | scaled logit                 |
//! | nu          | (shift, inf)     | ln(nu - shift)               |
//! | M           | (0, inf)         | ln(M)                        |

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::inverse_stats::LogHittingSample;
use crate::sampler::LogDensity;
use crate::series::{mean, sample_variance};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    StudentT,
    InverseGamma,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::StudentT => "student-t",
            ModelKind::InverseGamma => "inverse-gamma",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelKind::StudentT => 6,
            ModelKind::InverseGamma => 4,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelKind::StudentT => &["mu_plus", "sigma_plus", "nu_plus", "mu_minus", "sigma_minus", "nu_minus"],
            ModelKind::InverseGamma => &["M_plus", "S_plus", "M_minus", "S_minus"],
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "student-t" | "student" | "t" => Ok(ModelKind::StudentT),
            "inverse-gamma" | "inv-gamma" | "ig" => Ok(ModelKind::InverseGamma),
            other => Err(Error::DomainError(format!("unknown model `{other}`"))),
        }
    }
}

/// Hyperparameters shared by both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub m_plus: f64,
    pub m_minus: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub nu_rate: f64,
    pub nu_shift: f64,
}

impl PriorSpec {
    /// Empirical means and sample stds of each side, with the default scale
    /// bounds (1, 100) and the degrees-of-freedom prior of rate 1/29 shifted by 1.
    pub fn from_data(data: &LogHittingSample) -> Result<Self> {
        let side = |x: &[f64], name| -> Result<(f64, f64)> {
            match x.len() {
                0 => return Err(Error::EmptySide(name)),
                1 => return Err(Error::TooFewSamples { need: 2, got: 1 }),
                _ => {}
            }
            let s = sample_variance(x).sqrt();
            if !(s > 0.0) {
                return Err(Error::ZeroVariance);
            }
            Ok((mean(x), s))
        };
        let (m_plus, s_plus) = side(&data.x_plus, "plus")?;
        let (m_minus, s_minus) = side(&data.x_minus, "minus")?;
        Ok(Self {
            m_plus,
            m_minus,
            s_plus,
            s_minus,
            ..Self::default()
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = self.s_plus > 0.0
            && self.s_minus > 0.0
            && self.sigma_low < self.sigma_high
            && self.sigma_low >= 0.0
            && self.nu_rate > 0.0
            && self.nu_shift >= 0.0
            && self.m_plus.is_finite()
            && self.m_minus.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::DomainError(format!("invalid prior specification {self:?}")))
        }
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            m_plus: 0.0,
            m_minus: 0.0,
            s_plus: 1.0,
            s_minus: 1.0,
            sigma_low: 1.0,
            sigma_high: 100.0,
            nu_rate: 1.0 / 29.0,
            nu_shift: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub prior: PriorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    pub mu_plus: f64,
    pub sigma_plus: f64,
    pub nu_plus: f64,
    pub mu_minus: f64,
    pub sigma_minus: f64,
    pub nu_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct InvGammaParams {
    pub M_plus: f64,
    pub S_plus: f64,
    pub M_minus: f64,
    pub S_minus: f64,
}

/// Shape and scale of an Inverse Gamma with mean `m` and std `s`.
pub fn invgamma_shape_scale(m: f64, s: f64) -> (f64, f64) {
    let alpha = 2.0 + (m * m) / (s * s);
    (alpha, m * (alpha - 1.0))
}

impl InvGammaParams {
    pub fn alpha_beta_plus(&self) -> (f64, f64) {
        invgamma_shape_scale(self.M_plus, self.S_plus)
    }

    pub fn alpha_beta_minus(&self) -> (f64, f64) {
        invgamma_shape_scale(self.M_minus, self.S_minus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Student(StudentParams),
    InvGamma(InvGammaParams),
}

impl Params {
    pub fn kind(&self) -> ModelKind {
        match self {
            Params::Student(_) => ModelKind::StudentT,
            Params::InvGamma(_) => ModelKind::InverseGamma,
        }
    }

    /// Flat vector in [`ModelKind::param_names`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            Params::Student(p) => vec![p.mu_plus, p.sigma_plus, p.nu_plus, p.mu_minus, p.sigma_minus, p.nu_minus],
            Params::InvGamma(p) => vec![p.M_plus, p.S_plus, p.M_minus, p.S_minus],
        }
    }

    pub fn from_slice(kind: ModelKind, v: &[f64]) -> Self {
        match kind {
            ModelKind::StudentT => Params::Student(StudentParams {
                mu_plus: v[0],
                sigma_plus: v[1],
                nu_plus: v[2],
                mu_minus: v[3],
                sigma_minus: v[4],
                nu_minus: v[5],
            }),
            ModelKind::InverseGamma => Params::InvGamma(InvGammaParams {
                M_plus: v[0],
                S_plus: v[1],
                M_minus: v[2],
                S_minus: v[3],
            }),
        }
    }

    /// `((location+, scale+), (location-, scale-))` entering the effect size.
    pub fn location_scale(&self) -> ((f64, f64), (f64, f64)) {
        match *self {
            Params::Student(p) => ((p.mu_plus, p.sigma_plus), (p.mu_minus, p.sigma_minus)),
            Params::InvGamma(p) => ((p.M_plus, p.S_plus), (p.M_minus, p.S_minus)),
        }
    }
}

fn check_finite(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("non-finite argument in {vals:?}")))
    }
}

/// Location-scale Student-t log density.
pub fn student_logpdf(x: f64, mu: f64, sigma: f64, nu: f64) -> Result<f64> {
    check_finite(&[x, mu, sigma, nu])?;
    if !(sigma > 0.0 && nu > 0.0) {
        return Err(Error::DomainError(format!("sigma = {sigma}, nu = {nu} must be positive")));
    }
    Ok(student_norm(sigma, nu) + student_kernel(x, mu, sigma, nu))
}

fn student_norm(sigma: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * nu).ln() - sigma.ln()
}

fn student_kernel(x: f64, mu: f64, sigma: f64, nu: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// Inverse Gamma log density `alpha ln(beta) - lnGamma(alpha) - (alpha+1) ln(x) - beta/x`.
pub fn invgamma_logpdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_finite(&[x, alpha, beta])?;
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("inverse gamma support is x > 0, got {x}")));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::DomainError(format!("alpha = {alpha}, beta = {beta} must be positive")));
    }
    Ok(alpha * beta.ln() - ln_gamma(alpha) - (alpha + 1.0) * x.ln() - beta / x)
}

fn normal_logpdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * (LN_2PI + z * z) - s.ln()
}

/// Log prior density; `-inf` outside the support.
pub fn log_prior(theta: &Params, prior: &PriorSpec) -> f64 {
    let scale = |s: f64| {
        if s > prior.sigma_low && s < prior.sigma_high {
            -(prior.sigma_high - prior.sigma_low).ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let dof = |nu: f64| {
        if nu >= prior.nu_shift {
            prior.nu_rate.ln() - prior.nu_rate * (nu - prior.nu_shift)
        } else {
            f64::NEG_INFINITY
        }
    };
    match *theta {
        Params::Student(p) => {
            normal_logpdf(p.mu_plus, prior.m_plus, prior.s_plus)
                + normal_logpdf(p.mu_minus, prior.m_minus, prior.s_minus)
                + scale(p.sigma_plus)
                + scale(p.sigma_minus)
                + dof(p.nu_plus)
                + dof(p.nu_minus)
        }
        Params::InvGamma(p) => {
            if !(p.M_plus > 0.0 && p.M_minus > 0.0) {
                return f64::NEG_INFINITY;
            }
            normal_logpdf(p.M_plus, prior.m_plus, prior.s_plus)
                + normal_logpdf(p.M_minus, prior.m_minus, prior.s_minus)
                + scale(p.S_plus)
                + scale(p.S_minus)
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Maps of one coordinate between its support and the real line.
#[derive(Debug, Clone, Copy)]
enum Transform {
    Identity,
    Bounded { low: f64, high: f64 },
    LowerBound(f64),
}

impl Transform {
    fn forward(&self, v: f64) -> f64 {
        match *self {
            Transform::Identity => v,
            Transform::Bounded { low, high } => {
                let p = (v - low) / (high - low);
                (p / (1.0 - p)).ln()
            }
            Transform::LowerBound(b) => (v - b).ln(),
        }
    }

    fn inverse(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::Bounded { low, high } => low + (high - low) * sigmoid(u),
            Transform::LowerBound(b) => b + u.exp(),
        }
    }

    /// `d inverse / du`.
    fn derivative(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::Bounded { low, high } => {
                let s = sigmoid(u);
                (high - low) * s * (1.0 - s)
            }
            Transform::LowerBound(_) => u.exp(),
        }
    }

    fn log_jacobian(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Bounded { low, high } => (high - low).ln() - softplus(-u) - softplus(u),
            Transform::LowerBound(_) => u,
        }
    }

    /// `d log_jacobian / du`.
    fn log_jacobian_grad(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Bounded { .. } => 1.0 - 2.0 * sigmoid(u),
            Transform::LowerBound(_) => 1.0,
        }
    }
}

fn transforms(kind: ModelKind, prior: &PriorSpec) -> Vec<Transform> {
    let scale = Transform::Bounded {
        low: prior.sigma_low,
        high: prior.sigma_high,
    };
    match kind {
        ModelKind::StudentT => {
            let dof = Transform::LowerBound(prior.nu_shift);
            vec![Transform::Identity, scale, dof, Transform::Identity, scale, dof]
        }
        ModelKind::InverseGamma => {
            let pos = Transform::LowerBound(0.0);
            vec![pos, scale, pos, scale]
        }
    }
}

pub fn to_unconstrained(theta: &Params, prior: &PriorSpec) -> Vec<f64> {
    transforms(theta.kind(), prior)
        .iter()
        .zip(theta.to_vec())
        .map(|(t, v)| t.forward(v))
        .collect()
}

pub fn from_unconstrained(z: &[f64], kind: ModelKind, prior: &PriorSpec) -> Params {
    let v: Vec<f64> = transforms(kind, prior).iter().zip(z).map(|(t, &u)| t.inverse(u)).collect();
    Params::from_slice(kind, &v)
}

/// Log absolute determinant of the Jacobian of [`from_unconstrained`].
pub fn log_jacobian(z: &[f64], kind: ModelKind, prior: &PriorSpec) -> f64 {
    transforms(kind, prior).iter().zip(z).map(|(t, &u)| t.log_jacobian(u)).sum()
}

/// One side's observations, deduplicated into distinct values with multiplicities.
#[derive(Debug, Clone)]
struct SideData {
    values: Vec<f64>,
    counts: Vec<f64>,
    n: f64,
    /// Weighted sums of `ln x` and `1 / x` (Inverse Gamma sufficient statistics).
    sum_ln: f64,
    sum_inv: f64,
}

impl SideData {
    fn new(x: &[f64]) -> Self {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for v in sorted {
            match values.last() {
                Some(last) if last.to_bits() == v.to_bits() => *counts.last_mut().unwrap() += 1.0,
                _ => {
                    values.push(v);
                    counts.push(1.0);
                }
            }
        }
        let (mut sum_ln, mut sum_inv) = (0.0, 0.0);
        for (v, c) in values.iter().zip(&counts) {
            sum_ln += c * v.ln();
            sum_inv += c / v;
        }
        Self {
            n: x.len() as f64,
            values,
            counts,
            sum_ln,
            sum_inv,
        }
    }

    /// Student-t log likelihood and its partials in `(mu, sigma, nu)`.
    fn student(&self, mu: f64, sigma: f64, nu: f64) -> (f64, [f64; 3]) {
        let (mut kern, mut d_mu, mut d_sigma_q, mut d_nu_q) = (0.0, 0.0, 0.0, 0.0);
        for (&v, &c) in self.values.iter().zip(&self.counts) {
            let z = (v - mu) / sigma;
            let z2 = z * z;
            let denom = nu + z2;
            kern += c * (z2 / nu).ln_1p();
            d_mu += c * z / denom;
            d_sigma_q += c * z2 / denom;
            d_nu_q += c * z2 / denom;
        }
        let np1 = nu + 1.0;
        let ll = self.n * student_norm(sigma, nu) - 0.5 * np1 * kern;
        let g_mu = np1 * d_mu / sigma;
        let g_sigma = -self.n / sigma + np1 * d_sigma_q / sigma;
        let g_nu = self.n * 0.5 * (digamma(0.5 * np1) - digamma(0.5 * nu) - 1.0 / nu) - 0.5 * kern + np1 * d_nu_q / (2.0 * nu);
        (ll, [g_mu, g_sigma, g_nu])
    }

    /// Inverse Gamma log likelihood and its partials in `(M, S)`.
    #[allow(non_snake_case)]
    fn inv_gamma(&self, M: f64, S: f64) -> (f64, [f64; 2]) {
        let (alpha, beta) = invgamma_shape_scale(M, S);
        let ll = self.n * (alpha * beta.ln() - ln_gamma(alpha)) - (alpha + 1.0) * self.sum_ln - beta * self.sum_inv;
        let d_alpha = self.n * (beta.ln() - digamma(alpha)) - self.sum_ln;
        let d_beta = self.n * alpha / beta - self.sum_inv;
        let (s2, s3) = (S * S, S * S * S);
        let g_m = d_alpha * 2.0 * M / s2 + d_beta * (1.0 + 3.0 * M * M / s2);
        let g_s = -d_alpha * 2.0 * M * M / s3 - d_beta * 2.0 * M * M * M / s3;
        (ll, [g_m, g_s])
    }
}

/// A hierarchical model bound to its data, evaluated in unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    spec: ModelSpec,
    plus: SideData,
    minus: SideData,
    transforms: Vec<Transform>,
}

impl HierarchicalModel {
    /// Fails with `EmptySide` if a side has no observations, and with a domain
    /// error if the Inverse Gamma model receives a non-positive observation.
    pub fn new(data: &LogHittingSample, spec: ModelSpec) -> Result<Self> {
        spec.prior.validate()?;
        if data.x_plus.is_empty() {
            return Err(Error::EmptySide("plus"));
        }
        if data.x_minus.is_empty() {
            return Err(Error::EmptySide("minus"));
        }
        check_finite(&data.x_plus)?;
        check_finite(&data.x_minus)?;
        if spec.kind == ModelKind::InverseGamma && data.x_plus.iter().chain(&data.x_minus).any(|&x| x <= 0.0) {
            return Err(Error::DomainError(
                "inverse gamma observations must be positive; drop ln(tau) = 0 first".into(),
            ));
        }
        Ok(Self {
            transforms: transforms(spec.kind, &spec.prior),
            spec,
            plus: SideData::new(&data.x_plus),
            minus: SideData::new(&data.x_minus),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_plus(&self) -> usize {
        self.plus.n as usize
    }

    pub fn n_minus(&self) -> usize {
        self.minus.n as usize
    }

    pub fn params(&self, z: &[f64]) -> Params {
        from_unconstrained(z, self.spec.kind, &self.spec.prior)
    }

    /// Log likelihood summed over both sides at constrained parameters.
    pub fn log_likelihood(&self, theta: &Params) -> f64 {
        match *theta {
            Params::Student(p) => {
                self.plus.student(p.mu_plus, p.sigma_plus, p.nu_plus).0
                    + self.minus.student(p.mu_minus, p.sigma_minus, p.nu_minus).0
            }
            Params::InvGamma(p) => self.plus.inv_gamma(p.M_plus, p.S_plus).0 + self.minus.inv_gamma(p.M_minus, p.S_minus).0,
        }
    }

    /// Log likelihood of each distinct observed value (plus side first), one
    /// entry per value regardless of multiplicity.
    pub fn grouped_loglik(&self, theta: &Params, out: &mut [f64]) {
        let (np, nm) = (self.plus.values.len(), self.minus.values.len());
        debug_assert_eq!(out.len(), np + nm);
        let (head, tail) = out.split_at_mut(np);
        match *theta {
            Params::Student(p) => {
                let (cp, cm) = (student_norm(p.sigma_plus, p.nu_plus), student_norm(p.sigma_minus, p.nu_minus));
                for (o, &v) in head.iter_mut().zip(&self.plus.values) {
                    *o = cp + student_kernel(v, p.mu_plus, p.sigma_plus, p.nu_plus);
                }
                for (o, &v) in tail.iter_mut().zip(&self.minus.values) {
                    *o = cm + student_kernel(v, p.mu_minus, p.sigma_minus, p.nu_minus);
                }
            }
            Params::InvGamma(p) => {
                let ig = |o: &mut [f64], vals: &[f64], (a, b): (f64, f64)| {
                    let c = a * b.ln() - ln_gamma(a);
                    for (o, &v) in o.iter_mut().zip(vals) {
                        *o = c - (a + 1.0) * v.ln() - b / v;
                    }
                };
                ig(head, &self.plus.values, p.alpha_beta_plus());
                ig(tail, &self.minus.values, p.alpha_beta_minus());
            }
        }
    }

    /// Multiplicity of each entry of [`HierarchicalModel::grouped_loglik`].
    pub fn group_weights(&self) -> Vec<f64> {
        self.plus.counts.iter().chain(&self.minus.counts).copied().collect()
    }

    fn eval(&self, z: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::LengthMismatch(z.len(), self.dim()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unconstrained position"));
        }
        let theta: Vec<f64> = self.transforms.iter().zip(z).map(|(t, &u)| t.inverse(u)).collect();
        let prior = &self.spec.prior;
        let mut g = vec![0.0; z.len()];
        let mut lp = 0.0;
        match self.spec.kind {
            ModelKind::StudentT => {
                let sides = [
                    (&self.plus, prior.m_plus, prior.s_plus, 0),
                    (&self.minus, prior.m_minus, prior.s_minus, 3),
                ];
                for (side, m, s, o) in sides {
                    let (mu, sigma, nu) = (theta[o], theta[o + 1], theta[o + 2]);
                    let (ll, d) = side.student(mu, sigma, nu);
                    lp += ll + normal_logpdf(mu, m, s) - (prior.sigma_high - prior.sigma_low).ln() + prior.nu_rate.ln()
                        - prior.nu_rate * (nu - prior.nu_shift);
                    g[o] = d[0] - (mu - m) / (s * s);
                    g[o + 1] = d[1];
                    g[o + 2] = d[2] - prior.nu_rate;
                }
            }
            ModelKind::InverseGamma => {
                let sides = [
                    (&self.plus, prior.m_plus, prior.s_plus, 0),
                    (&self.minus, prior.m_minus, prior.s_minus, 2),
                ];
                for (side, m, s, o) in sides {
                    let (big_m, big_s) = (theta[o], theta[o + 1]);
                    let (ll, d) = side.inv_gamma(big_m, big_s);
                    lp += ll + normal_logpdf(big_m, m, s) - (prior.sigma_high - prior.sigma_low).ln();
                    g[o] = d[0] - (big_m - m) / (s * s);
                    g[o + 1] = d[1];
                }
            }
        }
        for (i, (t, &u)) in self.transforms.iter().zip(z).enumerate() {
            lp += t.log_jacobian(u);
            g[i] = g[i] * t.derivative(u) + t.log_jacobian_grad(u);
        }
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log posterior"));
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        Ok(lp)
    }
}

impl LogDensity for HierarchicalModel {
    fn dim(&self) -> usize {
        self.spec.kind.dim()
    }

    fn logp_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval(z, Some(grad))
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.kind.param_names().iter().map(|s| s.to_string()).collect()
    }

    fn constrain(&self, z: &[f64]) -> Vec<f64> {
        self.transforms.iter().zip(z).map(|(t, &u)| t.inverse(u)).collect()
    }

    /// Empirical moments of the data: locations at the side means, scales at
    /// the side stds pulled inside the prior bounds, degrees of freedom at 30.
    fn initial_point(&self) -> Vec<f64> {
        let p = &self.spec.prior;
        let width = p.sigma_high - p.sigma_low;
        let scale = |s: f64| s.clamp(p.sigma_low + 0.05 * width.min(1.0), p.sigma_high - 0.05 * width.min(1.0));
        let theta = match self.spec.kind {
            ModelKind::StudentT => Params::Student(StudentParams {
                mu_plus: p.m_plus,
                sigma_plus: scale(p.s_plus),
                nu_plus: 30.0_f64.max(p.nu_shift + 1.0),
                mu_minus: p.m_minus,
                sigma_minus: scale(p.s_minus),
                nu_minus: 30.0_f64.max(p.nu_shift + 1.0),
            }),
            ModelKind::InverseGamma => Params::InvGamma(InvGammaParams {
                M_plus: p.m_plus.max(1e-3),
                S_plus: scale(p.s_plus),
                M_minus: p.m_minus.max(1e-3),
                S_minus: scale(p.s_minus),
            }),
        };
        to_unconstrained(&theta, p)
    }

    fn pointwise_len(&self) -> usize {
        self.plus.values.len() + self.minus.values.len()
    }

    fn pointwise_loglik(&self, z: &[f64], out: &mut [f64]) {
        self.grouped_loglik(&self.params(z), out);
    }

    fn pointwise_weights(&self) -> Vec<f64> {
        self.group_weights()
    }
}

/// Unnormalized log posterior in unconstrained coordinates: likelihood,
/// prior and log Jacobian.
pub fn log_posterior(z: &[f64], data: &LogHittingSample, spec: &ModelSpec) -> Result<f64> {
    HierarchicalModel::new(data, *spec)?.eval(z, None)
}

pub fn grad_log_posterior(z: &[f64], data: &LogHittingSample, spec: &ModelSpec) -> Result<Vec<f64>> {
    let model = HierarchicalModel::new(data, *spec)?;
    let mut g = vec![0.0; z.len()];
    model.eval(z, Some(&mut g))?;
    Ok(g)
}

/// Per-observation log likelihood in input order, plus side then minus side.
pub fn pointwise_loglik(theta: &Params, data: &LogHittingSample, spec: &ModelSpec) -> Result<Vec<f64>> {
    let one = |x: f64, plus: bool| -> Result<f64> {
        match *theta {
            Params::Student(p) => {
                let (mu, sigma, nu) = if plus {
                    (p.mu_plus, p.sigma_plus, p.nu_plus)
                } else {
                    (p.mu_minus, p.sigma_minus, p.nu_minus)
                };
                student_logpdf(x, mu, sigma, nu)
            }
            Params::InvGamma(p) => {
                let (a, b) = if plus { p.alpha_beta_plus() } else { p.alpha_beta_minus() };
                invgamma_logpdf(x, a, b)
            }
        }
    };
    if theta.kind() != spec.kind {
        return Err(Error::DomainError("parameter kind does not match model".into()));
    }
    if log_prior(theta, &spec.prior) == f64::NEG_INFINITY {
        return Err(Error::DomainError("parameters outside the prior support".into()));
    }
    let plus = data.x_plus.iter().map(|&x| one(x, true));
    let minus = data.x_minus.iter().map(|&x| one(x, false));
    plus.chain(minus).collect()
}
