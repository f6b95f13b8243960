//! Count models for cited-reference age.
//!
//! A Poisson rate θ that itself varies across journals according to a gamma
//! law with shape α and rate β yields a negative binomial marginal. The
//! negative binomial here is parameterized directly by the mixing pair
//! (α, β), so that
//!
//! ```text
//! Pr(X = x) = Γ(α+x) / (Γ(α) x!) · (β/(1+β))^α · (1/(1+β))^x
//! E[X] = α/β,   Var[X] = α(1+β)/β²
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::specfun::{self, ln_gamma_unchecked};

/// Common interface of the fitted count models.
pub trait CountModel {
    /// Number of free parameters (for AIC).
    const N_PARAMS: u32;

    fn ln_pmf(&self, x: u64) -> f64;

    fn pmf(&self, x: u64) -> f64 {
        self.ln_pmf(x).exp()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

/// Poisson model with rate `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonModel {
    theta: f64,
}

impl PoissonModel {
    pub fn new(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(PoissonModel { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl CountModel for PoissonModel {
    const N_PARAMS: u32 = 1;

    fn ln_pmf(&self, x: u64) -> f64 {
        let x = x as f64;
        x * self.theta.ln() - self.theta - ln_gamma_unchecked(x + 1.0)
    }
}

pub fn poisson_pmf(model: &PoissonModel, x: u64) -> f64 {
    model.pmf(x)
}

/// Gamma mixing density over the Poisson rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMixing {
    alpha: f64,
    beta: f64,
}

impl GammaMixing {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        Ok(GammaMixing { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ln_pdf(&self, theta: f64) -> Result<f64> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::domain("gamma_pdf", format!("theta = {theta} must be > 0")));
        }
        Ok(self.alpha * self.beta.ln() - ln_gamma_unchecked(self.alpha)
            + (self.alpha - 1.0) * theta.ln()
            - self.beta * theta)
    }

    pub fn pdf(&self, theta: f64) -> Result<f64> {
        self.ln_pdf(theta).map(f64::exp)
    }
}

pub fn gamma_pdf(mix: &GammaMixing, theta: f64) -> Result<f64> {
    mix.pdf(theta)
}

/// Negative binomial obtained by mixing a Poisson over a gamma(α, β) rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinModel {
    alpha: f64,
    beta: f64,
}

impl NegBinModel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        Ok(NegBinModel { alpha, beta })
    }

    /// Model with shape `alpha` whose mean is `mean` (β = α / mean).
    pub fn with_mean(alpha: f64, mean: f64) -> Result<Self> {
        check_positive("mean", mean)?;
        NegBinModel::new(alpha, alpha / mean)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mixing(&self) -> GammaMixing {
        GammaMixing {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// β/(1+β): the weight raised to the power α in the pmf.
    pub fn q0(&self) -> f64 {
        self.beta / (1.0 + self.beta)
    }

    /// 1/(1+β): the geometric ratio of the pmf in x.
    pub fn ratio(&self) -> f64 {
        1.0 / (1.0 + self.beta)
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha * (1.0 + self.beta) / (self.beta * self.beta)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Pr(X <= x) through the incomplete beta: I_{β/(1+β)}(α, x+1).
    pub fn cdf(&self, x: u64) -> Result<f64> {
        specfun::reg_inc_beta(self.q0(), self.alpha, x as f64 + 1.0)
    }

    /// Pr(X <= x) by summing the pmf.
    pub fn cdf_by_sum(&self, x: u64) -> f64 {
        let mut acc = 0.0;
        let mut comp = 0.0;
        for k in 0..=x {
            neumaier_add(&mut acc, &mut comp, self.pmf(k));
        }
        (acc + comp).min(1.0)
    }
}

impl CountModel for NegBinModel {
    const N_PARAMS: u32 = 2;

    fn ln_pmf(&self, x: u64) -> f64 {
        let xf = x as f64;
        let ln1p_beta = self.beta.ln_1p();
        ln_gamma_unchecked(self.alpha + xf) - ln_gamma_unchecked(self.alpha)
            - ln_gamma_unchecked(xf + 1.0)
            + self.alpha * (self.beta.ln() - ln1p_beta)
            - xf * ln1p_beta
    }
}

impl From<GammaMixing> for NegBinModel {
    fn from(m: GammaMixing) -> Self {
        NegBinModel {
            alpha: m.alpha,
            beta: m.beta,
        }
    }
}

pub fn negbin_pmf(model: &NegBinModel, x: u64) -> f64 {
    model.pmf(x)
}

pub fn negbin_cdf(model: &NegBinModel, x: u64) -> Result<f64> {
    model.cdf(x)
}

/// Mean, variance and index of dispersion (variance / mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub dispersion_index: f64,
}

pub fn negbin_mean_var(model: &NegBinModel) -> Moments {
    Moments {
        mean: model.mean(),
        variance: model.variance(),
        dispersion_index: (1.0 + model.beta) / model.beta,
    }
}

/// Pr(X = x) as the integral of Poisson(x | θ) · gamma(θ; α, β) over θ.
///
/// Integrates in u = ln θ, where the integrand is a smooth bell for every
/// (α, x). The dropped mass on both sides is below 1e-12.
pub fn mixture_pmf_oracle(mix: &GammaMixing, x: u64) -> Result<f64> {
    let (alpha, beta) = (mix.alpha, mix.beta);
    let xf = x as f64;
    // θ | x is gamma(α + x, 1 + β).
    let shape = alpha + xf;
    let rate = 1.0 + beta;

    // Upper cut: far beyond the posterior bulk.
    let theta_hi = (shape + 60.0 * shape.sqrt() + 60.0) / rate;
    // Lower cut: below θ_lo the integrand is at most C θ^{shape-1}, whose
    // integral C θ_lo^shape / shape is held under 1e-14.
    let ln_c = alpha * beta.ln() - ln_gamma_unchecked(alpha) - ln_gamma_unchecked(xf + 1.0);
    let ln_theta_lo = ((1e-14 * shape).ln() - ln_c) / shape;
    let mode = (shape / rate).max(1e-300);
    let u_lo = ln_theta_lo.min(mode.ln() - 1.0);
    let u_hi = theta_hi.ln();

    let poisson_at = |theta: f64| xf * theta.ln() - theta - ln_gamma_unchecked(xf + 1.0);
    let integrand = |u: f64| {
        let theta = u.exp();
        match mix.ln_pdf(theta) {
            Ok(lg) => (poisson_at(theta) + lg + u).exp(),
            Err(_) => 0.0,
        }
    };
    quadrature::integrate(integrand, u_lo, u_hi, 1e-13, 2_000)
}

#[inline]
pub(crate) fn neumaier_add(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(a: f64, b: f64) -> NegBinModel {
        NegBinModel::new(a, b).unwrap()
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(PoissonModel::new(0.0).is_err());
        assert!(PoissonModel::new(-1.0).is_err());
        assert!(GammaMixing::new(0.0, 1.0).is_err());
        assert!(NegBinModel::new(1.0, 0.0).is_err());
        assert!(NegBinModel::new(f64::NAN, 1.0).is_err());
        assert!(NegBinModel::with_mean(1.0, 0.0).is_err());
    }

    #[test]
    fn poisson_pmf_values() {
        let p1 = PoissonModel::new(1.0).unwrap();
        assert!((poisson_pmf(&p1, 0) - (-1f64).exp()).abs() < 1e-15);
        let p2 = PoissonModel::new(2.0).unwrap();
        assert!((poisson_pmf(&p2, 2) - 2.0 * (-2f64).exp()).abs() < 1e-15);
        let p = PoissonModel::new(9.63).unwrap();
        let total: f64 = (0..=200).map(|x| p.pmf(x)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_pdf_values() {
        let g = GammaMixing::new(1.0, 2.0).unwrap();
        assert!((gamma_pdf(&g, 0.5).unwrap() - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert!(gamma_pdf(&g, 0.0).is_err());
        assert!(gamma_pdf(&g, -3.0).is_err());

        let g = GammaMixing::new(3.0, 2.0).unwrap();
        let at_mode = g.pdf(1.0).unwrap();
        for t in [0.9, 0.99, 1.01, 1.1, 2.0] {
            assert!(g.pdf(t).unwrap() < at_mode);
        }
    }

    #[test]
    fn gamma_pdf_integrates_to_one() {
        let g = GammaMixing::new(1.71, 0.18).unwrap();
        // u = ln θ substitution; the density is negligible outside [e^-40, e^7].
        let total = quadrature::integrate(
            |u: f64| g.pdf(u.exp()).map(|d| d * u.exp()).unwrap_or(0.0),
            -40.0,
            7.0,
            1e-12,
            1_000,
        )
        .unwrap();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn negbin_geometric_case() {
        let m = nb(1.0, 1.0);
        for x in 0..20 {
            assert!((negbin_pmf(&m, x) - 0.5f64.powi(x as i32 + 1)).abs() < 1e-15);
        }
        assert!((negbin_cdf(&m, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negbin_mean_matches_parameterization() {
        let m = nb(1.71, 0.18);
        let mean: f64 = (0..3000).map(|x| x as f64 * m.pmf(x)).sum();
        assert!((mean - 9.5).abs() < 1e-9);
        let mv = negbin_mean_var(&m);
        assert!((mv.mean - 9.5).abs() < 1e-12);
        // Table-level mean 9.63 is only expected to be close, not equal.
        assert!((mv.mean - 9.63).abs() / 9.63 < 0.02);
    }

    #[test]
    fn negbin_moments() {
        let mv = negbin_mean_var(&nb(1.0, 1.0));
        assert_eq!((mv.mean, mv.variance, mv.dispersion_index), (1.0, 2.0, 2.0));
        let m = nb(1.5, 0.12);
        let var: f64 = (0..4000)
            .map(|x| (x as f64 - m.mean()).powi(2) * m.pmf(x))
            .sum();
        assert!((var - m.variance()).abs() / m.variance() < 1e-10);
    }

    #[test]
    fn cdf_routes_agree() {
        for &(a, b) in &[(1.71, 0.18), (1.11, 0.05), (0.6, 0.4), (3.0, 0.03)] {
            let m = nb(a, b);
            for x in [0, 1, 5, 19, 50, 120, 300] {
                let beta_route = m.cdf(x).unwrap();
                let sum_route = m.cdf_by_sum(x);
                assert!(
                    (beta_route - sum_route).abs() <= 1e-10,
                    "({a},{b}) x={x}: {beta_route} vs {sum_route}"
                );
            }
        }
    }

    #[test]
    fn cdf_limits_and_table_anchor() {
        let m = nb(1.71, 0.18);
        assert!((negbin_cdf(&m, 500).unwrap() - 1.0).abs() < 1e-12);
        // Rounded published parameters: survival at 20 is 0.1112 in the table.
        assert!((negbin_cdf(&m, 19).unwrap() - 0.8888).abs() < 5e-3);
    }

    #[test]
    fn mixture_oracle_matches_closed_form() {
        let g = GammaMixing::new(1.0, 1.0).unwrap();
        assert!((mixture_pmf_oracle(&g, 0).unwrap() - 0.5).abs() < 1e-9);

        let g = GammaMixing::new(1.71, 0.18).unwrap();
        for x in [7, 20] {
            let oracle = mixture_pmf_oracle(&g, x).unwrap();
            let closed = NegBinModel::from(g).pmf(x);
            assert!((oracle - closed).abs() < 1e-8, "x={x}: {oracle} vs {closed}");
        }

        let g = GammaMixing::new(1.11, 0.05).unwrap();
        let want = (0.05f64 / 1.05).powf(1.11);
        assert!((mixture_pmf_oracle(&g, 0).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn mixture_oracle_small_shape() {
        // θ^{α-1} singularity at the origin for α < 1, x = 0.
        let g = GammaMixing::new(0.3, 0.2).unwrap();
        let oracle = mixture_pmf_oracle(&g, 0).unwrap();
        let want = (0.2f64 / 1.2).powf(0.3);
        assert!((oracle - want).abs() < 1e-10);
    }

    #[test]
    fn log_space_far_tail() {
        let m = nb(1.11, 0.05);
        let p = m.pmf(10_000);
        assert!(p.is_finite() && p >= 0.0);
        assert!(m.ln_pmf(10_000).is_finite());
        let p = PoissonModel::new(3.0).unwrap().pmf(10_000);
        assert!(p.is_finite() && p >= 0.0);
    }
}
