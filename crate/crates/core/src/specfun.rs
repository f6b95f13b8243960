//! Special functions used by the count-model closed forms.
//!
//! Everything here is a pure function of its arguments. Iterative routines
//! take an explicit [`ConvergenceSpec`]; the plain entry points use
//! [`ConvergenceSpec::current`], which honours the `OBSOLIB_MAX_ITERS`
//! environment variable.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Floor used by the modified Lentz scheme in place of exact zeros.
const LENTZ_TINY: f64 = 1e-300;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Iteration budget and stopping tolerances for series and continued fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSpec {
    pub max_iterations: usize,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            max_iterations: 10_000,
            abs_tolerance: 1e-14,
            rel_tolerance: 1e-12,
        }
    }
}

impl ConvergenceSpec {
    pub const MAX_ITERS_ENV: &'static str = "OBSOLIB_MAX_ITERS";

    pub fn new(max_iterations: usize, abs_tolerance: f64, rel_tolerance: f64) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(abs_tolerance > 0.0 && rel_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "convergence tolerances must be positive".into(),
            ));
        }
        Ok(ConvergenceSpec {
            max_iterations,
            abs_tolerance,
            rel_tolerance,
        })
    }

    /// Defaults with `max_iterations` taken from `OBSOLIB_MAX_ITERS` when it
    /// parses as a positive integer.
    pub fn from_env() -> Self {
        let mut spec = ConvergenceSpec::default();
        if let Some(n) = std::env::var(Self::MAX_ITERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            spec.max_iterations = n;
        }
        spec
    }

    /// Process-wide spec, read from the environment once.
    pub fn current() -> Self {
        static CURRENT: OnceLock<ConvergenceSpec> = OnceLock::new();
        *CURRENT.get_or_init(ConvergenceSpec::from_env)
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain("ln_gamma", format!("x = {x} must be finite and > 0")));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        // Γ(x) = Γ(x+1)/x keeps the Lanczos sum in its accurate range.
        return lanczos_ln_gamma(x + 1.0) - x.ln();
    }
    lanczos_ln_gamma(x)
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    let z = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_2PI + (z + 0.5) * t.ln() - t + series.ln()
}

/// Digamma ψ(x) for `x > 0`: upward recurrence to `x >= 10`, then the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain("digamma", format!("x = {x} must be finite and > 0")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    if x == 1.0 {
        return -EULER_MASCHERONI;
    }
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli terms B_{2k} / (2k x^{2k}), k = 1..7
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 / x - tail
}

/// ln B(a, b).
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::domain("ln_beta", format!("a = {a}, b = {b} must be > 0")));
    }
    Ok(ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b))
}

/// Regularized incomplete beta function I_z(a, b).
pub fn reg_inc_beta(z: f64, a: f64, b: f64) -> Result<f64> {
    reg_inc_beta_with(z, a, b, &ConvergenceSpec::current())
}

pub fn reg_inc_beta_with(z: f64, a: f64, b: f64, spec: &ConvergenceSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::domain("reg_inc_beta", format!("z = {z} outside [0, 1]")));
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(
            "reg_inc_beta",
            format!("a = {a}, b = {b} must be finite and > 0"),
        ));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == 1.0 {
        return Ok(1.0);
    }
    if z > (a + 1.0) / (a + b + 2.0) {
        let flipped = beta_front(1.0 - z, b, a) * beta_cont_frac(1.0 - z, b, a, spec)? / b;
        Ok((1.0 - flipped).clamp(0.0, 1.0))
    } else {
        let direct = beta_front(z, a, b) * beta_cont_frac(z, a, b, spec)? / a;
        Ok(direct.clamp(0.0, 1.0))
    }
}

/// z^a (1-z)^b / B(a, b), evaluated in log space.
fn beta_front(z: f64, a: f64, b: f64) -> f64 {
    let ln_front = a * z.ln() + b * (-z).ln_1p() - ln_gamma_unchecked(a) - ln_gamma_unchecked(b)
        + ln_gamma_unchecked(a + b);
    ln_front.exp()
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cont_frac(z: f64, a: f64, b: f64, spec: &ConvergenceSpec) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let floor = |v: f64| if v.abs() < LENTZ_TINY { LENTZ_TINY } else { v };

    let mut c = 1.0;
    let mut d = 1.0 / floor(1.0 - qab * z / qap);
    let mut h = d;
    for m in 1..=spec.max_iterations {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * z / ((qam + m2) * (a + m2));
        d = 1.0 / floor(1.0 + aa * d);
        c = floor(1.0 + aa / c);
        h *= d * c;

        let aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
        d = 1.0 / floor(1.0 + aa * d);
        c = floor(1.0 + aa / c);
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() <= spec.abs_tolerance {
            return Ok(h);
        }
    }
    Err(Error::Convergence {
        what: "incomplete beta continued fraction",
        iterations: spec.max_iterations,
        detail: format!("z = {z}, a = {a}, b = {b}"),
    })
}

/// Gauss hypergeometric function ₂F₁(a, b; c; z) for |z| < 1 by its power series.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    gauss_2f1_with(a, b, c, z, &ConvergenceSpec::current())
}

pub fn gauss_2f1_with(a: f64, b: f64, c: f64, z: f64, spec: &ConvergenceSpec) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(Error::domain("gauss_2f1", "non-finite argument"));
    }
    if z.abs() >= 1.0 {
        return Err(Error::domain("gauss_2f1", format!("|z| = {} >= 1", z.abs())));
    }
    if c <= 0.0 && c == c.round() {
        return Err(Error::Pole {
            function: "gauss_2f1",
            c,
        });
    }

    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..spec.max_iterations {
        let n = n as f64;
        let ratio = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            // a or b was a non-positive integer: the series terminated.
            return Ok(sum);
        }
        let next = (a + n + 1.0) * (b + n + 1.0) / ((c + n + 1.0) * (n + 2.0)) * z;
        let bound = next.abs().max(z.abs());
        if bound < 1.0 && term.abs() / (1.0 - bound) <= spec.abs_tolerance * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Convergence {
        what: "hypergeometric 2F1 series",
        iterations: spec.max_iterations,
        detail: format!("a = {a}, b = {b}, c = {c}, z = {z}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_eq!(ln_gamma(1.0).unwrap(), 0.0);
        assert_relative_eq!(ln_gamma(5.0).unwrap(), 24f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            ln_gamma(0.5).unwrap(),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn ln_gamma_against_high_precision() {
        // mpmath.loggamma at 40 digits
        let cases = [
            (1e-6, 13.815_509_980_749_431_669),
            (0.001, 6.907_178_885_383_853_682_5),
            (0.1, 2.252_712_651_734_205_959_9),
            (1.5, -0.120_782_237_635_245_222_35),
            (3.7, 1.428_072_326_665_387_921_9),
            (10.25, 13.368_023_671_476_046_295),
            (123.456, 469.605_547_129_929_468_73),
            (1e4, 82_099.717_496_442_377_273),
            (1e6, 12_815_504.569_147_611_66),
        ];
        for (x, want) in cases {
            let got = ln_gamma(x).unwrap();
            assert!(
                ((got - want) / want).abs() <= 1e-12,
                "ln_gamma({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn ln_gamma_rejects_bad_input() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
        assert!(ln_gamma(f64::INFINITY).is_err());
    }

    #[test]
    fn digamma_values() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-15);
        assert!((digamma(2.0).unwrap() - 0.422_784_335_098_467_14).abs() < 1e-14);
        let cases = [
            (0.001, -1_000.575_571_931_810_300_5),
            (0.01, -100.560_885_457_868_674_5),
            (0.3, -3.502_524_222_200_132_989),
            (6.5, 1.792_911_330_399_932_941_9),
            (25.0, 3.198_742_512_851_974_008_5),
            (1000.0, 6.907_255_195_648_812_052_1),
        ];
        for (x, want) in cases {
            let got = digamma(x).unwrap();
            assert!((got - want).abs() <= 1e-10, "digamma({x}) = {got}, want {want}");
        }
        assert!(digamma(0.0).is_err());
        assert!(digamma(-2.0).is_err());
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.01, 0.37, 1.0, 4.2, 9.99, 57.0] {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((lhs - 1.0 / x).abs() < 1e-10 * (1.0 / x).max(1.0));
        }
    }

    #[test]
    fn reg_inc_beta_trivial_cases() {
        assert_eq!(reg_inc_beta(1.0, 2.3, 0.7).unwrap(), 1.0);
        assert_eq!(reg_inc_beta(0.0, 2.3, 0.7).unwrap(), 0.0);
        assert!((reg_inc_beta(0.5, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((reg_inc_beta(0.2, 1.0, 3.0).unwrap() - 0.488).abs() < 1e-14);
    }

    #[test]
    fn reg_inc_beta_against_high_precision() {
        // mpmath.betainc(..., regularized=True)
        let cases = [
            (0.3, 2.5, 4.0, 0.352_197_585_906_767_236_46),
            (0.05, 1.7, 120.0, 0.990_903_437_033_670_421_19),
            (0.847, 45.0, 1.71, 0.002_696_108_080_602_139_216_9),
            (0.6, 200.0, 150.0, 0.860_190_660_480_152_754_35),
        ];
        for (z, a, b, want) in cases {
            let got = reg_inc_beta(z, a, b).unwrap();
            assert!((got - want).abs() <= 1e-12, "I_{z}({a},{b}) = {got}, want {want}");
        }
    }

    #[test]
    fn reg_inc_beta_domain_errors() {
        assert!(matches!(reg_inc_beta(-0.1, 1.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(reg_inc_beta(1.1, 1.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(reg_inc_beta(0.5, 0.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(reg_inc_beta(0.5, 1.0, -2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn reg_inc_beta_reports_non_convergence() {
        let spec = ConvergenceSpec::new(2, 1e-14, 1e-12).unwrap();
        assert!(matches!(
            reg_inc_beta_with(0.4, 50.0, 60.0, &spec),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn gauss_2f1_identities() {
        assert_eq!(gauss_2f1(0.3, 1.7, 2.2, 0.0).unwrap(), 1.0);
        let z: f64 = 0.5;
        assert!((gauss_2f1(1.0, 1.0, 2.0, z).unwrap() - (-(1.0 - z).ln() / z)).abs() < 1e-12);
        assert!((gauss_2f1(1.0, 2.0, 2.0, 0.25).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_2f1_against_high_precision() {
        let cases = [
            (1.0, 38.71, 37.0, 0.152_542_372_881_355_93, 1.189_849_294_239_173_161_3),
            (1.0, 38.71, 38.0, 0.152_542_372_881_355_93, 1.183_963_245_124_779_361_6),
            (0.5, 1.5, 2.5, 0.7, 1.364_863_180_559_169_889_9),
            (-3.0, 2.0, 1.5, 0.4, 0.050_971_428_571_428_571_429),
            (1.0, 98.11, 98.0, 0.952_380_952_380_952_3, 21.407_858_826_904_849_746),
        ];
        for (a, b, c, z, want) in cases {
            let got = gauss_2f1(a, b, c, z).unwrap();
            assert!(
                ((got - want) / want).abs() <= 1e-10,
                "2F1({a},{b};{c};{z}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn gauss_2f1_errors() {
        assert!(matches!(gauss_2f1(1.0, 1.0, 2.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(gauss_2f1(1.0, 1.0, 2.0, -1.2), Err(Error::Domain { .. })));
        assert!(matches!(gauss_2f1(1.0, 1.0, -2.0, 0.3), Err(Error::Pole { .. })));
        assert!(matches!(gauss_2f1(1.0, 1.0, 0.0, 0.3), Err(Error::Pole { .. })));
        let spec = ConvergenceSpec::new(3, 1e-14, 1e-12).unwrap();
        assert!(matches!(
            gauss_2f1_with(1.0, 5.0, 2.0, 0.9, &spec),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn convergence_spec_validation() {
        assert!(ConvergenceSpec::new(0, 1e-14, 1e-12).is_err());
        assert!(ConvergenceSpec::new(10, 0.0, 1e-12).is_err());
        assert!(ConvergenceSpec::new(10, 1e-14, -1.0).is_err());
        let d = ConvergenceSpec::default();
        assert_eq!(d.max_iterations, 10_000);
        assert_eq!(d.abs_tolerance, 1e-14);
        assert_eq!(d.rel_tolerance, 1e-12);
    }
}
