//! One-parameter exponential families for non-null p-value densities.
//!
//! Both families are written in mean parametrization, `h(p; mu) =
//! exp{eta(mu) g(p) - A(mu)}` with `E[g(p)] = mu`:
//!
//! | family   | `g(p)`            | `h(p; mu)`                         |
//! |----------|-------------------|------------------------------------|
//! | beta     | `-log p`          | `(1/mu) p^(1/mu - 1)`              |
//! | gaussian | `Phi^-1(1 - p)`   | `exp{mu Phi^-1(1 - p) - mu^2 / 2}` |

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::data::P_MIN;
use crate::error::{AdaptError, Result};

/// Distance kept from the boundary where `h` stops being strictly decreasing.
pub const MU_MARGIN: f64 = 1e-6;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `p ~ Beta(1/mu, 1)`, so `-log p ~ Exp(mean mu)`.
    #[serde(alias = "beta_mixture")]
    Beta,
    /// `Phi^-1(1 - p) ~ N(mu, 1)`.
    #[serde(alias = "gaussian_mixture")]
    Gaussian,
}

/// Result of solving `f(p) = target` for a two-groups mixture density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    /// Solution clamped to `[P_MIN, 0.5]`.
    pub p: f64,
    /// The mixture is flat (`pi1 = 0` or a null `mu`), so `p` is a cap rather
    /// than a root.
    pub degenerate: bool,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Beta => "beta",
            Family::Gaussian => "gaussian",
        }
    }

    /// Sufficient statistic.
    pub fn g(self, p: f64) -> f64 {
        match self {
            Family::Beta => -p.ln(),
            Family::Gaussian => -norm_quantile(p),
        }
    }

    /// `g(1 - p)` computed without forming `1 - p`.
    pub fn g_mirror(self, p: f64) -> f64 {
        match self {
            Family::Beta => -(-p).ln_1p(),
            Family::Gaussian => norm_quantile(p),
        }
    }

    /// Natural parameter.
    pub fn eta(self, mu: f64) -> f64 {
        match self {
            Family::Beta => 1.0 - 1.0 / mu,
            Family::Gaussian => mu,
        }
    }

    /// Log-partition in the mean parametrization.
    pub fn log_partition(self, mu: f64) -> f64 {
        match self {
            Family::Beta => mu.ln(),
            Family::Gaussian => 0.5 * mu * mu,
        }
    }

    /// Value of `mu` giving the uniform density.
    pub fn null_mu(self) -> f64 {
        match self {
            Family::Beta => 1.0,
            Family::Gaussian => 0.0,
        }
    }

    /// Interval of `mu` used for fitting; `h` is strictly decreasing on it.
    pub fn mu_domain(self) -> (f64, f64) {
        (self.null_mu() + MU_MARGIN, f64::INFINITY)
    }

    pub fn clamp_mu(self, mu: f64) -> f64 {
        let (lo, hi) = self.mu_domain();
        if mu.is_nan() {
            lo
        } else {
            mu.clamp(lo, hi.min(f64::MAX))
        }
    }

    fn check_mu(self, mu: f64) -> Result<()> {
        let ok = match self {
            Family::Beta => mu > 0.0 && mu.is_finite(),
            Family::Gaussian => mu.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(AdaptError::MuOutOfDomain {
                family: self.name(),
                mu,
            })
        }
    }

    /// `log h(p; mu)` written with `g` already evaluated. No domain checks.
    pub fn log_density_from_g(self, y: f64, mu: f64) -> f64 {
        self.eta(mu) * y - self.log_partition(mu)
    }

    /// `log h(p; mu)`. No domain checks.
    pub fn log_density_unchecked(self, p: f64, mu: f64) -> f64 {
        self.log_density_from_g(self.g(p), mu)
    }

    /// `h(p; mu)` for any `mu` in the parameter space (which is wider than
    /// the fitting domain; `mu = 1` for beta is the uniform density).
    pub fn density(self, p: f64, mu: f64) -> Result<f64> {
        self.check_mu(mu)?;
        if !(p > 0.0 && p < 1.0) {
            return Err(AdaptError::InvalidArgument(format!("p = {p} is outside (0, 1)")));
        }
        Ok(self.log_density_unchecked(p, mu).exp())
    }

    /// Two-groups mixture density `pi1 h(p; mu) + 1 - pi1`.
    pub fn mixture_density(self, p: f64, pi1: f64, mu: f64) -> f64 {
        pi1 * self.log_density_unchecked(p, mu).exp() + 1.0 - pi1
    }

    fn is_flat(self, pi1: f64, mu: f64) -> bool {
        pi1 == 0.0 || mu == self.null_mu()
    }

    /// Solves `pi1 h(p; mu) + 1 - pi1 = target` for `p`, clamped to
    /// `[P_MIN, 0.5]`.
    pub fn invert_mixture_density(self, target: f64, pi1: f64, mu: f64) -> Result<Inversion> {
        self.check_mu(mu)?;
        if !(0.0..=1.0).contains(&pi1) {
            return Err(AdaptError::InvalidArgument(format!("pi1 = {pi1} is outside [0, 1]")));
        }
        if self.is_flat(pi1, mu) {
            let p = if target <= 1.0 { 0.5 } else { P_MIN };
            return Ok(Inversion { p, degenerate: true });
        }
        if mu < self.null_mu() {
            return Err(AdaptError::NonMonotone {
                family: self.name(),
                mu,
            });
        }
        if target <= self.mixture_density(0.5, pi1, mu) {
            return Ok(Inversion { p: 0.5, degenerate: false });
        }
        if target >= self.mixture_density(P_MIN, pi1, mu) {
            return Ok(Inversion { p: P_MIN, degenerate: false });
        }
        let excess = ((target - (1.0 - pi1)) / pi1).ln();
        let p = match self {
            Family::Beta => ((excess + mu.ln()) * mu / (1.0 - mu)).exp(),
            Family::Gaussian => norm_cdf(-(excess + 0.5 * mu * mu) / mu),
        };
        Ok(Inversion {
            p: p.clamp(P_MIN, 0.5),
            degenerate: false,
        })
    }

    /// Bisection variant of [`Family::invert_mixture_density`] to absolute
    /// tolerance `1e-12` in `p`.
    pub fn invert_by_bisection(self, target: f64, pi1: f64, mu: f64) -> Result<Inversion> {
        let closed = self.invert_mixture_density(target, pi1, mu)?;
        if closed.degenerate || closed.p == 0.5 || closed.p == P_MIN {
            return Ok(closed);
        }
        let (mut lo, mut hi) = (P_MIN, 0.5);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.mixture_density(mid, pi1, mu) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Inversion {
            p: 0.5 * (lo + hi),
            degenerate: false,
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" | "beta_mixture" => Ok(Family::Beta),
            "gaussian" | "gaussian_mixture" | "normal" => Ok(Family::Gaussian),
            other => Err(AdaptError::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson on `[a, b]`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// `int_0^1 phi(p) dp` through the substitution `p = u^10`, which tames
    /// the integrable singularities at 0.
    fn integrate_unit(phi: impl Fn(f64) -> f64) -> f64 {
        let f = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let p = u.powi(10);
            if p >= 1.0 || p <= 0.0 {
                return 0.0;
            }
            phi(p) * 10.0 * u.powi(9)
        };
        simpson(&f, 0.0, 1.0, 1e-10)
    }

    #[test]
    fn density_examples() {
        for p in [0.01, 0.3, 0.9] {
            assert!((Family::Beta.density(p, 1.0).unwrap() - 1.0).abs() < 1e-15);
            assert!((Family::Gaussian.density(p, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((Family::Beta.density(0.25, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(Family::Beta.density(0.5, -1.0).is_err());
        assert!(Family::Gaussian.density(0.5, f64::NAN).is_err());
    }

    #[test]
    fn inversion_examples() {
        let inv = Family::Beta.invert_mixture_density(1.75, 0.5, 2.0).unwrap();
        assert!((inv.p - 0.04).abs() < 1e-12);
        let direct = 0.5 * Family::Beta.density(0.04, 2.0).unwrap() + 0.5;
        assert!((direct - 1.75).abs() < 1e-12);

        // c = 1: target is f(1), the whole unit interval qualifies.
        let f1 = Family::Beta.mixture_density(1.0, 0.5, 2.0);
        assert_eq!(Family::Beta.invert_mixture_density(f1, 0.5, 2.0).unwrap().p, 0.5);

        let flat = Family::Gaussian.invert_mixture_density(1.0, 0.0, 2.0).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.p, 0.5);
        let flat = Family::Beta.invert_mixture_density(1.2, 0.0, 2.0).unwrap();
        assert_eq!((flat.p, flat.degenerate), (P_MIN, true));

        assert!(matches!(
            Family::Beta.invert_mixture_density(1.5, 0.5, 0.5),
            Err(AdaptError::NonMonotone { .. })
        ));
    }

    #[test]
    fn mirror_statistic() {
        // Values whose complement is exact in binary.
        for p in [2f64.powi(-40), 2f64.powi(-7), 0.3125, 0.5] {
            for fam in [Family::Beta, Family::Gaussian] {
                assert!((fam.g_mirror(p) - fam.g(1.0 - p)).abs() < 1e-9);
            }
        }
        assert_eq!(Family::Gaussian.g_mirror(0.2), -Family::Gaussian.g(0.2));
    }

    #[test]
    fn parse_names() {
        assert_eq!("beta".parse::<Family>().unwrap(), Family::Beta);
        assert_eq!("Gaussian_Mixture".parse::<Family>().unwrap(), Family::Gaussian);
        assert!("poisson".parse::<Family>().is_err());
        let json = serde_json::to_string(&Family::Gaussian).unwrap();
        assert_eq!(json, "\"gaussian\"");
        assert_eq!(serde_json::from_str::<Family>("\"beta_mixture\"").unwrap(), Family::Beta);
    }

    #[test]
    fn normal_helpers_agree() {
        for z in [-6.0, -3.0, -1.0, 0.0, 0.5, 2.0] {
            assert!((norm_quantile(norm_cdf(z)) - z).abs() < 1e-9);
        }
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((norm_cdf(-8.0) / 6.220960574271784e-16 - 1.0).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn beta_normalizes_with_mean_mu(mu in 1.0f64..6.0) {
            let fam = Family::Beta;
            let total = integrate_unit(|p| fam.density(p, mu).unwrap());
            prop_assert!((total - 1.0).abs() < 1e-6, "total {total}");
            let mean = integrate_unit(|p| fam.g(p) * fam.density(p, mu).unwrap());
            prop_assert!((mean - mu).abs() < 1e-6, "mean {mean}");
        }

        #[test]
        fn gaussian_normalizes_with_mean_mu(mu in -2.0f64..4.0) {
            let fam = Family::Gaussian;
            let total = integrate_unit(|p| fam.density(p, mu).unwrap());
            prop_assert!((total - 1.0).abs() < 1e-6, "total {total}");
            let mean = integrate_unit(|p| fam.g(p) * fam.density(p, mu).unwrap());
            prop_assert!((mean - mu).abs() < 1e-6, "mean {mean}");
        }

        #[test]
        fn inversion_is_right_inverse(
            gaussian in any::<bool>(),
            pi1 in 0.01f64..0.99,
            mu_off in 0.05f64..5.0,
            p in 1e-8f64..0.5,
        ) {
            let fam = if gaussian { Family::Gaussian } else { Family::Beta };
            let mu = fam.null_mu() + mu_off;
            let target = fam.mixture_density(p, pi1, mu);
            let inv = fam.invert_mixture_density(target, pi1, mu).unwrap();
            let back = fam.mixture_density(inv.p, pi1, mu);
            prop_assert!((back - target).abs() <= 1e-9 * target.max(1.0), "{back} vs {target}");
            let bis = fam.invert_by_bisection(target, pi1, mu).unwrap();
            let bis_back = fam.mixture_density(bis.p, pi1, mu);
            prop_assert!((bis_back - target).abs() <= 1e-9 * target.max(1.0));
        }

        #[test]
        fn density_decreasing_inside_domain(gaussian in any::<bool>(), mu_off in 1e-3f64..5.0, a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let fam = if gaussian { Family::Gaussian } else { Family::Beta };
            let mu = fam.null_mu() + mu_off;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            prop_assert!(fam.density(lo, mu).unwrap() > fam.density(hi, mu).unwrap());
        }
    }
}
