//! Bivariate dependence structure of stationary isotropic extreme-value
//! models: max-stable pair distributions (Smith, extremal Gaussian,
//! truncated extremal Gaussian), their inverted counterparts, and
//! max-mixtures of the two.
//!
//! Everything observable about a pair at distance h flows from the
//! exponent measure V_h: the joint CDF is exp(-V_h(x1, x2)) for
//! max-stable fields, and the other families are monotone reworkings of
//! that. The covariance kernel used by risk integration is kept in a
//! cancellation-free form throughout: each term is a product of
//! exp(-big) and -expm1(-nonnegative) factors, so it stays accurate near
//! both independence and complete dependence.

use crate::correlation::Correlation;
use crate::error::{Error, Result};
use crate::geometry::disk_overlap_fraction;
use crate::special::std_normal_cdf;
use serde::{Deserialize, Serialize};

/// Max-stable pair model with unit Frechet margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaxStable {
    /// Gaussian storm profiles with isotropic shape sigma^2 I.
    Smith { variance: f64 },
    /// Gaussian field rescaled by Poisson intensities.
    ExtremalGaussian { correlation: Correlation },
    /// As ExtremalGaussian, with storms clipped to disks of the given
    /// radius; pairs farther apart than a diameter are independent.
    Teg { correlation: Correlation, radius: f64 },
}

impl MaxStable {
    pub fn smith(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smith variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self::Smith { variance })
    }

    pub fn extremal_gaussian(correlation: Correlation) -> Self {
        Self::ExtremalGaussian { correlation }
    }

    pub fn teg(correlation: Correlation, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "truncation radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self::Teg {
            correlation,
            radius,
        })
    }

    /// Re-check invariants on a value that may have bypassed the
    /// constructors (e.g. deserialized from a config file).
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Smith { variance } => {
                Self::smith(*variance)?;
            }
            Self::ExtremalGaussian { correlation } => correlation.validate()?,
            Self::Teg {
                correlation,
                radius,
            } => {
                correlation.validate()?;
                Self::teg(correlation.clone(), *radius)?;
            }
        }
        Ok(())
    }

    /// Pair exponent measure V_h(x1, x2): the joint CDF at distance h is
    /// exp(-V_h). Homogeneous of order -1 and pinched between the
    /// complete-dependence value max(1/x1, 1/x2) and the independence
    /// value 1/x1 + 1/x2.
    pub fn exponent_measure(&self, h: f64, x1: f64, x2: f64) -> Result<f64> {
        check_distance(h)?;
        check_coordinate(x1)?;
        check_coordinate(x2)?;
        Ok(self.v(h, x1, x2))
    }

    pub(crate) fn v(&self, h: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Self::Smith { variance } => {
                let tau = h / variance.sqrt();
                if tau == 0.0 {
                    return 1.0 / x1.min(x2);
                }
                let l = (x2 / x1).ln();
                std_normal_cdf(0.5 * tau + l / tau) / x1
                    + std_normal_cdf(0.5 * tau - l / tau) / x2
            }
            Self::ExtremalGaussian { correlation } => {
                let s = 1.0 / x1 + 1.0 / x2;
                let k = coupled_root(correlation.value(h), x1, x2);
                0.5 * s * (1.0 + k)
            }
            Self::Teg {
                correlation,
                radius,
            } => {
                let s = 1.0 / x1 + 1.0 / x2;
                let alpha = disk_overlap_fraction(h, *radius);
                if alpha == 0.0 {
                    return s;
                }
                let k = coupled_root(correlation.value(h), x1, x2);
                s * (1.0 - 0.5 * alpha * (1.0 - k))
            }
        }
    }

    /// Theta(h) = V_h(1,1), between 1 (complete dependence) and 2
    /// (independence).
    pub fn extremal_coefficient(&self, h: f64) -> Result<f64> {
        check_distance(h)?;
        Ok(self.v(h, 1.0, 1.0))
    }

    /// Distance beyond which pairs are exactly independent, if one
    /// exists (the truncated model's disk diameter).
    pub fn dependence_range(&self) -> Option<f64> {
        match self {
            Self::Teg { radius, .. } => Some(2.0 * radius),
            _ => None,
        }
    }
}

// sqrt(1 - 2 (rho+1) x1 x2 / (x1+x2)^2), written with the scale-free
// ratio w = x2/x1 so huge coordinates cannot overflow; roundoff can push
// the radicand a hair negative at w=1, rho=1, hence the clamp.
fn coupled_root(rho: f64, x1: f64, x2: f64) -> f64 {
    let w = x2 / x1;
    let q = if w.is_finite() {
        w / ((1.0 + w) * (1.0 + w))
    } else {
        0.0
    };
    (1.0 - 2.0 * (rho + 1.0) * q).max(0.0).sqrt()
}

fn check_distance(h: f64) -> Result<()> {
    if h < 0.0 || h.is_nan() {
        return Err(Error::Domain(format!("distance must be >= 0, got {h}")));
    }
    Ok(())
}

fn check_coordinate(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "coordinate must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

fn check_level(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!(
            "probability level must lie strictly in (0,1), got {u}"
        )));
    }
    Ok(())
}

/// -log(1 - e^{-1/x}), the reciprocal of the margin-preserving
/// inversion; stable at both ends (log1p/expm1 throughout). Returns 0
/// exactly when 1 - e^{-1/x} rounds to 1, i.e. x below about 1/37.
pub(crate) fn inverse_rate(x: f64) -> f64 {
    -(-(-1.0 / x).exp_m1()).ln()
}

/// The margin-preserving inversion g(x) = -1/log(1 - e^{-1/x}), a
/// strictly decreasing involution of (0, inf) that maps unit Frechet to
/// unit Frechet while swapping the roles of the upper and lower tails.
pub fn inversion_transform(x: f64) -> Result<f64> {
    check_coordinate(x)?;
    let s = inverse_rate(x);
    if s == 0.0 {
        // g(x) ~ e^{1/x} has overflowed the double range
        return Err(Error::Overflow(format!(
            "inversion transform exceeds the floating-point range at x = {x}"
        )));
    }
    Ok(1.0 / s)
}

/// Dependence structure of an isotropic pair: max-stable, inverted
/// max-stable, or a max-mixture Z = max(a X, (1-a) Y) coupling a
/// max-stable X with an inverted-max-stable Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dependence {
    MaxStable { model: MaxStable },
    Inverted { model: MaxStable },
    MaxMixture {
        a: f64,
        x_part: MaxStable,
        /// interpreted through the inversion transform
        y_part: MaxStable,
    },
}

impl Dependence {
    pub fn max_stable(model: MaxStable) -> Self {
        Self::MaxStable { model }
    }

    pub fn inverted(model: MaxStable) -> Self {
        Self::Inverted { model }
    }

    pub fn max_mixture(a: f64, x_part: MaxStable, y_part: MaxStable) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) || a.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "mixing weight must lie in [0,1], got {a}"
            )));
        }
        Ok(Self::MaxMixture { a, x_part, y_part })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::MaxStable { model } | Self::Inverted { model } => model.validate(),
            Self::MaxMixture { a, x_part, y_part } => {
                x_part.validate()?;
                y_part.validate()?;
                Self::max_mixture(*a, x_part.clone(), y_part.clone())?;
                Ok(())
            }
        }
    }

    /// Joint CDF of the pair at distance h, with exact unit Frechet
    /// margins in every variant.
    pub fn bivariate_cdf(&self, h: f64, x1: f64, x2: f64) -> Result<f64> {
        check_distance(h)?;
        check_coordinate(x1)?;
        check_coordinate(x2)?;
        Ok(self.cdf(h, x1, x2))
    }

    fn cdf(&self, h: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Self::MaxStable { model } => (-model.v(h, x1, x2)).exp(),
            Self::Inverted { model } => inverted_cdf(model, h, 1.0, x1, x2),
            Self::MaxMixture { a, x_part, y_part } => {
                if *a == 1.0 {
                    return (-x_part.v(h, x1, x2)).exp();
                }
                if *a == 0.0 {
                    return inverted_cdf(y_part, h, 1.0, x1, x2);
                }
                let xfac = (-*a * x_part.v(h, x1, x2)).exp();
                xfac * inverted_cdf(y_part, h, 1.0 - a, x1, x2)
            }
        }
    }

    /// P(Z1 > x1, Z2 > x2). Assembled from the covariance kernel as
    /// survivor1 * survivor2 + kernel, which keeps full precision where
    /// inclusion-exclusion on CDF values would cancel.
    pub fn joint_survivor(&self, h: f64, x1: f64, x2: f64) -> Result<f64> {
        check_distance(h)?;
        check_coordinate(x1)?;
        check_coordinate(x2)?;
        if let Self::Inverted { model } = self {
            // exact closed form for this variant
            let s1 = inverse_rate(x1);
            let s2 = inverse_rate(x2);
            if s1 == 0.0 || s2 == 0.0 {
                // a zero rate means that margin's CDF is zero to double
                // precision: the joint survivor is the other margin's
                return Ok((-s1.max(s2)).exp());
            }
            return Ok((-model.v(h, 1.0 / s1, 1.0 / s2)).exp());
        }
        let p1 = -(-1.0 / x1).exp_m1();
        let p2 = -(-1.0 / x2).exp_m1();
        Ok(p1 * p2 + self.kernel(h, x1, x2))
    }

    /// Covariance kernel C_h(x1, x2) = G_h(x1, x2) - F(x1) F(x2), the
    /// quantity integrated by the risk functional. Nonnegative for all
    /// variants here (positive quadrant dependence).
    pub fn cov_kernel(&self, h: f64, x1: f64, x2: f64) -> Result<f64> {
        check_distance(h)?;
        check_coordinate(x1)?;
        check_coordinate(x2)?;
        Ok(self.kernel(h, x1, x2))
    }

    pub(crate) fn kernel(&self, h: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Self::MaxStable { model } => max_stable_kernel(model, h, x1, x2),
            Self::Inverted { model } => inverted_kernel(model, h, 1.0, x1, x2),
            Self::MaxMixture { a, x_part, y_part } => {
                if *a == 1.0 {
                    return max_stable_kernel(x_part, h, x1, x2);
                }
                if *a == 0.0 {
                    return inverted_kernel(y_part, h, 1.0, x1, x2);
                }
                let b = 1.0 - a;
                let s = 1.0 / x1 + 1.0 / x2;
                let va = a * x_part.v(h, x1, x2);
                let xfac = (-va).exp();
                let kern_y = inverted_kernel(y_part, h, b, x1, x2);
                let fy12 = (-(b / x1 + b / x2)).exp();
                // C = e^{-aVX} C_Y(b-scaled) + FY1 FY2 e^{-aVX} (1 - e^{-a(s - VX)})
                xfac * kern_y + fy12 * xfac * (-(-(a * s - va)).exp_m1())
            }
        }
    }

    /// Upper tail dependence coefficient chi(h): the limit of
    /// P(F(Z2) > u | F(Z1) > u) as u -> 1. Positive only while the
    /// max-stable part is asymptotically dependent.
    pub fn chi(&self, h: f64) -> Result<f64> {
        check_distance(h)?;
        Ok(match self {
            Self::MaxStable { model } => 2.0 - model.v(h, 1.0, 1.0),
            Self::Inverted { .. } => 0.0,
            Self::MaxMixture { a, x_part, .. } => a * (2.0 - x_part.v(h, 1.0, 1.0)),
        })
    }

    /// Lower-order tail coefficient chibar(h) in [-1, 1]: equals 1 in
    /// the asymptotically dependent regime and 2 eta(h) - 1 beyond it.
    pub fn chibar(&self, h: f64) -> Result<f64> {
        check_distance(h)?;
        Ok(match self {
            Self::MaxStable { model } => {
                if model.v(h, 1.0, 1.0) < 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Inverted { model } => 2.0 / model.v(h, 1.0, 1.0) - 1.0,
            Self::MaxMixture { a, x_part, y_part } => {
                if *a == 0.0 {
                    return Ok(2.0 / y_part.v(h, 1.0, 1.0) - 1.0);
                }
                let x_dependent = match self.h_star() {
                    Some(hs) => h <= hs,
                    None => x_part.v(h, 1.0, 1.0) < 2.0,
                };
                if x_dependent {
                    1.0
                } else if *a == 1.0 {
                    0.0
                } else {
                    2.0 / y_part.v(h, 1.0, 1.0) - 1.0
                }
            }
        })
    }

    /// Residual tail index eta(h) = 1/Theta(h) of the inverted part,
    /// governing the joint survivor's decay P(both > x) ~ x^{-1/eta}.
    /// Not meaningful for a purely max-stable structure.
    pub fn eta(&self, h: f64) -> Result<f64> {
        check_distance(h)?;
        match self {
            Self::MaxStable { .. } => Err(Error::Domain(
                "eta is uninformative for an asymptotically dependent max-stable \
                 structure (identically 1)"
                    .into(),
            )),
            Self::Inverted { model } => Ok(1.0 / model.v(h, 1.0, 1.0)),
            Self::MaxMixture { a, x_part, y_part } => {
                let x_dependent = *a > 0.0
                    && match self.h_star() {
                        Some(hs) => h <= hs,
                        None => x_part.v(h, 1.0, 1.0) < 2.0,
                    };
                if x_dependent {
                    Ok(1.0)
                } else {
                    Ok(1.0 / y_part.v(h, 1.0, 1.0))
                }
            }
        }
    }

    /// Rupture distance of a mixture: below it the max-stable part keeps
    /// the pair asymptotically dependent, beyond it only the inverted
    /// part acts. Finite only when the max-stable part has finite range
    /// and actually participates.
    pub fn h_star(&self) -> Option<f64> {
        match self {
            Self::MaxMixture { a, x_part, .. } if *a > 0.0 => x_part.dependence_range(),
            _ => None,
        }
    }

    /// Distance beyond which the pair covariance vanishes identically,
    /// if finite for every component.
    pub fn dependence_range(&self) -> Option<f64> {
        match self {
            Self::MaxStable { model } | Self::Inverted { model } => model.dependence_range(),
            Self::MaxMixture { a, x_part, y_part } => {
                if *a == 1.0 {
                    return x_part.dependence_range();
                }
                if *a == 0.0 {
                    return y_part.dependence_range();
                }
                match (x_part.dependence_range(), y_part.dependence_range()) {
                    (Some(rx), Some(ry)) => Some(rx.max(ry)),
                    _ => None,
                }
            }
        }
    }

    /// Finite-level version of chi at threshold probability u; converges
    /// to chi(h) as u -> 1, and equals it exactly for max-stable pairs.
    pub fn chi_at_level(&self, h: f64, u: f64) -> Result<f64> {
        check_distance(h)?;
        check_level(u)?;
        let q = -1.0 / u.ln();
        Ok(2.0 - self.log_cdf(h, q, q) / u.ln())
    }

    /// Finite-level version of chibar at threshold probability u,
    /// measuring dependence strength in the asymptotically independent
    /// regime; converges to chibar(h) as u -> 1.
    pub fn chibar_at_level(&self, h: f64, u: f64) -> Result<f64> {
        check_distance(h)?;
        check_level(u)?;
        let q = -1.0 / u.ln();
        let survivor = self.joint_survivor(h, q, q)?;
        if survivor <= 0.0 {
            return Err(Error::Domain(format!(
                "joint survivor vanished at level u = {u}; chibar undefined there"
            )));
        }
        Ok(2.0 * (1.0 - u).ln() / survivor.ln() - 1.0)
    }

    fn log_cdf(&self, h: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Self::MaxStable { model } => -model.v(h, x1, x2),
            Self::Inverted { .. } => self.cdf(h, x1, x2).ln(),
            Self::MaxMixture { a, x_part, y_part } => {
                if *a == 1.0 {
                    return -x_part.v(h, x1, x2);
                }
                if *a == 0.0 {
                    return inverted_cdf(y_part, h, 1.0, x1, x2).ln();
                }
                -a * x_part.v(h, x1, x2) + inverted_cdf(y_part, h, 1.0 - a, x1, x2).ln()
            }
        }
    }
}

// CDF of the inverted pair with margins rescaled by weight b, i.e. of
// (b Y1, b Y2) evaluated at (x1, x2):
//   F1 + F2 - 1 + exp(-V(g(x1/b), g(x2/b))),  Fi = e^{-b/xi}.
// When a rate underflows to 0 the expression collapses exactly to the
// other margin's CDF.
fn inverted_cdf(model: &MaxStable, h: f64, b: f64, x1: f64, x2: f64) -> f64 {
    let s1 = inverse_rate(x1 / b);
    let s2 = inverse_rate(x2 / b);
    let f1 = (-b / x1).exp();
    let f2 = (-b / x2).exp();
    if s1 == 0.0 || s2 == 0.0 {
        return f1.min(f2);
    }
    let joint = (-model.v(h, 1.0 / s1, 1.0 / s2)).exp();
    // joint >= (1-F1)(1-F2) keeps this nonnegative; clamp shields the
    // last ulp near zero
    (f1 + f2 - 1.0 + joint).max(0.0)
}

// C = e^{-V} (1 - e^{-(s - V)}) with s = 1/x1 + 1/x2 >= V; both factors
// are free of cancellation.
fn max_stable_kernel(model: &MaxStable, h: f64, x1: f64, x2: f64) -> f64 {
    let s = 1.0 / x1 + 1.0 / x2;
    let v = model.v(h, x1, x2);
    (-v).exp() * (-(-(s - v).max(0.0)).exp_m1())
}

// Kernel of the inverted pair scaled by b, in the same stable shape with
// rates si = -log(1 - e^{-b/xi}). A zero rate means that margin's CDF
// is zero to double precision, so the covariance is zero too.
fn inverted_kernel(model: &MaxStable, h: f64, b: f64, x1: f64, x2: f64) -> f64 {
    let s1 = inverse_rate(x1 / b);
    let s2 = inverse_rate(x2 / b);
    if s1 == 0.0 || s2 == 0.0 {
        return 0.0;
    }
    let v = model.v(h, 1.0 / s1, 1.0 / s2);
    (-v).exp() * (-(-(s1 + s2 - v).max(0.0)).exp_m1())
}

/// Named parameter sets used across the command-line tools and the
/// validation suite.
pub mod preset {
    use super::*;
    use crate::correlation::{Correlation, CorrelationFamily};

    fn exp_corr(length: f64) -> Correlation {
        Correlation::new(CorrelationFamily::Exponential, length)
            .expect("preset correlation parameters are valid")
    }

    /// Truncated extremal Gaussian, exponential correlation 0.20,
    /// disk radius 0.25.
    pub fn teg_model() -> MaxStable {
        MaxStable::teg(exp_corr(0.20), 0.25).expect("preset radius is valid")
    }

    /// Smith storms with shape variance 0.6.
    pub fn smith_model() -> MaxStable {
        MaxStable::smith(0.6).expect("preset variance is valid")
    }

    pub fn teg() -> Dependence {
        Dependence::max_stable(teg_model())
    }

    pub fn smith() -> Dependence {
        Dependence::max_stable(smith_model())
    }

    pub fn inverted_teg() -> Dependence {
        Dependence::inverted(teg_model())
    }

    pub fn inverted_smith() -> Dependence {
        Dependence::inverted(smith_model())
    }

    /// Mixture of the standard truncated model with an inverted
    /// truncated model (radius 0.45, correlation length 0.40), equal
    /// weights.
    pub fn mm1() -> Dependence {
        let y = MaxStable::teg(exp_corr(0.40), 0.45).expect("preset radius is valid");
        Dependence::max_mixture(0.5, teg_model(), y).expect("preset weight is valid")
    }

    /// Mixture of the standard truncated model with an inverted Smith
    /// model (variance 0.8), equal weights.
    pub fn mm2() -> Dependence {
        let y = MaxStable::smith(0.8).expect("preset variance is valid");
        Dependence::max_mixture(0.5, teg_model(), y).expect("preset weight is valid")
    }

    /// Mixture family swept over the mixing weight in the Monte-Carlo
    /// validation study: truncated X part, inverted Smith Y part with
    /// unit variance.
    pub fn validation_mixture(a: f64) -> Result<Dependence> {
        let y = MaxStable::smith(1.0).expect("preset variance is valid");
        Dependence::max_mixture(a, teg_model(), y)
    }
}

#[cfg(test)]
mod tests {
    use super::preset::*;
    use super::*;
    use crate::correlation::CorrelationFamily;

    fn exp_corr(length: f64) -> Correlation {
        Correlation::new(CorrelationFamily::Exponential, length).unwrap()
    }

    #[test]
    fn smith_exponent_measure_matches_normal_cdf() {
        let m = MaxStable::smith(1.0).unwrap();
        // V_h(1,1) = 2 Phi(h/2)
        let v = m.exponent_measure(2.0, 1.0, 1.0).unwrap();
        assert!((v - 1.682_689_492_137_086).abs() < 1e-12, "{v}");
        assert!((m.extremal_coefficient(0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn teg_independent_beyond_diameter() {
        let m = teg_model();
        for h in [0.5, 0.7, 3.0] {
            let v = m.exponent_measure(h, 1.0, 1.0).unwrap();
            assert_eq!(v, 2.0, "h = {h}");
        }
        let v = m.exponent_measure(0.5, 0.3, 1.7).unwrap();
        assert!((v - (1.0 / 0.3 + 1.0 / 1.7)).abs() < 1e-15);
    }

    #[test]
    fn extremal_gaussian_complete_dependence_at_zero() {
        let m = MaxStable::extremal_gaussian(exp_corr(1.0));
        let v = m.exponent_measure(0.0, 1.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
        // at rho(0)=1 the pair is comonotone: V = 1/min
        let v = m.exponent_measure(0.0, 0.5, 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn extremal_gaussian_coefficient_formula() {
        let m = MaxStable::extremal_gaussian(exp_corr(0.3));
        for h in [0.05, 0.2, 1.0, 4.0] {
            let rho = (-(h / 0.3) as f64).exp();
            let want = 1.0 + ((1.0 - rho) / 2.0).sqrt();
            let got = m.extremal_coefficient(h).unwrap();
            assert!((got - want).abs() < 1e-13, "h={h}: {got} vs {want}");
        }
    }

    #[test]
    fn exponent_measure_bounds_and_homogeneity() {
        let models = [
            MaxStable::smith(0.6).unwrap(),
            MaxStable::extremal_gaussian(exp_corr(0.2)),
            teg_model(),
        ];
        let xs = [0.01, 0.3, 1.0, 7.0, 1e4];
        let hs = [0.0, 0.03, 0.25, 0.49, 0.8, 5.0];
        for m in &models {
            for &h in &hs {
                for &x1 in &xs {
                    for &x2 in &xs {
                        let v = m.exponent_measure(h, x1, x2).unwrap();
                        let lo = (1.0 / x1).max(1.0 / x2);
                        let hi = 1.0 / x1 + 1.0 / x2;
                        assert!(
                            v >= lo - 1e-12 * lo && v <= hi + 1e-12 * hi,
                            "{m:?} h={h} x=({x1},{x2}): V={v} outside [{lo},{hi}]"
                        );
                        for c in [0.1, 3.0] {
                            let vc = m.exponent_measure(h, c * x1, c * x2).unwrap();
                            assert!(
                                (vc * c - v).abs() <= 1e-12 * v,
                                "homogeneity broken: {m:?} h={h}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exponent_measure_margin() {
        for m in [
            MaxStable::smith(0.6).unwrap(),
            MaxStable::extremal_gaussian(exp_corr(0.2)),
            teg_model(),
        ] {
            for x in [0.2, 1.0, 5.0] {
                let v = m.exponent_measure(0.7, x, 1e12).unwrap();
                assert!(
                    (v - 1.0 / x).abs() < 1e-9 / x,
                    "{m:?}: V(x, 1e12) = {v}, want ~{}",
                    1.0 / x
                );
            }
        }
    }

    #[test]
    fn inversion_transform_fixed_point_and_involution() {
        let xstar = 1.0 / 2.0_f64.ln();
        let g = inversion_transform(xstar).unwrap();
        assert!((g - xstar).abs() < 1e-14);

        for x in [0.05, 0.3, 1.0, 2.7, 40.0, 1e4] {
            let gx = inversion_transform(x).unwrap();
            let back = inversion_transform(gx).unwrap();
            // at small x the value 1 - e^{-1/x} sits next to 1.0, where a
            // double keeps only ~16 digits; the roundtrip loses
            // eps * e^{1/x} * x of relative accuracy there
            let tol = (f64::EPSILON * (1.0 / x).exp() * x).max(1e-12);
            assert!(
                (back - x).abs() <= tol * x,
                "involution broken at {x}: {back}"
            );
            // margin preservation: e^{-1/g(x)} = 1 - e^{-1/x}
            let lhs = (-1.0 / gx).exp();
            let rhs = -(-1.0 / x).exp_m1();
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn inversion_transform_is_decreasing() {
        let g6 = inversion_transform(1e6).unwrap();
        let g7 = inversion_transform(1e7).unwrap();
        assert!(g6 > g7, "large inputs map to small outputs: {g6} vs {g7}");
        assert!((g6 - 1.0 / 1e6_f64.ln()).abs() < 1e-7);
        // overflow end is signaled, not silently wrong
        assert!(matches!(
            inversion_transform(1e-4),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn mixture_cdf_reduces_at_endpoints() {
        let x = teg_model();
        let y = MaxStable::smith(1.0).unwrap();
        let pure_x = Dependence::max_stable(x.clone());
        let pure_y = Dependence::inverted(y.clone());
        let at_one = Dependence::max_mixture(1.0, x.clone(), y.clone()).unwrap();
        let at_zero = Dependence::max_mixture(0.0, x, y).unwrap();
        for (x1, x2) in [(1.0, 1.0), (0.4, 2.5), (3.0, 0.1)] {
            for h in [0.0, 0.1, 0.3, 1.0] {
                let a1 = at_one.bivariate_cdf(h, x1, x2).unwrap();
                let p1 = pure_x.bivariate_cdf(h, x1, x2).unwrap();
                assert_eq!(a1, p1, "a=1 must match the pure max-stable CDF bit for bit");
                let a0 = at_zero.bivariate_cdf(h, x1, x2).unwrap();
                let p0 = pure_y.bivariate_cdf(h, x1, x2).unwrap();
                assert_eq!(a0, p0, "a=0 must match the inverted CDF bit for bit");
            }
        }
    }

    #[test]
    fn inverted_comonotone_diagonal() {
        // at h=0 the underlying pair is comonotone, so the inverted pair
        // is too: CDF on the diagonal equals the margin
        let d = Dependence::inverted(MaxStable::smith(1.0).unwrap());
        for x in [0.3, 1.0, 4.0] {
            let c = d.bivariate_cdf(0.0, x, x).unwrap();
            assert!(((c - (-1.0 / x).exp()).abs()) < 1e-15, "x={x}: {c}");
        }
    }

    #[test]
    fn mixture_cdf_against_direct_formula() {
        let d = preset::mm2();
        let (a, b) = (0.5, 0.5);
        let x_part = teg_model();
        let y_part = MaxStable::smith(0.8).unwrap();
        for h in [0.05, 0.25, 0.6, 2.0] {
            for (z1, z2) in [(0.7, 0.7), (1.0, 3.0), (5.0, 0.9)] {
                let got = d.bivariate_cdf(h, z1, z2).unwrap();
                // direct transcription, accurate enough at these moderate
                // arguments
                let g1 = inversion_transform(z1 / b).unwrap();
                let g2 = inversion_transform(z2 / b).unwrap();
                let want = (-a * x_part.v(h, z1, z2)).exp()
                    * ((-b / z1).exp() + (-b / z2).exp() - 1.0
                        + (-y_part.v(h, g1, g2)).exp());
                assert!(
                    (got - want).abs() < 1e-13,
                    "h={h} z=({z1},{z2}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn cdf_is_monotone_and_pqd() {
        let structures = [
            preset::teg(),
            preset::smith(),
            preset::inverted_teg(),
            preset::inverted_smith(),
            preset::mm1(),
            preset::mm2(),
        ];
        let grid = [0.2, 0.5, 1.0, 2.0, 6.0];
        for d in &structures {
            for h in [0.0, 0.12, 0.4, 1.1] {
                for &x1 in &grid {
                    for &x2 in &grid {
                        let c = d.bivariate_cdf(h, x1, x2).unwrap();
                        assert!((0.0..=1.0).contains(&c));
                        let up1 = d.bivariate_cdf(h, x1 + 0.1, x2).unwrap();
                        let up2 = d.bivariate_cdf(h, x1, x2 + 0.1).unwrap();
                        // flat directions (comonotone regions) may dip by
                        // accumulated roundoff in the inclusion-exclusion
                        assert!(
                            up1 >= c - 2e-14 && up2 >= c - 2e-14,
                            "{d:?} h={h} x=({x1},{x2}): c={c:.17} up=({up1:.17},{up2:.17})"
                        );
                        // positive quadrant dependence via the kernel
                        let k = d.cov_kernel(h, x1, x2).unwrap();
                        assert!(k >= 0.0, "{d:?} h={h}: kernel {k}");
                        let f1 = (-1.0_f64 / x1).exp();
                        let f2 = (-1.0_f64 / x2).exp();
                        assert!(
                            (c - (f1 * f2 + k)).abs() < 1e-14,
                            "kernel and CDF disagree"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn survivor_matches_inclusion_exclusion() {
        for d in [preset::teg(), preset::inverted_smith(), preset::mm1()] {
            for h in [0.1, 0.4, 1.5] {
                for (x1, x2) in [(1.0, 1.0), (0.8, 2.0)] {
                    let s = d.joint_survivor(h, x1, x2).unwrap();
                    let g = d.bivariate_cdf(h, x1, x2).unwrap();
                    let f1 = (-1.0_f64 / x1).exp();
                    let f2 = (-1.0_f64 / x2).exp();
                    let naive = 1.0 - f1 - f2 + g;
                    assert!((s - naive).abs() < 1e-13, "{s} vs {naive}");
                }
            }
        }
    }

    #[test]
    fn chi_values() {
        let m = preset::teg();
        assert_eq!(m.chi(0.5).unwrap(), 0.0);
        assert_eq!(preset::inverted_teg().chi(0.1).unwrap(), 0.0);
        let mix = preset::validation_mixture(0.5).unwrap();
        let theta = teg_model().extremal_coefficient(0.1).unwrap();
        let got = mix.chi(0.1).unwrap();
        assert!((got - 0.5 * (2.0 - theta)).abs() < 1e-14);
    }

    #[test]
    fn chibar_branches() {
        // max-stable: 1 while dependent, 0 at exact independence
        let t = preset::teg();
        assert_eq!(t.chibar(0.1).unwrap(), 1.0);
        assert_eq!(t.chibar(0.5).unwrap(), 0.0);
        // inverted: 2/Theta - 1
        let inv = preset::inverted_smith();
        let theta = smith_model().extremal_coefficient(1.0).unwrap();
        assert!((inv.chibar(1.0).unwrap() - (2.0 / theta - 1.0)).abs() < 1e-14);
        // mixture: 1 below the rupture distance, Y-part value beyond
        let mm = preset::mm2();
        assert_eq!(mm.h_star(), Some(0.5));
        assert_eq!(mm.chibar(0.3).unwrap(), 1.0);
        let theta_y = MaxStable::smith(0.8)
            .unwrap()
            .extremal_coefficient(0.8)
            .unwrap();
        assert!((mm.chibar(0.8).unwrap() - (2.0 / theta_y - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn eta_values_and_signaling() {
        assert!(preset::teg().eta(0.2).is_err());
        let inv = preset::inverted_teg();
        let theta = teg_model().extremal_coefficient(0.1).unwrap();
        assert!((inv.eta(0.1).unwrap() - 1.0 / theta).abs() < 1e-14);
        assert_eq!(inv.eta(0.5).unwrap(), 0.5);
        let mm = preset::mm1();
        assert_eq!(mm.eta(0.2).unwrap(), 1.0);
    }

    #[test]
    fn chi_at_level_is_exact_for_max_stable() {
        for d in [preset::teg(), preset::smith()] {
            for h in [0.05, 0.3, 0.8] {
                let chi = d.chi(h).unwrap();
                for u in [0.5, 0.9, 0.999] {
                    let cu = d.chi_at_level(h, u).unwrap();
                    assert!((cu - chi).abs() < 1e-10, "h={h} u={u}: {cu} vs {chi}");
                }
            }
        }
    }

    #[test]
    fn chibar_at_level_is_exact_for_inverted() {
        // the inverted joint survivor is (1-u)^Theta on the diagonal, so
        // the finite-level coefficient is flat in u
        let d = preset::inverted_smith();
        let h = 0.7;
        let limit = d.chibar(h).unwrap();
        for u in [0.5, 0.95, 1.0 - 1e-6] {
            let cu = d.chibar_at_level(h, u).unwrap();
            assert!((cu - limit).abs() < 1e-9, "u={u}: {cu} vs {limit}");
        }
    }

    #[test]
    fn tail_coefficients_converge_for_mixture() {
        let d = preset::mm2();
        // above the rupture distance: chibar_u approaches the inverted
        // part's value, slowly (logarithmic corrections)
        let h = 0.8;
        let limit = d.chibar(h).unwrap();
        let near = d.chibar_at_level(h, 1.0 - 1e-6).unwrap();
        assert!((near - limit).abs() < 0.1, "chibar_u {near} vs {limit}");
        // chi_u approaches a(2 - Theta_X) from above; the inverted part
        // contributes a correction of order (1-u)^{Theta_Y - 1}, painfully
        // slow here since Theta_Y(0.2) is barely above 1
        let h = 0.2;
        let chi = d.chi(h).unwrap();
        let near = d.chi_at_level(h, 1.0 - 1e-6).unwrap();
        assert!(near > chi && near - chi < 0.2, "chi_u {near} vs {chi}");
        let far = d.chi_at_level(h, 0.9).unwrap();
        assert!((far - chi).abs() > (near - chi).abs());
    }

    #[test]
    fn dependence_range_combines() {
        assert_eq!(preset::teg().dependence_range(), Some(0.5));
        assert_eq!(preset::mm1().dependence_range(), Some(0.9));
        assert_eq!(preset::mm2().dependence_range(), None);
        assert_eq!(preset::smith().dependence_range(), None);
    }

    #[test]
    fn kernel_vanishes_beyond_range() {
        let mm = preset::mm1();
        for (x1, x2) in [(0.5, 0.5), (1.0, 2.0)] {
            let k = mm.cov_kernel(0.95, x1, x2).unwrap();
            assert!(
                k.abs() < 1e-15,
                "kernel should vanish past the joint range: {k}"
            );
        }
    }

    #[test]
    fn domain_errors() {
        let m = MaxStable::smith(1.0).unwrap();
        assert!(m.exponent_measure(-0.1, 1.0, 1.0).is_err());
        assert!(m.exponent_measure(1.0, 0.0, 1.0).is_err());
        assert!(MaxStable::smith(0.0).is_err());
        assert!(MaxStable::teg(exp_corr(0.2), -1.0).is_err());
        let y = MaxStable::smith(1.0).unwrap();
        assert!(Dependence::max_mixture(1.5, teg_model(), y).is_err());
        let d = preset::teg();
        assert!(d.chi_at_level(0.1, 1.0).is_err());
        assert!(d.bivariate_cdf(0.1, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let d = preset::mm1();
        let s = serde_json::to_string(&d).unwrap();
        let back: Dependence = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        back.validate().unwrap();
    }
}
