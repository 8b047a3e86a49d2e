//! The risk functional: variance of spatially averaged power damage
//! over a region, for any of the dependence structures in `models`.
//!
//! For damage exponent nu, the pointwise damage is |Z(s)|^nu and the
//! regional loss is its average over the region. The variance of that
//! loss reduces to a distance integral
//!
//!   R1 = int f_A(h) Q(h, nu) dh
//!
//! where f_A is the region's interpoint distance density and Q(h, nu)
//! is the covariance of damages at two sites h apart. Q itself is a
//! Hoeffding double integral of the pair covariance kernel; for the
//! truncated extremal Gaussian model it additionally collapses to a
//! one-dimensional integral, which this module uses as its fast route
//! and cross-checks against the generic one.

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::models::{Dependence, MaxStable};
use crate::quadrature::{integrate_carrying_error, Estimate, QuadratureConfig};
use crate::special::gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};

/// Damage exponent nu, strictly inside (0, 1/2): the square of the
/// damage must keep a finite mean under unit Frechet margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DamageExponent(f64);

impl DamageExponent {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "damage exponent must lie strictly in (0, 1/2), got {nu}"
            )));
        }
        Ok(Self(nu))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for DamageExponent {
    type Error = Error;
    fn try_from(nu: f64) -> Result<Self> {
        Self::new(nu)
    }
}

impl From<DamageExponent> for f64 {
    fn from(nu: DamageExponent) -> f64 {
        nu.0
    }
}

/// E |Z(s)|^nu = Gamma(1 - nu) under unit Frechet margins; also the
/// mean of the regional loss, independent of the region.
pub fn mean_damage(nu: DamageExponent) -> f64 {
    gamma(1.0 - nu.value()).expect("gamma is finite on (1/2, 1)")
}

/// Var |Z(s)|^nu, the value of the damage covariance at distance zero.
pub fn damage_variance(nu: DamageExponent) -> f64 {
    let m = mean_damage(nu);
    gamma(1.0 - 2.0 * nu.value()).expect("gamma is finite on (0, 1)") - m * m
}

/// Which Hoeffding form the damage covariance integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceForm {
    /// Substituted axes y = x^nu: bounded integrand, no endpoint weight.
    Substituted,
    /// Direct axes with nu^2 x1^{nu-1} x2^{nu-1} weights; better behaved
    /// for nu near the upper end where the substitution steepens tails.
    Weighted,
}

impl CovarianceForm {
    /// The substituted form wins at every exponent on this engine: the
    /// weighted form needs an order of magnitude more evaluations and
    /// its semi-infinite tail bound swamps the estimate well before the
    /// exponent reaches the upper end. It stays available as an
    /// independent cross-check.
    pub fn preferred_for(_nu: DamageExponent) -> Self {
        Self::Substituted
    }
}

/// Deterministic route that produced a risk estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ClosedForm1d,
    Hoeffding3d,
    MonteCarlo,
}

/// How to pick the route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteChoice {
    /// Closed form when the model is a pure truncated extremal
    /// Gaussian, generic Hoeffding integration otherwise.
    Auto,
    ClosedForm,
    Hoeffding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    /// Conservative bound composed additively across nested integrals.
    pub error_bound: f64,
    pub route: Route,
    /// Integrand evaluations across all stages.
    pub evaluations: u64,
    /// Recorded bound on mass lost to semi-infinite tail cutoffs.
    pub truncated_tail: f64,
}

/// Covariance of damages at two sites distance h apart, by the double
/// Hoeffding integral of the pair covariance kernel. Nonnegative for
/// every structure in this crate (positive quadrant dependence).
pub fn damage_covariance(
    model: &Dependence,
    h: f64,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    damage_covariance_with(model, h, nu, CovarianceForm::preferred_for(nu), cfg)
}

pub fn damage_covariance_with(
    model: &Dependence,
    h: f64,
    nu: DamageExponent,
    form: CovarianceForm,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if h < 0.0 || h.is_nan() {
        return Err(Error::Domain(format!("distance must be >= 0, got {h}")));
    }
    let n = nu.value();
    let p = 1.0 / n;
    // ramp-shaped integrands fool the sharpened panel estimates, and an
    // inner bias repeats coherently across every outer node; raw panel
    // differences keep the carried claims trustworthy
    let outer_cfg = cfg.conservative();
    let inner_cfg = outer_cfg.tightened(0.5);
    let inner_failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_evals = Cell::new(0_u64);
    let inner_tail = Cell::new(0.0_f64);

    let record = |r: Result<Estimate>| -> (f64, f64) {
        match r {
            Ok(est) => {
                inner_evals.set(inner_evals.get() + est.evaluations);
                inner_tail.set(inner_tail.get() + est.truncated_tail);
                (est.value, est.error)
            }
            Err(e) => {
                let mut slot = inner_failure.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                (f64::NAN, 0.0)
            }
        }
    };

    // the inner absolute floor must decay with the outer coordinate: a
    // constant floor integrated over the semi-infinite outer axis would
    // dominate the composed error bound. 1/(1+u) keeps the composed
    // floor to a log factor while staying reachable in f64 even where
    // the inner value has decayed to nothing
    let local = |cfg: QuadratureConfig, u: f64| QuadratureConfig {
        abs_tol: cfg.abs_tol / (1.0 + u),
        ..cfg
    };

    let outer = match form {
        CovarianceForm::Substituted => integrate_carrying_error(
            |y1: f64| {
                let x1 = y1.powf(p);
                record(integrate_carrying_error(
                    |y2: f64| (model.kernel(h, x1, y2.powf(p)), 0.0),
                    0.0,
                    f64::INFINITY,
                    &[y1],
                    &local(inner_cfg, y1),
                ))
            },
            0.0,
            f64::INFINITY,
            &[],
            &outer_cfg,
        ),
        CovarianceForm::Weighted => integrate_carrying_error(
            |x1: f64| {
                let w1 = n * x1.powf(n - 1.0);
                let (v, e) = record(integrate_carrying_error(
                    |x2: f64| (n * x2.powf(n - 1.0) * model.kernel(h, x1, x2), 0.0),
                    0.0,
                    f64::INFINITY,
                    &[x1],
                    &local(inner_cfg, x1),
                ));
                (w1 * v, w1.abs() * e)
            },
            0.0,
            f64::INFINITY,
            &[],
            &outer_cfg,
        ),
    };

    let mut est = match outer {
        Ok(est) => est,
        Err(outer_err) => {
            return Err(match inner_failure.into_inner() {
                Some(inner) => stage("damage covariance, inner axis", inner),
                None => stage("damage covariance, outer axis", outer_err),
            });
        }
    };
    est.evaluations += inner_evals.get();
    // inner tail bounds already ride along inside the carried error; the
    // field only aggregates them for diagnostics
    est.truncated_tail += inner_tail.get();
    Ok(est)
}

fn stage(label: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{label}: {m}")),
        Error::NoConvergence(m) => Error::NoConvergence(format!("{label}: {m}")),
        other => other,
    }
}

// Integrand of the one-dimensional damage-covariance reduction for the
// truncated extremal Gaussian model, in the pair-ratio variable w. The
// three pieces come from differentiating the pair CDF along the
// diagonal rays x = (u, u w); g2 and g1 are Gamma(2 - 2 nu) and
// Gamma(1 - 2 nu).
pub(crate) fn teg_reduction_integrand(
    rho: f64,
    alpha: f64,
    nu: f64,
    g2: f64,
    g1: f64,
    w: f64,
) -> f64 {
    let wp = w + 1.0;
    // K >= sqrt((1-rho)/2) > 0 for rho < 1; the clamp only absorbs
    // last-ulp negatives at the minimum
    let k = (1.0 - 2.0 * w * (rho + 1.0) / (wp * wp)).max(0.0).sqrt();
    let c = 0.5 * alpha * (1.0 - k);
    let t1 = wp / w * (1.0 - c);
    let b1 = 1.0 - c - alpha * (rho + 1.0) * (1.0 - w) / (2.0 * k * wp * wp);
    let b2 = (1.0 - c) / (w * w) - alpha * (rho + 1.0) * (w - 1.0) / (2.0 * k * w * wp * wp);
    let t3 = alpha
        * ((rho + 1.0) / (k * wp * wp * wp)
            - (rho + 1.0) * (rho + 1.0) * (w - 1.0) * (w - 1.0)
                / (2.0 * k * k * k * wp * wp * wp * wp * wp));
    w.powf(nu) * (g2 * b1 * b2 * t1.powf(2.0 * nu - 2.0) + g1 * t3 * t1.powf(2.0 * nu - 1.0))
}

/// Damage covariance for a truncated extremal Gaussian model by its
/// one-dimensional reduction; orders of magnitude cheaper than the
/// double integral and used as the default route for that model.
pub fn teg_damage_covariance(
    correlation: &crate::correlation::Correlation,
    radius: f64,
    h: f64,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if h < 0.0 || h.is_nan() {
        return Err(Error::Domain(format!("distance must be >= 0, got {h}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncation radius must be positive and finite, got {radius}"
        )));
    }
    let n = nu.value();
    let rho = correlation.value(h);
    let alpha = crate::geometry::disk_overlap_fraction(h, radius);
    let mean2 = {
        let m = mean_damage(nu);
        m * m
    };
    if rho == 1.0 {
        // comonotone pair: the reduction's integrand degenerates on the
        // ray w = 1, but the value is just the damage variance; any
        // overlap deficit (alpha slightly below 1) is folded into the
        // bound
        let value = damage_variance(nu);
        return Ok(Estimate {
            value,
            error: value * (1.0 - alpha).abs() + 1e-15,
            evaluations: 0,
            truncated_tail: 0.0,
        });
    }
    let g2 = gamma(2.0 - 2.0 * n).expect("gamma finite on (1, 2)");
    let g1 = gamma(1.0 - 2.0 * n).expect("gamma finite on (0, 1)");
    let est = crate::quadrature::integrate_with_breakpoints(
        |w| teg_reduction_integrand(rho, alpha, n, g2, g1, w),
        0.0,
        f64::INFINITY,
        &[1.0],
        cfg,
    )
    .map_err(|e| stage("damage covariance reduction", e))?;
    Ok(Estimate {
        value: est.value - mean2,
        ..est
    })
}

fn teg_parts(model: &Dependence) -> Option<(&crate::correlation::Correlation, f64)> {
    match model {
        Dependence::MaxStable {
            model: MaxStable::Teg {
                correlation,
                radius,
            },
        } => Some((correlation, *radius)),
        _ => None,
    }
}

/// Variance of the average damage over the region.
pub fn risk_variance(
    model: &Dependence,
    region: Region,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
    route: RouteChoice,
) -> Result<RiskEstimate> {
    risk_variance_scaled(model, region, 1.0, nu, cfg, route)
}

/// Variance of the average damage over the region scaled by lambda,
/// computed without rebuilding the region: the distance density of the
/// base region is integrated against Q(lambda h).
pub fn risk_variance_scaled(
    model: &Dependence,
    region: Region,
    lambda: f64,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
    route: RouteChoice,
) -> Result<RiskEstimate> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be positive and finite, got {lambda}"
        )));
    }
    let closed = match route {
        RouteChoice::Auto => teg_parts(model),
        RouteChoice::ClosedForm => Some(teg_parts(model).ok_or_else(|| {
            Error::InvalidParameter(
                "the closed-form route applies only to a pure truncated \
                 extremal Gaussian model"
                    .into(),
            )
        })?),
        RouteChoice::Hoeffding => None,
    };

    let diam = region.diameter();
    let q_cfg = cfg.tightened(0.5);
    let mut breakpoints = vec![];
    // the square's distance density switches branch at h = side
    if let Region::Square { side } = region {
        breakpoints.push(side);
    }
    if let Some(range) = model.dependence_range() {
        // covariance support ends here; beyond it Q vanishes identically
        breakpoints.push(range / lambda);
    }

    let inner_failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_evals = Cell::new(0_u64);
    let inner_tail = Cell::new(0.0_f64);
    let record = |r: Result<Estimate>| -> (f64, f64) {
        match r {
            Ok(est) => {
                inner_evals.set(inner_evals.get() + est.evaluations);
                inner_tail.set(inner_tail.get() + est.truncated_tail);
                (est.value, est.error)
            }
            Err(e) => {
                let mut slot = inner_failure.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                (f64::NAN, 0.0)
            }
        }
    };

    let (outer, used_route) = match closed {
        Some((correlation, radius)) => (
            integrate_carrying_error(
                |h: f64| {
                    let q = teg_damage_covariance(correlation, radius, lambda * h, nu, &q_cfg);
                    let (v, e) = record(q);
                    let f = region.distance_density(h);
                    (f * v, f * e)
                },
                0.0,
                diam,
                &breakpoints,
                cfg,
            ),
            Route::ClosedForm1d,
        ),
        None => (
            integrate_carrying_error(
                |h: f64| {
                    let q = damage_covariance(model, lambda * h, nu, &q_cfg);
                    let (v, e) = record(q);
                    let f = region.distance_density(h);
                    (f * v, f * e)
                },
                0.0,
                diam,
                &breakpoints,
                cfg,
            ),
            Route::Hoeffding3d,
        ),
    };

    let est = match outer {
        Ok(est) => est,
        Err(outer_err) => {
            return Err(match inner_failure.into_inner() {
                Some(inner) => stage("risk integral, damage covariance stage", inner),
                None => stage("risk integral, distance stage", outer_err),
            });
        }
    };
    Ok(RiskEstimate {
        value: est.value,
        error_bound: est.error,
        route: used_route,
        evaluations: est.evaluations + inner_evals.get(),
        truncated_tail: est.truncated_tail + inner_tail.get(),
    })
}

/// Risk over a grid of scale factors, in parallel; row order follows
/// the input grid regardless of worker count.
pub fn lambda_sweep(
    model: &Dependence,
    region: Region,
    nu: DamageExponent,
    lambdas: &[f64],
    cfg: &QuadratureConfig,
    route: RouteChoice,
) -> Result<Vec<(f64, RiskEstimate)>> {
    lambdas
        .par_iter()
        .map(|&l| Ok((l, risk_variance_scaled(model, region, l, nu, cfg, route)?)))
        .collect()
}

/// Covariance of the average damages over two congruent squares of the
/// given side whose left edges are `separation` apart horizontally
/// (disjoint when separation >= side). Both offsets of a uniform pair
/// of points have triangular densities, so this is a weighted double
/// integral of Q over the offset rectangle.
pub fn cross_covariance(
    model: &Dependence,
    side: f64,
    separation: f64,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if !(side > 0.0) || !(separation >= side) {
        return Err(Error::InvalidParameter(format!(
            "need side > 0 and separation >= side, got {side}, {separation}"
        )));
    }
    let q_cfg = cfg.tightened(0.5);
    let inner_failure: RefCell<Option<Error>> = RefCell::new(None);
    let tri = move |d: f64| (side - d.abs()).max(0.0) / (side * side);
    let outer = integrate_carrying_error(
        |dx: f64| {
            let wx = tri(dx);
            let inner = integrate_carrying_error(
                |dy: f64| {
                    let h = ((separation + dx) * (separation + dx) + dy * dy).sqrt();
                    match damage_covariance(model, h, nu, &q_cfg) {
                        Ok(est) => (tri(dy) * est.value, tri(dy) * est.error),
                        Err(e) => {
                            let mut slot = inner_failure.borrow_mut();
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            (f64::NAN, 0.0)
                        }
                    }
                },
                -side,
                side,
                &[0.0],
                &q_cfg,
            );
            match inner {
                Ok(est) => (wx * est.value, wx * est.error),
                Err(e) => {
                    let mut slot = inner_failure.borrow_mut();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    (f64::NAN, 0.0)
                }
            }
        },
        -side,
        side,
        &[0.0],
        cfg,
    );
    outer.map_err(|e| match inner_failure.into_inner() {
        Some(inner) => stage("cross covariance, damage covariance stage", inner),
        None => stage("cross covariance, offset stage", e),
    })
}

/// Numerical report on the risk measure's structural properties for
/// one model and base region.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    /// Same region assembled two ways; equal values demonstrate that
    /// only shape and size enter (translation invariance is structural:
    /// positions never appear in the computation).
    pub translation_pair: (RiskEstimate, RiskEstimate),
    pub translation_agrees: bool,
    /// Risk along an increasing scale grid.
    pub scale_curve: Vec<(f64, RiskEstimate)>,
    pub scale_nonincreasing: bool,
    /// Union of two disjoint congruent squares versus the sum of the
    /// parts.
    pub union_value: f64,
    pub union_error_bound: f64,
    pub parts_sum: f64,
    pub subadditive: bool,
    pub cross_covariance_value: f64,
    /// Empirical log-log slope of risk against scale over the grid;
    /// reported, not asserted against any claimed order.
    pub loglog_slope: f64,
}

pub fn axiom_report(
    model: &Dependence,
    base: Region,
    nu: DamageExponent,
    cfg: &QuadratureConfig,
) -> Result<AxiomReport> {
    let route = RouteChoice::Auto;

    // same geometry via two constructions
    let direct = risk_variance(model, base, nu, cfg, route)?;
    let rebuilt = {
        let half = base.scaled(0.5)?;
        risk_variance_scaled(model, half, 2.0, nu, cfg, route)?
    };
    let translation_agrees = (direct.value - rebuilt.value).abs()
        <= (direct.error_bound + rebuilt.error_bound).max(1e-12);

    let lambdas = [0.5, 1.0, 2.0, 4.0];
    let scale_curve = lambda_sweep(model, base, nu, &lambdas, cfg, route)?;
    let scale_nonincreasing = scale_curve.windows(2).all(|w| {
        w[1].1.value <= w[0].1.value + w[0].1.error_bound + w[1].1.error_bound
    });

    // two half-side squares separated by half their side
    let side = match base {
        Region::Square { side } => side * 0.5,
        Region::Disk { radius } => radius,
    };
    let separation = 1.5 * side;
    let part = risk_variance(model, Region::square(side)?, nu, cfg, route)?;
    let cross = cross_covariance(model, side, separation, nu, cfg)?;
    let union_value = 0.25 * (2.0 * part.value + 2.0 * cross.value);
    let union_error_bound = 0.25 * (2.0 * part.error_bound + 2.0 * cross.error);
    let parts_sum = 2.0 * part.value;
    let subadditive =
        union_value <= parts_sum + union_error_bound + 2.0 * part.error_bound;

    let first = scale_curve.first().expect("grid nonempty").1.value;
    let last = scale_curve.last().expect("grid nonempty").1.value;
    let loglog_slope = if first > 0.0 && last > 0.0 {
        (last / first).ln() / (lambdas[lambdas.len() - 1] / lambdas[0]).ln()
    } else {
        f64::NEG_INFINITY
    };

    Ok(AxiomReport {
        translation_pair: (direct, rebuilt),
        translation_agrees,
        scale_curve,
        scale_nonincreasing,
        union_value,
        union_error_bound,
        parts_sum,
        subadditive,
        cross_covariance_value: cross.value,
        loglog_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::preset;
    use crate::quadrature::integrate_with_breakpoints;

    fn nu(v: f64) -> DamageExponent {
        DamageExponent::new(v).unwrap()
    }

    #[test]
    fn damage_exponent_domain() {
        assert!(DamageExponent::new(0.0).is_err());
        assert!(DamageExponent::new(0.5).is_err());
        assert!(DamageExponent::new(-0.1).is_err());
        assert!(DamageExponent::new(0.25).is_ok());
    }

    #[test]
    fn mean_damage_values() {
        // Gamma(0.8), Gamma(0.6)
        assert!((mean_damage(nu(0.2)) - 1.164_229_713_725_303_3).abs() < 1e-13);
        assert!((mean_damage(nu(0.4)) - 1.489_192_248_812_817).abs() < 1e-13);
        assert!((mean_damage(nu(1e-9)) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn covariance_at_zero_distance_is_damage_variance() {
        let cfg = QuadratureConfig::default();
        for v in [0.1, 0.2, 0.3] {
            let want = damage_variance(nu(v));
            let got = damage_covariance(&preset::teg(), 0.0, nu(v), &cfg).unwrap();
            assert!(
                (got.value - want).abs() < 1e-6,
                "nu={v}: {} vs {want}",
                got.value
            );
        }
    }

    #[test]
    fn covariance_vanishes_beyond_range() {
        let cfg = QuadratureConfig::default();
        for h in [0.5, 0.8, 10.0] {
            let got = damage_covariance(&preset::teg(), h, nu(0.2), &cfg).unwrap();
            assert!(got.value.abs() < 1e-10, "h={h}: {}", got.value);
        }
    }

    #[test]
    fn closed_route_matches_frozen_curve() {
        // independently computed curve for the standard truncated model,
        // correlation length 0.2, radius 0.25, nu = 0.2
        let cfg = QuadratureConfig::default();
        let anchors = [
            (0.05, 0.092_368_554_117),
            (0.10, 0.067_659_821_080),
            (0.25, 0.026_259_488_022),
            (0.40, 0.005_978_067_559),
            (0.49, 0.000_184_304_371),
        ];
        let (corr, radius) = match preset::teg_model() {
            MaxStable::Teg {
                correlation,
                radius,
            } => (correlation, radius),
            _ => unreachable!(),
        };
        for (h, want) in anchors {
            let got = teg_damage_covariance(&corr, radius, h, nu(0.2), &cfg).unwrap();
            assert!(
                (got.value - want).abs() < 1e-8,
                "h={h}: {} vs {want}",
                got.value
            );
        }
        // beyond the diameter the reduction integrates to the squared
        // mean, leaving zero up to cancellation roundoff
        let far = teg_damage_covariance(&corr, radius, 0.6, nu(0.2), &cfg).unwrap();
        assert!(far.value.abs() < 1e-8, "{}", far.value);
    }

    #[test]
    fn hoeffding_routes_agree_with_closed_route() {
        let cfg = QuadratureConfig::default();
        let model = preset::teg();
        let (corr, radius) = match preset::teg_model() {
            MaxStable::Teg {
                correlation,
                radius,
            } => (correlation, radius),
            _ => unreachable!(),
        };
        for (h, v) in [(0.25, 0.2), (0.1, 0.35), (0.4, 0.1)] {
            let closed = teg_damage_covariance(&corr, radius, h, nu(v), &cfg).unwrap();
            let generic = damage_covariance(&model, h, nu(v), &cfg).unwrap();
            let tol = (closed.error + generic.error).max(1e-4 * closed.value.abs());
            assert!(
                (closed.value - generic.value).abs() <= tol,
                "h={h} nu={v}: closed {} vs generic {} (tol {tol})",
                closed.value,
                generic.value
            );
        }
    }

    #[test]
    fn both_hoeffding_forms_agree() {
        let cfg = QuadratureConfig::default();
        let model = preset::mm2();
        for (h, v) in [(0.25, 0.2), (0.25, 0.35)] {
            let a = damage_covariance_with(&model, h, nu(v), CovarianceForm::Substituted, &cfg)
                .unwrap();
            let b =
                damage_covariance_with(&model, h, nu(v), CovarianceForm::Weighted, &cfg).unwrap();
            assert!(
                (a.value - b.value).abs() <= (a.error + b.error).max(1e-6),
                "h={h} nu={v}: {} vs {}",
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn mixture_covariance_matches_frozen_references() {
        // frozen against an independent high-precision pipeline; the
        // first value is additionally pinned by a mapping-free log
        // ladder to 5e-12
        let cfg = QuadratureConfig::default();
        for (model, h, v, want) in [
            (preset::mm2(), 0.25, 0.35, 5.46687510773128e-1),
            (preset::mm1(), 0.1, 0.2, 5.962386529234e-2),
            (preset::mm1(), 0.3, 0.35, 1.249202162582e-1),
        ] {
            let est = damage_covariance(&model, h, nu(v), &cfg).unwrap();
            assert!(
                (est.value - want).abs() <= 1e-8,
                "h={h} nu={v}: {} vs {want} (diff {:.2e})",
                est.value,
                (est.value - want).abs()
            );
        }
    }

    #[test]
    fn reduction_integrand_is_exchangeable() {
        // substituting w -> 1/w with its jacobian must leave the value
        // unchanged: the pair is exchangeable
        let cfg = QuadratureConfig::default();
        let (rho, alpha, n) = (0.287, 0.63, 0.2);
        let g2 = gamma(2.0 - 2.0 * n).unwrap();
        let g1 = gamma(1.0 - 2.0 * n).unwrap();
        let direct = integrate_with_breakpoints(
            |w| teg_reduction_integrand(rho, alpha, n, g2, g1, w),
            0.0,
            f64::INFINITY,
            &[1.0],
            &cfg,
        )
        .unwrap();
        let reflected = integrate_with_breakpoints(
            |w| teg_reduction_integrand(rho, alpha, n, g2, g1, 1.0 / w) / (w * w),
            0.0,
            f64::INFINITY,
            &[1.0],
            &cfg,
        )
        .unwrap();
        assert!(
            (direct.value - reflected.value).abs() < 1e-8,
            "{} vs {}",
            direct.value,
            reflected.value
        );
    }

    #[test]
    fn covariance_nonincreasing_in_distance_and_increasing_in_exponent() {
        let cfg = QuadratureConfig::default();
        let model = preset::teg();
        let (corr, radius) = match preset::teg_model() {
            MaxStable::Teg {
                correlation,
                radius,
            } => (correlation, radius),
            _ => unreachable!(),
        };
        let hs = [0.0, 0.1, 0.2, 0.3, 0.45, 0.5];
        let mut prev = f64::INFINITY;
        for &h in &hs {
            let q = teg_damage_covariance(&corr, radius, h, nu(0.2), &cfg)
                .unwrap()
                .value;
            assert!(q <= prev + 1e-9, "Q must not grow with distance");
            // far-field values cancel to zero and may land a hair below
            assert!(q >= -1e-8, "Q must stay nonnegative");
            prev = q;
        }
        let mut prev = 0.0;
        for v in [0.05, 0.15, 0.25, 0.35, 0.4] {
            let q = teg_damage_covariance(&corr, radius, 0.1, nu(v), &cfg)
                .unwrap()
                .value;
            assert!(q > prev, "Q must grow with the damage exponent");
            prev = q;
        }
        let _ = model;
    }

    #[test]
    fn risk_value_for_standard_square() {
        // frozen: closed-route risk for the truncated model on the unit
        // square at nu = 0.2
        let cfg = QuadratureConfig::default();
        let est = risk_variance(
            &preset::teg(),
            Region::square(1.0).unwrap(),
            nu(0.2),
            &cfg,
            RouteChoice::Auto,
        )
        .unwrap();
        assert_eq!(est.route, Route::ClosedForm1d);
        let want = 1.089_220_666_542e-2;
        assert!(
            (est.value - want).abs() < 1e-6,
            "{} vs {want}",
            est.value
        );
        assert!(est.value >= 0.0 && est.error_bound >= 0.0);

        let generic = risk_variance(
            &preset::teg(),
            Region::square(1.0).unwrap(),
            nu(0.2),
            &cfg,
            RouteChoice::Hoeffding,
        )
        .unwrap();
        assert_eq!(generic.route, Route::Hoeffding3d);
        assert!(
            (generic.value - want).abs()
                <= (generic.error_bound + est.error_bound).max(1e-4 * want)
        );
    }

    #[test]
    fn scaled_region_and_scaled_argument_agree() {
        let cfg = QuadratureConfig::default();
        let model = preset::teg();
        let base = Region::square(1.0).unwrap();
        for lambda in [0.5, 2.0, 4.0] {
            let a =
                risk_variance_scaled(&model, base, lambda, nu(0.2), &cfg, RouteChoice::Auto)
                    .unwrap();
            let b = risk_variance(
                &model,
                base.scaled(lambda).unwrap(),
                nu(0.2),
                &cfg,
                RouteChoice::Auto,
            )
            .unwrap();
            assert!(
                (a.value - b.value).abs() <= (a.error_bound + b.error_bound).max(1e-10),
                "lambda={lambda}: {} vs {}",
                a.value,
                b.value
            );
        }
    }

    #[test]
    fn teg_risk_vanishes_slowly_under_scaling() {
        // the scaled risk decays like lambda^{-2} once the support of Q
        // is far inside the region; at lambda = 50 it sits near 5.75e-6,
        // distinctly above zero
        let cfg = QuadratureConfig::default();
        let est = risk_variance_scaled(
            &preset::teg(),
            Region::square(1.0).unwrap(),
            50.0,
            nu(0.2),
            &cfg,
            RouteChoice::Auto,
        )
        .unwrap();
        assert!(
            est.value > 5.5e-6 && est.value < 6.0e-6,
            "lambda=50 risk {}",
            est.value
        );
    }

    #[test]
    fn error_bounds_are_honest() {
        let cfg = QuadratureConfig::default();
        let tight = cfg.tightened(0.1);
        let model = preset::mm1();
        let base = Region::square(1.0).unwrap();
        for (h, v) in [(0.1, 0.2), (0.3, 0.35)] {
            let a = damage_covariance(&model, h, nu(v), &cfg).unwrap();
            let b = damage_covariance(&model, h, nu(v), &tight).unwrap();
            assert!(
                (a.value - b.value).abs() <= a.error.max(1e-12),
                "h={h}: diff {} > bound {}",
                (a.value - b.value).abs(),
                a.error
            );
        }
        let a = risk_variance(&model, base, nu(0.2), &cfg, RouteChoice::Auto).unwrap();
        let b = risk_variance(&model, base, nu(0.2), &tight, RouteChoice::Auto).unwrap();
        assert!((a.value - b.value).abs() <= a.error_bound.max(1e-12));
    }

    #[test]
    fn closed_route_requires_truncated_model() {
        let cfg = QuadratureConfig::default();
        let r = risk_variance(
            &preset::smith(),
            Region::square(1.0).unwrap(),
            nu(0.2),
            &cfg,
            RouteChoice::ClosedForm,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        let auto = risk_variance(
            &preset::inverted_teg(),
            Region::square(0.4).unwrap(),
            nu(0.2),
            &cfg,
            RouteChoice::Auto,
        )
        .unwrap();
        assert_eq!(auto.route, Route::Hoeffding3d);
    }

    #[test]
    fn axiom_report_for_truncated_model() {
        let cfg = QuadratureConfig::default();
        let report = axiom_report(
            &preset::teg(),
            Region::square(1.0).unwrap(),
            nu(0.2),
            &cfg,
        )
        .unwrap();
        assert!(report.translation_agrees);
        assert!(report.scale_nonincreasing);
        assert!(report.subadditive);
        assert!(report.cross_covariance_value >= -1e-10);
        assert!(report.loglog_slope < 0.0);
    }

    #[test]
    fn lambda_sweep_is_ordered_and_monotone() {
        let cfg = QuadratureConfig::default();
        let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
        let rows = lambda_sweep(
            &preset::teg(),
            Region::square(1.0).unwrap(),
            nu(0.2),
            &grid,
            &cfg,
            RouteChoice::Auto,
        )
        .unwrap();
        assert_eq!(rows.len(), grid.len());
        for (row, l) in rows.iter().zip(grid) {
            assert_eq!(row.0, l);
        }
        for w in rows.windows(2) {
            assert!(w[1].1.value <= w[0].1.value + 1e-9);
        }
    }
}
