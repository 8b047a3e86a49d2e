//! Adaptive Gauss-Kronrod quadrature (7-15 pair) on finite and
//! semi-infinite intervals.
//!
//! Semi-infinite integrals use the substitution x = a + e^u - 1 over a
//! finite u range reaching x - a of about 1e12. Under this map a power
//! tail x^{-q} becomes the smooth exponential e^{-(q-1)u}, which panels
//! resolve at every scale. The more common rational map x = a + t/(1-t)
//! is quietly biased here: for q near 2 the mapped integrand looks flat
//! near t = 1 while each remaining log-decade of x still holds real
//! mass, and 15-point rules agree with 7-point rules on the wrong
//! answer, so the bias never surfaces in the error estimate. Tails of
//! that shape arise routinely in this crate's damage covariance
//! integrals. Mass beyond the u cutoff is bounded (assuming decay at
//! least x^{-6/5}) and the bound is recorded in the estimate and folded
//! into the reported error. Integrands may carry their own per-point
//! error (from an inner quadrature); that error is integrated alongside
//! and reported additively, never silently dropped.
//!
//! Kronrod abscissae never touch interval endpoints, so endpoint
//! singularities like w^{-nu} are integrated without special casing.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: u32,
    /// Use the raw 15-vs-7 point difference as each panel's error. The
    /// usual QUADPACK rescaling assumes panels of a smooth integrand and
    /// understates the error on ramp-like ones, which the damage
    /// covariance integrands are full of; nested integration needs the
    /// claims it carries upward to be trustworthy, not sharp.
    pub conservative_panels: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            max_subdivisions: 2000,
            conservative_panels: false,
        }
    }
}

impl QuadratureConfig {
    /// Tolerances scaled by a factor; used to tighten inner integrals of
    /// nested integration so the outer error budget stays honest.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }

    pub fn conservative(&self) -> Self {
        Self {
            conservative_panels: true,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    /// Conservative bound: subdivision error + carried integrand error +
    /// truncated tail bound.
    pub error: f64,
    pub evaluations: u64,
    /// Bound on the mass discarded beyond the semi-infinite cutoff.
    pub truncated_tail: f64,
}

// QUADPACK 15-point Kronrod / 7-point Gauss pair.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_7,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

// semi-infinite reach: x - a up to TAIL_CUTOFF, u up to ln(1 + TAIL_CUTOFF)
const TAIL_CUTOFF: f64 = 1e12;
// tail bound assumes integrand decay no slower than x^{-1.2}: mass beyond
// x* is at most |f(x*)| * x* / 0.2
const TAIL_DECAY_MARGIN: f64 = 5.0;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    gk_err: f64,
    carried: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.gk_err == other.gk_err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.gk_err.total_cmp(&other.gk_err)
    }
}

// QUADPACK's error rescale: sharpens the raw |K - G| difference using the
// spread of the integrand over the panel.
fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let err = err.abs();
    let mut scaled = err;
    if resasc != 0.0 && err != 0.0 {
        let t = (200.0 * err / resasc).powf(1.5);
        scaled = if t < 1.0 { resasc * t } else { resasc };
    }
    let underflow = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if resabs > underflow {
        scaled = scaled.max(50.0 * f64::EPSILON * resabs);
    }
    scaled
}

// One Kronrod panel of a (value, carried_error) integrand.
fn gk15<F: Fn(f64) -> Result<(f64, f64)>>(
    f: &F,
    a: f64,
    b: f64,
    conservative: bool,
) -> Result<Panel> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);

    let eval = |x: f64| -> Result<(f64, f64)> {
        let (v, e) = f(x)?;
        if !v.is_finite() || !e.is_finite() {
            return Err(Error::NonFinite(format!(
                "integrand returned ({v}, {e}) at x = {x}"
            )));
        }
        Ok((v, e))
    };

    let (fc, ec) = eval(c)?;
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];
    let mut carried = ec.abs() * WGK[7];
    let mut fv = [0.0_f64; 15];
    fv[7] = fc;

    for j in 0..3 {
        let jtw = 2 * j + 1;
        let dx = h * XGK[jtw];
        let (f1, e1) = eval(c - dx)?;
        let (f2, e2) = eval(c + dx)?;
        fv[jtw] = f1;
        fv[14 - jtw] = f2;
        let fsum = f1 + f2;
        resg += WG[j] * fsum;
        resk += WGK[jtw] * fsum;
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
        carried += WGK[jtw] * (e1.abs() + e2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let dx = h * XGK[jtwm1];
        let (f1, e1) = eval(c - dx)?;
        let (f2, e2) = eval(c + dx)?;
        fv[jtwm1] = f1;
        fv[14 - jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
        carried += WGK[jtwm1] * (e1.abs() + e2.abs());
    }

    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let value = resk * h;
    resabs *= h.abs();
    resasc *= h.abs();
    let raw = (resk - resg) * h;
    let gk_err = if conservative {
        raw.abs().max(50.0 * f64::EPSILON * resabs)
    } else {
        rescale_error(raw, resabs, resasc)
    };

    Ok(Panel {
        a,
        b,
        value,
        gk_err,
        carried: carried * h.abs(),
    })
}

fn adaptive<F: Fn(f64) -> Result<(f64, f64)>>(
    f: &F,
    segments: &[(f64, f64)],
    cfg: &QuadratureConfig,
    mut evaluations: u64,
    truncated_tail: f64,
) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut gk_err = 0.0;
    let mut carried = 0.0;
    for &(a, b) in segments {
        let p = gk15(f, a, b, cfg.conservative_panels)?;
        evaluations += 15;
        value += p.value;
        gk_err += p.gk_err;
        carried += p.carried;
        heap.push(p);
    }

    let mut splits = 0_u32;
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        // the carried component is inherited from inner stages and cannot
        // be reduced here, so once the subdivision error sits well below
        // it further splitting only burns evaluations: the integrand is
        // noisy at the carried scale
        if gk_err <= tol || gk_err <= 0.5 * carried {
            break;
        }
        if splits >= cfg.max_subdivisions {
            return Err(Error::NoConvergence(format!(
                "quadrature error {gk_err:.3e} above tolerance {tol:.3e} \
                 after {splits} subdivisions (value {value:.6e})"
            )));
        }
        let worst = heap.pop().expect("heap non-empty while error positive");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            // interval at floating-point resolution; error is irreducible
            return Err(Error::NoConvergence(format!(
                "panel [{:.6e}, {:.6e}] cannot be split further; \
                 residual error {:.3e}",
                worst.a, worst.b, gk_err
            )));
        }
        value -= worst.value;
        gk_err -= worst.gk_err;
        carried -= worst.carried;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let p = gk15(f, a, b, cfg.conservative_panels)?;
            evaluations += 15;
            value += p.value;
            gk_err += p.gk_err;
            carried += p.carried;
            heap.push(p);
        }
        splits += 1;
    }

    Ok(Estimate {
        value,
        error: gk_err + carried + truncated_tail,
        evaluations,
        truncated_tail,
    })
}

fn build_segments(a: f64, b: f64, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| *p > a && *p < b && p.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut segs = Vec::with_capacity(cuts.len() + 1);
    let mut lo = a;
    for c in cuts {
        segs.push((lo, c));
        lo = c;
    }
    segs.push((lo, b));
    segs
}

/// Integrate `f` over [a, b]; `b` may be `f64::INFINITY`. Breakpoints
/// split the initial subdivision (useful when the integrand has kinks or
/// compact support much smaller than the interval).
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    integrate_carrying_error(|x| (f(x), 0.0), a, b, breakpoints, cfg)
}

/// As `integrate_with_breakpoints`, for integrands that return
/// (value, error) pairs; the error component is integrated in absolute
/// value and added to the reported bound.
pub fn integrate_carrying_error<F: Fn(f64) -> (f64, f64)>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if !a.is_finite() || b.is_nan() {
        return Err(Error::Domain(format!(
            "integration bounds [{a}, {b}] not supported"
        )));
    }
    if b <= a {
        if b == a {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
                truncated_tail: 0.0,
            });
        }
        return Err(Error::Domain(format!("reversed bounds [{a}, {b}]")));
    }

    if b.is_finite() {
        let segs = build_segments(a, b, breakpoints);
        adaptive(&|x| Ok(f(x)), &segs, cfg, 0, 0.0)
    } else {
        // x = a + e^u - 1, dx = e^u du
        let x_star = a + TAIL_CUTOFF;
        let (f_star, _) = f(x_star);
        // conservative: |f(x*)| * x* / (p-1) with decay exponent p >= 1.2
        let truncated_tail = if f_star.is_finite() && f_star != 0.0 {
            f_star.abs() * TAIL_CUTOFF * TAIL_DECAY_MARGIN
        } else {
            0.0
        };

        let mapped = |u: f64| -> Result<(f64, f64)> {
            let j = u.exp();
            let (v, e) = f(a + (j - 1.0));
            Ok((v * j, e * j))
        };
        let u_points: Vec<f64> = breakpoints
            .iter()
            .filter(|p| p.is_finite() && **p > a)
            .map(|p| (p - a).ln_1p())
            .collect();
        let segs = build_segments(0.0, TAIL_CUTOFF.ln_1p(), &u_points);
        adaptive(&mapped, &segs, cfg, 1, truncated_tail)
    }
}

/// Integrate `f` over [a, b]; `b` may be `f64::INFINITY`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    integrate_with_breakpoints(f, a, b, &[], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        // degree <= 22 is exact for GK15 up to roundoff
        let cfg = QuadratureConfig::default();
        let e = integrate(|x| 3.0 * x * x, 0.0, 2.0, &cfg).unwrap();
        assert!((e.value - 8.0).abs() < 1e-12);
        assert!(e.error < 1e-10);
    }

    #[test]
    fn smooth_reference() {
        let cfg = QuadratureConfig::default();
        let e = integrate(|x| (-x).exp() * x.sin(), 0.0, 10.0, &cfg).unwrap();
        // int_0^10 e^{-x} sin x dx = (1 - e^{-10}(cos 10 + sin 10))/2
        let want = 0.5 * (1.0 - (-10.0_f64).exp() * (10.0_f64.cos() + 10.0_f64.sin()));
        assert!((e.value - want).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2; integrable singularity at 0
        let cfg = QuadratureConfig::default();
        let e = integrate(|x| x.powf(-0.5), 0.0, 1.0, &cfg).unwrap();
        assert!((e.value - 2.0).abs() < 1e-8, "{}", e.value);
        assert!((e.value - 2.0).abs() <= e.error * 10.0 + 1e-9);
    }

    #[test]
    fn semi_infinite_gamma_moment() {
        // int_0^inf x^{0.2} x^{-2} e^{-1/x} dx = Gamma(0.8)
        let cfg = QuadratureConfig::default();
        let f = |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                x.powf(0.2 - 2.0) * (-1.0 / x).exp()
            }
        };
        let e = integrate(f, 0.0, f64::INFINITY, &cfg).unwrap();
        let want = 1.164_229_713_725_303_3; // Gamma(0.8), mpmath
        assert!(
            (e.value - want).abs() < 1e-9,
            "value {} want {want}",
            e.value
        );
    }

    #[test]
    fn semi_infinite_gaussian() {
        let cfg = QuadratureConfig::default();
        let e = integrate(|x: f64| (-x * x).exp(), 0.0, f64::INFINITY, &cfg).unwrap();
        let want = 0.886_226_925_452_758; // sqrt(pi)/2
        assert!((e.value - want).abs() < 1e-11);
        assert_eq!(e.truncated_tail, 0.0);
    }

    #[test]
    fn breakpoints_rescue_compact_support() {
        // support [0, 1e-3] inside [0, inf): plain panels would see zeros
        // at every node without the breakpoint hint
        let cfg = QuadratureConfig::default();
        let f = |x: f64| if x < 1e-3 { 1.0 } else { 0.0 };
        let e = integrate_with_breakpoints(f, 0.0, f64::INFINITY, &[1e-3], &cfg).unwrap();
        assert!((e.value - 1e-3).abs() < 1e-12, "{}", e.value);
    }

    #[test]
    fn error_bound_is_honest() {
        // compare against a one-level-refined value on a hard oscillatory
        let cfg = QuadratureConfig::default();
        let f = |x: f64| (20.0 * x).sin() / (1.0 + x * x);
        let coarse = integrate(f, 0.0, 3.0, &cfg).unwrap();
        let refined = integrate(f, 0.0, 3.0, &cfg.tightened(1e-3)).unwrap();
        assert!(
            (coarse.value - refined.value).abs() <= coarse.error.max(1e-12),
            "diff {} > bound {}",
            (coarse.value - refined.value).abs(),
            coarse.error
        );
    }

    #[test]
    fn carried_error_is_reported() {
        let cfg = QuadratureConfig::default();
        let e = integrate_carrying_error(|_x| (1.0, 1e-6), 0.0, 1.0, &[], &cfg).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        // carried error integrates to about 1e-6 and must appear in bound
        assert!(e.error >= 0.9e-6, "carried error lost: {}", e.error);
    }

    #[test]
    fn nan_integrand_is_diagnosed() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, &cfg);
        match r {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("x =")),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn non_convergence_reports() {
        let cfg = QuadratureConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_subdivisions: 3,
            conservative_panels: false,
        };
        let r = integrate(|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &cfg);
        assert!(matches!(r, Err(Error::NoConvergence(_))));
    }

    #[test]
    fn zero_width_interval() {
        let cfg = QuadratureConfig::default();
        let e = integrate(|_| 1.0, 2.0, 2.0, &cfg).unwrap();
        assert_eq!(e.value, 0.0);
    }
}
