//! Scalar special functions: gamma, error function family, modified Bessel
//! K of fractional order, and domain-checked log1p/expm1 wrappers.
//!
//! Everything here is deterministic and allocation-free. Accuracy targets:
//! gamma and erf/erfc near machine precision, bessel_k relative error below
//! 1e-10 on the order/argument ranges used by the Matern correlation.

use crate::error::{Error, Result};

/// sqrt(2*pi)
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
/// 1/sqrt(pi)
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

// Lanczos approximation, g = 7, 9 coefficients. Relative error < 2e-15 on
// the positive axis after reflection.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function.
///
/// Errors: `Domain` at poles (non-positive integers), `Overflow` once the
/// result exceeds f64 range (x > 171.62).
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("gamma: NaN argument".into()));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::Domain(format!("gamma: pole at {x}")));
    }
    if x > 171.624_376_956_302_7 {
        return Err(Error::Overflow(format!("gamma({x}) exceeds f64 range")));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: gamma(x) gamma(1-x) = pi / sin(pi x)
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_unchecked(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        SQRT_2PI * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Natural log of gamma for x > 0; avoids overflow for large x.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("ln_gamma: need x > 0, got {x}")));
    }
    if x < 0.5 {
        // ln gamma(x) = ln(pi / sin(pi x)) - ln gamma(1 - x), x in (0, 0.5)
        let refl = std::f64::consts::PI / ((std::f64::consts::PI * x).sin());
        return Ok(refl.ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(SQRT_2PI.ln() + (z + 0.5) * t.ln() - t + acc.ln())
}

// Cody-style rational approximations for erf/erfc (three regimes).
// Coefficients from the classic minimax fits; |erf| error < 1e-16 relative
// in the core, erfc relative error < 1e-15 out to the underflow edge.

const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6,
    113.864_154_151_050_16,
    377.485_237_685_302_03,
    3_209.377_589_138_469_4,
    0.185_777_706_184_603_15,
];
const ERF_B: [f64; 4] = [
    23.601_290_952_344_122,
    244.024_637_934_444_17,
    1_282.616_526_077_372_3,
    2_844.236_833_439_171,
];
const ERFC_C: [f64; 9] = [
    0.564_188_496_988_670_1,
    8.883_149_794_388_376,
    66.119_190_637_141_63,
    298.635_138_197_400_1,
    881.952_221_241_769,
    1_712.047_612_634_070_7,
    2_051.078_377_826_071_6,
    1_230.339_354_797_997_2,
    2.153_115_354_744_038_3e-8,
];
const ERFC_D: [f64; 8] = [
    15.744_926_110_709_835,
    117.693_950_891_312_5,
    537.181_101_862_009_9,
    1_621.389_574_566_69,
    3_290.799_235_733_459_7,
    4_362.619_090_143_247,
    3_439.367_674_143_721_6,
    1_230.339_354_803_749_4,
];
const ERFC_P: [f64; 6] = [
    0.305_326_634_961_232_36,
    0.360_344_899_949_804_45,
    0.125_781_726_111_229_26,
    0.016_083_785_148_742_275,
    6.587_491_615_298_378e-4,
    0.016_315_387_137_302_097,
];
const ERFC_Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_460_4,
    0.527_905_102_951_428_5,
    0.060_518_341_312_441_32,
    0.002_335_204_976_268_691_8,
];

// erfc core for x >= 0.46875; split exp(-x^2) to limit argument rounding.
fn erfc_pos(x: f64) -> f64 {
    if x > 26.543 {
        return 0.0;
    }
    let frac = if x <= 4.0 {
        let mut num = ERFC_C[8] * x;
        let mut den = x;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * x;
            den = (den + ERFC_D[i]) * x;
        }
        (num + ERFC_C[7]) / (den + ERFC_D[7])
    } else {
        let y = 1.0 / (x * x);
        let mut num = ERFC_P[5] * y;
        let mut den = y;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * y;
            den = (den + ERFC_Q[i]) * y;
        }
        let r = y * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        (FRAC_1_SQRT_PI - r) / x
    };
    // exp(-x^2) = exp(-hi^2) * exp(-(x-hi)(x+hi)) with hi on a 1/16 grid
    let hi = (x * 16.0).trunc() / 16.0;
    let del = (x - hi) * (x + hi);
    (-hi * hi).exp() * (-del).exp() * frac
}

/// Error function; |error| < 6e-17 on the core interval.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        let y = x * x;
        let num = ((((ERF_A[4] * y + ERF_A[0]) * y + ERF_A[1]) * y + ERF_A[2]) * y) + ERF_A[3];
        let den = (((y + ERF_B[0]) * y + ERF_B[1]) * y + ERF_B[2]) * y + ERF_B[3];
        x * num / den
    } else {
        let v = 1.0 - erfc_pos(ax);
        if x < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// Complementary error function, accurate into the far tail.
pub fn erfc(x: f64) -> f64 {
    if x < -0.46875 {
        2.0 - erfc_pos(-x)
    } else if x <= 0.46875 {
        1.0 - erf(x)
    } else {
        erfc_pos(x)
    }
}

/// Standard normal CDF. Total on all reals; underflows to 0/1 in the far
/// tails exactly where f64 does.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

// Taylor coefficients of 1/Gamma(1+z) around 0 (DLMF 5.7.1 shifted).
const INV_GAMMA1P: [f64; 9] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_24,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_33,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
];

// gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), stable through mu = 0.
fn temme_gam1(mu: f64) -> f64 {
    if mu.abs() < 0.1 {
        let m2 = mu * mu;
        -(INV_GAMMA1P[1] + m2 * (INV_GAMMA1P[3] + m2 * (INV_GAMMA1P[5] + m2 * INV_GAMMA1P[7])))
    } else {
        let gammi = 1.0 / gamma_unchecked(1.0 - mu);
        let gampl = 1.0 / gamma_unchecked(1.0 + mu);
        (gammi - gampl) / (2.0 * mu)
    }
}

/// Modified Bessel function of the second kind K_nu(x), fractional order.
///
/// Temme's series for x <= 2, Steed's continued fraction above, upward
/// recurrence in the order. Validated to < 1e-12 relative error for
/// nu in [0, 5.5], x in [1e-8, 50].
///
/// Errors: `Domain` for x <= 0 or nu < 0, `Overflow` when the value leaves
/// f64 range (x near 0 with large nu), `NoConvergence` if the series stalls.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;
    if !(x > 0.0) || !nu.is_finite() || nu < 0.0 {
        return Err(Error::Domain(format!(
            "bessel_k: need x > 0 and nu >= 0, got nu={nu}, x={x}"
        )));
    }
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64; // |mu| <= 1/2
    let mu2 = mu * mu;

    let (mut k_mu, mut k_mu1);
    if x <= 2.0 {
        // Temme 1975 series
        let x2 = 0.5 * x;
        let pimu = std::f64::consts::PI * mu;
        let fact = if pimu.abs() < 1e-290 {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < 1e-290 { 1.0 } else { e.sinh() / e };
        let gam1 = temme_gam1(mu);
        let gampl = 1.0 / gamma_unchecked(1.0 + mu);
        let gammi = 1.0 / gamma_unchecked(1.0 - mu);
        let gam2 = 0.5 * (gammi + gampl);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let d2 = x2 * x2;
        let mut sum1 = p;
        let mut converged = false;
        for i in 1..=MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= d2 / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "bessel_k series stalled at nu={nu}, x={x}"
            )));
        }
        k_mu = sum;
        k_mu1 = sum1 * 2.0 / x;
    } else {
        // Steed/Thompson-Barnett CF2
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = delh;
        let mut q1 = 0.0_f64;
        let mut q2 = 1.0_f64;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut converged = false;
        for i in 2..=MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "bessel_k continued fraction stalled at nu={nu}, x={x}"
            )));
        }
        h = a1 * h;
        k_mu = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    }

    // upward recurrence K_{m+1} = 2 m / x * K_m + K_{m-1}; after nl steps
    // k_mu holds K_{mu+nl} = K_nu
    for i in 1..=nl {
        let next = (mu + i as f64) * (2.0 / x) * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    let val = k_mu;
    if !val.is_finite() {
        return Err(Error::Overflow(format!(
            "bessel_k({nu}, {x}) exceeds f64 range"
        )));
    }
    Ok(val)
}

/// ln(1+x) with the domain made explicit: defined for x > -1.
pub fn log1p_checked(x: f64) -> Result<f64> {
    if x.is_nan() || x <= -1.0 {
        return Err(Error::Domain(format!("log1p: need x > -1, got {x}")));
    }
    Ok(x.ln_1p())
}

/// exp(x)-1 with an explicit overflow check (x > 709.78 leaves f64 range).
pub fn expm1_checked(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("expm1: NaN argument".into()));
    }
    if x > 709.782_712_893_384 {
        return Err(Error::Overflow(format!("expm1({x}) exceeds f64 range")));
    }
    Ok(x.exp_m1())
}
