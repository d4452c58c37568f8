//! Normal and chi-square quantile routines.
//!
//! Everything here is built from two primitives: the regularized incomplete
//! gamma function (series expansion below `a + 1`, continued fraction
//! above) and a rational initial guess for the normal quantile refined by
//! Halley steps against the accurate CDF. Absolute error is well below
//! 1e-10 across the ranges the library uses.

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction.
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Error function via the incomplete gamma function.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        -erf(-x)
    } else if x == 0.0 {
        0.0
    } else {
        gamma_p(0.5, x * x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x == 0.0 {
        1.0
    } else {
        gamma_q(0.5, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile for `p` in (0, 1).
///
/// Rational initial estimate refined by two Halley steps against
/// [`normal_cdf`]; absolute error is near machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal_quantile domain: {p}");
    let mut x = normal_quantile_estimate(p);
    for _ in 0..2 {
        let err = normal_cdf(x) - p;
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let u = err / pdf;
        // Halley step: accounts for the curvature phi'(x) = -x phi(x).
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// Rational approximation for the normal quantile (relative error about
/// 1e-9, refined by the caller).
fn normal_quantile_estimate(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "chi_square_cdf needs dof >= 1");
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

/// Chi-square density with `dof` degrees of freedom.
fn chi_square_pdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = dof as f64 / 2.0;
    ((a - 1.0) * x.ln() - x / 2.0 - a * 2f64.ln() - ln_gamma(a)).exp()
}

/// Chi-square quantile for `p` in (0, 1): the `x` with CDF(x) = p.
///
/// Wilson-Hilferty initial guess, then bracketed Newton iterations.
pub fn chi_square_quantile(p: f64, dof: usize) -> f64 {
    assert!(p > 0.0 && p < 1.0, "chi_square_quantile domain: {p}");
    assert!(dof >= 1, "chi_square_quantile needs dof >= 1");
    let k = dof as f64;
    let z = normal_quantile(p);
    let wh = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    let mut x = if wh.is_finite() && wh > 0.0 { wh } else { k };

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let f = chi_square_cdf(x, dof) - p;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let pdf = chi_square_pdf(x, dof);
        let step = if pdf > 0.0 { f / pdf } else { 0.0 };
        let mut next = x - step;
        if !(next > lo && (hi.is_infinite() || next < hi)) || step == 0.0 {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                lo.max(x) * 2.0 + 1.0
            };
        }
        if (next - x).abs() <= 1e-13 * x.max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_frozen_values() {
        // Reference values computed with an independent implementation.
        let cases = [
            (0.025, -1.959963984540054),
            (0.1, -1.2815515655446),
            (0.5, 0.0),
            (0.9, 1.2815515655446),
            (0.975, 1.959963984540054),
            (0.9833333333333333, 2.128045234184983),
            (0.995833333333333, 2.638257273476724),
        ];
        for (p, want) in cases {
            assert!(
                (normal_quantile(p) - want).abs() < 1e-10,
                "p={p}: {} vs {want}",
                normal_quantile(p)
            );
        }
    }

    #[test]
    fn chi_square_quantile_frozen_values() {
        let cases = [
            (0.8, 1, 1.642374415149818),
            (0.8, 2, 3.218875824868201),
            (0.8, 3, 4.64162767608745),
            (0.8, 4, 5.988616694004246),
            (0.8, 6, 8.558059720250668),
            (0.9, 1, 2.705543454095404),
            (0.7, 24, 27.09596127561774),
            (0.99, 24, 42.97982013935165),
        ];
        for (p, dof, want) in cases {
            let got = chi_square_quantile(p, dof);
            assert!((got - want).abs() < 1e-9, "p={p} dof={dof}: {got} vs {want}");
        }
    }

    #[test]
    fn chi_square_dof1_matches_squared_normal() {
        for p in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let z = normal_quantile(0.5 + p / 2.0);
            assert!((chi_square_quantile(p, 1) - z * z).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn quantile_cdf_round_trip() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-13, "p={p}");
            for dof in [1, 2, 5, 12, 24] {
                let x = chi_square_quantile(p, dof);
                assert!(
                    (chi_square_cdf(x, dof) - p).abs() < 1e-12,
                    "p={p} dof={dof}"
                );
            }
        }
    }

    #[test]
    fn normal_quantile_is_antisymmetric() {
        for p in [0.01, 0.2, 0.35, 0.49] {
            assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_special_case() {
        // dof = 2 is Exp(1/2): CDF 1 - exp(-x/2), quantile -2 ln(1-p).
        for p in [0.1f64, 0.5, 0.8, 0.95] {
            let want = -2.0 * (1.0 - p).ln();
            assert!((chi_square_quantile(p, 2) - want).abs() < 1e-11);
        }
    }

    #[test]
    fn erf_small_and_large_arguments() {
        assert!((erf(0.5) - 0.5204998778130465).abs() < 1e-14);
        assert!((erfc(3.0) - 2.209049699858544e-5).abs() < 1e-18);
        assert!((erf(-0.5) + erf(0.5)).abs() < 1e-16);
    }
}
