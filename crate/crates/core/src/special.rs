//! Special functions: error function and gamma.

use crate::scalar::Scalar;

/// Gauss error function.
///
/// Uses the Taylor series near the origin and the continued fraction for
/// `erfc` in the tails, giving close to full double precision everywhere.
pub fn erf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return -erf(-x);
    }
    if x < T::lit(2.5) {
        erf_series(x)
    } else {
        T::one() - erfc_continued_fraction(x)
    }
}

fn erf_series<T: Scalar>(x: T) -> T {
    // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        let nf = T::from_u32(n).unwrap();
        term = -term * x2 / nf;
        let contrib = term / T::from_u32(2 * n + 1).unwrap();
        sum = sum + contrib;
        if contrib.abs() <= sum.abs() * T::epsilon() * T::lit(0.25) || n > 200 {
            break;
        }
    }
    sum * T::lit(2.0) / T::PI().sqrt()
}

fn erfc_continued_fraction<T: Scalar>(x: T) -> T {
    // Lentz evaluation of erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = T::min_positive_value() * T::lit(1e10);
    let mut f = x;
    if f == T::zero() {
        f = tiny;
    }
    let mut c = f;
    let mut d = T::zero();
    for k in 1..300u32 {
        let a = T::from_u32(k).unwrap() * T::lit(0.5);
        d = x + a * d;
        if d == T::zero() {
            d = tiny;
        }
        c = x + a / c;
        if c == T::zero() {
            c = tiny;
        }
        d = T::one() / d;
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    (-x * x).exp() / (T::PI().sqrt() * f)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, n = 9) with reflection
/// for arguments below one half. Returns `None` at the poles (zero and the
/// negative integers).
pub fn gamma<T: Scalar>(x: T) -> Option<T> {
    if x <= T::zero() && x == x.floor() {
        return None;
    }
    if x < T::lit(0.5) {
        // Reflection: Γ(x) Γ(1-x) = π / sin(πx)
        let s = (T::PI() * x).sin();
        return gamma(T::one() - x).map(|g| T::PI() / (s * g));
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(*c) / (x + T::from_usize(i).unwrap());
    }
    let t = x + T::lit(LANCZOS_G) + T::lit(0.5);
    let two_pi = T::PI() * T::lit(2.0);
    Some(two_pi.sqrt() * t.powf(x + T::lit(0.5)) * (-t).exp() * acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson quadrature of 2/sqrt(pi) * exp(-t^2) on [0, x].
    fn erf_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let f = |t: f64| (-t * t).exp();
        let mut s = f(0.0) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn erf_matches_quadrature() {
        for &x in &[0.1, 0.5, 1.0, 1.7, 2.4, 2.6, 3.0, 4.5] {
            let q = erf_quadrature(x);
            assert!((erf(x) - q).abs() < 1e-12, "x={x}: {} vs {q}", erf(x));
        }
    }

    #[test]
    fn erf_symmetry_and_limits() {
        assert_eq!(erf(0.0f64), 0.0);
        for &x in &[0.3, 1.1, 2.9] {
            assert_eq!(erf(-x), -erf(x));
        }
        assert!((erf(3.0f64) - 0.999_977_909_5).abs() < 1e-6);
        assert!((erf(10.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn erf_single_precision() {
        assert!((erf(1.0f32) - 0.842_700_8).abs() < 1e-6);
    }

    #[test]
    fn gamma_factorials() {
        let mut fact = 1.0f64;
        for n in 1..=10u32 {
            if n > 1 {
                fact *= (n - 1) as f64;
            }
            let g = gamma(n as f64).unwrap();
            assert!(((g - fact) / fact).abs() < 1e-9, "gamma({n}) = {g}");
        }
    }

    #[test]
    fn gamma_half_and_reflection() {
        let g = gamma(0.5f64).unwrap();
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // Γ(-0.5) = -2 sqrt(pi)
        let g = gamma(-0.5f64).unwrap();
        assert!((g + 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn gamma_poles() {
        assert!(gamma(0.0f64).is_none());
        assert!(gamma(-3.0f64).is_none());
    }
}
