//! Special functions used throughout the array model: Bessel functions of the
//! first kind (integer and half-integer order), Legendre and associated
//! Legendre polynomials, spherical harmonics and the unnormalized sinc.
//!
//! Integer-order Bessel values come from Miller's downward recurrence with
//! sum normalization (power series below x = 2); half-integer orders go
//! through the spherical Bessel recurrence, which is stable downward.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecFunError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("index out of range: {0}")]
    Index(String),
}

/// Order selector for `bessel_j`. `HalfInteger(l)` means order `l + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    Integer(i64),
    HalfInteger(u32),
}

/// J_n(x) for n = 0..=n_max at a single non-negative argument.
///
/// Series for x < 2, Miller's downward recurrence with the
/// J_0 + 2*sum J_{2k} = 1 normalization otherwise.
pub fn bessel_j_table(n_max: usize, x: f64) -> Result<Vec<f64>, SpecFunError> {
    if !(x >= 0.0) {
        return Err(SpecFunError::Domain(format!(
            "bessel_j requires x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        let mut t = vec![0.0; n_max + 1];
        t[0] = 1.0;
        return Ok(t);
    }
    if x < 2.0 {
        return Ok((0..=n_max).map(|n| bessel_j_series(n, x)).collect());
    }
    Ok(bessel_j_miller(n_max, x))
}

/// Ascending power series; adequate for x < 2 at any order.
fn bessel_j_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    // leading term (x/2)^n / n!, computed incrementally to dodge overflow
    let mut term = 1.0_f64;
    for k in 1..=n {
        term *= half / k as f64;
        if term == 0.0 {
            return 0.0;
        }
    }
    let mut sum = term;
    let x2 = half * half;
    for k in 1..200 {
        term *= -x2 / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn bessel_j_miller(n_max: usize, x: f64) -> Vec<f64> {
    // start well above both the requested order and the turning point
    let start = {
        let a = n_max.max(x.ceil() as usize);
        let pad = (8.0 * x.cbrt()).ceil() as usize + 24;
        (a + pad + 1) & !1 // even
    };
    let mut out = vec![0.0; n_max + 1];
    let mut jp = 0.0_f64; // J_{k+1}
    let mut jc = 1e-300_f64; // J_k
    let mut norm = 0.0_f64; // J_0 + 2 sum J_{2k}
    for k in (0..start).rev() {
        let jm = (2.0 * (k + 1) as f64 / x) * jc - jp; // J_k
        jp = jc;
        jc = jm;
        if k <= n_max {
            out[k] = jc;
        }
        if k % 2 == 0 {
            norm += if k == 0 { jc } else { 2.0 * jc };
        }
        if jc.abs() > 1e250 {
            jp /= 1e250;
            jc /= 1e250;
            norm /= 1e250;
            for v in out.iter_mut() {
                *v /= 1e250;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Spherical Bessel j_l(x) for l = 0..=l_max, downward recurrence.
pub fn spherical_j_table(l_max: usize, x: f64) -> Result<Vec<f64>, SpecFunError> {
    if !(x >= 0.0) {
        return Err(SpecFunError::Domain(format!(
            "spherical_j requires x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        let mut t = vec![0.0; l_max + 1];
        t[0] = 1.0;
        return Ok(t);
    }
    if x < 0.1 {
        // series j_l(x) = x^l/(2l+1)!! * (1 - x^2/(2(2l+3)) + x^4/(8(2l+3)(2l+5)) - ...)
        let mut t = Vec::with_capacity(l_max + 1);
        let mut lead = 1.0_f64; // x^l/(2l+1)!!
        for l in 0..=l_max {
            if l > 0 {
                lead *= x / (2 * l + 1) as f64;
            }
            let d = 2.0 * (2 * l + 3) as f64;
            let d2 = 8.0 * ((2 * l + 3) * (2 * l + 5)) as f64;
            t.push(lead * (1.0 - x * x / d + x.powi(4) / d2));
        }
        return Ok(t);
    }
    let start = {
        let a = l_max.max(x.ceil() as usize);
        a + (8.0 * x.cbrt()).ceil() as usize + 24
    };
    let mut out = vec![0.0; l_max + 1];
    let mut jp = 0.0_f64;
    let mut jc = 1e-300_f64;
    for l in (0..start).rev() {
        let jm = ((2 * l + 3) as f64 / x) * jc - jp;
        jp = jc;
        jc = jm;
        if l <= l_max {
            out[l] = jc;
        }
        if jc.abs() > 1e250 {
            jp /= 1e250;
            jc /= 1e250;
            for v in out.iter_mut() {
                *v /= 1e250;
            }
        }
    }
    // normalize against whichever closed form is better conditioned
    let j0 = x.sin() / x;
    let j1 = x.sin() / (x * x) - x.cos() / x;
    let scale = if j0.abs() >= j1.abs() {
        j0 / out[0]
    } else if l_max >= 1 {
        j1 / out[1]
    } else {
        j0 / out[0]
    };
    for v in out.iter_mut() {
        *v *= scale;
    }
    Ok(out)
}

/// Bessel function of the first kind.
pub fn bessel_j(order: BesselOrder, x: f64) -> Result<f64, SpecFunError> {
    if x.is_nan() {
        return Err(SpecFunError::Domain("bessel_j of NaN".into()));
    }
    match order {
        BesselOrder::Integer(n) => {
            let a = n.unsigned_abs() as usize;
            let v = bessel_j_table(a, x)?[a];
            Ok(if n < 0 && n % 2 != 0 { -v } else { v })
        }
        BesselOrder::HalfInteger(l) => {
            if x == 0.0 {
                return Ok(0.0);
            }
            let j = spherical_j_table(l as usize, x)?[l as usize];
            Ok((2.0 * x / PI).sqrt() * j)
        }
    }
}

/// Legendre polynomial P_l(x) by Bonnet recurrence.
pub fn legendre_p(l: usize, x: f64) -> Result<f64, SpecFunError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(SpecFunError::Domain(format!(
            "legendre_p requires |x| <= 1, got {x}"
        )));
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    if l == 0 {
        return Ok(p0);
    }
    for k in 2..=l {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}

/// Associated Legendre P_l^m(x) with the Condon-Shortley (-1)^m factor.
/// Negative m through the standard factorial-ratio relation.
pub fn assoc_legendre(l: usize, m: i64, x: f64) -> Result<f64, SpecFunError> {
    if m.unsigned_abs() as usize > l {
        return Err(SpecFunError::Index(format!("|m|={} > l={l}", m.abs())));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(SpecFunError::Domain(format!(
            "assoc_legendre requires |x| <= 1, got {x}"
        )));
    }
    let ma = m.unsigned_abs() as usize;
    // P_m^m = (-1)^m (2m-1)!! (1-x^2)^{m/2}, then upward in l
    let s = (1.0 - x * x).sqrt();
    let mut pmm = 1.0_f64;
    for k in 1..=ma {
        pmm *= -((2 * k - 1) as f64) * s;
    }
    let mut val = if l == ma {
        pmm
    } else {
        let mut pm1 = pmm;
        let mut pc = x * (2 * ma + 1) as f64 * pmm; // P_{m+1}^m
        for k in (ma + 2)..=l {
            let pn = ((2 * k - 1) as f64 * x * pc - (k + ma - 1) as f64 * pm1)
                / (k - ma) as f64;
            pm1 = pc;
            pc = pn;
        }
        pc
    };
    if m < 0 {
        // P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m
        let mut ratio = 1.0_f64;
        for k in (l - ma + 1)..=(l + ma) {
            ratio /= k as f64;
        }
        val *= ratio * if ma % 2 == 0 { 1.0 } else { -1.0 };
    }
    Ok(val)
}

/// Column of fully normalized associated Legendre values
/// Pbar_l^m(x) = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x)
/// for l = m..=l_max (m >= 0), stable for large l.
pub fn norm_assoc_legendre_col(m: usize, l_max: usize, x: f64) -> Vec<f64> {
    debug_assert!(m <= l_max);
    let s = (1.0 - x * x).sqrt();
    // Pbar_m^m
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for k in 1..=m {
        pmm *= -(((2 * k + 1) as f64 / (2 * k) as f64).sqrt()) * s;
    }
    let mut out = Vec::with_capacity(l_max - m + 1);
    out.push(pmm);
    if l_max == m {
        return out;
    }
    let mut pm1 = pmm;
    let mut pc = x * ((2 * m + 3) as f64).sqrt() * pmm; // Pbar_{m+1}^m
    out.push(pc);
    for l in (m + 2)..=l_max {
        let lf = l as f64;
        let mf = m as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
            .sqrt();
        let pn = a * (x * pc - b * pm1);
        pm1 = pc;
        pc = pn;
        out.push(pc);
    }
    out
}

/// Spherical harmonic Y_l^m(phi, theta); phi azimuth, theta polar.
///
/// Orthonormal over the unit sphere and satisfying the addition theorem,
/// with Y_l^{-m} = (-1)^m conj(Y_l^m).
pub fn spherical_harmonic(
    l: usize,
    m: i64,
    phi: f64,
    theta: f64,
) -> Result<Complex64, SpecFunError> {
    if m.unsigned_abs() as usize > l {
        return Err(SpecFunError::Index(format!("|m|={} > l={l}", m.abs())));
    }
    if !phi.is_finite() || !theta.is_finite() {
        return Err(SpecFunError::Domain("non-finite angle".into()));
    }
    let ma = m.unsigned_abs() as usize;
    let pbar = norm_assoc_legendre_col(ma, l, theta.cos());
    let plm = pbar[l - ma];
    let e = Complex64::from_polar(1.0, ma as f64 * phi);
    let y = plm * e;
    Ok(if m >= 0 {
        y
    } else if ma % 2 == 0 {
        y.conj()
    } else {
        -y.conj()
    })
}

/// All Y_l^m(phi, theta) for 0 <= l <= l_max, packed row-major at
/// index l*l + (l + m).
pub fn ylm_table(l_max: usize, phi: f64, theta: f64) -> Vec<Complex64> {
    let x = theta.cos();
    let mut out = vec![Complex64::ZERO; (l_max + 1) * (l_max + 1)];
    for m in 0..=l_max {
        let col = norm_assoc_legendre_col(m, l_max, x);
        let e = Complex64::from_polar(1.0, m as f64 * phi);
        let neg = if m % 2 == 0 { 1.0 } else { -1.0 };
        for l in m..=l_max {
            let y = col[l - m] * e;
            out[l * l + l + m] = y;
            if m > 0 {
                out[l * l + l - m] = neg * y.conj();
            }
        }
    }
    out
}

/// Packed index into an (l, m) table.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Unnormalized sinc, sin(x)/x, with the removable singularity filled in.
pub fn sinc_u(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    /// Independent oracle: direct quadrature of the defining integral
    /// J_n(x) = (1/2pi) int_0^{2pi} e^{j(x sin t - n t)} dt.
    fn bessel_quadrature(n: i64, x: f64) -> f64 {
        let steps = 4096;
        let mut acc = Complex64::ZERO;
        for k in 0..steps {
            let t = 2.0 * PI * k as f64 / steps as f64;
            acc += Complex64::from_polar(1.0, x * t.sin() - n as f64 * t);
        }
        (acc / steps as f64).re
    }

    #[test]
    fn integer_order_matches_quadrature() {
        for &(n, x) in &[(0i64, 0.5), (0, 5.0), (1, 3.0), (5, 12.0), (17, 20.0), (40, 35.0)] {
            let v = bessel_j(BesselOrder::Integer(n), x).unwrap();
            let o = bessel_quadrature(n, x);
            assert!(
                (v - o).abs() <= 1e-12 * o.abs().max(1.0),
                "J_{n}({x}) = {v} vs oracle {o}"
            );
        }
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(BesselOrder::Integer(0), 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(BesselOrder::Integer(1), 0.0).unwrap(), 0.0);
        // J_{1/2}(x) = sqrt(2/pi) sin(x)/sqrt(x); at x = pi/2 this is 2/pi
        let v = bessel_j(BesselOrder::HalfInteger(0), PI / 2.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 / PI, epsilon = 1e-14);
    }

    #[test]
    fn half_integer_matches_closed_form() {
        for &x in &[0.3, 1.0, 7.5, 31.4] {
            let v = bessel_j(BesselOrder::HalfInteger(0), x).unwrap();
            assert_abs_diff_eq!(v, (2.0 / (PI * x)).sqrt() * x.sin(), epsilon = 1e-13);
            let v1 = bessel_j(BesselOrder::HalfInteger(1), x).unwrap();
            let j1 = x.sin() / (x * x) - x.cos() / x;
            assert_abs_diff_eq!(v1, (2.0 * x / PI).sqrt() * j1, epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(bessel_j(BesselOrder::Integer(0), -1.0).is_err());
        assert!(bessel_j(BesselOrder::Integer(0), f64::NAN).is_err());
        assert!(legendre_p(2, 1.5).is_err());
        assert!(assoc_legendre(1, 2, 0.0).is_err());
        assert!(spherical_harmonic(1, 2, 0.0, 0.0).is_err());
    }

    #[test]
    fn legendre_small_orders() {
        assert_eq!(legendre_p(0, 0.7).unwrap(), 1.0);
        assert_eq!(legendre_p(1, -0.3).unwrap(), -0.3);
        // Rodrigues oracle: P_2(x) = (3x^2 - 1)/2
        assert_abs_diff_eq!(legendre_p(2, 0.5).unwrap(), -0.125, epsilon = 1e-15);
        for &x in &[-0.9, -0.2, 0.0, 0.4, 1.0] {
            for l in 0..8usize {
                // Bonnet vs explicit Rodrigues at low order
                let o = match l {
                    0 => 1.0,
                    1 => x,
                    2 => 0.5 * (3.0 * x * x - 1.0),
                    3 => 0.5 * (5.0 * x * x * x - 3.0 * x),
                    _ => continue,
                };
                assert_abs_diff_eq!(legendre_p(l, x).unwrap(), o, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn assoc_legendre_values() {
        assert_abs_diff_eq!(assoc_legendre(2, 0, 0.5).unwrap(), -0.125, epsilon = 1e-15);
        // P_1^1(x) = -sqrt(1-x^2) with Condon-Shortley
        assert_abs_diff_eq!(assoc_legendre(1, 1, 0.0).unwrap(), -1.0, epsilon = 1e-15);
        assert_eq!(assoc_legendre(1, 1, 1.0).unwrap(), 0.0);
        // m = 0 reduces to legendre_p
        for l in 0..10usize {
            assert_abs_diff_eq!(
                assoc_legendre(l, 0, 0.3).unwrap(),
                legendre_p(l, 0.3).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn spherical_harmonic_y00() {
        let y = spherical_harmonic(0, 0, 1.3, 2.2).unwrap();
        assert_abs_diff_eq!(y.re, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ylm_table_matches_single_eval() {
        let (phi, theta) = (0.8, 1.9);
        let t = ylm_table(6, phi, theta);
        for l in 0..=6usize {
            for m in -(l as i64)..=(l as i64) {
                let y = spherical_harmonic(l, m, phi, theta).unwrap();
                let p = t[lm_index(l, m)];
                assert_abs_diff_eq!(y.re, p.re, epsilon = 1e-13);
                assert_abs_diff_eq!(y.im, p.im, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc_u(0.0), 1.0);
        assert_abs_diff_eq!(sinc_u(PI), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sinc_u(PI / 2.0), 2.0 / PI, epsilon = 1e-15);
        // continuity across the series cutoff
        assert_abs_diff_eq!(sinc_u(9.9e-5), sinc_u(1.01e-4), epsilon = 1e-10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_abs_diff_eq!(s, 2.0 / 11.0, epsilon = 1e-13);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn negative_order_symmetry(n in 1i64..40, x in 0.0f64..60.0) {
            let a = bessel_j(BesselOrder::Integer(-n), x).unwrap();
            let b = bessel_j(BesselOrder::Integer(n), x).unwrap();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((a - sign * b).abs() < 1e-12);
        }
    }
}
