//! Downlink precoding: channel-conjugate beams, multiuser phase-mode
//! zero-forcing (null-space solves over the array's mode basis), the
//! mode cross-coupling coefficients, and link-level SINR reports.

use crate::channel::{
    received_field_with, AntennaSamples, ArrayKind, ChannelModel, Scenario,
};
use crate::estimation::{Truncation, NU};
use crate::geometry::{self, Point3};
use crate::specfun::{bessel_j_table, lm_index, spherical_j_table, ylm_table};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PrecodingError {
    #[error("user index {0} out of range")]
    InvalidUser(usize),
    #[error("cross coefficient requires distinct users")]
    SameUser,
    #[error("operation requires at least two users")]
    TooFewUsers,
    #[error("mode budget {budget} cannot null {constraints} users")]
    InsufficientModes { budget: usize, constraints: usize },
    #[error("zero-forcing null space is empty")]
    EmptyNullSpace,
    #[error("signal selector is orthogonal to the null space")]
    ZeroProjection,
    #[error("no closed form for this array kind")]
    UnsupportedKind,
}

/// Per-element channel-conjugate beam: f = conj(h)/|h|, unit modulus.
pub fn conjugate_precoder(
    scenario: &Scenario,
    u: usize,
    model: ChannelModel,
) -> Result<AntennaSamples, PrecodingError> {
    let xu = *scenario
        .users
        .get(u)
        .ok_or(PrecodingError::InvalidUser(u))?;
    let values = scenario
        .array
        .elements
        .iter()
        .map(|&a| {
            let h = crate::channel::channel_response(xu, a, scenario.lambda, model)
                .expect("user on the array surface");
            (h / h.norm()).conj()
        })
        .collect();
    Ok(AntennaSamples { values })
}

/// Field power density of user u's conjugate beam at `y`: the Bessel /
/// sinc closed form next to the discrete-quadrature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldDensity {
    pub closed: f64,
    pub oracle: f64,
}

pub fn field_density(
    scenario: &Scenario,
    u: usize,
    y: Point3,
) -> Result<FieldDensity, PrecodingError> {
    let xu = *scenario
        .users
        .get(u)
        .ok_or(PrecodingError::InvalidUser(u))?;
    let f = conjugate_precoder(scenario, u, ChannelModel::Exact)?;
    let g = received_field_with(scenario, &f, y, ChannelModel::Exact)
        .expect("precoder sized to array");
    let x = TAU * geometry::distance(xu, y) / scenario.lambda;
    let closed = match scenario.array.kind {
        ArrayKind::Circular { r0, .. } => {
            let j0 = bessel_j_table(0, x).expect("x >= 0")[0];
            scenario.ptx / (2.0 * r0) * j0 * j0
        }
        ArrayKind::Spherical { .. } => {
            let s = crate::specfun::sinc_u(x);
            scenario.ptx * s * s
        }
        ArrayKind::CollocatedDisk { .. } => return Err(PrecodingError::UnsupportedKind),
    };
    Ok(FieldDensity {
        closed,
        oracle: g.norm_sqr(),
    })
}

/// Coupling of beam-owner k's order-m phase mode observed at victim u
/// (circular): j^m e^(j m phi_uk) J_m(2 pi |X_u - X_k| / lambda), with
/// phi_uk the azimuth of X_u - X_k.
pub fn cross_coefficient(
    u: usize,
    k: usize,
    m: i64,
    scenario: &Scenario,
) -> Result<Complex64, PrecodingError> {
    let (xu, xk) = pair(scenario, u, k)?;
    let (d, phi_d, _) =
        geometry::difference_direction(xu, xk).map_err(|_| PrecodingError::SameUser)?;
    let x = TAU * d / scenario.lambda;
    let ma = m.unsigned_abs() as usize;
    let jm = bessel_j_table(ma, x).expect("x >= 0")[ma];
    let sign = if m < 0 && m % 2 != 0 { -1.0 } else { 1.0 };
    Ok(Complex64::from_polar(1.0, m as f64 * (PI / 2.0 + phi_d)) * (sign * jm))
}

/// Spherical analog over harmonic (l, m):
/// sqrt(4 pi) j^l j_l(2 pi d / lambda) Y_lm(phi_uk, theta_uk).
pub fn cross_coefficient_sph(
    u: usize,
    k: usize,
    m: i64,
    l: usize,
    scenario: &Scenario,
) -> Result<Complex64, PrecodingError> {
    let (xu, xk) = pair(scenario, u, k)?;
    let (d, phi_d, theta_d) =
        geometry::difference_direction(xu, xk).map_err(|_| PrecodingError::SameUser)?;
    let x = TAU * d / scenario.lambda;
    let jl = spherical_j_table(l, x).expect("x >= 0")[l];
    let y = crate::specfun::spherical_harmonic(l, m, phi_d, theta_d)
        .expect("|m| <= l by construction");
    Ok(Complex64::from_polar((4.0 * PI).sqrt() * jl, l as f64 * PI / 2.0) * y)
}

fn pair(scenario: &Scenario, u: usize, k: usize) -> Result<(Point3, Point3), PrecodingError> {
    if u == k {
        return Err(PrecodingError::SameUser);
    }
    let xu = *scenario
        .users
        .get(u)
        .ok_or(PrecodingError::InvalidUser(u))?;
    let xk = *scenario
        .users
        .get(k)
        .ok_or(PrecodingError::InvalidUser(k))?;
    Ok((xu, xk))
}

/// Retained mode order: M = floor(2 pi d_min / lambda).
pub fn dof_limit(scenario: &Scenario) -> Result<usize, PrecodingError> {
    if scenario.users.len() < 2 {
        return Err(PrecodingError::TooFewUsers);
    }
    let mut d_min = f64::INFINITY;
    for (i, &a) in scenario.users.iter().enumerate() {
        for &b in &scenario.users[i + 1..] {
            d_min = d_min.min(geometry::distance(a, b));
        }
    }
    Ok((TAU * d_min / scenario.lambda).floor() as usize)
}

/// Zero-forcing constraint matrix for user u: one row per victim k != u,
/// one column per retained mode, entry = coupling of u's mode at k.
#[derive(Debug, Clone, PartialEq)]
pub struct ZFMatrix {
    pub trunc: Truncation,
    pub entries: DMatrix<Complex64>,
}

pub fn build_zf_matrix(
    scenario: &Scenario,
    u: usize,
    m_order: usize,
) -> Result<ZFMatrix, PrecodingError> {
    let users = &scenario.users;
    if users.len() < 2 {
        return Err(PrecodingError::TooFewUsers);
    }
    if u >= users.len() {
        return Err(PrecodingError::InvalidUser(u));
    }
    let constraints = users.len() - 1;
    let (trunc, cols) = match scenario.array.kind {
        ArrayKind::Circular { .. } => (Truncation::Circular(m_order), 2 * m_order + 1),
        ArrayKind::Spherical { .. } => {
            (Truncation::Spherical(m_order), (m_order + 1) * (m_order + 1))
        }
        ArrayKind::CollocatedDisk { .. } => return Err(PrecodingError::UnsupportedKind),
    };
    if cols <= constraints {
        return Err(PrecodingError::InsufficientModes {
            budget: cols,
            constraints,
        });
    }
    let victims: Vec<usize> = (0..users.len()).filter(|&k| k != u).collect();
    let mut entries = DMatrix::zeros(constraints, cols);
    for (row, &k) in victims.iter().enumerate() {
        let (d, phi_d, theta_d) = geometry::difference_direction(users[k], users[u])
            .map_err(|_| PrecodingError::SameUser)?;
        let x = TAU * d / scenario.lambda;
        match trunc {
            Truncation::Circular(m) => {
                let jt = bessel_j_table(m, x).expect("x >= 0");
                for n in -(m as i64)..=(m as i64) {
                    let na = n.unsigned_abs() as usize;
                    let sign = if n < 0 && n % 2 != 0 { -1.0 } else { 1.0 };
                    entries[(row, (n + m as i64) as usize)] =
                        Complex64::from_polar(1.0, n as f64 * (PI / 2.0 + phi_d))
                            * (sign * jt[na]);
                }
            }
            Truncation::Spherical(m) => {
                let jt = spherical_j_table(m, x).expect("x >= 0");
                let yt = ylm_table(m, phi_d, theta_d);
                for l in 0..=m {
                    let base =
                        Complex64::from_polar((4.0 * PI).sqrt() * jt[l], l as f64 * PI / 2.0);
                    for mm in -(l as i64)..=(l as i64) {
                        entries[(row, lm_index(l, mm))] = base * yt[lm_index(l, mm)];
                    }
                }
            }
        }
    }
    Ok(ZFMatrix { trunc, entries })
}

/// Mode coefficients of one user's beam, with the bookkeeping from the
/// null-space solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderCoeffs {
    pub user: usize,
    pub trunc: Truncation,
    pub coeffs: Vec<Complex64>,
    /// |e0^H b|^2: fraction of the unconstrained beam's SNR retained.
    pub snr_loss: f64,
    pub null_dim: usize,
    pub rank: usize,
}

/// Unit-norm projection of the signal selector e_0 (the order-zero mode)
/// onto the null space of the ZF matrix.
pub fn solve_pm_precoder(zf: &ZFMatrix, user: usize) -> Result<PrecoderCoeffs, PrecodingError> {
    let rows = zf.entries.nrows();
    let cols = zf.entries.ncols();
    let e0_idx = match zf.trunc {
        Truncation::Circular(m) => m,
        Truncation::Spherical(_) => 0,
    };
    if rows == 0 {
        let mut coeffs = vec![Complex64::ZERO; cols];
        coeffs[e0_idx] = Complex64::ONE;
        return Ok(PrecoderCoeffs {
            user,
            trunc: zf.trunc,
            coeffs,
            snr_loss: 1.0,
            null_dim: cols,
            rank: 0,
        });
    }
    let svd = zf.entries.clone().svd(false, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let null_dim = cols - rank;
    if null_dim == 0 {
        return Err(PrecodingError::EmptyNullSpace);
    }
    let vt = svd.v_t.expect("requested thin V^T");
    // project e0 off the row space: c = e0 - V_r^H (V_r e0)
    let mut coeffs = vec![Complex64::ZERO; cols];
    coeffs[e0_idx] = Complex64::ONE;
    for r in 0..rank {
        let p = vt[(r, e0_idx)];
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c -= vt[(r, j)].conj() * p;
        }
    }
    let norm_sq: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if norm_sq < 1e-24 {
        return Err(PrecodingError::ZeroProjection);
    }
    let inv = 1.0 / norm_sq.sqrt();
    for c in coeffs.iter_mut() {
        *c *= inv;
    }
    Ok(PrecoderCoeffs {
        user,
        trunc: zf.trunc,
        coeffs,
        snr_loss: norm_sq,
        null_dim,
        rank,
    })
}

/// Residual of the zero-forcing constraints |J c| per victim row.
pub fn zf_residuals(zf: &ZFMatrix, coeffs: &PrecoderCoeffs) -> Vec<f64> {
    (0..zf.entries.nrows())
        .map(|r| {
            (0..zf.entries.ncols())
                .map(|j| zf.entries[(r, j)] * coeffs.coeffs[j])
                .sum::<Complex64>()
                .norm()
        })
        .collect()
}

/// Element samples of the phase-mode beam: the channel conjugate times
/// the mode expansion evaluated on the array surface (the spherical
/// basis carries a sqrt(4 pi) scale so c = e0 reduces to the plain
/// conjugate beam).
pub fn pm_precoder_samples(
    scenario: &Scenario,
    coeffs: &PrecoderCoeffs,
    model: ChannelModel,
) -> Result<AntennaSamples, PrecodingError> {
    let conj = conjugate_precoder(scenario, coeffs.user, model)?;
    let values = match coeffs.trunc {
        Truncation::Circular(m) => conj
            .values
            .iter()
            .zip(&scenario.array.elements)
            .map(|(&f, e)| {
                let w = Complex64::from_polar(1.0, e.phi);
                let mut pos = Complex64::ONE;
                let mut neg = Complex64::ONE;
                let mut s = coeffs.coeffs[m];
                for n in 1..=m {
                    pos *= w;
                    neg *= w.conj();
                    s += coeffs.coeffs[m + n] * pos + coeffs.coeffs[m - n] * neg;
                }
                f * s
            })
            .collect(),
        Truncation::Spherical(m) => conj
            .values
            .iter()
            .zip(&scenario.array.elements)
            .map(|(&f, e)| {
                let yt = ylm_table(m, e.phi, e.theta);
                let s: Complex64 = coeffs
                    .coeffs
                    .iter()
                    .zip(&yt)
                    .map(|(c, y)| c * y)
                    .sum();
                f * s * (4.0 * PI).sqrt()
            })
            .collect(),
    };
    Ok(AntennaSamples { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ConjugateOnly,
    PhaseModeZF,
}

/// Precoders for every user under one scheme, plus the per-user SNR-loss
/// factors the closed forms need.
#[derive(Debug, Clone)]
pub struct SchemePrecoders {
    pub scheme: Scheme,
    pub samples: Vec<AntennaSamples>,
    pub loss: Vec<f64>,
}

pub fn make_precoders(
    scenario: &Scenario,
    scheme: Scheme,
    model: ChannelModel,
) -> Result<SchemePrecoders, PrecodingError> {
    let u_count = scenario.users.len();
    let mut samples = Vec::with_capacity(u_count);
    let mut loss = Vec::with_capacity(u_count);
    match scheme {
        Scheme::ConjugateOnly => {
            for u in 0..u_count {
                samples.push(conjugate_precoder(scenario, u, model)?);
                loss.push(1.0);
            }
        }
        Scheme::PhaseModeZF => {
            if u_count == 1 {
                // no one to null: phase-mode ZF degenerates to the conjugate
                samples.push(conjugate_precoder(scenario, 0, model)?);
                loss.push(1.0);
            } else {
                let m = dof_limit(scenario)?;
                for u in 0..u_count {
                    let zf = build_zf_matrix(scenario, u, m)?;
                    let c = solve_pm_precoder(&zf, u)?;
                    samples.push(pm_precoder_samples(scenario, &c, model)?);
                    loss.push(c.snr_loss);
                }
            }
        }
    }
    Ok(SchemePrecoders {
        scheme,
        samples,
        loss,
    })
}

/// Effective receive aperture applied to field power when forming
/// received power. The spherical / collocated value lambda^2 / (4 pi)
/// is an area; the circular case absorbs one length unit into the line
/// aperture lambda / (4 pi), so reported "powers" carry an implied
/// per-meter normalization there.
pub fn receive_aperture(kind: ArrayKind, lambda: f64) -> f64 {
    match kind {
        ArrayKind::Circular { .. } => lambda / (4.0 * PI),
        ArrayKind::Spherical { .. } | ArrayKind::CollocatedDisk { .. } => {
            lambda * lambda / (4.0 * PI)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UserLink {
    pub snr: f64,
    pub sinr: f64,
    pub sir_bound: f64,
    pub rx_power_w: f64,
    pub closed_snr: Option<f64>,
    pub closed_sinr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LinkReport {
    pub users: Vec<UserLink>,
    pub sum_throughput: f64,
    pub closed_sum_throughput: Option<f64>,
}

/// Monte-Carlo style link evaluation: signal and interference from
/// actual field evaluations on the discrete array, with the closed-form
/// predictions alongside where they exist.
pub fn link_report(
    scenario: &Scenario,
    pre: &SchemePrecoders,
) -> Result<LinkReport, PrecodingError> {
    let u_count = scenario.users.len();
    if pre.samples.len() != u_count {
        return Err(PrecodingError::InvalidUser(pre.samples.len()));
    }
    let aperture = receive_aperture(scenario.array.kind, scenario.lambda);
    let closed_snr_1 = match scenario.array.kind {
        ArrayKind::Circular { r0, .. } => {
            Some(scenario.ptx * scenario.lambda / (8.0 * PI * scenario.sigma2 * r0))
        }
        ArrayKind::Spherical { .. } => Some(
            scenario.ptx * scenario.lambda * scenario.lambda / (4.0 * PI * scenario.sigma2),
        ),
        ArrayKind::CollocatedDisk { .. } => None,
    };
    let mut users = Vec::with_capacity(u_count);
    let mut sum_tp = 0.0;
    let mut closed_tp = closed_snr_1.map(|_| 0.0);
    for u in 0..u_count {
        let xu = scenario.users[u];
        let g = received_field_with(scenario, &pre.samples[u], xu, ChannelModel::Exact)
            .expect("precoder sized to array");
        let signal = aperture * g.norm_sqr();
        let mut interference = 0.0;
        let mut d_min = f64::INFINITY;
        for k in 0..u_count {
            if k == u {
                continue;
            }
            let gi =
                received_field_with(scenario, &pre.samples[k], xu, ChannelModel::Exact)
                    .expect("precoder sized to array");
            interference += aperture * gi.norm_sqr();
            d_min = d_min.min(geometry::distance(xu, scenario.users[k]));
        }
        let snr = signal / scenario.sigma2;
        let sinr = signal / (interference + scenario.sigma2);
        let sir_bound = if u_count == 1 || pre.scheme == Scheme::PhaseModeZF {
            f64::INFINITY
        } else {
            let x = TAU * d_min / scenario.lambda;
            let others = (u_count - 1) as f64;
            match scenario.array.kind {
                ArrayKind::Circular { .. } => x.powf(2.0 / 3.0) / (others * NU * NU),
                _ => x * x / others,
            }
        };
        let closed_snr = closed_snr_1.map(|s| s * pre.loss[u]);
        let closed_sinr = closed_snr.map(|s| match pre.scheme {
            Scheme::PhaseModeZF => s,
            Scheme::ConjugateOnly => {
                let mut c = 0.0;
                for k in 0..u_count {
                    if k == u {
                        continue;
                    }
                    let x = TAU * geometry::distance(xu, scenario.users[k]) / scenario.lambda;
                    let coupling = match scenario.array.kind {
                        ArrayKind::Circular { .. } => bessel_j_table(0, x).expect("x >= 0")[0],
                        _ => crate::specfun::sinc_u(x),
                    };
                    c += coupling * coupling;
                }
                1.0 / (c + 1.0 / s)
            }
        });
        sum_tp += (1.0 + sinr).log2();
        if let (Some(acc), Some(cs)) = (closed_tp.as_mut(), closed_sinr) {
            *acc += (1.0 + cs).log2();
        }
        users.push(UserLink {
            snr,
            sinr,
            sir_bound,
            rx_power_w: signal,
            closed_snr,
            closed_sinr,
        });
    }
    Ok(LinkReport {
        users,
        sum_throughput: sum_tp,
        closed_sum_throughput: closed_tp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use crate::specfun::{gauss_legendre, sinc_u, spherical_harmonic};
    use approx::assert_abs_diff_eq;

    const LAMBDA: f64 = 0.12;
    const R0: f64 = 20.0;

    fn circ(users: Vec<Point3>, n: usize) -> Scenario {
        Scenario::new(ArrayGeometry::circular(R0, n), users, LAMBDA, 1e-13, 1e-4)
    }

    fn sph(users: Vec<Point3>, n: usize) -> Scenario {
        Scenario::new(ArrayGeometry::spherical(R0, n), users, LAMBDA, 1e-13, 1e-4)
    }

    /// Trapezoid quadrature of the defining coupling integral (circular).
    fn coupling_oracle_circ(xu: Point3, xk: Point3, m: i64, lambda: f64) -> Complex64 {
        let steps = 8192;
        let k0 = TAU / lambda;
        let [ux, uy, _] = xu.to_cartesian();
        let [kx, ky, _] = xk.to_cartesian();
        let mut acc = Complex64::ZERO;
        for i in 0..steps {
            let phi = TAU * i as f64 / steps as f64;
            let (s, c) = phi.sin_cos();
            let arg = k0 * ((ux - kx) * c + (uy - ky) * s) + m as f64 * phi;
            acc += Complex64::from_polar(1.0, arg);
        }
        acc / steps as f64
    }

    /// Gauss-Legendre x trapezoid quadrature of the spherical coupling.
    fn coupling_oracle_sph(
        xu: Point3,
        xk: Point3,
        l: usize,
        m: i64,
        lambda: f64,
    ) -> Complex64 {
        let (nodes, weights) = gauss_legendre(96);
        let n_phi = 256;
        let k0 = TAU / lambda;
        let [ux, uy, uz] = xu.to_cartesian();
        let [kx, ky, kz] = xk.to_cartesian();
        let (dx, dy, dz) = (ux - kx, uy - ky, uz - kz);
        let mut acc = Complex64::ZERO;
        for (&ct, &w) in nodes.iter().zip(&weights) {
            let st = (1.0 - ct * ct).sqrt();
            let theta = ct.clamp(-1.0, 1.0).acos();
            for i in 0..n_phi {
                let phi = TAU * i as f64 / n_phi as f64;
                let (sp, cp) = phi.sin_cos();
                let dir = (st * cp, st * sp, ct);
                let arg = k0 * (dx * dir.0 + dy * dir.1 + dz * dir.2);
                let y = spherical_harmonic(l, m, phi, theta).unwrap();
                acc += w * (TAU / n_phi as f64) * Complex64::from_polar(1.0, arg) * y;
            }
        }
        acc / (4.0 * PI).sqrt()
    }

    #[test]
    fn conjugate_is_unit_modulus_and_aligned() {
        let sc = circ(vec![Point3::planar(3.0, 0.7)], 128);
        let f = conjugate_precoder(&sc, 0, ChannelModel::Exact).unwrap();
        for (v, &a) in f.values.iter().zip(&sc.array.elements) {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-14);
            let h = crate::channel::channel_response(
                sc.users[0],
                a,
                LAMBDA,
                ChannelModel::Exact,
            )
            .unwrap();
            // contribution h*f is a positive real: phases cancel
            assert_abs_diff_eq!((h * v).arg(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn field_density_closed_vs_oracle() {
        let u = Point3::planar(0.5, 1.1);
        let sc = circ(vec![u], 1024);
        let at_user = field_density(&sc, 0, u).unwrap();
        assert_abs_diff_eq!(at_user.closed, sc.ptx / (2.0 * R0), epsilon = 1e-15);
        assert!((at_user.oracle / at_user.closed - 1.0).abs() < 0.03);
        let y = Point3::planar(0.5 + LAMBDA / 2.0, 1.1);
        let off = field_density(&sc, 0, y).unwrap();
        let j0pi = bessel_j_table(0, PI).unwrap()[0];
        assert_abs_diff_eq!(off.closed, sc.ptx / (2.0 * R0) * j0pi * j0pi, epsilon = 1e-15);
        assert!((off.oracle / off.closed - 1.0).abs() < 0.05);
        // distance-only symmetry of the closed form
        let sc2 = circ(vec![y], 1024);
        assert_abs_diff_eq!(
            field_density(&sc2, 0, u).unwrap().closed,
            off.closed,
            epsilon = 1e-18
        );
        // spherical peak
        let ss = sph(vec![u], 4096);
        let d = field_density(&ss, 0, u).unwrap();
        assert_abs_diff_eq!(d.closed, ss.ptx, epsilon = 1e-15);
        assert!((d.oracle / d.closed - 1.0).abs() < 0.03);
    }

    #[test]
    fn cross_coefficient_matches_quadrature() {
        let users = vec![Point3::planar(0.7, 0.3), Point3::planar(0.4, 2.6)];
        let sc = circ(users.clone(), 64);
        for m in [-5i64, -1, 0, 2, 7] {
            let got = cross_coefficient(0, 1, m, &sc).unwrap();
            let want = coupling_oracle_circ(users[0], users[1], m, LAMBDA);
            assert!(
                (got - want).norm() < 1e-8,
                "m={m}: {got} vs {want}"
            );
        }
        // m = 0 is the plain J_0, no phase
        let d = geometry::distance(users[0], users[1]);
        let j0 = bessel_j_table(0, TAU * d / LAMBDA).unwrap()[0];
        let c0 = cross_coefficient(0, 1, 0, &sc).unwrap();
        assert_abs_diff_eq!(c0.re, j0, epsilon = 1e-12);
        assert_abs_diff_eq!(c0.im, 0.0, epsilon = 1e-12);
        // evanescent tail
        let x = TAU * d / LAMBDA;
        let high = x.ceil() as i64 + 40;
        assert!(cross_coefficient(0, 1, high, &sc).unwrap().norm() < 1e-8);
        assert!(cross_coefficient(0, 0, 1, &sc).is_err());
    }

    #[test]
    fn cross_coefficient_sph_matches_quadrature() {
        let users = vec![
            Point3::planar(0.6, 0.9),
            Point3::planar(0.35, 4.0),
        ];
        let sc = sph(users.clone(), 64);
        for (l, m) in [(0usize, 0i64), (1, -1), (2, 1), (3, 3), (5, -2)] {
            let got = cross_coefficient_sph(0, 1, m, l, &sc).unwrap();
            let want = coupling_oracle_sph(users[0], users[1], l, m, LAMBDA);
            assert!(
                (got - want).norm() < 1e-8,
                "(l,m)=({l},{m}): {got} vs {want}"
            );
        }
        // (0,0) coupling is the sinc of the separation
        let d = geometry::distance(users[0], users[1]);
        let c = cross_coefficient_sph(0, 1, 0, 0, &sc).unwrap();
        assert_abs_diff_eq!(c.re, sinc_u(TAU * d / LAMBDA), epsilon = 1e-10);
    }

    #[test]
    fn dof_examples() {
        let mk = |d: f64| {
            circ(
                vec![Point3::planar(1.0, 0.0), Point3::planar(1.0 + d, 0.0)],
                64,
            )
        };
        assert_eq!(dof_limit(&mk(LAMBDA)).unwrap(), 6);
        assert_eq!(dof_limit(&mk(10.0 * LAMBDA)).unwrap(), 62);
        assert_eq!(dof_limit(&mk(LAMBDA / 10.0)).unwrap(), 0);
        assert!(dof_limit(&circ(vec![Point3::ORIGIN], 8)).is_err());
    }

    #[test]
    fn zf_matrix_shape_and_m0_column() {
        let users = vec![
            Point3::planar(0.8, 0.1),
            Point3::planar(1.9, 2.0),
            Point3::planar(1.2, 4.4),
        ];
        let sc = circ(users.clone(), 64);
        let m = dof_limit(&sc).unwrap();
        let zf = build_zf_matrix(&sc, 0, m).unwrap();
        assert_eq!(zf.entries.nrows(), 2);
        assert_eq!(zf.entries.ncols(), 2 * m + 1);
        for (row, &k) in [1usize, 2].iter().enumerate() {
            let d = geometry::distance(users[0], users[k]);
            let j0 = bessel_j_table(0, TAU * d / LAMBDA).unwrap()[0];
            assert_abs_diff_eq!(zf.entries[(row, m)].re, j0, epsilon = 1e-12);
        }
        // row norms bounded by sqrt(2M+1)
        for r in 0..2 {
            let norm: f64 = (0..2 * m + 1)
                .map(|j| zf.entries[(r, j)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(norm <= ((2 * m + 1) as f64).sqrt());
        }
        assert!(matches!(
            build_zf_matrix(&sc, 0, 0),
            Err(PrecodingError::InsufficientModes { .. })
        ));
    }

    #[test]
    fn pm_solve_properties() {
        let users = vec![
            Point3::planar(2.0, 0.0),
            Point3::planar(4.0, 2.1),
            Point3::planar(3.0, 3.9),
            Point3::planar(5.0, 5.2),
        ];
        let sc = circ(users, 64);
        let m = dof_limit(&sc).unwrap();
        for u in 0..4 {
            let zf = build_zf_matrix(&sc, u, m).unwrap();
            let c = solve_pm_precoder(&zf, u).unwrap();
            let power: f64 = c.coeffs.iter().map(|x| x.norm_sqr()).sum();
            assert_abs_diff_eq!(power, 1.0, epsilon = 1e-12);
            for r in zf_residuals(&zf, &c) {
                assert!(r < 1e-10, "residual {r}");
            }
            assert!(c.snr_loss > 0.0 && c.snr_loss <= 1.0 + 1e-12);
            // generic full row rank: U-1 constraints eat U-1 dimensions
            assert_eq!(c.null_dim, 2 * m + 1 - 3);
        }
    }

    #[test]
    fn null_dim_monotonicity() {
        let base = vec![
            Point3::planar(2.0, 0.0),
            Point3::planar(4.0, 2.1),
            Point3::planar(3.0, 3.9),
            Point3::planar(5.0, 5.2),
        ];
        let m_fixed = 40;
        let mut prev = usize::MAX;
        for u_count in 2..=4 {
            let sc = circ(base[..u_count].to_vec(), 64);
            let zf = build_zf_matrix(&sc, 0, m_fixed).unwrap();
            let c = solve_pm_precoder(&zf, 0).unwrap();
            assert!(c.null_dim <= prev);
            prev = c.null_dim;
        }
        let sc = circ(base[..3].to_vec(), 64);
        let lo = solve_pm_precoder(&build_zf_matrix(&sc, 0, 20).unwrap(), 0).unwrap();
        let hi = solve_pm_precoder(&build_zf_matrix(&sc, 0, 60).unwrap(), 0).unwrap();
        assert!(hi.null_dim > lo.null_dim);
    }

    #[test]
    fn unconstrained_pm_reduces_to_conjugate() {
        let u = Point3::planar(1.5, 0.8);
        for sc in [circ(vec![u], 128), sph(vec![u], 512)] {
            let cols = match sc.array.kind {
                ArrayKind::Circular { .. } => Truncation::Circular(10),
                _ => Truncation::Spherical(10),
            };
            let zf = ZFMatrix {
                trunc: cols,
                entries: DMatrix::zeros(
                    0,
                    match cols {
                        Truncation::Circular(m) => 2 * m + 1,
                        Truncation::Spherical(m) => (m + 1) * (m + 1),
                    },
                ),
            };
            let c = solve_pm_precoder(&zf, 0).unwrap();
            assert_eq!(c.snr_loss, 1.0);
            let pm = pm_precoder_samples(&sc, &c, ChannelModel::Exact).unwrap();
            let cj = conjugate_precoder(&sc, 0, ChannelModel::Exact).unwrap();
            for (a, b) in pm.values.iter().zip(&cj.values) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_user_link_matches_closed_snr() {
        let sc = circ(vec![Point3::ORIGIN], 1024);
        let pre = make_precoders(&sc, Scheme::ConjugateOnly, ChannelModel::Exact).unwrap();
        let rep = link_report(&sc, &pre).unwrap();
        let want = sc.ptx * LAMBDA / (8.0 * PI * sc.sigma2 * R0);
        assert!((rep.users[0].snr / want - 1.0).abs() < 0.03);
        assert_abs_diff_eq!(rep.users[0].sinr, rep.users[0].snr, epsilon = 1e-9);
        assert_eq!(rep.users[0].closed_snr, Some(want));
        // spherical: received/transmit ratio approx lambda^2 / (4 pi)
        let ss = sph(vec![Point3::ORIGIN], 4096);
        let pre = make_precoders(&ss, Scheme::ConjugateOnly, ChannelModel::Exact).unwrap();
        let rep = link_report(&ss, &pre).unwrap();
        let ratio = rep.users[0].rx_power_w / ss.ptx;
        assert!((ratio / (LAMBDA * LAMBDA / (4.0 * PI)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn power_scaling_maps_snr_linearly() {
        let users = vec![Point3::planar(1.0, 0.0), Point3::planar(2.5, 2.0)];
        let sc = circ(users.clone(), 512);
        let mut sc4 = circ(users, 512);
        sc4.ptx *= 4.0;
        let pre = make_precoders(&sc, Scheme::ConjugateOnly, ChannelModel::Exact).unwrap();
        let pre4 = make_precoders(&sc4, Scheme::ConjugateOnly, ChannelModel::Exact).unwrap();
        let (r, r4) = (
            link_report(&sc, &pre).unwrap(),
            link_report(&sc4, &pre4).unwrap(),
        );
        for (a, b) in r.users.iter().zip(&r4.users) {
            assert_abs_diff_eq!(b.snr / a.snr, 4.0, epsilon = 1e-9);
            // SIR (interference-limited part) is power invariant
            let sir_a = 1.0 / (1.0 / a.sinr - 1.0 / a.snr);
            let sir_b = 1.0 / (1.0 / b.sinr - 1.0 / b.snr);
            assert!((sir_a / sir_b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sinr_never_exceeds_snr() {
        let users = vec![
            Point3::planar(1.0, 0.2),
            Point3::planar(2.0, 1.9),
            Point3::planar(1.4, 4.1),
        ];
        let sc = circ(users, 512);
        for scheme in [Scheme::ConjugateOnly, Scheme::PhaseModeZF] {
            let pre = make_precoders(&sc, scheme, ChannelModel::Exact).unwrap();
            let rep = link_report(&sc, &pre).unwrap();
            for u in &rep.users {
                assert!(u.sinr <= u.snr * (1.0 + 1e-12));
            }
            assert!(rep.sum_throughput >= 0.0);
        }
    }
}
