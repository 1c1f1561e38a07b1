//! Mode-domain channel estimation: Fourier / Laplace decomposition of
//! training signals, observation profiles over a planar search disk, peak
//! detection, and the closed-form estimation-error bounds.
//!
//! Profiles are evaluated on a polar lattice (rings of constant radius)
//! so each ring reduces to a single FFT over azimuth.

use crate::channel::{AntennaSamples, ArrayGeometry, ArrayKind, ChannelModel, Scenario};
use crate::geometry::{self, Point3};
use crate::specfun::{
    bessel_j_table, lm_index, norm_assoc_legendre_col, spherical_j_table, ylm_table,
};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Envelope constant of the J_0 decay bound: J_0(x) <= NU * x^(-1/3).
pub const NU: f64 = 0.7857;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("aliasing guard violated: need N >= {need}, have {have}")]
    Aliasing { need: usize, have: usize },
    #[error("spectrum shape mismatch")]
    ShapeMismatch,
    #[error("wrong array kind for this decomposition")]
    WrongKind,
    #[error("truncation {have} insufficient for grid (need {need})")]
    Truncation { need: usize, have: usize },
    #[error("found {} of {requested} peaks", found.len())]
    InsufficientPeaks { requested: usize, found: Vec<Point3> },
    #[error("operation requires at least two users")]
    TooFewUsers,
    #[error("no closed-form bound for this array kind")]
    UnsupportedKind,
}

/// Truncated mode coefficients of a field on the array.
///
/// Circular: Fourier orders n in [-K, K], stored at index n + K.
/// Spherical: Laplace pairs (l, m), l <= L_max, packed at l^2 + l + m.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeSpectrum {
    Circular { k: usize, coeffs: Vec<Complex64> },
    Spherical { l_max: usize, coeffs: Vec<Complex64> },
}

impl ModeSpectrum {
    pub fn coeffs(&self) -> &[Complex64] {
        match self {
            ModeSpectrum::Circular { coeffs, .. } | ModeSpectrum::Spherical { coeffs, .. } => {
                coeffs
            }
        }
    }

    pub fn order(&self) -> usize {
        match self {
            ModeSpectrum::Circular { k, .. } => *k,
            ModeSpectrum::Spherical { l_max, .. } => *l_max,
        }
    }

    fn same_shape(&self, other: &ModeSpectrum) -> bool {
        matches!(
            (self, other),
            (ModeSpectrum::Circular { k: a, .. }, ModeSpectrum::Circular { k: b, .. }) if a == b
        ) || matches!(
            (self, other),
            (ModeSpectrum::Spherical { l_max: a, .. }, ModeSpectrum::Spherical { l_max: b, .. })
                if a == b
        )
    }

    /// Sequence product: sum of conj(self) * other.
    pub fn dot(&self, other: &ModeSpectrum) -> Result<Complex64, EstimationError> {
        if !self.same_shape(other) {
            return Err(EstimationError::ShapeMismatch);
        }
        Ok(self
            .coeffs()
            .iter()
            .zip(other.coeffs())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Mode truncation covering the disk of radius r_max: the propagation
/// kernel's order content dies off just past x = 2*pi*r_max/lambda, and
/// the additive margin keeps the discarded tail below 1e-8.
pub fn truncation_order(r_max: f64, lambda: f64) -> usize {
    assert!(r_max > 0.0 && lambda > 0.0);
    let x = TAU * r_max / lambda;
    x.ceil() as usize + (20usize).max((8.0 * x.cbrt()).ceil() as usize)
}

/// Fourier modes of a point observed by the circular array:
/// V_n(Y) = j^n e^(j n phi) J_n(2 pi r / lambda).
pub fn v_sequence_circular(y: Point3, k: usize, lambda: f64) -> ModeSpectrum {
    let x = TAU * y.r / lambda;
    let jt = bessel_j_table(k, x).expect("x >= 0");
    let mut coeffs = vec![Complex64::ZERO; 2 * k + 1];
    for n in -(k as i64)..=(k as i64) {
        let na = n.unsigned_abs() as usize;
        let sign = if n < 0 && n % 2 != 0 { -1.0 } else { 1.0 };
        coeffs[(n + k as i64) as usize] =
            Complex64::from_polar(1.0, n as f64 * (PI / 2.0 + y.phi)) * (sign * jt[na]);
    }
    ModeSpectrum::Circular { k, coeffs }
}

/// Laplace modes of a point observed by the spherical array:
/// V_lm(Y) = 4 pi j^l j_l(2 pi r / lambda) conj(Y_lm(phi, theta)).
pub fn v_sequence_spherical(y: Point3, l_max: usize, lambda: f64) -> ModeSpectrum {
    let x = TAU * y.r / lambda;
    let jt = spherical_j_table(l_max, x).expect("x >= 0");
    let yt = ylm_table(l_max, y.phi, y.theta);
    let mut coeffs = vec![Complex64::ZERO; (l_max + 1) * (l_max + 1)];
    for l in 0..=l_max {
        let jl = Complex64::from_polar(4.0 * PI * jt[l], l as f64 * PI / 2.0);
        for m in -(l as i64)..=(l as i64) {
            let idx = lm_index(l, m);
            coeffs[idx] = jl * yt[idx].conj();
        }
    }
    ModeSpectrum::Spherical { l_max, coeffs }
}

/// Mode truncation selector for spectrum constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    Circular(usize),
    Spherical(usize),
}

/// Continuous-limit training spectrum: Q = c0 * sum_u s_u V(X_u) with
/// c0 = (lambda / (4 pi r0)) e^(-j 2 pi r0 / lambda) — the noiseless
/// N -> infinity limit of decomposing `synthesize_training` output.
pub fn continuous_training_spectrum(
    users: &[Point3],
    symbols: &[Complex64],
    trunc: Truncation,
    lambda: f64,
    r0: f64,
) -> Result<ModeSpectrum, EstimationError> {
    if users.len() != symbols.len() {
        return Err(EstimationError::ShapeMismatch);
    }
    let c0 = Complex64::from_polar(lambda / (4.0 * PI * r0), -TAU * r0 / lambda);
    let mut acc: Option<ModeSpectrum> = None;
    for (&u, &s) in users.iter().zip(symbols) {
        let v = match trunc {
            Truncation::Circular(k) => v_sequence_circular(u, k, lambda),
            Truncation::Spherical(l) => v_sequence_spherical(u, l, lambda),
        };
        match &mut acc {
            None => {
                let mut v = v;
                let w = c0 * s;
                for c in match &mut v {
                    ModeSpectrum::Circular { coeffs, .. }
                    | ModeSpectrum::Spherical { coeffs, .. } => coeffs.iter_mut(),
                } {
                    *c *= w;
                }
                acc = Some(v);
            }
            Some(a) => {
                if !a.same_shape(&v) {
                    return Err(EstimationError::ShapeMismatch);
                }
                let w = c0 * s;
                let dst = match a {
                    ModeSpectrum::Circular { coeffs, .. }
                    | ModeSpectrum::Spherical { coeffs, .. } => coeffs,
                };
                for (d, s) in dst.iter_mut().zip(v.coeffs()) {
                    *d += w * s;
                }
            }
        }
    }
    acc.ok_or(EstimationError::ShapeMismatch)
}

/// Fourier coefficients Q_n = (1/N) sum_p q_p e^(+j n phi_p) of samples
/// on a circular array. Requires N >= 2K+2 to rule out aliasing.
pub fn circular_mode_decompose(
    samples: &AntennaSamples,
    geometry: &ArrayGeometry,
    k: usize,
) -> Result<ModeSpectrum, EstimationError> {
    if !matches!(geometry.kind, ArrayKind::Circular { .. }) {
        return Err(EstimationError::WrongKind);
    }
    let n = geometry.len();
    if samples.values.len() != n {
        return Err(EstimationError::ShapeMismatch);
    }
    if n < 2 * k + 2 {
        return Err(EstimationError::Aliasing {
            need: 2 * k + 2,
            have: n,
        });
    }
    let mut coeffs = vec![Complex64::ZERO; 2 * k + 1];
    for (q, e) in samples.values.iter().zip(&geometry.elements) {
        let w = Complex64::from_polar(1.0, e.phi);
        let mut pos = *q;
        let mut neg = *q;
        coeffs[k] += *q;
        for m in 1..=k {
            pos *= w;
            neg *= w.conj();
            coeffs[k + m] += pos;
            coeffs[k - m] += neg;
        }
    }
    let inv = 1.0 / n as f64;
    for c in coeffs.iter_mut() {
        *c *= inv;
    }
    Ok(ModeSpectrum::Circular { k, coeffs })
}

/// Matched-filter spectrum for undersampled circular arrays: the N-point
/// DFT of the samples periodized out to order K. Summing this spectrum
/// against V(Y) reproduces, exactly, the direct matched filter
/// (1/N) sum_p q_p e^(-j k r_Y cos(phi_p - phi_Y)), so the fast profile
/// path stays valid below the N >= 2K+2 alias-free regime — the grating
/// lobes aliasing causes are then part of the profile, as they are
/// physically.
pub fn circular_matched_spectrum(
    samples: &AntennaSamples,
    geometry: &ArrayGeometry,
    k: usize,
) -> Result<ModeSpectrum, EstimationError> {
    if !matches!(geometry.kind, ArrayKind::Circular { .. }) {
        return Err(EstimationError::WrongKind);
    }
    let n = geometry.len();
    if samples.values.len() != n {
        return Err(EstimationError::ShapeMismatch);
    }
    if n >= 2 * k + 2 {
        return circular_mode_decompose(samples, geometry, k);
    }
    // base DFT bins (1/N) sum_p q_p e^{+j m phi_p}, m = 0..N
    let mut base = vec![Complex64::ZERO; n];
    for (q, e) in samples.values.iter().zip(&geometry.elements) {
        let w = Complex64::from_polar(1.0, e.phi);
        let mut acc = *q;
        base[0] += acc;
        for bin in base.iter_mut().skip(1) {
            acc *= w;
            *bin += acc;
        }
    }
    let inv = 1.0 / n as f64;
    for b in base.iter_mut() {
        *b *= inv;
    }
    let coeffs = (-(k as i64)..=(k as i64))
        .map(|m| base[m.rem_euclid(n as i64) as usize])
        .collect();
    Ok(ModeSpectrum::Circular { k, coeffs })
}

/// Laplace coefficients Q_lm = sum_p (w_p / r0^2) q_p conj(Y_lm(A_p)) of
/// samples on a spherical array (the solid-angle quadrature of the
/// continuous projection).
pub fn spherical_mode_decompose(
    samples: &AntennaSamples,
    geometry: &ArrayGeometry,
    l_max: usize,
) -> Result<ModeSpectrum, EstimationError> {
    let r0 = match geometry.kind {
        ArrayKind::Spherical { r0, .. } => r0,
        _ => return Err(EstimationError::WrongKind),
    };
    if samples.values.len() != geometry.len() {
        return Err(EstimationError::ShapeMismatch);
    }
    let dim = (l_max + 1) * (l_max + 1);
    let coeffs = samples
        .values
        .par_iter()
        .zip(geometry.elements.par_iter().zip(geometry.weights.par_iter()))
        .fold(
            || vec![Complex64::ZERO; dim],
            |mut acc, (&q, (&e, &w))| {
                let yt = ylm_table(l_max, e.phi, e.theta);
                let s = q * (w / (r0 * r0));
                for (a, y) in acc.iter_mut().zip(&yt) {
                    *a += s * y.conj();
                }
                acc
            },
        )
        .reduce(
            || vec![Complex64::ZERO; dim],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    Ok(ModeSpectrum::Spherical { l_max, coeffs })
}

/// Per-slot spectra combined with user u's conjugated pilot sequence:
/// Q_u = sum_l conj(s_u(l)) Q(l).
pub fn combine_pilot_sequences(
    spectra: &[ModeSpectrum],
    pilots: &[Vec<Complex64>],
    u: usize,
) -> Result<ModeSpectrum, EstimationError> {
    let s_u = pilots.get(u).ok_or(EstimationError::ShapeMismatch)?;
    if spectra.is_empty() || s_u.len() != spectra.len() {
        return Err(EstimationError::ShapeMismatch);
    }
    let mut acc = spectra[0].clone();
    {
        let dst = match &mut acc {
            ModeSpectrum::Circular { coeffs, .. } | ModeSpectrum::Spherical { coeffs, .. } => {
                coeffs
            }
        };
        let w0 = s_u[0].conj();
        for d in dst.iter_mut() {
            *d *= w0;
        }
    }
    for (sp, &s) in spectra.iter().zip(s_u.iter()).skip(1) {
        if !acc.same_shape(sp) {
            return Err(EstimationError::ShapeMismatch);
        }
        let w = s.conj();
        let dst = match &mut acc {
            ModeSpectrum::Circular { coeffs, .. } | ModeSpectrum::Spherical { coeffs, .. } => {
                coeffs
            }
        };
        for (d, c) in dst.iter_mut().zip(sp.coeffs()) {
            *d += w * c;
        }
    }
    Ok(acc)
}

/// Planar search grid: a disk of radius r_max sampled on rings spaced
/// `spacing` apart (azimuth resolution at least as fine).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub r_max: f64,
    pub spacing: f64,
}

/// Profile values on the polar lattice: one center sample plus
/// `radii.len()` rings of `n_az` azimuth samples each.
#[derive(Debug, Clone)]
pub struct ObservationProfile {
    pub grid: GridSpec,
    pub n_az: usize,
    pub radii: Vec<f64>,
    pub center: f32,
    pub rings: Vec<f32>,
    pub normalization: f64,
}

impl ObservationProfile {
    #[inline]
    pub fn value(&self, ring: usize, az: usize) -> f32 {
        if ring == 0 {
            self.center
        } else {
            self.rings[(ring - 1) * self.n_az + az]
        }
    }

    #[inline]
    pub fn point(&self, ring: usize, az: usize) -> Point3 {
        if ring == 0 {
            Point3::ORIGIN
        } else {
            Point3::planar(self.radii[ring - 1], TAU * az as f64 / self.n_az as f64)
        }
    }

    pub fn max_value(&self) -> f32 {
        self.rings
            .iter()
            .copied()
            .fold(self.center, f32::max)
    }
}

fn profile_scale(spectrum: &ModeSpectrum, lambda: f64, r0: f64) -> f64 {
    match spectrum {
        ModeSpectrum::Circular { .. } => 4.0 * PI * r0 / lambda,
        ModeSpectrum::Spherical { .. } => r0 / lambda,
    }
}

/// Evaluate the observation profile at arbitrary planar points; the
/// direct (per-point mode sum) path used for small point sets.
pub fn profile_at(
    spectrum: &ModeSpectrum,
    points: &[Point3],
    lambda: f64,
    r0: f64,
) -> Result<Vec<f64>, EstimationError> {
    let scale = profile_scale(spectrum, lambda, r0);
    points
        .par_iter()
        .map(|&y| {
            let v = match spectrum {
                ModeSpectrum::Circular { k, .. } => v_sequence_circular(y, *k, lambda),
                ModeSpectrum::Spherical { l_max, .. } => {
                    v_sequence_spherical(y, *l_max, lambda)
                }
            };
            Ok(scale * v.dot(spectrum)?.norm())
        })
        .collect()
}

/// Full profile over the search disk, normalized so an isolated
/// noiseless user peaks at 1.
pub fn observation_profile(
    spectrum: &ModeSpectrum,
    grid: GridSpec,
    lambda: f64,
    r0: f64,
) -> Result<ObservationProfile, EstimationError> {
    assert!(grid.r_max > 0.0 && grid.spacing > 0.0);
    let need = truncation_order(grid.r_max, lambda);
    if spectrum.order() < need {
        return Err(EstimationError::Truncation {
            need,
            have: spectrum.order(),
        });
    }
    let n_r = (grid.r_max / grid.spacing).ceil() as usize;
    let radii: Vec<f64> = (1..=n_r).map(|i| i as f64 * grid.spacing).collect();
    let angular = (TAU * grid.r_max / grid.spacing).ceil() as usize;
    let scale = profile_scale(spectrum, lambda, r0);
    match spectrum {
        ModeSpectrum::Circular { k, coeffs } => {
            let k = *k;
            let n_az = (2 * k + 2).max(angular).next_power_of_two();
            let fft = FftPlanner::new().plan_fft_forward(n_az);
            // conj(V_n(Y)) Q_n summed over n is a DFT in the azimuth index
            let rings: Vec<f32> = radii
                .par_iter()
                .map_init(
                    || (vec![Complex64::ZERO; n_az], vec![Complex64::ZERO; fft.get_inplace_scratch_len()]),
                    |(buf, scratch), &r| {
                        buf.iter_mut().for_each(|v| *v = Complex64::ZERO);
                        let jt = bessel_j_table(k, TAU * r / lambda).expect("r >= 0");
                        for n in -(k as i64)..=(k as i64) {
                            let na = n.unsigned_abs() as usize;
                            let sign = if n < 0 && n % 2 != 0 { -1.0 } else { 1.0 };
                            let b = Complex64::from_polar(1.0, -n as f64 * PI / 2.0)
                                * (sign * jt[na])
                                * coeffs[(n + k as i64) as usize];
                            buf[n.rem_euclid(n_az as i64) as usize] += b;
                        }
                        fft.process_with_scratch(buf, scratch);
                        buf.iter().map(|v| (scale * v.norm()) as f32).collect::<Vec<f32>>()
                    },
                )
                .flatten()
                .collect();
            let center = (scale * coeffs[k].norm()) as f32;
            Ok(ObservationProfile {
                grid,
                n_az,
                radii,
                center,
                rings,
                normalization: scale,
            })
        }
        ModeSpectrum::Spherical { l_max, coeffs } => {
            let l_max = *l_max;
            let n_az = (2 * l_max + 2).max(angular).next_power_of_two();
            let fft = FftPlanner::new().plan_fft_inverse(n_az);
            // equator-restricted associated Legendre values, per |m|
            let pbar0: Vec<Vec<f64>> = (0..=l_max)
                .map(|m| norm_assoc_legendre_col(m, l_max, 0.0))
                .collect();
            let rings: Vec<f32> = radii
                .par_iter()
                .map_init(
                    || (vec![Complex64::ZERO; n_az], vec![Complex64::ZERO; fft.get_inplace_scratch_len()]),
                    |(buf, scratch), &r| {
                        buf.iter_mut().for_each(|v| *v = Complex64::ZERO);
                        let jt = spherical_j_table(l_max, TAU * r / lambda).expect("r >= 0");
                        let jl: Vec<Complex64> = (0..=l_max)
                            .map(|l| {
                                Complex64::from_polar(4.0 * PI * jt[l], -(l as f64) * PI / 2.0)
                            })
                            .collect();
                        for m in 0..=(l_max as i64) {
                            let mu = m as usize;
                            let mut gp = Complex64::ZERO; // coeff of e^{+j m phi}
                            let mut gn = Complex64::ZERO; // coeff of e^{-j m phi}
                            let neg = if mu % 2 == 0 { 1.0 } else { -1.0 };
                            // P̄_l^m(0) vanishes for odd l+m
                            let mut l = mu;
                            while l <= l_max {
                                let p = pbar0[mu][l - mu];
                                gp += jl[l] * p * coeffs[lm_index(l, m)];
                                if m > 0 {
                                    gn += jl[l] * (neg * p) * coeffs[lm_index(l, -m)];
                                }
                                l += 2;
                            }
                            buf[mu % n_az] += gp;
                            if m > 0 {
                                buf[(n_az - mu % n_az) % n_az] += gn;
                            }
                        }
                        fft.process_with_scratch(buf, scratch);
                        buf.iter().map(|v| (scale * v.norm()) as f32).collect::<Vec<f32>>()
                    },
                )
                .flatten()
                .collect();
            let center = (scale * (4.0 * PI).sqrt() * coeffs[0].norm()) as f32;
            Ok(ObservationProfile {
                grid,
                n_az,
                radii,
                center,
                rings,
                normalization: scale,
            })
        }
    }
}

/// Matched-field profile for arrays with no mode structure (the
/// collocated baseline): |sum_p conj(h_est_p) h_Y(A_p)| / sum_p |h_Y(A_p)|^2.
pub fn matched_field_profile(
    geometry: &ArrayGeometry,
    h_est: &AntennaSamples,
    grid: GridSpec,
    lambda: f64,
) -> Result<ObservationProfile, EstimationError> {
    if h_est.values.len() != geometry.len() {
        return Err(EstimationError::ShapeMismatch);
    }
    let n_r = (grid.r_max / grid.spacing).ceil() as usize;
    let radii: Vec<f64> = (1..=n_r).map(|i| i as f64 * grid.spacing).collect();
    let n_az = ((TAU * grid.r_max / grid.spacing).ceil() as usize)
        .next_power_of_two()
        .max(8);
    let eval = |y: Point3| -> f32 {
        let mut num = Complex64::ZERO;
        let mut den = 0.0;
        for (&a, &h) in geometry.elements.iter().zip(&h_est.values) {
            let hy = crate::channel::channel_response(y, a, lambda, ChannelModel::Exact)
                .expect("grid point off the array");
            num += h.conj() * hy;
            den += hy.norm_sqr();
        }
        (num.norm() / den) as f32
    };
    let rings: Vec<f32> = radii
        .par_iter()
        .flat_map_iter(|&r| {
            (0..n_az).map(move |q| (r, q)).collect::<Vec<_>>()
        })
        .map(|(r, q)| eval(Point3::planar(r, TAU * q as f64 / n_az as f64)))
        .collect();
    Ok(ObservationProfile {
        grid,
        n_az,
        radii,
        center: eval(Point3::ORIGIN),
        rings,
        normalization: 1.0,
    })
}

/// Greedy peak picking with lambda/2 exclusion and local quadratic
/// refinement on the polar lattice. Local maxima below half the global
/// maximum are treated as sidelobes and never reported, so unresolvable
/// mergers surface as a short result rather than a sidelobe pick.
/// Requires grid spacing <= lambda/8.
pub fn detect_peaks(
    profile: &ObservationProfile,
    expected: usize,
    lambda: f64,
) -> Result<Vec<Point3>, EstimationError> {
    assert!(
        profile.grid.spacing <= lambda / 8.0 + 1e-12,
        "peak detection needs grid spacing <= lambda/8"
    );
    let n_az = profile.n_az;
    let n_r = profile.radii.len();
    let val = |i: usize, q: usize| profile.value(i, q % n_az);
    let mut candidates: Vec<(f32, usize, usize)> = Vec::new();
    // center: a peak when it tops all of ring 1
    if n_r >= 1 && (0..n_az).all(|q| profile.center > val(1, q)) {
        candidates.push((profile.center, 0, 0));
    }
    for i in 1..=n_r {
        for q in 0..n_az {
            let v = val(i, q);
            let qm = (q + n_az - 1) % n_az;
            let qp = (q + 1) % n_az;
            if v <= val(i, qm) || v <= val(i, qp) {
                continue;
            }
            let inner_ok = if i == 1 {
                v > profile.center
            } else {
                v > val(i - 1, qm) && v > val(i - 1, q) && v > val(i - 1, qp)
            };
            let outer_ok = i == n_r
                || (v > val(i + 1, qm) && v > val(i + 1, q) && v > val(i + 1, qp));
            if inner_ok && outer_ok {
                candidates.push((v, i, q));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let floor = candidates.first().map_or(0.0, |c| 0.5 * c.0);
    let mut peaks: Vec<Point3> = Vec::new();
    let mut coarse: Vec<Point3> = Vec::new();
    for &(v, i, q) in &candidates {
        if peaks.len() == expected || v < floor {
            break;
        }
        let p = profile.point(i, q);
        if coarse.iter().any(|&c| geometry::distance(c, p) < lambda / 2.0) {
            continue;
        }
        coarse.push(p);
        peaks.push(refine_peak(profile, i, q));
    }
    if peaks.len() < expected {
        return Err(EstimationError::InsufficientPeaks {
            requested: expected,
            found: peaks,
        });
    }
    Ok(peaks)
}

fn parabolic_offset(ym: f64, y0: f64, yp: f64) -> f64 {
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    }
}

fn refine_peak(profile: &ObservationProfile, i: usize, q: usize) -> Point3 {
    if i == 0 {
        return Point3::ORIGIN;
    }
    let n_az = profile.n_az;
    let qm = (q + n_az - 1) % n_az;
    let qp = (q + 1) % n_az;
    let y0 = profile.value(i, q) as f64;
    // radial: the inner neighbor of ring 1 is the center sample
    let inner = if i == 1 {
        profile.center as f64
    } else {
        profile.value(i - 1, q) as f64
    };
    let dr = if i == profile.radii.len() {
        0.0
    } else {
        parabolic_offset(inner, y0, profile.value(i + 1, q) as f64)
    };
    let dq = parabolic_offset(profile.value(i, qm) as f64, y0, profile.value(i, qp) as f64);
    let r = (profile.radii[i - 1] + dr * profile.grid.spacing).max(0.0);
    let phi = TAU * (q as f64 + dq) / n_az as f64;
    Point3::planar(r, phi)
}

/// Closed-form worst-case profile distortion at user u from the other
/// users, as printed: circular (U-1) * NU * (2 pi d/lambda)^(-1/3);
/// spherical 2 pi (U-1) * (d/lambda)^(-1).
pub fn error_bound(scenario: &Scenario, u: usize) -> Result<f64, EstimationError> {
    bound_impl(scenario, u, false)
}

/// The tighter spherical variant (U-1) * (2 pi d/lambda)^(-1) coming from
/// |sinc(x)| <= 1/x; identical to `error_bound` for the circular array.
pub fn error_bound_tight(scenario: &Scenario, u: usize) -> Result<f64, EstimationError> {
    bound_impl(scenario, u, true)
}

fn bound_impl(scenario: &Scenario, u: usize, tight: bool) -> Result<f64, EstimationError> {
    let users = &scenario.users;
    if users.len() < 2 {
        return Err(EstimationError::TooFewUsers);
    }
    let xu = users[u];
    let d_min = users
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != u)
        .map(|(_, &xk)| geometry::distance(xu, xk))
        .fold(f64::INFINITY, f64::min);
    let others = (users.len() - 1) as f64;
    let dl = d_min / scenario.lambda;
    match scenario.array.kind {
        ArrayKind::Circular { .. } => Ok(others * NU * (TAU * dl).powf(-1.0 / 3.0)),
        ArrayKind::Spherical { .. } => {
            if tight {
                Ok(others / (TAU * dl))
            } else {
                Ok(TAU * others / dl)
            }
        }
        ArrayKind::CollocatedDisk { .. } => Err(EstimationError::UnsupportedKind),
    }
}

/// Minimum total distance over injective assignments of estimates to
/// true locations (exact bitmask DP; fine for U <= 20).
pub fn assignment_cost(estimates: &[Point3], truths: &[Point3]) -> f64 {
    let m = estimates.len();
    let n = truths.len();
    assert!(m <= n && n <= 24, "assignment sized for small user counts");
    if m == 0 {
        return 0.0;
    }
    let cost: Vec<f64> = estimates
        .iter()
        .flat_map(|&e| truths.iter().map(move |&t| geometry::distance(e, t)))
        .collect();
    let size = 1usize << n;
    let mut dp = vec![f64::INFINITY; size];
    dp[0] = 0.0;
    for mask in 0..size {
        if dp[mask].is_infinite() {
            continue;
        }
        let i = mask.count_ones() as usize;
        if i >= m {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                let c = dp[mask] + cost[i * n + j];
                if c < dp[next] {
                    dp[next] = c;
                }
            }
        }
    }
    (0..size)
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| dp[mask])
        .fold(f64::INFINITY, f64::min)
}
