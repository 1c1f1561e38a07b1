//! Array geometries, free-space location-induced channels, uplink training
//! synthesis and downlink field evaluation.

use crate::geometry::{self, Point3};
use crate::specfun::gauss_legendre;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use thiserror::Error;

/// Golden angle, used by the Fibonacci / sunflower layouts.
const GOLDEN_ANGLE: f64 = PI * (3.0 - 2.23606797749978969);

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("coincident user and antenna")]
    Coincident,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrayKind {
    Circular { r0: f64, n: usize },
    Spherical { r0: f64, n: usize },
    CollocatedDisk { r_d: f64, height: f64, n: usize },
}

/// Sampled array: element positions plus quadrature weights. Weights sum
/// to the circumference (circular), the sphere area (spherical), or N
/// (collocated matched-filter normalization).
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    pub elements: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl ArrayGeometry {
    /// N elements uniformly spaced on the circle of radius r0 in the plane.
    pub fn circular(r0: f64, n: usize) -> Self {
        assert!(r0 > 0.0 && n > 0);
        let elements = (0..n)
            .map(|p| Point3::planar(r0, TAU * p as f64 / n as f64))
            .collect();
        ArrayGeometry {
            kind: ArrayKind::Circular { r0, n },
            elements,
            weights: vec![TAU * r0 / n as f64; n],
        }
    }

    /// Fibonacci spiral lattice on the sphere of radius r0, equal weights.
    pub fn spherical(r0: f64, n: usize) -> Self {
        assert!(r0 > 0.0 && n > 0);
        let elements = (0..n)
            .map(|p| {
                let z = 1.0 - (2.0 * p as f64 + 1.0) / n as f64;
                let theta = z.clamp(-1.0, 1.0).acos();
                let phi = (p as f64 * GOLDEN_ANGLE).rem_euclid(TAU);
                Point3::new(r0, phi, theta)
            })
            .collect();
        ArrayGeometry {
            kind: ArrayKind::Spherical { r0, n },
            elements,
            weights: vec![4.0 * PI * r0 * r0 / n as f64; n],
        }
    }

    /// Product Gauss-Legendre (polar) x uniform (azimuth) sampling of the
    /// sphere; high-order quadrature used as the continuous-limit stand-in.
    pub fn spherical_product(r0: f64, n_theta: usize) -> Self {
        assert!(r0 > 0.0 && n_theta > 0);
        let n_phi = 2 * n_theta;
        let (nodes, gl_w) = gauss_legendre(n_theta);
        let mut elements = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in nodes.iter().zip(&gl_w) {
            let theta = ct.clamp(-1.0, 1.0).acos();
            for q in 0..n_phi {
                elements.push(Point3::new(r0, TAU * q as f64 / n_phi as f64, theta));
                weights.push(r0 * r0 * wt * TAU / n_phi as f64);
            }
        }
        ArrayGeometry {
            kind: ArrayKind::Spherical {
                r0,
                n: elements.len(),
            },
            elements,
            weights,
        }
    }

    /// Sunflower layout in a horizontal disk of radius r_d at the given
    /// height, unit weights.
    pub fn collocated_disk(r_d: f64, height: f64, n: usize) -> Self {
        assert!(r_d > 0.0 && n > 0);
        let elements = (0..n)
            .map(|p| {
                let r = r_d * ((p as f64 + 0.5) / n as f64).sqrt();
                let phi = (p as f64 * GOLDEN_ANGLE).rem_euclid(TAU);
                let (s, c) = phi.sin_cos();
                Point3::from_cartesian(r * c, r * s, height)
            })
            .collect();
        ArrayGeometry {
            kind: ArrayKind::CollocatedDisk { r_d, height, n },
            elements,
            weights: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Array radius r0 (circular/spherical) or height (collocated).
    pub fn r0(&self) -> f64 {
        match self.kind {
            ArrayKind::Circular { r0, .. } | ArrayKind::Spherical { r0, .. } => r0,
            ArrayKind::CollocatedDisk { height, .. } => height,
        }
    }

    /// Total quadrature measure: 2*pi*r0, 4*pi*r0^2, or N.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Channel evaluation mode: full spherical-wave model, or first-order
/// near-center approximation (r0 amplitude, linearized phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    Exact,
    NearCenter,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub array: ArrayGeometry,
    pub users: Vec<Point3>,
    /// wavelength, meters
    pub lambda: f64,
    /// noise power, watts
    pub sigma2: f64,
    /// per-user transmit power, watts
    pub ptx: f64,
}

impl Scenario {
    pub fn new(
        array: ArrayGeometry,
        users: Vec<Point3>,
        lambda: f64,
        sigma2: f64,
        ptx: f64,
    ) -> Self {
        assert!(lambda > 0.0 && sigma2 >= 0.0 && ptx > 0.0);
        Scenario {
            array,
            users,
            lambda,
            sigma2,
            ptx,
        }
    }
}

/// Complex samples, one per array element.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaSamples {
    pub values: Vec<Complex64>,
}

/// Free-space channel gain between a user and an antenna element.
pub fn channel_response(
    user: Point3,
    antenna: Point3,
    lambda: f64,
    mode: ChannelModel,
) -> Result<Complex64, ChannelError> {
    let k = TAU / lambda;
    match mode {
        ChannelModel::Exact => {
            let d = geometry::distance(user, antenna);
            if d == 0.0 {
                return Err(ChannelError::Coincident);
            }
            Ok(Complex64::from_polar(1.0 / ((4.0 * PI).sqrt() * d), -k * d))
        }
        ChannelModel::NearCenter => {
            let r0 = antenna.r;
            let phase = if user.r == 0.0 {
                -k * r0
            } else {
                let psi = geometry::separation_angle(user, antenna)
                    .map_err(|_| ChannelError::Coincident)?;
                -k * (r0 - user.r * psi.cos())
            };
            Ok(Complex64::from_polar(1.0 / ((4.0 * PI).sqrt() * r0), phase))
        }
    }
}

/// Uplink training: per slot, per element,
/// q = (lambda/sqrt(4 pi)) * sum_u h_u(A) s_u(l) + z, z ~ CN(0, sigma^2)
/// i.i.d. across elements and slots. Deterministic given the seed.
pub fn synthesize_training(
    scenario: &Scenario,
    pilots: &[Vec<Complex64>],
    seed: u64,
) -> Result<Vec<AntennaSamples>, ChannelError> {
    let u_count = scenario.users.len();
    if pilots.len() != u_count {
        return Err(ChannelError::Dimension(format!(
            "pilot rows {} != users {u_count}",
            pilots.len()
        )));
    }
    let slots = pilots.first().map_or(0, Vec::len);
    if pilots.iter().any(|row| row.len() != slots) {
        return Err(ChannelError::Dimension("ragged pilot matrix".into()));
    }
    let aperture = scenario.lambda / (4.0 * PI).sqrt();
    // per-element channel rows, computed once
    let h: Vec<Vec<Complex64>> = scenario
        .users
        .iter()
        .map(|&u| {
            scenario
                .array
                .elements
                .iter()
                .map(|&a| channel_response(u, a, scenario.lambda, ChannelModel::Exact))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, (scenario.sigma2 / 2.0).sqrt()).expect("valid std");
    let n = scenario.array.len();
    let mut out = Vec::with_capacity(slots);
    for l in 0..slots {
        let mut values = vec![Complex64::ZERO; n];
        for (hu, s) in h.iter().zip(pilots) {
            let su = s[l];
            for (v, &hp) in values.iter_mut().zip(hu) {
                *v += aperture * hp * su;
            }
        }
        if scenario.sigma2 > 0.0 {
            for v in values.iter_mut() {
                *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        out.push(AntennaSamples { values });
    }
    Ok(out)
}

/// Downlink field at `eval` for a unit data symbol through one precoder:
/// g = sqrt(P_t / dA) * sum_p w_p h(A_p -> eval) f(A_p).
pub fn received_field(
    scenario: &Scenario,
    precoder: &AntennaSamples,
    eval: Point3,
) -> Result<Complex64, ChannelError> {
    received_field_with(scenario, precoder, eval, ChannelModel::Exact)
}

/// `received_field` under an explicit channel model; the approximate
/// model is what the closed-form precoding identities assume.
pub fn received_field_with(
    scenario: &Scenario,
    precoder: &AntennaSamples,
    eval: Point3,
    model: ChannelModel,
) -> Result<Complex64, ChannelError> {
    if precoder.values.len() != scenario.array.len() {
        return Err(ChannelError::Dimension(format!(
            "precoder length {} != elements {}",
            precoder.values.len(),
            scenario.array.len()
        )));
    }
    let mut acc = Complex64::ZERO;
    for ((&a, &w), &f) in scenario
        .array
        .elements
        .iter()
        .zip(&scenario.array.weights)
        .zip(&precoder.values)
    {
        acc += w * channel_response(eval, a, scenario.lambda, model)? * f;
    }
    Ok((scenario.ptx / scenario.array.measure()).sqrt() * acc)
}

/// True if every user lies strictly inside the array and in the plane
/// (the regime all closed forms assume).
pub fn users_planar_inside(scenario: &Scenario) -> bool {
    let r0 = scenario.array.r0();
    scenario
        .users
        .iter()
        .all(|u| u.r < r0 && u.theta == FRAC_PI_2)
}
