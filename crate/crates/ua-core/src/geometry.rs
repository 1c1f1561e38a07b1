//! Spherical-coordinate points and the angle constructions used by the
//! precoding formulas. Points carry (r, azimuth, polar); Cartesian views
//! are derived on demand.

use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coincident points")]
    Coincident,
    #[error("zero-radius point has no direction")]
    ZeroRadius,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// A point in spherical coordinates: radius `r` (meters), azimuth `phi`
/// in [0, 2*pi), polar angle `theta` in [0, pi]. Planar points carry
/// theta = pi/2 exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
}

impl Point3 {
    pub fn new(r: f64, phi: f64, theta: f64) -> Self {
        debug_assert!(r >= 0.0 && (0.0..=PI).contains(&theta));
        Point3 {
            r,
            phi: phi.rem_euclid(TAU),
            theta,
        }
    }

    pub const ORIGIN: Point3 = Point3 {
        r: 0.0,
        phi: 0.0,
        theta: 0.0,
    };

    /// Planar point (theta = pi/2) at the given radius and azimuth.
    pub fn planar(r: f64, phi: f64) -> Self {
        Point3::new(r, phi, PI / 2.0)
    }

    pub fn from_cartesian(x: f64, y: f64, z: f64) -> Self {
        let r = (x * x + y * y + z * z).sqrt();
        if r == 0.0 {
            return Point3::ORIGIN;
        }
        Point3::new(r, y.atan2(x), (z / r).clamp(-1.0, 1.0).acos())
    }

    pub fn to_cartesian(self) -> [f64; 3] {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        [self.r * st * cp, self.r * st * sp, self.r * ct]
    }

    pub fn is_planar(self) -> bool {
        self.theta == PI / 2.0
    }
}

/// Euclidean distance |a - b|.
pub fn distance(a: Point3, b: Point3) -> f64 {
    let [ax, ay, az] = a.to_cartesian();
    let [bx, by, bz] = b.to_cartesian();
    ((ax - bx).powi(2) + (ay - by).powi(2) + (az - bz).powi(2)).sqrt()
}

/// Angle between the position vectors of `a` and `b`, in [0, pi].
pub fn separation_angle(a: Point3, b: Point3) -> Result<f64, GeometryError> {
    if a.r == 0.0 || b.r == 0.0 {
        return Err(GeometryError::ZeroRadius);
    }
    let [ax, ay, az] = a.to_cartesian();
    let [bx, by, bz] = b.to_cartesian();
    let dot = (ax * bx + ay * by + az * bz) / (a.r * b.r);
    Ok(dot.clamp(-1.0, 1.0).acos())
}

/// First-order far-field distance r0 - r_u cos(psi), valid for
/// user.r < antenna.r.
pub fn approx_distance(user: Point3, antenna: Point3) -> Result<f64, GeometryError> {
    if user.r >= antenna.r {
        return Err(GeometryError::Precondition(format!(
            "user radius {} must be below array radius {}",
            user.r, antenna.r
        )));
    }
    if user.r == 0.0 {
        return Ok(antenna.r);
    }
    let psi = separation_angle(user, antenna)?;
    Ok(antenna.r - user.r * psi.cos())
}

/// Quadrant-correct angle of the in-plane difference vector u - k,
/// measured so tan(beta) = (x_u - x_k)/(y_u - y_k). Both points planar.
pub fn beta_angle(u: Point3, k: Point3) -> Result<f64, GeometryError> {
    let [ux, uy, _] = u.to_cartesian();
    let [kx, ky, _] = k.to_cartesian();
    let (dx, dy) = (ux - kx, uy - ky);
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::Coincident);
    }
    Ok(dx.atan2(dy).rem_euclid(TAU))
}

/// Spherical coordinates (r_uk, phi_uk, theta_uk) of the Cartesian
/// difference u - k.
pub fn difference_direction(u: Point3, k: Point3) -> Result<(f64, f64, f64), GeometryError> {
    let [ux, uy, uz] = u.to_cartesian();
    let [kx, ky, kz] = k.to_cartesian();
    let d = Point3::from_cartesian(ux - kx, uy - ky, uz - kz);
    if d.r == 0.0 {
        return Err(GeometryError::Coincident);
    }
    Ok((d.r, d.phi, d.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arb_point() -> impl Strategy<Value = Point3> {
        (0.01f64..50.0, 0.0f64..TAU, 0.0f64..PI).prop_map(|(r, p, t)| Point3::new(r, p, t))
    }

    #[test]
    fn distance_trivial() {
        let p = Point3::new(3.0, 1.2, 0.7);
        assert_abs_diff_eq!(distance(Point3::ORIGIN, p), 3.0, epsilon = 1e-12);
        let a = Point3::planar(1.0, 0.0);
        let b = Point3::planar(1.0, PI);
        assert_abs_diff_eq!(distance(a, b), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn approx_distance_trivia() {
        let r0 = 20.0;
        let ant = Point3::planar(r0, 0.3);
        assert_eq!(approx_distance(Point3::ORIGIN, ant).unwrap(), r0);
        // collinear: psi = 0 so approx = r0 - r_u
        let u = Point3::planar(2.0, 0.3);
        assert_abs_diff_eq!(approx_distance(u, ant).unwrap(), r0 - 2.0, epsilon = 1e-12);
        assert!(approx_distance(ant, u).is_err());
    }

    #[test]
    fn approx_distance_error_small_user() {
        // user.r = 0.01 r0, worst case over angles: error <= 1e-4 r0
        let r0 = 20.0;
        let ru = 0.01 * r0;
        let ant = Point3::planar(r0, 0.0);
        let mut worst = 0.0f64;
        for i in 0..720 {
            let u = Point3::planar(ru, TAU * i as f64 / 720.0);
            let err = (approx_distance(u, ant).unwrap() - distance(u, ant)).abs();
            worst = worst.max(err);
        }
        assert!(worst <= 1e-4 * r0, "worst error {worst}");
    }

    #[test]
    fn approx_distance_error_scales_quadratically() {
        let r0 = 20.0;
        let ant = Point3::planar(r0, 0.0);
        let max_err = |ru: f64| -> f64 {
            (0..720)
                .map(|i| {
                    let u = Point3::planar(ru, TAU * i as f64 / 720.0);
                    (approx_distance(u, ant).unwrap() - distance(u, ant)).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = max_err(0.2) / max_err(0.1);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn separation_angle_trivia() {
        let p = Point3::new(2.0, 0.4, 1.1);
        assert_abs_diff_eq!(separation_angle(p, p).unwrap(), 0.0, epsilon = 1e-7);
        let x = Point3::from_cartesian(1.0, 0.0, 0.0);
        let z = Point3::from_cartesian(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(separation_angle(x, z).unwrap(), PI / 2.0, epsilon = 1e-12);
        assert!(separation_angle(Point3::ORIGIN, p).is_err());
    }

    #[test]
    fn beta_angle_flips_under_swap() {
        let u = Point3::planar(3.0, 0.7);
        let k = Point3::planar(1.5, 2.9);
        let b1 = beta_angle(u, k).unwrap();
        let b2 = beta_angle(k, u).unwrap();
        let wrap = (b2 - b1 - PI).rem_euclid(TAU);
        assert!(wrap.min(TAU - wrap) < 1e-12, "wrap {wrap}");
        assert!(beta_angle(u, u).is_err());
    }

    #[test]
    fn difference_direction_trivia() {
        let u = Point3::new(4.0, 0.0, 0.0); // on +z axis
        let (r, _, th) = difference_direction(u, Point3::ORIGIN).unwrap();
        assert_abs_diff_eq!(r, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th, 0.0, epsilon = 1e-12);
        let a = Point3::planar(3.0, 1.0);
        let b = Point3::planar(2.0, 2.0);
        let (_, _, th) = difference_direction(a, b).unwrap();
        assert_abs_diff_eq!(th, PI / 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn spherical_cartesian_round_trip(p in arb_point()) {
            let [x, y, z] = p.to_cartesian();
            let q = Point3::from_cartesian(x, y, z);
            let [x2, y2, z2] = q.to_cartesian();
            let n = p.r.max(1e-9);
            prop_assert!(((x - x2).abs() + (y - y2).abs() + (z - z2).abs()) / n < 1e-12);
        }

        #[test]
        fn distance_is_symmetric_and_triangular(
            a in arb_point(), b in arb_point(), c in arb_point()
        ) {
            prop_assert!((distance(a, b) - distance(b, a)).abs() < 1e-12);
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
        }

        #[test]
        fn separation_matches_dot_oracle(a in arb_point(), b in arb_point()) {
            let [ax, ay, az] = a.to_cartesian();
            let [bx, by, bz] = b.to_cartesian();
            let oracle = ((ax * bx + ay * by + az * bz)
                / (a.r * b.r)).clamp(-1.0, 1.0).acos();
            prop_assert!((separation_angle(a, b).unwrap() - oracle).abs() < 1e-12);
        }

        #[test]
        fn difference_round_trips(a in arb_point(), b in arb_point()) {
            prop_assume!(distance(a, b) > 1e-6);
            let (r, phi, th) = difference_direction(a, b).unwrap();
            prop_assert!((r - distance(a, b)).abs() < 1e-12 * r.max(1.0));
            let d = Point3::new(r, phi, th).to_cartesian();
            let [ax, ay, az] = a.to_cartesian();
            let [bx, by, bz] = b.to_cartesian();
            prop_assert!((d[0] - (ax - bx)).abs() < 1e-9);
            prop_assert!((d[1] - (ay - by)).abs() < 1e-9);
            prop_assert!((d[2] - (az - bz)).abs() < 1e-9);
        }
    }
}
