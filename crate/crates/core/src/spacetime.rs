//! Metric factors and the magnetic field of the Schwarzschild-Melvin solution.
//!
//! Everything is dimensionless: the Schwarzschild radius is 1 and G = c = 1,
//! so the horizon sits at `r = 1` and `B` is the field strength times `r_s`.

use crate::ode::{OdeSystem, Stepper, Tolerances};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Dimensionless magnetic parameter `B`.
///
/// `B = 0` is accepted and reproduces the Schwarzschild metric exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParameters {
    b: f64,
}

impl FieldParameters {
    pub fn new(b: f64) -> Result<Self> {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::domain(format!("magnetic parameter must be finite and non-negative, got {b}")));
        }
        Ok(FieldParameters { b })
    }

    pub const fn schwarzschild() -> Self {
        FieldParameters { b: 0.0 }
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn b2(&self) -> f64 {
        self.b * self.b
    }
}

/// A point `(r, theta)` of a meridional half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialPoint {
    pub r: f64,
    pub theta: f64,
}

impl SpatialPoint {
    /// Point strictly outside the horizon and off the symmetry axis.
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r > 1.0) || !r.is_finite() {
            return Err(Error::domain(format!("radius must satisfy r > 1, got {r}")));
        }
        if !(theta > 0.0 && theta < PI) {
            return Err(Error::domain(format!("polar angle must lie in (0, pi), got {theta}")));
        }
        Ok(SpatialPoint { r, theta })
    }

    /// Unchecked constructor; used for the horizon and for grid evaluation.
    pub const fn raw(r: f64, theta: f64) -> Self {
        SpatialPoint { r, theta }
    }

    /// Cylindrical coordinates `(y, z) = (r sin(theta), r cos(theta))`.
    pub fn cylindrical(&self) -> (f64, f64) {
        (self.r * self.theta.sin(), self.r * self.theta.cos())
    }

    pub fn from_cylindrical(y: f64, z: f64) -> Self {
        SpatialPoint { r: y.hypot(z), theta: y.atan2(z) }
    }
}

/// `Lambda = 1 + (B^2 / 4) r^2 sin^2(theta)`.
#[inline]
pub fn lambda_factor(p: SpatialPoint, fp: FieldParameters) -> f64 {
    let s = p.theta.sin();
    1.0 + 0.25 * fp.b2() * p.r * p.r * s * s
}

/// `Gamma = 1 - 1/r`, defined for `r > 1`.
pub fn gamma_factor(r: f64) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::domain(format!("Gamma requires r > 1, got {r}")));
    }
    Ok(1.0 - 1.0 / r)
}

/// Orthonormal-frame components `(B_r, B_theta)` of the magnetic induction.
///
/// Defined on and outside the horizon (`r >= 1`).
pub fn magnetic_induction(p: SpatialPoint, fp: FieldParameters) -> (f64, f64) {
    let lam = lambda_factor(p, fp);
    let amp = fp.b() / (lam * lam);
    let g = (1.0 - 1.0 / p.r).max(0.0);
    (amp * p.theta.cos(), -amp * g.sqrt() * p.theta.sin())
}

/// Energy density of the magnetic field, `B^2 / (16 pi Lambda^4) (1 - sin^2(theta) / r)`.
pub fn energy_density(p: SpatialPoint, fp: FieldParameters) -> f64 {
    let lam = lambda_factor(p, fp);
    let s = p.theta.sin();
    fp.b2() / (16.0 * PI * lam.powi(4)) * (1.0 - s * s / p.r)
}

/// Why a field line stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLineEnd {
    Horizon,
    Axis,
    ArcLength,
}

/// A magnetic force line in the `(y, z)` half-plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLine {
    pub points: Vec<(f64, f64)>,
    pub end: FieldLineEnd,
    pub length: f64,
}

struct Streamline {
    fp: FieldParameters,
    sign: f64,
}

impl OdeSystem<2> for Streamline {
    fn rhs(&self, _s: f64, y: &[f64; 2]) -> [f64; 2] {
        let p = SpatialPoint::from_cylindrical(y[0], y[1]);
        let (br, bt) = magnetic_induction(p, self.fp);
        let (st, ct) = p.theta.sin_cos();
        // r-hat = (sin, cos), theta-hat = (cos, -sin) in the (y, z) plane
        let vy = br * st + bt * ct;
        let vz = br * ct - bt * st;
        let n = vy.hypot(vz);
        if n == 0.0 {
            return [0.0, 0.0];
        }
        [self.sign * vy / n, self.sign * vz / n]
    }
}

const FIELD_LINE_TOL: Tolerances = Tolerances::new(1e-10, 1e-10);
const AXIS_EPS: f64 = 1e-9;

/// Traces the force line through `start` along the field direction.
///
/// A negative `arc_length` traces against the field. The line stops on the
/// horizon, on the symmetry axis or after `|arc_length|` units of length.
pub fn field_line(start: SpatialPoint, fp: FieldParameters, arc_length: f64) -> Result<FieldLine> {
    if !(start.r >= 1.0) || !(start.theta > 0.0 && start.theta < PI) {
        return Err(Error::domain("field line must start outside the horizon and off the axis"));
    }
    let (br, bt) = magnetic_induction(start, fp);
    if br.hypot(bt) == 0.0 {
        return Err(Error::domain("magnetic induction vanishes at the starting point"));
    }
    let sys = Streamline { fp, sign: arc_length.signum() };
    let total = arc_length.abs();
    let y0 = start.cylindrical();
    let mut stepper = Stepper::new(&sys, 0.0, [y0.0, y0.1], 1.0, FIELD_LINE_TOL);
    stepper.max_step = (total / 50.0).max(1e-3);
    let mut points = vec![y0];
    let stop = |y: &[f64; 2]| -> Option<FieldLineEnd> {
        if y[0].hypot(y[1]) <= 1.0 {
            Some(FieldLineEnd::Horizon)
        } else if y[0] <= AXIS_EPS {
            Some(FieldLineEnd::Axis)
        } else {
            None
        }
    };
    loop {
        let st = stepper.step()?;
        let s_end = st.t1.min(total);
        // sub-sample the step so the polyline follows the curve
        let n_sub = 4;
        for i in 1..=n_sub {
            let s = st.t0 + (s_end - st.t0) * i as f64 / n_sub as f64;
            let y = st.dense.eval(s);
            if let Some(end) = stop(&y) {
                let (s_hit, y_hit) = bisect_stop(&st.dense, st.t0, s, &stop);
                points.push((y_hit[0].max(0.0), y_hit[1]));
                return Ok(FieldLine { points, end, length: s_hit });
            }
            points.push((y[0], y[1]));
        }
        if st.t1 >= total {
            return Ok(FieldLine { points, end: FieldLineEnd::ArcLength, length: total });
        }
    }
}

fn bisect_stop<F>(seg: &crate::ode::DenseSegment<2>, mut lo: f64, mut hi: f64, stop: &F) -> (f64, [f64; 2])
where
    F: Fn(&[f64; 2]) -> Option<FieldLineEnd>,
{
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stop(&seg.eval(mid)).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, seg.eval(hi))
}

/// Scalar sampled on a rectangular `(y, z)` grid; points inside the horizon are omitted.
pub fn sample_grid<F>(y_range: (f64, f64), z_range: (f64, f64), ny: usize, nz: usize, f: F) -> Result<Vec<(f64, f64, f64)>>
where
    F: Fn(SpatialPoint) -> f64,
{
    if ny < 2 || nz < 2 || !(y_range.1 > y_range.0) || !(z_range.1 > z_range.0) || y_range.0 < 0.0 {
        return Err(Error::domain("grid needs at least 2x2 nodes over a non-empty range with y >= 0"));
    }
    let mut out = Vec::with_capacity(ny * nz);
    for j in 0..nz {
        let z = z_range.0 + (z_range.1 - z_range.0) * j as f64 / (nz - 1) as f64;
        for i in 0..ny {
            let y = y_range.0 + (y_range.1 - y_range.0) * i as f64 / (ny - 1) as f64;
            let p = SpatialPoint::from_cylindrical(y, z);
            if p.r >= 1.0 {
                out.push((y, z, f(p)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fp(b: f64) -> FieldParameters {
        FieldParameters::new(b).unwrap()
    }

    #[test]
    fn lambda_examples() {
        assert_relative_eq!(lambda_factor(SpatialPoint::raw(2.0, PI / 2.0), fp(0.2)), 1.04, epsilon = 1e-15);
        assert_relative_eq!(lambda_factor(SpatialPoint::raw(5.0, 1e-300), fp(0.3)), 1.0);
        // 1 + 0.15^2/4 * 9 * 3/4 evaluated by hand with exact rationals: 1 + 0.0379687500
        assert_relative_eq!(lambda_factor(SpatialPoint::raw(3.0, PI / 3.0), fp(0.15)), 1.03796875, epsilon = 1e-15);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_factor(2.0).unwrap(), 0.5);
        assert_relative_eq!(gamma_factor(10.0).unwrap(), 0.9, epsilon = 1e-15);
        assert!(gamma_factor(1.0 + 1e-12).unwrap() < 1e-11);
        assert!(gamma_factor(1.0).is_err());
        assert!(gamma_factor(0.5).is_err());
    }

    #[test]
    fn induction_examples() {
        let (_, bt) = magnetic_induction(SpatialPoint::raw(1.0, 0.7), fp(0.3));
        assert_eq!(bt, 0.0);
        let (br, _) = magnetic_induction(SpatialPoint::raw(4.3, PI / 2.0), fp(0.3));
        assert!(br.abs() < 1e-17);
        // r = 4, theta = pi/4, B = 0.1: Lambda = 1 + 0.0025 * 16 * 0.5 = 1.02
        let (br, bt) = magnetic_induction(SpatialPoint::raw(4.0, PI / 4.0), fp(0.1));
        let lam2 = 1.02f64 * 1.02;
        assert_relative_eq!(br, 0.1 / lam2 * 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(bt, -0.1 / lam2 * 0.75f64.sqrt() * 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn energy_density_examples() {
        assert!(energy_density(SpatialPoint::raw(1.0, PI / 2.0), fp(0.4)).abs() < 1e-18);
        let far = energy_density(SpatialPoint::raw(1e9, 1e-16), fp(0.2));
        assert_relative_eq!(far, 0.04 / (16.0 * PI), max_relative = 1e-9);
        // r = 2, theta = pi/2, B = 0.1: Lambda = 1.01
        let rho = energy_density(SpatialPoint::raw(2.0, PI / 2.0), fp(0.1));
        assert_relative_eq!(rho, 0.01 / (16.0 * PI * 1.01f64.powi(4)) * 0.5, max_relative = 1e-15);
    }

    #[test]
    fn schwarzschild_limit_is_field_free() {
        let p = SpatialPoint::raw(3.3, 1.1);
        let f = FieldParameters::schwarzschild();
        assert_eq!(lambda_factor(p, f), 1.0);
        assert_eq!(magnetic_induction(p, f), (0.0, -0.0));
        assert_eq!(energy_density(p, f), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FieldParameters::new(-0.1).is_err());
        assert!(FieldParameters::new(f64::NAN).is_err());
        assert!(SpatialPoint::new(1.0, 1.0).is_err());
        assert!(SpatialPoint::new(2.0, 0.0).is_err());
    }

    #[test]
    fn equatorial_field_line_leaves_along_z() {
        let line = field_line(SpatialPoint::raw(3.0, PI / 2.0), fp(0.1), 0.01).unwrap();
        let (y0, z0) = line.points[0];
        let (y1, z1) = line.points[1];
        // the line curves, so only the initial slope is pinned down
        assert!((y1 - y0).abs() < 1e-3 * (z1 - z0).abs(), "{:?}", line.points[1]);
        assert!(z1 > z0);
    }

    #[test]
    fn near_axis_line_is_parallel_to_axis() {
        let line = field_line(SpatialPoint::raw(10.0, 1e-4), fp(0.1), 5.0).unwrap();
        let (y0, _) = line.points[0];
        let (y1, _) = *line.points.last().unwrap();
        assert!((y1 - y0).abs() < 1e-4);
    }

    #[test]
    fn field_lines_bend_away_from_equator_near_horizon() {
        // Lines started just above the equatorial plane near the horizon are
        // expelled: y grows as they climb in z.
        let line = field_line(SpatialPoint::raw(1.5, PI / 2.0 - 0.05), fp(0.1), 4.0).unwrap();
        let (y0, _) = line.points[0];
        let (y1, z1) = *line.points.last().unwrap();
        assert!(z1 > 1.0 && y1 > y0, "{:?}", line.points.last());
    }

    #[test]
    fn zero_field_start_is_rejected() {
        assert!(field_line(SpatialPoint::raw(2.0, 1.0), FieldParameters::schwarzschild(), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn lambda_reflection_symmetry(r in 1.0f64..100.0, th in 0.01f64..3.13, b in 0.0f64..1.0) {
            let f = fp(b);
            let a = lambda_factor(SpatialPoint::raw(r, th), f);
            let c = lambda_factor(SpatialPoint::raw(r, PI - th), f);
            prop_assert!((a - c).abs() <= 1e-14 * a);
        }

        #[test]
        fn induction_reflection(r in 1.0f64..100.0, th in 0.01f64..3.13, b in 0.0f64..1.0) {
            let f = fp(b);
            let (br1, bt1) = magnetic_induction(SpatialPoint::raw(r, th), f);
            let (br2, bt2) = magnetic_induction(SpatialPoint::raw(r, PI - th), f);
            prop_assert!((br1 + br2).abs() <= 1e-14 * (br1.abs() + 1e-300) + 1e-16);
            prop_assert!((bt1 - bt2).abs() <= 1e-14 * bt1.abs() + 1e-16);
        }

        #[test]
        fn energy_density_nonnegative(r in 1.0f64..1e4, th in 0.0f64..=PI, b in 0.0f64..1.0) {
            prop_assert!(energy_density(SpatialPoint::raw(r, th), fp(b)) >= 0.0);
        }
    }
}
