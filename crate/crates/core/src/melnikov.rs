//! Integrable Schwarzschild case (`B = 0`): extra integral, the inclined
//! unstable circular orbit, its homoclinic loop, and the first-order Melnikov
//! coefficient of the loop's splitting in `B^2`.
//!
//! All solutions are parametrized by the time `u` with `d tau = r^2 du`.

use crate::dynamics::{IntegralSet, ReducedState};
use crate::poincare::SectionPoint;
use crate::quadrature::adaptive_gk;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Parameters of the unstable circular orbit of radius `r_u` and its homoclinic loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicParams {
    pub r_u: f64,
    /// Apoapsis of the loop, `r_u / (r_u - 2)`.
    pub r_a: f64,
    pub gamma: f64,
    /// `1/a` is the total angular momentum of the circular orbit.
    pub a: f64,
    pub e: f64,
    /// Axial angular momentum, `0 < L < 1/a`.
    pub l: f64,
}

impl HomoclinicParams {
    pub fn new(r_u: f64, l: f64) -> Result<Self> {
        if !(r_u > 2.0 && r_u < 3.0) {
            let why = if r_u <= 2.0 { "the asymptotic orbits escape to infinity" } else { "the circular orbit is stable" };
            return Err(Error::domain(format!("homoclinic loop needs r_u in (2, 3), got {r_u}: {why}")));
        }
        let a = (2.0 * r_u - 3.0).sqrt() / r_u;
        if !(l > 0.0 && l * a < 1.0) {
            return Err(Error::domain(format!("need 0 < L < 1/a = {}, got {l}", 1.0 / a)));
        }
        Ok(HomoclinicParams {
            r_u,
            r_a: r_u / (r_u - 2.0),
            gamma: (r_u * (3.0 - r_u)).sqrt() / (2.0 * (2.0 * r_u - 3.0).sqrt()),
            a,
            e: energy_of_radius(r_u),
            l,
        })
    }

    /// Parameters for given `(L, E)`, solving `E(r_u) = E` on `(2, 3)`.
    pub fn from_integrals(ints: IntegralSet) -> Result<Self> {
        let (lo, hi) = (energy_of_radius(3.0), energy_of_radius(2.0));
        if !(ints.e > lo && ints.e < hi) {
            return Err(Error::domain(format!("energy {} outside ({lo}, {hi}): no homoclinic loop", ints.e)));
        }
        // E(r_u) decreases on (2, 3)
        let (mut a, mut b) = (2.0, 3.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if energy_of_radius(m) > ints.e {
                a = m;
            } else {
                b = m;
            }
        }
        Self::new(0.5 * (a + b), ints.l)
    }

    pub fn integrals(&self) -> IntegralSet {
        IntegralSet { l: self.l, e: self.e }
    }

    /// Amplitude `sqrt(1 - L^2 a^2)` of `cos theta`.
    pub fn inclination_amplitude(&self) -> f64 {
        (1.0 - self.l * self.l * self.a * self.a).sqrt()
    }
}

/// Energy of the circular orbit of radius `r` at `B = 0`.
pub fn energy_of_radius(r: f64) -> f64 {
    SQRT_2 * (r - 1.0) / (r * (2.0 * r - 3.0)).sqrt()
}

/// Extra integral `F = p_theta^2 + L^2 / sin^2 theta` of the `B = 0` system.
pub fn schwarzschild_f(s: ReducedState, l: f64) -> f64 {
    let sn = s.theta.sin();
    s.p_theta * s.p_theta + l * l / (sn * sn)
}

/// `F_0 = F - 2 r_u^2 H|_{B=0}`, which is stationary on the circular orbit `r = r_u`.
pub fn f0(s: ReducedState, ints: IntegralSet, r_u: f64) -> f64 {
    let (r, sn) = (s.r, s.theta.sin());
    let ru2 = r_u * r_u;
    r * ru2 * ints.e * ints.e / (r - 1.0) + (r * r - ru2) / (r * r) * (ints.l * ints.l / (sn * sn) + s.p_theta * s.p_theta)
        - (r - 1.0) / r * ru2 * s.p_r * s.p_r
}

/// `(theta, p_theta)` at time `u`, shared by the circular orbit and the loop.
pub fn periodic_solution(hp: &HomoclinicParams, c_theta: f64, u: f64) -> (f64, f64) {
    let psi = u / hp.a + c_theta;
    let la2 = hp.l * hp.l * hp.a * hp.a;
    let theta = (hp.inclination_amplitude() * psi.cos()).acos();
    let p_theta = SQRT_2 / hp.a * psi.sin() / ((1.0 + la2) / (1.0 - la2) - (2.0 * psi).cos()).sqrt();
    (theta, p_theta)
}

/// State along the homoclinic loop at time `u`; `r(0) = r_a`, `r(+-inf) = r_u`.
pub fn homoclinic_solution(hp: &HomoclinicParams, c_theta: f64, u: f64) -> ReducedState {
    let (theta, p_theta) = periodic_solution(hp, c_theta, u);
    ReducedState { p_r: homoclinic_p_r(hp, u), p_theta, r: homoclinic_r(hp, u), theta }
}

pub fn homoclinic_r(hp: &HomoclinicParams, u: f64) -> f64 {
    let (sh, ch) = ((hp.gamma * u).sinh(), (hp.gamma * u).cosh());
    hp.r_u * ch * ch / (hp.r_u / hp.r_a + sh * sh)
}

/// `p_r = (dr/du) / (r (r - 1))`.
pub fn homoclinic_p_r(hp: &HomoclinicParams, u: f64) -> f64 {
    let gu = hp.gamma * u;
    let ch = gu.cosh();
    -2.0 * hp.gamma * gu.tanh() / (1.0 + (hp.r_u - 1.0) * ch * ch / (3.0 - hp.r_u))
}

/// Trace of the loop on the section `(r, P_r)` with `P_r = (1 - 1/r) p_r`.
pub fn section_loop(hp: &HomoclinicParams, u: f64) -> SectionPoint {
    let r = homoclinic_r(hp, u);
    SectionPoint::new(r, (1.0 - 1.0 / r) * homoclinic_p_r(hp, u))
}

/// Time `u` on the loop with radius `r` (clamped to `[r_u, r_a]`); `upper` picks `P_r > 0`, i.e. `u < 0`.
pub fn loop_time(hp: &HomoclinicParams, r: f64, upper: bool) -> f64 {
    let r = r.clamp(hp.r_u * (1.0 + 1e-15), hp.r_a);
    let s2 = hp.r_u * (1.0 - r / hp.r_a) / (r - hp.r_u);
    let u = s2.max(0.0).sqrt().asinh() / hp.gamma;
    if upper { -u } else { u }
}

/// Euclidean distance in `(r, P_r)` from `p` to the homoclinic loop (including the saddle).
pub fn distance_to_loop(hp: &HomoclinicParams, p: SectionPoint) -> f64 {
    let saddle = SectionPoint::new(hp.r_u, 0.0);
    let u0 = loop_time(hp, p.r, p.p_r > 0.0);
    let d = |u: f64| section_loop(hp, u).dist(p);
    // golden-section search around the radial guess
    let (mut a, mut b) = (u0 - 1.0, u0 + 1.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut e) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fe) = (d(c), d(e));
    for _ in 0..120 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = d(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = d(e);
        }
    }
    fc.min(fe).min(d(u0)).min(saddle.dist(p))
}

/// Integrand of `J1` at time `u`.
pub fn melnikov_integrand(hp: &HomoclinicParams, c_theta: f64, u: f64) -> f64 {
    let s = homoclinic_solution(hp, c_theta, u);
    let r2 = s.r * s.r;
    // cos(theta) = k cos(psi); skip the arccos round trip
    let cs = hp.inclination_amplitude() * (u / hp.a + c_theta).cos();
    let sn2 = 1.0 - cs * cs;
    let sin2 = 2.0 * sn2.sqrt() * cs;
    let dr = radial_excess(hp, u);
    hp.r_u * hp.r_u * r2 * sn2 * (s.r - 1.0) * s.p_r - 0.5 * r2 * sin2 * dr * (s.r + hp.r_u) * s.p_theta
}

/// Envelope of [`melnikov_integrand`] over `C_theta`; decays like `exp(-2 gamma |u|)`.
fn integrand_envelope(hp: &HomoclinicParams, u: f64) -> f64 {
    let r = homoclinic_r(hp, u);
    let r2 = r * r;
    let p_theta_max = SQRT_2 / hp.a / (2.0 * hp.l * hp.l * hp.a * hp.a / (1.0 - hp.l * hp.l * hp.a * hp.a)).sqrt();
    hp.r_u * hp.r_u * r2 * (r - 1.0) * homoclinic_p_r(hp, u).abs() + 0.5 * r2 * radial_excess(hp, u) * (r + hp.r_u) * p_theta_max
}

/// `r(u) - r_u`, written so that it stays accurate on the tails.
fn radial_excess(hp: &HomoclinicParams, u: f64) -> f64 {
    let sh = (hp.gamma * u).sinh();
    hp.r_u * (1.0 - hp.r_u / hp.r_a) / (hp.r_u / hp.r_a + sh * sh)
}

/// `J1` computed by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelnikovQuadrature {
    pub value: f64,
    /// Quadrature error estimate plus the analytic tail bound.
    pub error: f64,
    pub u_max: f64,
}

/// Tail bound target for the truncation of the integration range.
pub const TAIL_TOL: f64 = 1e-12;

/// `J1(C_theta)` by adaptive quadrature of the integrand along the loop.
///
/// `J1` is exponentially small next to the integrand when `r_u` nears 3.
/// A first pass sets the scale of the result and of each half-line
/// integral; the second pass refines the panels and the truncation tail
/// towards `1e-10 |J1|`, with the panel target floored at a few ulps of
/// the half-line integrals. If that floor is out of reach (the halves
/// cancel near a zero of `J1`) it is raised to a few ulps of `int |f|`.
pub fn melnikov_quadrature(hp: &HomoclinicParams, c_theta: f64) -> Result<MelnikovQuadrature> {
    let tail = |u: f64| integrand_envelope(hp, u) / (2.0 * hp.gamma);
    let f = |u: f64| melnikov_integrand(hp, c_theta, u);
    let pass = |tail_tol: f64, abs_tol: [f64; 2], rel_tol: f64| -> Result<(MelnikovQuadrature, [f64; 2])> {
        let mut u_max = 10.0 / hp.gamma;
        while 2.0 * tail(u_max) > tail_tol {
            u_max *= 1.25;
            if u_max > 1e4 {
                return Err(Error::numerical("Melnikov tail bound not reached"));
            }
        }
        let left = adaptive_gk(f, -u_max, 0.0, abs_tol[0], rel_tol, 50_000)?;
        let right = adaptive_gk(f, 0.0, u_max, abs_tol[1], rel_tol, 50_000)?;
        let q = MelnikovQuadrature { value: left.value + right.value, error: left.error + right.error + 2.0 * tail(u_max), u_max };
        Ok((q, [left.value.abs(), right.value.abs()]))
    };
    let (coarse, halves) = pass(TAIL_TOL, [1e-14; 2], 1e-12)?;
    let scale = (coarse.value.abs() * 1e-10).clamp(1e-30, TAIL_TOL);
    if scale >= TAIL_TOL {
        return Ok(coarse);
    }
    // the halves are O(1), so a relative target on each would be far too loose
    let floor = |h: f64| (4.0 * f64::EPSILON * h).max(scale);
    if let Ok((q, _)) = pass(scale, [floor(halves[0]), floor(halves[1])], 0.0) {
        return Ok(q);
    }
    // near a zero of J1 the halves cancel and the panel sums round at the level of int |f|
    let u = coarse.u_max;
    let l1 = |a: f64, b: f64| adaptive_gk(|x| melnikov_integrand(hp, c_theta, x).abs(), a, b, 0.0, 1e-3, 50_000).map(|q| q.value);
    Ok(pass(scale, [floor(l1(-u, 0.0)?), floor(l1(0.0, u)?)], 0.0)?.0)
}

/// Closed form of `J1(C_theta)`.
pub fn melnikov_closed_form(hp: &HomoclinicParams, c_theta: f64) -> f64 {
    let ru = hp.r_u;
    let ag = hp.a * hp.gamma;
    // arccos(sqrt(r_u / r_a)) = arccos(sqrt(r_u - 2)), as an atan2
    let x = ru - 2.0;
    let ang = (1.0 - x).max(0.0).sqrt().atan2(x.sqrt());
    let z = 2.0 * ang / ag;
    let f = 5.0 * (2.0 * ru - 3.0).powi(2) * z.cosh()
        + (8.0 * ru * ru * (10.0 * ru - 39.0) + 358.0 * ru - 103.0) / (4.0 * (ru * (ru - 2.0)).sqrt()) * z.sinh();
    -PI * ru.powi(5) * (1.0 - hp.a * hp.a * hp.l * hp.l) * f / (4.0 * (ru - 2.0).powi(3) * (PI / ag).sinh()) * (2.0 * c_theta).sin()
}

/// Closed forms of the two auxiliary integrals
/// `int sin(alpha x + C) cosh^4 x (beta^2 + cosh 2x) / (beta^2 + sinh^2 x)^4 dx` and
/// `int cos(alpha x + C) cosh^3 x sinh x / (beta^2 + sinh^2 x)^3 dx` over the real line.
///
/// Both are proportional to `sin C`.
pub fn auxiliary_integrals(alpha: f64, beta: f64, c: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain("auxiliary integrals need alpha > 0 and 0 < beta < 1"));
    }
    let (a2, b2) = (alpha * alpha, beta * beta);
    let acb = beta.acos();
    let root = beta * (1.0 - b2).sqrt();
    let sh = (alpha * PI / 2.0).sinh();
    let p1 = 2.0 * b2 * (b2 - 1.0) * (2.0 * b2 + 1.0) * a2 - 6.0 * b2 - 5.0;
    let p2 = b2 * (b2 - 1.0) * a2 - 4.0 * b2 * (5.0 * b2 + 7.0) - 15.0;
    let i1 = -PI * c.sin() / (16.0 * b2 * b2 * b2 * sh) * (p1 * (alpha * acb).sinh() / root + alpha / 3.0 * p2 * (alpha * acb).cosh());
    let i2 = -PI * alpha * c.sin() / (8.0 * b2 * sh) * ((1.0 + 2.0 * b2) / root * (alpha * acb).sinh() + alpha * (alpha * acb).cosh());
    Ok((i1, i2))
}

/// The same two integrals by quadrature over `|x| <= 60`.
pub fn auxiliary_quadratures(alpha: f64, beta: f64, c: f64) -> Result<(f64, f64)> {
    let b2 = beta * beta;
    let f1 = |x: f64| {
        let (sh, ch) = (x.sinh(), x.cosh());
        (alpha * x + c).sin() * ch.powi(4) * (b2 + (2.0 * x).cosh()) / (b2 + sh * sh).powi(4)
    };
    let f2 = |x: f64| {
        let (sh, ch) = (x.sinh(), x.cosh());
        (alpha * x + c).cos() * ch.powi(3) * sh / (b2 + sh * sh).powi(3)
    };
    let q = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(adaptive_gk(f, -60.0, 0.0, 1e-15, 1e-13, 20_000)?.value + adaptive_gk(f, 0.0, 60.0, 1e-15, 1e-13, 20_000)?.value)
    };
    Ok((q(&f1)?, q(&f2)?))
}

/// One row of the closed-form versus quadrature comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelnikovRow {
    pub r_u: f64,
    pub l: f64,
    pub c_theta: f64,
    pub j1_closed: f64,
    pub j1_quadrature: f64,
    pub rel_err: f64,
}

/// Compares the closed form with quadrature; `L = l_fraction / a` for each `r_u`.
pub fn melnikov_table(r_us: &[f64], l_fraction: f64, c_thetas: &[f64]) -> Result<Vec<MelnikovRow>> {
    let mut rows = Vec::with_capacity(r_us.len() * c_thetas.len());
    for &r_u in r_us {
        let a = (2.0 * r_u - 3.0).sqrt() / r_u;
        let hp = HomoclinicParams::new(r_u, l_fraction / a)?;
        for &c in c_thetas {
            let closed = melnikov_closed_form(&hp, c);
            let quad = melnikov_quadrature(&hp, c)?.value;
            let rel_err = if closed != 0.0 { ((quad - closed) / closed).abs() } else { quad.abs() };
            rows.push(MelnikovRow { r_u, l: hp.l, c_theta: c, j1_closed: closed, j1_quadrature: quad, rel_err });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rhs_reduced;
    use crate::spacetime::FieldParameters;
    use approx::assert_relative_eq;

    fn hp25() -> HomoclinicParams {
        let a = 2f64.sqrt() / 2.5;
        HomoclinicParams::new(2.5, 0.5 / a).unwrap()
    }

    /// Residual of the B = 0 equations in the time `u`: `d/du = r^2 d/dtau`.
    fn residual(hp: &HomoclinicParams, c: f64, u: f64) -> f64 {
        let h = 1e-4;
        let s = |u: f64| homoclinic_solution(hp, c, u).to_array();
        let (a, b, cc, d) = (s(u + 2.0 * h), s(u + h), s(u - h), s(u - 2.0 * h));
        let x = homoclinic_solution(hp, c, u);
        let f = rhs_reduced(x, hp.integrals(), FieldParameters::schwarzschild());
        (0..4)
            .map(|i| {
                let du = (-a[i] + 8.0 * b[i] - 8.0 * cc[i] + d[i]) / (12.0 * h);
                (du - x.r * x.r * f[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn loop_parameters_at_two_and_a_half() {
        let hp = hp25();
        assert_relative_eq!(hp.r_a, 5.0, epsilon = 1e-14);
        assert_relative_eq!(hp.gamma, 1.25f64.sqrt() / (2.0 * 2f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(hp.a, 2f64.sqrt() / 2.5, epsilon = 1e-15);
        assert_relative_eq!(hp.e, 1.5 * 2f64.sqrt() / 5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(homoclinic_p_r(&hp, 0.0), 0.0);
        assert_relative_eq!(homoclinic_r(&hp, 0.0), hp.r_a, epsilon = 1e-14);
    }

    #[test]
    fn rejects_outside_homoclinic_range() {
        assert!(HomoclinicParams::new(1.9, 0.5).is_err());
        assert!(HomoclinicParams::new(3.1, 0.5).is_err());
        assert!(HomoclinicParams::new(2.5, 2.0).is_err());
    }

    #[test]
    fn loop_satisfies_equations_of_motion() {
        for &(ru, frac, c) in &[(2.5f64, 0.5, 0.3), (2.2, 0.9, 1.1), (2.8, 0.2, -0.4)] {
            let a = (2.0 * ru - 3.0).sqrt() / ru;
            let hp = HomoclinicParams::new(ru, frac / a).unwrap();
            for i in 0..=80 {
                let u = -20.0 + 0.5 * i as f64;
                assert!(residual(&hp, c, u) < 1e-8, "u = {u}");
            }
        }
    }

    #[test]
    fn tanh_scaled_radial_momentum_is_not_a_solution() {
        let hp = hp25();
        let naive = |u: f64| -2.0 * hp.r_u * (hp.gamma * u).tanh() / (1.0 + hp.r_u * (hp.r_u - 1.0) / (hp.r_a - hp.r_u));
        assert!((naive(1.0) - homoclinic_p_r(&hp, 1.0)).abs() > 1e-2);
    }

    #[test]
    fn energy_level_along_solutions() {
        let hp = hp25();
        let fp = FieldParameters::schwarzschild();
        for i in 0..40 {
            let u = -10.0 + 0.5 * i as f64;
            let h = crate::dynamics::hamiltonian_reduced(homoclinic_solution(&hp, 0.7, u), hp.integrals(), fp);
            assert!((h + 0.5).abs() < 1e-10);
            let (theta, p_theta) = periodic_solution(&hp, 0.7, u);
            let circ = ReducedState { p_r: 0.0, p_theta, r: hp.r_u, theta };
            assert!((crate::dynamics::hamiltonian_reduced(circ, hp.integrals(), fp) + 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn extra_integrals_constant_on_solutions() {
        let hp = hp25();
        let f_ref = schwarzschild_f(homoclinic_solution(&hp, 0.2, 0.0), hp.l);
        let f0_ref = f0(homoclinic_solution(&hp, 0.2, 0.0), hp.integrals(), hp.r_u);
        for i in 0..50 {
            let u = -12.0 + 0.5 * i as f64;
            let s = homoclinic_solution(&hp, 0.2, u);
            assert!((schwarzschild_f(s, hp.l) - f_ref).abs() < 1e-10);
            assert!((f0(s, hp.integrals(), hp.r_u) - f0_ref).abs() < 1e-9 * f0_ref.abs());
        }
    }

    #[test]
    fn f0_identity_and_stationarity() {
        let hp = hp25();
        let fp = FieldParameters::schwarzschild();
        let ints = hp.integrals();
        for &(pr, pt, r, th) in &[(0.1, 0.3, 2.7, 1.2), (-0.4, -0.2, 4.1, 0.6), (0.0, 1.0, 1.5, 2.0)] {
            let s = ReducedState { p_r: pr, p_theta: pt, r, theta: th };
            let h = crate::dynamics::hamiltonian_reduced(s, ints, fp);
            let lhs = f0(s, ints, hp.r_u);
            let rhs = schwarzschild_f(s, hp.l) - 2.0 * hp.r_u * hp.r_u * h;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
        }
        // gradient vanishes on the circular orbit
        for &u in &[0.0, 0.4, 1.3] {
            let (theta, p_theta) = periodic_solution(&hp, 0.5, u);
            let x = [0.0, p_theta, hp.r_u, theta];
            for k in 0..4 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let g = (f0(ReducedState::from_array(xp), ints, hp.r_u) - f0(ReducedState::from_array(xm), ints, hp.r_u)) / (2.0 * h);
                assert!(g.abs() < 1e-7, "component {k}: {g}");
            }
        }
    }

    #[test]
    fn equatorial_limit_of_periodic_solution() {
        let a = 2f64.sqrt() / 2.5;
        let hp = HomoclinicParams::new(2.5, (1.0 - 1e-12) / a).unwrap();
        for &u in &[0.0, 0.5, 2.0] {
            assert!((periodic_solution(&hp, 0.1, u).0 - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
        }
        assert!(melnikov_closed_form(&hp, PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn approach_rate_is_two_gamma() {
        let hp = hp25();
        let (u1, u2) = (8.0, 14.0);
        let slope = ((homoclinic_r(&hp, u2) - hp.r_u).ln() - (homoclinic_r(&hp, u1) - hp.r_u).ln()) / (u2 - u1);
        assert!((slope / (-2.0 * hp.gamma) - 1.0).abs() < 0.05);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let hp = hp25();
        let q = melnikov_quadrature(&hp, PI / 4.0).unwrap();
        let c = melnikov_closed_form(&hp, PI / 4.0);
        // independent high-precision evaluation of the same integral
        assert_relative_eq!(c, -16.6083865394872, max_relative = 1e-12);
        assert_relative_eq!(q.value, c, max_relative = 1e-9);
        assert!(melnikov_quadrature(&hp, 0.0).unwrap().value.abs() < 1e-10);
        let m = melnikov_quadrature(&hp, -0.3).unwrap().value;
        let p = melnikov_quadrature(&hp, 0.3).unwrap().value;
        assert_relative_eq!(m, -p, max_relative = 1e-9);
    }

    #[test]
    fn auxiliary_identities() {
        let (c1, c2) = auxiliary_integrals(1.0, 0.5, PI / 4.0).unwrap();
        let (q1, q2) = auxiliary_quadratures(1.0, 0.5, PI / 4.0).unwrap();
        assert_relative_eq!(c1, q1, max_relative = 1e-8);
        assert_relative_eq!(c2, q2, max_relative = 1e-8);
        // high-precision reference values
        assert_relative_eq!(q1, 126.954572551098597805618472013, max_relative = 1e-10);
        assert_relative_eq!(q2, -2.86125295711806739175815564141, max_relative = 1e-10);
        let (z1, z2) = auxiliary_integrals(1.0, 0.5, 0.0).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
        let (s1, s2) = auxiliary_integrals(2.0, 0.3, 0.4 + PI).unwrap();
        let (t1, t2) = auxiliary_integrals(2.0, 0.3, 0.4).unwrap();
        assert_relative_eq!(s1, -t1, max_relative = 1e-12);
        assert_relative_eq!(s2, -t2, max_relative = 1e-12);
    }

    #[test]
    fn auxiliary_double_angle_form_disagrees() {
        // with sin(2C) in place of sin(C) the identities fail away from C = pi/4
        let c = PI / 6.0;
        let (k1, _) = auxiliary_integrals(1.0, 0.5, PI / 2.0).unwrap();
        let naive = k1 * (2.0 * c).sin();
        let (q1, _) = auxiliary_quadratures(1.0, 0.5, c).unwrap();
        assert!((naive - q1).abs() > 1.0);
    }

    #[test]
    fn loop_time_inverts_radius() {
        let hp = hp25();
        for &u in &[-3.0, -0.7, 0.4, 2.5] {
            let r = homoclinic_r(&hp, u);
            assert_relative_eq!(loop_time(&hp, r, u < 0.0), u, max_relative = 1e-9);
            assert!(distance_to_loop(&hp, section_loop(&hp, u)) < 1e-12);
        }
        assert!(section_loop(&hp, -1.0).p_r > 0.0);
    }

    #[test]
    fn from_integrals_round_trip() {
        let hp = hp25();
        let back = HomoclinicParams::from_integrals(hp.integrals()).unwrap();
        assert_relative_eq!(back.r_u, 2.5, max_relative = 1e-13);
    }
}
