//! Poincare return map to the equatorial section `theta = pi/2` (upward
//! crossings) in the coordinates `(r, P_r)`, with fixed-point continuation and
//! separatrix growth.

use crate::dynamics::{IntegralSet, RegularizedFlow, RegularizedState};
use crate::ode::{solve, DenseSegment, OdeSystem, Stepper, Tolerances};
use crate::spacetime::{lambda_factor, FieldParameters, SpatialPoint};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Point of the section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub r: f64,
    pub p_r: f64,
}

impl SectionPoint {
    pub const fn new(r: f64, p_r: f64) -> Self {
        SectionPoint { r, p_r }
    }

    /// Reversing involution `(r, P_r) -> (r, -P_r)`.
    pub fn reflect(self) -> Self {
        SectionPoint { r: self.r, p_r: -self.p_r }
    }

    pub fn dist(self, o: SectionPoint) -> f64 {
        (self.r - o.r).hypot(self.p_r - o.p_r)
    }
}

/// `Delta(r, P_r) = p_theta^2 / (2 Lambda^2 r^2)` for the on-shell lift; the map is defined where it is positive.
pub fn delta(r: f64, p_r: f64, ints: IntegralSet, fp: FieldParameters) -> f64 {
    if !(r > 1.0) {
        return f64::NEG_INFINITY;
    }
    let g = 1.0 - 1.0 / r;
    let w = 4.0 + fp.b2() * r * r;
    8.0 * (ints.e * ints.e - p_r * p_r) / (g * w * w) - 0.5 - ints.l * ints.l * w * w / (32.0 * r * r)
}

/// On-shell state on the section with `p_theta = Lambda r sqrt(2 Delta) >= 0`.
pub fn lift(p: SectionPoint, ints: IntegralSet, fp: FieldParameters) -> Result<RegularizedState> {
    let d = delta(p.r, p.p_r, ints, fp);
    if !(d >= 0.0) {
        return Err(Error::domain(format!("section point ({}, {}) outside the map domain (Delta = {d:e})", p.r, p.p_r)));
    }
    let lam = lambda_factor(SpatialPoint::raw(p.r, FRAC_PI_2), fp);
    Ok(RegularizedState::new(p.p_r, lam * p.r * (2.0 * d).sqrt(), p.r, FRAC_PI_2))
}

/// Settings shared by all map evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub tol: Tolerances,
    pub horizon_delta: f64,
    pub r_max: f64,
    /// Give up on a return after this much `sigma`.
    pub max_sigma: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { tol: Tolerances::new(1e-12, 1e-12), horizon_delta: 1e-6, r_max: 1e3, max_sigma: 1e4 }
    }
}

/// Why an orbit of the map stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Plunged,
    Escaped,
    NoReturn,
    /// `Delta = 0`: the lift has `p_theta = 0` and stays in the equatorial plane.
    Degenerate,
}

/// Iterates of the map from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOrbit {
    pub seed: SectionPoint,
    pub points: Vec<SectionPoint>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy)]
enum Hit {
    Crossing([f64; 4], f64),
    Stopped(Termination),
}

/// `theta` as independent variable; state `(P_r, p_theta, r, sigma)`.
struct HenonSystem {
    flow: RegularizedFlow,
}

impl OdeSystem<4> for HenonSystem {
    fn rhs(&self, theta: f64, y: &[f64; 4]) -> [f64; 4] {
        let f = self.flow.rhs(0.0, &[y[0], y[1], y[2], theta]);
        let inv = 1.0 / f[3];
        [f[0] * inv, f[1] * inv, f[2] * inv, inv]
    }
}

fn bisect_dense(seg: &DenseSegment<4>, mut a: f64, mut b: f64) -> f64 {
    let ga = seg.eval(a)[3] - FRAC_PI_2;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (seg.eval(m)[3] - FRAC_PI_2 > 0.0) == (ga > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Integrates from `y0` (in direction `dir`) to the `count`-th crossing of the
/// section. With `upward_only`, only crossings with `d theta / d sigma > 0` count.
fn next_hit(y0: [f64; 4], ints: IntegralSet, fp: FieldParameters, dir: f64, upward_only: bool, count: usize, opts: &MapOptions) -> Result<Hit> {
    let flow = RegularizedFlow { ints, fp };
    let mut st = Stepper::new(&flow, 0.0, y0, dir, opts.tol);
    let r_h = 1.0 + opts.horizon_delta;
    let mut seen = 0;
    loop {
        let step = st.step()?;
        let g0 = step.y0[3] - FRAC_PI_2;
        let g1 = step.y1[3] - FRAC_PI_2;
        let crossed = if upward_only {
            dir * g0 < 0.0 && dir * g1 >= 0.0
        } else {
            g0 != 0.0 && (g1 == 0.0 || g0.signum() != g1.signum())
        };
        if crossed {
            let sc = bisect_dense(&step.dense, step.t0, step.t1);
            let yc = solve(&flow, step.t0, step.y0, sc, opts.tol)?;
            if yc[2] > r_h {
                seen += 1;
                if seen == count {
                    let henon = HenonSystem { flow };
                    let z = solve(&henon, yc[3], [yc[0], yc[1], yc[2], sc], FRAC_PI_2, opts.tol)?;
                    return Ok(Hit::Crossing([z[0], z[1], z[2], FRAC_PI_2], z[3]));
                }
            }
        }
        if step.y1[2] <= r_h {
            return Ok(Hit::Stopped(Termination::Plunged));
        }
        if step.y1[2] >= opts.r_max {
            return Ok(Hit::Stopped(Termination::Escaped));
        }
        if (step.t1 * dir).abs() > opts.max_sigma {
            return Ok(Hit::Stopped(Termination::NoReturn));
        }
    }
}

fn map_step(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, dir: f64, opts: &MapOptions) -> Result<std::result::Result<SectionPoint, Termination>> {
    let s = lift(p, ints, fp)?;
    if s.p_theta == 0.0 {
        return Ok(Err(Termination::Degenerate));
    }
    Ok(match next_hit(s.to_array(), ints, fp, dir, true, 1, opts)? {
        Hit::Crossing(y, _) => Ok(SectionPoint::new(y[2], y[0])),
        Hit::Stopped(t) => Err(t),
    })
}

fn iterate(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, n: usize, dir: f64, opts: &MapOptions) -> Result<MapOrbit> {
    let mut points = Vec::with_capacity(n);
    let mut x = p;
    let mut termination = Termination::Completed;
    for _ in 0..n {
        match map_step(x, ints, fp, dir, opts)? {
            Ok(y) => {
                points.push(y);
                x = y;
            }
            Err(t) => {
                termination = t;
                break;
            }
        }
    }
    Ok(MapOrbit { seed: p, points, termination })
}

/// Up to `n` forward iterates of the return map.
///
/// Stops early when the orbit plunges, escapes or does not come back within
/// `max_sigma`; the reason is in `termination`.
pub fn return_map(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, n: usize, opts: &MapOptions) -> Result<MapOrbit> {
    iterate(p, ints, fp, n, 1.0, opts)
}

/// Up to `n` iterates of the inverse map (integration backwards in `sigma`).
pub fn inverse_map(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, n: usize, opts: &MapOptions) -> Result<MapOrbit> {
    iterate(p, ints, fp, n, -1.0, opts)
}

/// `P^k(p)` (or `P^-k` with `dir < 0`); leaving the domain is a domain error.
pub fn map_power(p: SectionPoint, k: usize, ints: IntegralSet, fp: FieldParameters, dir: f64, opts: &MapOptions) -> Result<SectionPoint> {
    let orbit = iterate(p, ints, fp, k, dir, opts)?;
    if orbit.termination != Termination::Completed {
        return Err(Error::domain(format!("orbit of ({}, {}) left the map domain: {:?}", p.r, p.p_r, orbit.termination)));
    }
    Ok(*orbit.points.last().unwrap_or(&p))
}

/// Time `sigma` and full state at the first return, for diagnostics.
pub fn crossing_state(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<Option<(f64, RegularizedState)>> {
    let s = lift(p, ints, fp)?;
    Ok(match next_hit(s.to_array(), ints, fp, 1.0, true, 1, opts)? {
        Hit::Crossing(y, sigma) => Some((sigma, RegularizedState::from_array(y))),
        Hit::Stopped(_) => None,
    })
}

/// Stability type of a map fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    Elliptic,
    Hyperbolic,
    /// Neither test passes (multiplier within `1e-6` of the unit circle but real, or off-circle complex pair).
    Parabolic,
}

/// A periodic point of the return map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFixedPoint {
    pub point: SectionPoint,
    pub period: usize,
    pub jacobian: [[f64; 2]; 2],
    /// Eigenvalues of the Jacobian as `(re, im)` pairs.
    pub multipliers: [(f64, f64); 2],
    pub trace: f64,
    /// Product of the multipliers, recorded rather than assumed.
    pub det: f64,
    pub kind: FixedPointKind,
    pub residual: f64,
    pub e: f64,
}

impl MapFixedPoint {
    pub fn is_stable(&self) -> bool {
        self.kind == FixedPointKind::Elliptic
    }

    /// Lies on the fixed line `P_r = 0` of the reversing involution.
    pub fn is_symmetric(&self) -> bool {
        self.point.p_r.abs() < 1e-7
    }

    /// Unit eigenvector for a real multiplier `mu` (`None` for complex pairs).
    pub fn eigenvector(&self, mu: f64) -> Option<[f64; 2]> {
        eigenvector(self.jacobian, mu)
    }

    /// Real multiplier of largest modulus, if the pair is real.
    pub fn dominant_real_multiplier(&self) -> Option<f64> {
        let [(a, ai), (b, bi)] = self.multipliers;
        if ai != 0.0 || bi != 0.0 {
            return None;
        }
        Some(if a.abs() >= b.abs() { a } else { b })
    }
}

fn eigenvector(j: [[f64; 2]; 2], mu: f64) -> Option<[f64; 2]> {
    let (a, b, c, d) = (j[0][0] - mu, j[0][1], j[1][0], j[1][1] - mu);
    let v = if a.hypot(b) >= c.hypot(d) { [-b, a] } else { [-d, c] };
    let n = v[0].hypot(v[1]);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some([v[0] / n, v[1] / n])
}

/// Multipliers and stability type from a 2x2 Jacobian.
pub fn classify_jacobian(j: [[f64; 2]; 2]) -> ([(f64, f64); 2], f64, f64, FixedPointKind) {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        let im = 0.5 * (-disc).sqrt();
        let modulus = det.sqrt();
        let kind = if (modulus - 1.0).abs() < 1e-6 { FixedPointKind::Elliptic } else { FixedPointKind::Parabolic };
        ([(0.5 * tr, im), (0.5 * tr, -im)], tr, det, kind)
    } else {
        let s = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * (tr + tr.signum() * s);
        let small = if big != 0.0 { det / big } else { 0.5 * (tr - s) };
        let kind = if big.abs().max(small.abs()) > 1.0 + 1e-6 { FixedPointKind::Hyperbolic } else { FixedPointKind::Parabolic };
        ([(big, 0.0), (small, 0.0)], tr, det, kind)
    }
}

/// Gradient of the lift `p_theta(r, P_r)` as `(d/dr, d/dP_r)`.
fn lift_gradient(p: SectionPoint, p_theta: f64, ints: IntegralSet, fp: FieldParameters) -> (f64, f64) {
    let (r, pr) = (p.r, p.p_r);
    let b2 = fp.b2();
    let g = 1.0 - 1.0 / r;
    let w = 4.0 + b2 * r * r;
    let (dg, dw) = (1.0 / (r * r), 2.0 * b2 * r);
    let a = 8.0 * (ints.e * ints.e - pr * pr);
    let d_dr = -a * (dg * w + 2.0 * g * dw) / (g * g * w * w * w) - ints.l * ints.l * (w * dw * r - w * w) / (16.0 * r * r * r);
    let d_dp = -16.0 * pr / (g * w * w);
    // p_theta = (w/4) r sqrt(2 Delta), so d p_theta = p_theta (d(w r)/(w r) + dDelta/(2 Delta))
    let dl = delta(r, pr, ints, fp);
    let wr = (dw * r + w) / (w * r);
    (p_theta * (wr + d_dr / (2.0 * dl)), p_theta * d_dp / (2.0 * dl))
}

/// Regularized flow with two tangent vectors carried along.
struct VariationalFlow {
    flow: RegularizedFlow,
}

impl OdeSystem<12> for VariationalFlow {
    fn rhs(&self, t: f64, y: &[f64; 12]) -> [f64; 12] {
        let x = [y[0], y[1], y[2], y[3]];
        let f = self.flow.rhs(t, &x);
        let mut out = [0.0; 12];
        out[..4].copy_from_slice(&f);
        // columns of the flow derivative by central differences
        let mut df = [[0.0; 4]; 4];
        for j in 0..4 {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fp = self.flow.rhs(t, &xp);
            let fm = self.flow.rhs(t, &xm);
            for i in 0..4 {
                df[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        for c in 0..2 {
            for i in 0..4 {
                out[4 + 4 * c + i] = (0..4).map(|j| df[i][j] * y[4 + 4 * c + j]).sum();
            }
        }
        out
    }
}

fn step_with_jacobian(p: SectionPoint, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<(SectionPoint, [[f64; 2]; 2])> {
    let s = lift(p, ints, fp)?;
    if s.p_theta == 0.0 {
        return Err(Error::domain("degenerate section point (p_theta = 0)"));
    }
    let (dpt_dr, dpt_dp) = lift_gradient(p, s.p_theta, ints, fp);
    let flow = RegularizedFlow { ints, fp };
    let var = VariationalFlow { flow };
    let mut y0 = [0.0; 12];
    y0[..4].copy_from_slice(&s.to_array());
    // column 0: d/dr, column 1: d/dP_r
    y0[4..8].copy_from_slice(&[0.0, dpt_dr, 1.0, 0.0]);
    y0[8..12].copy_from_slice(&[1.0, dpt_dp, 0.0, 0.0]);
    let mut st = Stepper::new(&var, 0.0, y0, 1.0, opts.tol);
    let r_h = 1.0 + opts.horizon_delta;
    loop {
        let step = st.step()?;
        let g0 = step.y0[3] - FRAC_PI_2;
        let g1 = step.y1[3] - FRAC_PI_2;
        if g0 < 0.0 && g1 >= 0.0 {
            let (mut a, mut b) = (step.t0, step.t1);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if step.dense.eval(m)[3] < FRAC_PI_2 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let sc = 0.5 * (a + b);
            let yc = solve(&var, step.t0, step.y0, sc, opts.tol)?;
            if yc[2] > r_h {
                let x = [yc[0], yc[1], yc[2], yc[3]];
                let f = flow.rhs(sc, &x);
                let z = solve(&HenonSystem { flow }, x[3], [x[0], x[1], x[2], sc], FRAC_PI_2, opts.tol)?;
                let mut jac = [[0.0; 2]; 2];
                for c in 0..2 {
                    let v = &yc[4 + 4 * c..8 + 4 * c];
                    let dsig = -v[3] / f[3];
                    jac[0][c] = v[2] + f[2] * dsig;
                    jac[1][c] = v[0] + f[0] * dsig;
                }
                return Ok((SectionPoint::new(z[2], z[0]), jac));
            }
        }
        if step.y1[2] <= r_h || step.y1[2] >= opts.r_max || step.t1 > opts.max_sigma {
            return Err(Error::domain(format!("orbit of ({}, {}) left the map domain", p.r, p.p_r)));
        }
    }
}

/// `P^k(p)` together with its Jacobian, from the variational equations.
pub fn map_power_jacobian(p: SectionPoint, k: usize, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<(SectionPoint, [[f64; 2]; 2])> {
    let mut x = p;
    let mut jac = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..k {
        let (nx, j) = step_with_jacobian(x, ints, fp, opts)?;
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for c in 0..2 {
                m[i][c] = j[i][0] * jac[0][c] + j[i][1] * jac[1][c];
            }
        }
        jac = m;
        x = nx;
    }
    Ok((x, jac))
}

/// Jacobian of `P^k` at `p` with respect to `(r, P_r)`.
pub fn map_jacobian(p: SectionPoint, k: usize, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<[[f64; 2]; 2]> {
    Ok(map_power_jacobian(p, k, ints, fp, opts)?.1)
}

/// Central-difference Jacobian of `P^k`, step `1e-6` scaled by coordinate size.
///
/// Cheaper but noisier than [`map_jacobian`]; kept as an independent check.
pub fn map_jacobian_fd(p: SectionPoint, k: usize, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<[[f64; 2]; 2]> {
    let hr = 1e-6 * p.r.abs().max(1.0);
    let hp = 1e-6 * p.p_r.abs().max(1.0);
    let f = |q: SectionPoint| map_power(q, k, ints, fp, 1.0, opts);
    let rp = f(SectionPoint::new(p.r + hr, p.p_r))?;
    let rm = f(SectionPoint::new(p.r - hr, p.p_r))?;
    let pp = f(SectionPoint::new(p.r, p.p_r + hp))?;
    let pm = f(SectionPoint::new(p.r, p.p_r - hp))?;
    Ok([
        [(rp.r - rm.r) / (2.0 * hr), (pp.r - pm.r) / (2.0 * hp)],
        [(rp.p_r - rm.p_r) / (2.0 * hr), (pp.p_r - pm.p_r) / (2.0 * hp)],
    ])
}

/// Residual below which a Newton solve for a periodic point is accepted.
pub const FIXED_POINT_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

/// Solves `P^period(x) = x` by Newton's method from `guess`.
pub fn find_fixed_point(guess: SectionPoint, period: usize, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<MapFixedPoint> {
    if period == 0 {
        return Err(Error::domain("period must be positive"));
    }
    if !(delta(guess.r, guess.p_r, ints, fp) > 0.0) {
        return Err(Error::domain("initial guess lies outside the map domain"));
    }
    let mut x = guess;
    let mut fx = map_power(x, period, ints, fp, 1.0, opts)?;
    let mut res = fx.dist(x);
    for _ in 0..NEWTON_MAX_ITER {
        if res < FIXED_POINT_TOL {
            let jac = map_jacobian(x, period, ints, fp, opts)?;
            let (multipliers, trace, det, kind) = classify_jacobian(jac);
            return Ok(MapFixedPoint { point: x, period, jacobian: jac, multipliers, trace, det, kind, residual: res, e: ints.e });
        }
        let j = map_jacobian(x, period, ints, fp, opts)?;
        let (a, b, c, d) = (j[0][0] - 1.0, j[0][1], j[1][0], j[1][1] - 1.0);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::numerical("singular Newton matrix while solving for a fixed point"));
        }
        let (g0, g1) = (fx.r - x.r, fx.p_r - x.p_r);
        let dx = [-(d * g0 - b * g1) / det, -(-c * g0 + a * g1) / det];
        // damp until the trial point stays in the domain and the residual drops
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = SectionPoint::new(x.r + lam * dx[0], x.p_r + lam * dx[1]);
            if delta(trial.r, trial.p_r, ints, fp) > 0.0 {
                if let Ok(ft) = map_power(trial, period, ints, fp, 1.0, opts) {
                    let rt = ft.dist(trial);
                    if rt < res || lam < 1e-3 {
                        x = trial;
                        fx = ft;
                        res = rt;
                        accepted = true;
                        break;
                    }
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(Error::numerical(format!("Newton step left the map domain near ({}, {})", x.r, x.p_r)));
        }
    }
    Err(Error::numerical(format!("fixed-point Newton did not converge in {NEWTON_MAX_ITER} iterations (residual {res:e})")))
}

/// `P_r` at the `k`-th crossing (either direction) of the orbit launched from `(r, 0)`.
///
/// Its zeros are symmetric periodic points of period `k`: the flow is
/// reversible with respect to `(P_r, theta, sigma) -> (-P_r, pi - theta, -sigma)`,
/// whose fixed set meets the section on `P_r = 0`.
pub fn symmetric_shooting(r: f64, k: usize, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Result<Option<f64>> {
    let s = lift(SectionPoint::new(r, 0.0), ints, fp)?;
    if s.p_theta == 0.0 {
        return Ok(None);
    }
    Ok(match next_hit(s.to_array(), ints, fp, 1.0, false, k, opts)? {
        Hit::Crossing(y, _) => Some(y[0]),
        Hit::Stopped(_) => None,
    })
}

/// Sub-intervals of `(1, r_max)` on the symmetry line where `Delta(r, 0) > 0`.
pub fn symmetric_domain(ints: IntegralSet, fp: FieldParameters, r_max: f64) -> Vec<(f64, f64)> {
    let n = 20_000;
    let xs: Vec<f64> = (0..=n).map(|i| 1.0 + ((r_max - 1.0).ln() * i as f64 / n as f64 - 9.0 * (1.0 - i as f64 / n as f64)).exp()).collect();
    let d = |r: f64| delta(r, 0.0, ints, fp);
    let edge = |a: f64, b: f64| {
        let (mut a, mut b) = (a, b);
        let sa = d(a) > 0.0;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if (d(m) > 0.0) == sa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = if d(xs[0]) > 0.0 { Some(xs[0]) } else { None };
    for w in xs.windows(2) {
        let (pa, pb) = (d(w[0]) > 0.0, d(w[1]) > 0.0);
        if !pa && pb {
            start = Some(edge(w[0], w[1]));
        } else if pa && !pb {
            if let Some(s) = start.take() {
                out.push((s, edge(w[0], w[1])));
            }
        }
    }
    if let Some(s) = start {
        out.push((s, *xs.last().unwrap()));
    }
    out
}

/// Symmetric periodic points of period `k` found by scanning [`symmetric_shooting`]
/// on `n_grid` radii per domain interval, refined and polished by Newton.
pub fn symmetric_fixed_points(ints: IntegralSet, fp: FieldParameters, k: usize, n_grid: usize, opts: &MapOptions) -> Result<Vec<MapFixedPoint>> {
    let mut found: Vec<MapFixedPoint> = Vec::new();
    for (a, b) in symmetric_domain(ints, fp, opts.r_max) {
        let pad = 1e-9 * (b - a);
        let rs: Vec<f64> = (0..n_grid).map(|i| a + pad + (b - a - 2.0 * pad) * i as f64 / (n_grid - 1) as f64).collect();
        let g: Vec<Option<f64>> = rs.iter().map(|&r| symmetric_shooting(r, k, ints, fp, opts).ok().flatten()).collect();
        for i in 0..n_grid - 1 {
            let (Some(ga), Some(gb)) = (g[i], g[i + 1]) else { continue };
            if ga.signum() == gb.signum() && ga != 0.0 {
                continue;
            }
            if let Some(r0) = refine_root(|r| symmetric_shooting(r, k, ints, fp, opts).ok().flatten(), rs[i], rs[i + 1], ga, gb) {
                let Ok(fxp) = find_fixed_point(SectionPoint::new(r0, 0.0), k, ints, fp, opts) else { continue };
                if !fxp.is_symmetric() {
                    continue;
                }
                // drop lower-period points found by the period-k scan
                if k > 1 && (1..k).any(|d| k % d == 0 && map_power(fxp.point, d, ints, fp, 1.0, opts).map(|q| q.dist(fxp.point) < 1e-8).unwrap_or(false)) {
                    continue;
                }
                if !found.iter().any(|f| f.point.dist(fxp.point) < 1e-7) {
                    found.push(fxp);
                }
            }
        }
    }
    found.sort_by(|x, y| x.point.r.total_cmp(&y.point.r));
    Ok(found)
}

/// Illinois regula falsi; `None` if the bracket is a jump rather than a root.
fn refine_root<F: Fn(f64) -> Option<f64>>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Option<f64> {
    let scale = fa.abs().max(fb.abs());
    let mut side = 0;
    for _ in 0..100 {
        let c = if fa != fb { (a * fb - b * fa) / (fb - fa) } else { 0.5 * (a + b) };
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc == 0.0 || (b - a).abs() < 1e-13 * a.abs() {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    let c = 0.5 * (a + b);
    let fc = f(c)?;
    (fc.abs() < 1e-3 * scale.max(1e-12)).then_some(c)
}

/// Kind of bifurcation detected during continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BifurcationKind {
    Pitchfork,
    PeriodDoubling,
    SaddleNode,
}

/// A bifurcation bracketed between two energies of the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: BifurcationKind,
    pub e_before: f64,
    pub e_after: f64,
    /// Fixed point (before the event) whose multiplier crossed `+-1`, or the merging pair's midpoint.
    pub point: SectionPoint,
    /// Points born in the event, evaluated at `e_after`.
    pub born: Vec<MapFixedPoint>,
}

/// Fixed points tracked at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanStep {
    pub e: f64,
    pub fixed_points: Vec<MapFixedPoint>,
}

/// Output of [`scan_bifurcations`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub l: f64,
    pub b: f64,
    pub steps: Vec<ScanStep>,
    pub events: Vec<BifurcationEvent>,
    /// Set when the scan stopped early.
    pub diagnostic: Option<String>,
}

/// Settings for [`scan_bifurcations`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub map: MapOptions,
    /// Shooting samples per domain interval of the symmetry line.
    pub n_grid: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { map: MapOptions::default(), n_grid: 60 }
    }
}

fn crosses(a: f64, b: f64, level: f64) -> bool {
    (a - level) * (b - level) < 0.0
}

/// Continues period-1 fixed points along an increasing energy grid at fixed `L`.
///
/// Symmetric points are located afresh at every energy by shooting along
/// `P_r = 0`; asymmetric points are continued by Newton from the previous
/// energy. Flags a pitchfork when a symmetric point's trace crosses `+2` and
/// an asymmetric pair is found next to it, a period doubling when any
/// tracked trace crosses `-2`, and a saddle-node when a pair of symmetric
/// points appears or disappears together.
pub fn scan_bifurcations(l: f64, energies: &[f64], fp: FieldParameters, opts: &ScanOptions) -> Result<BifurcationScan> {
    if energies.len() < 2 || energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("energy grid must be strictly increasing with at least two values"));
    }
    let mut steps: Vec<ScanStep> = Vec::new();
    let mut events = Vec::new();
    let mut diagnostic = None;
    let mut asym: Vec<MapFixedPoint> = Vec::new();
    for &e in energies {
        let ints = IntegralSet::new(l, e)?;
        let sym = match symmetric_fixed_points(ints, fp, 1, opts.n_grid, &opts.map) {
            Ok(v) => v,
            Err(err) => {
                diagnostic = Some(format!("symmetric scan failed at E = {e}: {err}"));
                break;
            }
        };
        let mut next_asym = Vec::new();
        for a in &asym {
            if let Ok(p) = find_fixed_point(a.point, 1, ints, fp, &opts.map) {
                if !p.is_symmetric() && p.point.dist(a.point) < 0.5 {
                    if crosses(a.trace, p.trace, -2.0) {
                        events.push(BifurcationEvent { kind: BifurcationKind::PeriodDoubling, e_before: a.e, e_after: e, point: a.point, born: Vec::new() });
                    }
                    next_asym.push(p);
                }
            }
        }
        if let Some(prev) = steps.last() {
            let prev_sym: Vec<&MapFixedPoint> = prev.fixed_points.iter().filter(|p| p.is_symmetric()).collect();
            let tol = 0.2;
            for p in &sym {
                let matched = prev_sym.iter().filter(|q| (q.point.r - p.point.r).abs() < tol).min_by(|x, y| (x.point.r - p.point.r).abs().total_cmp(&(y.point.r - p.point.r).abs()));
                if let Some(q) = matched {
                    if crosses(q.trace, p.trace, 2.0) {
                        let born = pitchfork_partners(p, ints, fp, &opts.map);
                        if !born.is_empty() {
                            for b in &born {
                                if !next_asym.iter().any(|x: &MapFixedPoint| x.point.dist(b.point) < 1e-6) {
                                    next_asym.push(*b);
                                }
                            }
                            events.push(BifurcationEvent { kind: BifurcationKind::Pitchfork, e_before: q.e, e_after: e, point: q.point, born });
                        }
                    }
                    if crosses(q.trace, p.trace, -2.0) {
                        events.push(BifurcationEvent { kind: BifurcationKind::PeriodDoubling, e_before: q.e, e_after: e, point: q.point, born: Vec::new() });
                    }
                }
            }
            // symmetric points without a predecessor appearing in pairs
            let new: Vec<&MapFixedPoint> = sym.iter().filter(|p| !prev_sym.iter().any(|q| (q.point.r - p.point.r).abs() < tol)).collect();
            if new.len() >= 2 && sym.len() >= prev_sym.len() + 2 {
                let (a, b) = (new[0], new[1]);
                let mid = SectionPoint::new(0.5 * (a.point.r + b.point.r), 0.0);
                events.push(BifurcationEvent { kind: BifurcationKind::SaddleNode, e_before: prev.e, e_after: e, point: mid, born: vec![*a, *b] });
            }
            let gone: Vec<&&MapFixedPoint> = prev_sym.iter().filter(|q| !sym.iter().any(|p| (q.point.r - p.point.r).abs() < tol)).collect();
            if gone.len() >= 2 && prev_sym.len() >= sym.len() + 2 {
                let mid = SectionPoint::new(0.5 * (gone[0].point.r + gone[1].point.r), 0.0);
                events.push(BifurcationEvent { kind: BifurcationKind::SaddleNode, e_before: prev.e, e_after: e, point: mid, born: Vec::new() });
            }
        }
        let mut fixed_points = sym;
        fixed_points.extend(next_asym.iter().copied());
        asym = next_asym;
        steps.push(ScanStep { e, fixed_points });
    }
    Ok(BifurcationScan { l, b: fp.b(), steps, events, diagnostic })
}

/// Looks for the pair of asymmetric fixed points next to a symmetric point that just lost stability through `+1`.
fn pitchfork_partners(p: &MapFixedPoint, ints: IntegralSet, fp: FieldParameters, opts: &MapOptions) -> Vec<MapFixedPoint> {
    let Some(mu) = p.dominant_real_multiplier() else { return Vec::new() };
    let Some(v) = p.eigenvector(mu) else { return Vec::new() };
    let mut out: Vec<MapFixedPoint> = Vec::new();
    for &s in &[1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
        for sign in [1.0, -1.0] {
            let guess = SectionPoint::new(p.point.r + sign * s * v[0], p.point.p_r + sign * s * v[1]);
            if let Ok(q) = find_fixed_point(guess, 1, ints, fp, opts) {
                if !q.is_symmetric() && q.point.dist(p.point) < 1.0 && !out.iter().any(|o| o.point.dist(q.point) < 1e-6) {
                    out.push(q);
                }
            }
        }
        if out.len() >= 2 {
            break;
        }
    }
    out
}

/// Which invariant manifold and which half of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSide {
    pub unstable: bool,
    /// Sign of the eigenvector used for seeding.
    pub positive: bool,
}

/// Why a separatrix branch stopped growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchEnd {
    /// All requested iterations were computed.
    Complete,
    /// Points left the map domain (plunge or escape).
    Truncated,
    /// The point budget was reached.
    Budget,
}

/// An ordered chain of points on one branch of a stable or unstable manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixBranch {
    pub parent: MapFixedPoint,
    pub side: BranchSide,
    pub points: Vec<SectionPoint>,
    pub end: BranchEnd,
}

/// Settings for [`trace_separatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixOptions {
    pub map: MapOptions,
    /// Seed distance from the fixed point.
    pub eps: f64,
    /// Largest allowed gap between consecutive points.
    pub max_spacing: f64,
    /// Gaps below this are never refined.
    pub min_spacing: f64,
    /// Turning angle (radians) above which gaps larger than `min_spacing` are refined.
    pub max_turn: f64,
    /// Number of map iterations applied to the fundamental segment.
    pub iterations: usize,
    pub max_points: usize,
    /// Initial samples on the fundamental segment.
    pub initial_samples: usize,
}

impl Default for SeparatrixOptions {
    fn default() -> Self {
        SeparatrixOptions { map: MapOptions::default(), eps: 1e-7, max_spacing: 1e-2, min_spacing: 1e-3, max_turn: 0.05, iterations: 8, max_points: 20_000, initial_samples: 32 }
    }
}

/// Grows one branch of the stable or unstable manifold of a hyperbolic fixed point.
///
/// Seeds the fundamental segment `x* + eps mu^s v`, `s in [0, 1)`, along the
/// eigenvector `v` of the multiplier `mu` (`P` for the unstable manifold,
/// `P^-1` for the stable one), iterates it and bisects in `s` wherever
/// consecutive images are farther apart than `max_spacing`. Points are
/// ordered by `n + s`, i.e. along the manifold away from `x*`. Samples whose
/// orbit leaves the domain are dropped and the branch is marked truncated.
///
/// The spacing bound lies between `min_spacing` and `max_spacing`: a gap is
/// refined when it exceeds `max_spacing`, or exceeds `min_spacing` while the
/// chain turns by more than `max_turn` at either end of it.
pub fn trace_separatrix(fixed: &MapFixedPoint, side: BranchSide, ints: IntegralSet, fp: FieldParameters, opts: &SeparatrixOptions) -> Result<SeparatrixBranch> {
    if fixed.kind != FixedPointKind::Hyperbolic {
        return Err(Error::domain("separatrices need a hyperbolic fixed point"));
    }
    let mu_u = fixed.dominant_real_multiplier().ok_or_else(|| Error::domain("complex multipliers"))?;
    let mu_s = fixed.det / mu_u;
    let (mu, dir) = if side.unstable { (mu_u, 1.0) } else { (mu_s, -1.0) };
    let v = fixed.eigenvector(mu).ok_or_else(|| Error::numerical("degenerate eigenvector"))?;
    // with a negative multiplier the branch alternates sides; use the square of the map
    let (growth, per) = if mu < 0.0 { (mu * mu, 2) } else { (mu, 1) };
    let growth = if side.unstable { growth } else { 1.0 / growth };
    let sign = if side.positive { 1.0 } else { -1.0 };
    let x0 = fixed.point;
    let seed = |s: f64| {
        let d = sign * opts.eps * growth.powf(s);
        SectionPoint::new(x0.r + d * v[0], x0.p_r + d * v[1])
    };
    let n_it = opts.iterations;
    let orbit = |s: f64| -> Result<Vec<Option<SectionPoint>>> {
        let mut out = Vec::with_capacity(n_it + 1);
        let mut q = seed(s);
        out.push(Some(q));
        for _ in 0..n_it {
            match map_power(q, per, ints, fp, dir, &opts.map) {
                Ok(nq) => {
                    q = nq;
                    out.push(Some(q));
                }
                Err(Error::Domain(_) | Error::Integration { .. }) => {
                    while out.len() < n_it + 1 {
                        out.push(None);
                    }
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    };
    let m = opts.initial_samples.max(2);
    let mut ss: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let mut orbits: Vec<Vec<Option<SectionPoint>>> = ss.iter().map(|&s| orbit(s)).collect::<Result<_>>()?;
    let mut end = BranchEnd::Complete;
    let total_points = |o: &Vec<Vec<Option<SectionPoint>>>| o.len() * (n_it + 1);
    loop {
        let mut inserts = Vec::new();
        for i in 0..ss.len() - 1 {
            let need = (0..=n_it).any(|n| match (orbits[i][n], orbits[i + 1][n]) {
                (Some(a), Some(b)) => {
                    let gap = a.dist(b);
                    gap > opts.max_spacing || (gap > opts.min_spacing && {
                        let prev = if i > 0 { orbits[i - 1][n] } else { None };
                        let next = orbits.get(i + 2).and_then(|o| o[n]);
                        prev.is_some_and(|p| turn(p, a, b) > opts.max_turn) || next.is_some_and(|q| turn(a, b, q) > opts.max_turn)
                    })
                }
                (Some(_), None) | (None, Some(_)) => true,
                _ => false,
            });
            if need && ss[i + 1] - ss[i] > 1e-12 {
                inserts.push(i);
            }
        }
        if inserts.is_empty() {
            break;
        }
        if total_points(&orbits) + inserts.len() * (n_it + 1) > opts.max_points {
            end = BranchEnd::Budget;
            break;
        }
        for &i in inserts.iter().rev() {
            let s = 0.5 * (ss[i] + ss[i + 1]);
            let o = orbit(s)?;
            ss.insert(i + 1, s);
            orbits.insert(i + 1, o);
        }
    }
    let mut points = Vec::new();
    for n in 0..=n_it {
        for (i, o) in orbits.iter().enumerate() {
            // s = 1 duplicates s = 0 of the next iterate
            if i == ss.len() - 1 && n < n_it {
                continue;
            }
            match o[n] {
                Some(p) => points.push(p),
                None => {
                    if end == BranchEnd::Complete {
                        end = BranchEnd::Truncated;
                    }
                }
            }
        }
    }
    Ok(SeparatrixBranch { parent: *fixed, side, points, end })
}

/// Angle between the segments `a -> b` and `b -> c`.
fn turn(a: SectionPoint, b: SectionPoint, c: SectionPoint) -> f64 {
    let (x1, y1) = (b.r - a.r, b.p_r - a.p_r);
    let (x2, y2) = (c.r - b.r, c.p_r - b.p_r);
    (x1 * y2 - y1 * x2).atan2(x1 * x2 + y1 * y2).abs()
}

/// A crossing between two polylines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCrossing {
    pub point: SectionPoint,
    /// Angle between the two segments in radians, in `[0, pi/2]`.
    pub angle: f64,
    pub index_a: usize,
    pub index_b: usize,
    /// Signed distances of `b` from `a` at arclength `probe` before and after the crossing.
    pub separation: (f64, f64),
}

impl BranchCrossing {
    /// The second curve passes from one side of the first to the other by more than `floor`.
    pub fn is_transversal(&self, floor: f64) -> bool {
        let (d0, d1) = self.separation;
        d0 * d1 < 0.0 && d0.abs().min(d1.abs()) > floor
    }
}

/// Default separation floor for [`BranchCrossing::is_transversal`]; coincident
/// branches of the integrable case stay below `1e-8`.
pub const TRANSVERSAL_FLOOR: f64 = 1e-6;

/// Arclength on each side of a crossing at which the branch separation is measured.
pub const CROSSING_PROBE: f64 = 0.02;

/// Signed distance from `p` to the nearest segment of `chain` within `radius` of `near`.
fn local_signed_distance(p: SectionPoint, chain: &[SectionPoint], near: SectionPoint, radius: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for w in chain.windows(2) {
        if w[0].dist(near) > radius && w[1].dist(near) > radius {
            continue;
        }
        let (dx, dy) = (w[1].r - w[0].r, w[1].p_r - w[0].p_r);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let t = (((p.r - w[0].r) * dx + (p.p_r - w[0].p_r) * dy) / len2).clamp(0.0, 1.0);
        let d = SectionPoint::new(w[0].r + t * dx, w[0].p_r + t * dy).dist(p);
        if d < best.0 {
            let side = dx * (p.p_r - w[0].p_r) - dy * (p.r - w[0].r);
            best = (d, if side >= 0.0 { d } else { -d });
        }
    }
    best.1
}

fn walk(chain: &[SectionPoint], from: usize, forward: bool, length: f64) -> SectionPoint {
    let mut acc = 0.0;
    let mut i = from;
    loop {
        let j = if forward { i + 1 } else { i.wrapping_sub(1) };
        if j >= chain.len() {
            return chain[i];
        }
        acc += chain[i].dist(chain[j]);
        i = j;
        if acc >= length {
            return chain[i];
        }
    }
}

/// Proper intersections between the segments of two polylines.
///
/// Segments with an endpoint within `exclude` of `center` are skipped (the
/// branches always meet at the fixed point itself). Two samplings of one
/// curve also cross each other, so use [`BranchCrossing::is_transversal`]
/// rather than the chord angle to tell real intersections apart.
pub fn polyline_crossings(a: &[SectionPoint], b: &[SectionPoint], center: SectionPoint, exclude: f64) -> Vec<BranchCrossing> {
    let mut out = Vec::new();
    for i in 0..a.len().saturating_sub(1) {
        let (p, p2) = (a[i], a[i + 1]);
        if p.dist(center) < exclude || p2.dist(center) < exclude {
            continue;
        }
        let (ax0, ax1) = (p.r.min(p2.r), p.r.max(p2.r));
        let (ay0, ay1) = (p.p_r.min(p2.p_r), p.p_r.max(p2.p_r));
        for j in 0..b.len().saturating_sub(1) {
            let (q, q2) = (b[j], b[j + 1]);
            if q.r.max(q2.r) < ax0 || q.r.min(q2.r) > ax1 || q.p_r.max(q2.p_r) < ay0 || q.p_r.min(q2.p_r) > ay1 {
                continue;
            }
            if q.dist(center) < exclude || q2.dist(center) < exclude {
                continue;
            }
            let (dx1, dy1) = (p2.r - p.r, p2.p_r - p.p_r);
            let (dx2, dy2) = (q2.r - q.r, q2.p_r - q.p_r);
            let den = dx1 * dy2 - dy1 * dx2;
            if den == 0.0 {
                continue;
            }
            let t = ((q.r - p.r) * dy2 - (q.p_r - p.p_r) * dx2) / den;
            let u = ((q.r - p.r) * dy1 - (q.p_r - p.p_r) * dx1) / den;
            if (0.0..1.0).contains(&t) && (0.0..1.0).contains(&u) {
                let n1 = dx1.hypot(dy1);
                let n2 = dx2.hypot(dy2);
                let angle = (den.abs() / (n1 * n2)).clamp(0.0, 1.0).asin();
                let x = SectionPoint::new(p.r + t * dx1, p.p_r + t * dy1);
                let before = walk(b, j, false, CROSSING_PROBE);
                let after = walk(b, j + 1, true, CROSSING_PROBE);
                let radius = 3.0 * CROSSING_PROBE;
                let separation = (local_signed_distance(before, a, x, radius), local_signed_distance(after, a, x, radius));
                out.push(BranchCrossing { point: x, angle, index_a: i, index_b: j, separation });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::hamiltonian_regularized;
    use crate::equilibria::sigma_r_point;
    use crate::melnikov::{distance_to_loop, HomoclinicParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn fp(b: f64) -> FieldParameters {
        FieldParameters::new(b).unwrap()
    }

    fn ints(l: f64, e: f64) -> IntegralSet {
        IntegralSet::new(l, e).unwrap()
    }

    #[test]
    fn delta_vanishes_on_relative_equilibria() {
        for &(b, rc) in &[(0.15, 3.0), (0.15, 5.0), (0.0, 4.0), (0.3, 2.5)] {
            let (l, e) = sigma_r_point(rc, fp(b)).unwrap();
            assert!(delta(rc, 0.0, ints(l, e), fp(b)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn lift_is_on_shell(r in 1.2f64..8.0, pr in -0.5f64..0.5, b in 0.0f64..0.4) {
            let (ints, fp) = (ints(2.8, 1.3), fp(b));
            prop_assume!(delta(r, pr, ints, fp) > 0.0);
            let s = lift(SectionPoint::new(r, pr), ints, fp).unwrap();
            prop_assert!((hamiltonian_regularized(s, ints, fp).unwrap() + 0.5).abs() < 1e-12);
            prop_assert!(s.p_theta > 0.0);
        }
    }

    #[test]
    fn equatorial_seed_is_degenerate() {
        let (l, e) = sigma_r_point(4.0, fp(0.15)).unwrap();
        // p_theta = 0 after rounding: the orbit stays in the equatorial plane
        let (ints, fp) = (ints(l, e), fp(0.15));
        let d = delta(4.0, 0.0, ints, fp);
        if d >= 0.0 && lift(SectionPoint::new(4.0, 0.0), ints, fp).unwrap().p_theta == 0.0 {
            let o = return_map(SectionPoint::new(4.0, 0.0), ints, fp, 3, &MapOptions::default()).unwrap();
            assert!(o.points.is_empty());
            assert_eq!(o.termination, Termination::Degenerate);
        }
        let below = SectionPoint::new(4.0, 0.5);
        assert!(return_map(below, ints, fp, 1, &MapOptions::default()).is_err());
    }

    #[test]
    fn reversibility_on_random_points() {
        let (ints, fp) = (ints(2.8, 1.24), fp(0.15));
        let o = MapOptions::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 20 {
            let p = SectionPoint::new(rng.gen_range(3.3..5.6), rng.gen_range(-0.3..0.3));
            if !(delta(p.r, p.p_r, ints, fp) > 1e-4) {
                continue;
            }
            let (Ok(fwd), Ok(back)) = (map_power(p.reflect(), 1, ints, fp, 1.0, &o), map_power(p, 1, ints, fp, -1.0, &o)) else { continue };
            assert!(fwd.reflect().dist(back) < 1e-8, "{p:?}: {fwd:?} vs {back:?}");
            checked += 1;
        }
    }

    #[test]
    fn crossings_land_on_section() {
        let (ints, fp) = (ints(2.8, 1.24), fp(0.15));
        let o = MapOptions::default();
        let flow = RegularizedFlow { ints, fp };
        for &p in &[SectionPoint::new(4.2, 0.1), SectionPoint::new(3.6, -0.2), SectionPoint::new(5.0, 0.05)] {
            let (sigma, state) = crossing_state(p, ints, fp, &o).unwrap().unwrap();
            let y = solve(&flow, 0.0, lift(p, ints, fp).unwrap().to_array(), sigma, Tolerances::new(1e-14, 1e-14)).unwrap();
            assert!((y[3] - FRAC_PI_2).abs() < 1e-11, "theta off by {}", y[3] - FRAC_PI_2);
            assert!((y[2] - state.r).abs() < 1e-10);
            assert!(delta(state.r, state.p_r, ints, fp) >= -1e-12);
        }
    }

    #[test]
    fn symmetric_center_at_e_1_19() {
        let (ints, fp) = (ints(2.8, 1.19), fp(0.15));
        let pts = symmetric_fixed_points(ints, fp, 1, 60, &MapOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        let c = pts[0];
        assert!(c.is_stable() && c.is_symmetric());
        assert!((c.point.r - 3.9005).abs() < 1e-4);
        assert!((lift(c.point, ints, fp).unwrap().p_theta - 0.3932).abs() < 1e-4);
        assert!(c.residual < FIXED_POINT_TOL);
        assert_relative_eq!(c.det, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn asymmetric_point_after_pitchfork() {
        let (ints, fp) = (ints(2.8, 1.24), fp(0.15));
        let o = MapOptions::default();
        let p = find_fixed_point(SectionPoint::new(5.0, 0.1), 1, ints, fp, &o).unwrap();
        assert!(p.is_stable() && !p.is_symmetric());
        assert!((p.point.r - 5.0135).abs() < 1e-4 && (p.point.p_r - 0.0938).abs() < 1e-4);
        assert!((lift(p.point, ints, fp).unwrap().p_theta - 1.3962).abs() < 1e-4);
        // its mirror image is the other branch of the pitchfork
        let q = find_fixed_point(p.point.reflect(), 1, ints, fp, &o).unwrap();
        assert!(q.point.dist(p.point.reflect()) < 1e-8);
    }

    #[test]
    fn period_two_orbit_returns_after_two_crossings() {
        let (ints, fp) = (ints(2.8, 1.258), fp(0.15));
        let o = MapOptions::default();
        let p = find_fixed_point(SectionPoint::new(3.8058, 0.3331), 2, ints, fp, &o).unwrap();
        assert!((p.point.r - 3.8058).abs() < 1e-4 && (p.point.p_r - 0.3331).abs() < 1e-4);
        assert!((lift(p.point, ints, fp).unwrap().p_theta - 1.1167).abs() < 1e-4);
        let once = map_power(p.point, 1, ints, fp, 1.0, &o).unwrap();
        assert!(once.dist(p.point) > 0.1);
        assert!(map_power(p.point, 2, ints, fp, 1.0, &o).unwrap().dist(p.point) < 1e-9);
    }

    #[test]
    fn saddle_node_pair_above_critical_field() {
        let (ints, fp) = (ints(2.8, 1.815), fp(0.4));
        let o = MapOptions::default();
        let s = find_fixed_point(SectionPoint::new(2.16, 0.0), 1, ints, fp, &o).unwrap();
        assert!(s.is_stable());
        assert!((s.point.r - 2.15737).abs() < 2e-3 && s.point.p_r.abs() < 1e-6);
        assert!((lift(s.point, ints, fp).unwrap().p_theta - 2.55158).abs() < 1e-4);
        let all = symmetric_fixed_points(ints, fp, 1, 60, &o).unwrap();
        assert!(all.iter().any(|p| p.kind == FixedPointKind::Hyperbolic));
    }

    #[test]
    fn relative_equilibrium_is_the_limit_of_the_center() {
        let f = fp(0.15);
        let rc = 4.0;
        let (l, ec) = sigma_r_point(rc, f).unwrap();
        let mut prev = f64::INFINITY;
        for &de in &[1e-4, 1e-6, 1e-8] {
            let ints = ints(l, ec + de);
            let p = find_fixed_point(SectionPoint::new(rc, 0.0), 1, ints, f, &MapOptions::default()).unwrap();
            let d = (p.point.r - rc).abs();
            assert!(d < prev && d < 1e2 * de.sqrt(), "dE = {de}: distance {d}");
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn variational_and_difference_jacobians_agree() {
        let (ints, fp) = (ints(2.8, 1.24), fp(0.15));
        let o = MapOptions::default();
        let p = SectionPoint::new(4.3, 0.07);
        let a = map_jacobian(p, 1, ints, fp, &o).unwrap();
        let b = map_jacobian_fd(p, 1, ints, fp, &o).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-4 * (1.0 + a[i][j].abs()), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn classification_examples() {
        let rot = |t: f64| [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
        assert_eq!(classify_jacobian(rot(0.3)).3, FixedPointKind::Elliptic);
        assert_eq!(classify_jacobian([[3.0, 0.0], [0.0, 1.0 / 3.0]]).3, FixedPointKind::Hyperbolic);
        assert_eq!(classify_jacobian([[-3.0, 1.0], [0.0, -1.0 / 3.0]]).3, FixedPointKind::Hyperbolic);
        assert_eq!(classify_jacobian([[1.0, 1.0], [0.0, 1.0]]).3, FixedPointKind::Parabolic);
        let (mu, tr, det, _) = classify_jacobian([[2.0, 1.0], [1.0, 1.0]]);
        assert_relative_eq!(mu[0].0 * mu[1].0, det, epsilon = 1e-14);
        assert_relative_eq!(mu[0].0 + mu[1].0, tr, epsilon = 1e-14);
    }

    #[test]
    fn pitchfork_and_period_doubling_in_scan() {
        let es: Vec<f64> = (0..=12).map(|i| 1.234 + 0.002 * i as f64).collect();
        let scan = scan_bifurcations(2.8, &es, fp(0.15), &ScanOptions::default()).unwrap();
        let pf = scan.events.iter().position(|e| e.kind == BifurcationKind::Pitchfork).expect("pitchfork");
        let ev = &scan.events[pf];
        assert_eq!(ev.born.len(), 2);
        assert!(ev.born.iter().all(|p| p.is_stable() && !p.is_symmetric()));
        assert!(scan.events[pf..].iter().any(|e| e.kind == BifurcationKind::PeriodDoubling && e.point.p_r.abs() > 1e-3));
    }

    #[test]
    fn no_bifurcations_in_integrable_case() {
        let es: Vec<f64> = (0..=10).map(|i| 0.950 + 0.002 * i as f64).collect();
        let scan = scan_bifurcations(1.8, &es, fp(0.0), &ScanOptions::default()).unwrap();
        assert!(scan.events.is_empty(), "{:?}", scan.events);
        assert!(scan.steps.iter().all(|s| !s.fixed_points.is_empty()));
    }

    #[test]
    fn rejects_non_monotone_grid() {
        assert!(scan_bifurcations(2.8, &[1.2, 1.1], fp(0.15), &ScanOptions::default()).is_err());
    }

    fn hyperbolic_near(r: f64, ints: IntegralSet, fp: FieldParameters) -> MapFixedPoint {
        symmetric_fixed_points(ints, fp, 1, 60, &MapOptions::default())
            .unwrap()
            .into_iter()
            .filter(|p| p.kind == FixedPointKind::Hyperbolic)
            .min_by(|a, b| (a.point.r - r).abs().total_cmp(&(b.point.r - r).abs()))
            .unwrap()
    }

    fn polyline_distance(p: SectionPoint, chain: &[SectionPoint]) -> f64 {
        chain
            .windows(2)
            .map(|w| {
                let (dx, dy) = (w[1].r - w[0].r, w[1].p_r - w[0].p_r);
                let t = (((p.r - w[0].r) * dx + (p.p_r - w[0].p_r) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                SectionPoint::new(w[0].r + t * dx, w[0].p_r + t * dy).dist(p)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn integrable_separatrix_is_the_homoclinic_loop() {
        let ints = ints(1.8, 0.9584);
        let hp = HomoclinicParams::from_integrals(ints).unwrap();
        let f = fp(0.0);
        let x = hyperbolic_near(hp.r_u, ints, f);
        assert!((x.point.r - hp.r_u).abs() < 1e-8);
        let so = SeparatrixOptions { iterations: 5, ..Default::default() };
        let v = x.eigenvector(x.dominant_real_multiplier().unwrap()).unwrap();
        // the loop lies at larger r
        let outward = v[0] > 0.0;
        let un = trace_separatrix(&x, BranchSide { unstable: true, positive: outward }, ints, f, &so).unwrap();
        assert!(un.points.iter().any(|p| p.r > 0.5 * (hp.r_u + hp.r_a)));
        for p in &un.points {
            assert!(distance_to_loop(&hp, *p) < 1e-6);
        }
        let mu_s = x.det / x.dominant_real_multiplier().unwrap();
        let vs = x.eigenvector(mu_s).unwrap();
        let st = trace_separatrix(&x, BranchSide { unstable: false, positive: vs[0] > 0.0 }, ints, f, &so).unwrap();
        for p in &st.points {
            assert!(distance_to_loop(&hp, *p) < 1e-6);
        }
        // the branches coincide, so no crossing above the noise level
        let cs = polyline_crossings(&un.points, &st.points, x.point, 1e-3);
        assert!(!cs.is_empty());
        assert!(cs.iter().all(|c| !c.is_transversal(TRANSVERSAL_FLOOR)));
        // the inner branch plunges
        let inner = trace_separatrix(&x, BranchSide { unstable: true, positive: !outward }, ints, f, &so).unwrap();
        assert_eq!(inner.end, BranchEnd::Truncated);
    }

    #[test]
    fn stable_branch_is_mirror_of_unstable() {
        let ints = ints(1.8, 0.9584);
        let f = fp(0.02);
        let x = hyperbolic_near(2.3, ints, f);
        let so = SeparatrixOptions { iterations: 3, ..Default::default() };
        let mu = x.dominant_real_multiplier().unwrap();
        let v = x.eigenvector(mu).unwrap();
        let vs = x.eigenvector(x.det / mu).unwrap();
        let un = trace_separatrix(&x, BranchSide { unstable: true, positive: v[0] > 0.0 }, ints, f, &so).unwrap();
        let st = trace_separatrix(&x, BranchSide { unstable: false, positive: vs[0] > 0.0 }, ints, f, &so).unwrap();
        for p in st.points.iter().step_by(7) {
            assert!(polyline_distance(p.reflect(), &un.points) < 1e-4);
        }
    }

    #[test]
    fn separatrices_split_for_small_field() {
        let ints = ints(1.8, 0.9584);
        let f = fp(0.02);
        let x = hyperbolic_near(2.3, ints, f);
        let so = SeparatrixOptions { iterations: 5, ..Default::default() };
        let mu = x.dominant_real_multiplier().unwrap();
        let v = x.eigenvector(mu).unwrap();
        let vs = x.eigenvector(x.det / mu).unwrap();
        let un = trace_separatrix(&x, BranchSide { unstable: true, positive: v[0] > 0.0 }, ints, f, &so).unwrap();
        let st = trace_separatrix(&x, BranchSide { unstable: false, positive: vs[0] > 0.0 }, ints, f, &so).unwrap();
        let c = polyline_crossings(&un.points, &st.points, x.point, 1e-3);
        assert!(c.iter().any(|c| c.is_transversal(TRANSVERSAL_FLOOR)));
    }
}
