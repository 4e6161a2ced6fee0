//! Reduced two-degree-of-freedom geodesic flow and its regularization at the horizon.
//!
//! After eliminating the cyclic coordinates `t` and `phi` the motion of a
//! neutral particle is governed by
//!
//! ```text
//! H = Gamma p_r^2 / (2 Lambda^2) + p_theta^2 / (2 r^2 Lambda^2) + U(r, theta),
//! U = L^2 Lambda^2 / (2 r^2 sin^2 theta) - E^2 / (2 Lambda^2 Gamma),
//! ```
//!
//! restricted to the level `H = -1/2`. The regularized chart uses
//! `P_r = Gamma p_r` and `d sigma = d tau / Gamma`; in it the horizon `r = 1`
//! is an invariant manifold and the vector field is smooth there.

use crate::ode::{DenseSegment, OdeSystem, Stats, Stepper, Tolerances};
use crate::quadrature::gauss_legendre_8;
use crate::spacetime::{lambda_factor, FieldParameters, SpatialPoint};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Energy `E` and axial angular momentum `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralSet {
    pub l: f64,
    pub e: f64,
}

impl IntegralSet {
    pub fn new(l: f64, e: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::domain(format!("angular momentum must be positive, got {l}")));
        }
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::domain(format!("energy must be positive, got {e}")));
        }
        Ok(IntegralSet { l, e })
    }
}

/// Phase point `(p_r, p_theta, r, theta)` of the reduced system (proper time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub p_r: f64,
    pub p_theta: f64,
    pub r: f64,
    pub theta: f64,
}

/// Phase point `(P_r, p_theta, r, theta)` of the regularized system, `P_r = Gamma p_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedState {
    pub p_r: f64,
    pub p_theta: f64,
    pub r: f64,
    pub theta: f64,
}

impl RegularizedState {
    pub const fn new(p_r: f64, p_theta: f64, r: f64, theta: f64) -> Self {
        RegularizedState { p_r, p_theta, r, theta }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p_r, self.p_theta, self.r, self.theta]
    }

    pub fn from_array(y: [f64; 4]) -> Self {
        RegularizedState { p_r: y[0], p_theta: y[1], r: y[2], theta: y[3] }
    }

    /// Converts to the proper-time chart; needs `r > 1`.
    pub fn to_reduced(self) -> Result<ReducedState> {
        let g = crate::spacetime::gamma_factor(self.r)?;
        Ok(ReducedState { p_r: self.p_r / g, p_theta: self.p_theta, r: self.r, theta: self.theta })
    }

    /// Image under the equatorial reflection `(p_theta, theta) -> (-p_theta, pi - theta)`.
    pub fn reflected(self) -> Self {
        RegularizedState { p_theta: -self.p_theta, theta: std::f64::consts::PI - self.theta, ..self }
    }

    /// Momentum reversal `(P_r, p_theta) -> (-P_r, -p_theta)`.
    pub fn reversed(self) -> Self {
        RegularizedState { p_r: -self.p_r, p_theta: -self.p_theta, ..self }
    }
}

impl ReducedState {
    pub fn to_regularized(self) -> RegularizedState {
        let g = 1.0 - 1.0 / self.r;
        RegularizedState { p_r: g * self.p_r, p_theta: self.p_theta, r: self.r, theta: self.theta }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.p_r, self.p_theta, self.r, self.theta]
    }

    pub fn from_array(y: [f64; 4]) -> Self {
        ReducedState { p_r: y[0], p_theta: y[1], r: y[2], theta: y[3] }
    }
}

/// `Lambda` and its partial derivatives in `r` and `theta`.
#[derive(Debug, Clone, Copy)]
struct LambdaJet {
    lam: f64,
    lam_r: f64,
    lam_t: f64,
}

#[inline]
fn lambda_jet(r: f64, theta: f64, fp: FieldParameters) -> LambdaJet {
    let (s, c) = theta.sin_cos();
    let k = 0.5 * fp.b2();
    LambdaJet { lam: 1.0 + 0.5 * k * r * r * s * s, lam_r: k * r * s * s, lam_t: k * r * r * s * c }
}

/// Effective potential `U(r, theta)`.
pub fn effective_potential(p: SpatialPoint, ints: IntegralSet, fp: FieldParameters) -> f64 {
    let lam = lambda_factor(p, fp);
    let s = p.theta.sin();
    let g = 1.0 - 1.0 / p.r;
    ints.l * ints.l * lam * lam / (2.0 * p.r * p.r * s * s) - ints.e * ints.e / (2.0 * lam * lam * g)
}

/// Closed-form gradient `(dU/dr, dU/dtheta)`.
pub fn potential_gradient(p: SpatialPoint, ints: IntegralSet, fp: FieldParameters) -> (f64, f64) {
    let LambdaJet { lam, lam_r, lam_t } = lambda_jet(p.r, p.theta, fp);
    let (s, c) = p.theta.sin_cos();
    let r = p.r;
    let g = 1.0 - 1.0 / r;
    let gp = 1.0 / (r * r);
    let l2 = ints.l * ints.l;
    let e2 = ints.e * ints.e;
    let u_r = l2 * lam * (lam_r * r - lam) / (s * s * r * r * r) + e2 * (2.0 * lam_r * g + lam * gp) / (2.0 * lam.powi(3) * g * g);
    let u_t = l2 * lam * (lam_t * s - lam * c) / (r * r * s * s * s) + e2 * lam_t / (lam.powi(3) * g);
    (u_r, u_t)
}

/// Reduced Hamiltonian in the proper-time chart.
pub fn hamiltonian_reduced(s: ReducedState, ints: IntegralSet, fp: FieldParameters) -> f64 {
    let p = SpatialPoint::raw(s.r, s.theta);
    let lam = lambda_factor(p, fp);
    let g = 1.0 - 1.0 / s.r;
    let lam2 = lam * lam;
    g * s.p_r * s.p_r / (2.0 * lam2) + s.p_theta * s.p_theta / (2.0 * s.r * s.r * lam2) + effective_potential(p, ints, fp)
}

/// Regularized Hamiltonian `P_r^2 / (2 Lambda^2 Gamma) + p_theta^2 / (2 Lambda^2 r^2) + U`.
///
/// Equal to [`hamiltonian_reduced`] under `P_r = Gamma p_r`. Only defined for `r > 1`.
pub fn hamiltonian_regularized(s: RegularizedState, ints: IntegralSet, fp: FieldParameters) -> Result<f64> {
    if !(s.r > 1.0) {
        return Err(Error::domain(format!("regularized Hamiltonian needs r > 1, got {}", s.r)));
    }
    Ok(h_reg(&s.to_array(), ints, fp))
}

#[inline]
pub(crate) fn h_reg(y: &[f64; 4], ints: IntegralSet, fp: FieldParameters) -> f64 {
    let [pr, pt, r, th] = *y;
    let LambdaJet { lam, .. } = lambda_jet(r, th, fp);
    let s = th.sin();
    // near the horizon P_r ~ E and r ~ 1; both differences are exact there
    let g = (r - 1.0) / r;
    let lam2 = lam * lam;
    (pr - ints.e) * (pr + ints.e) / (2.0 * lam2 * g) + pt * pt / (2.0 * lam2 * r * r) + ints.l * ints.l * lam2 / (2.0 * r * r * s * s)
}

/// `Gamma (H~ + 1/2)`: smooth across the horizon, vanishes on the physical level set.
pub fn regularized_constraint(s: RegularizedState, ints: IntegralSet, fp: FieldParameters) -> f64 {
    let LambdaJet { lam, .. } = lambda_jet(s.r, s.theta, fp);
    let sn = s.theta.sin();
    let g = 1.0 - 1.0 / s.r;
    let lam2 = lam * lam;
    (s.p_r * s.p_r - ints.e * ints.e) / (2.0 * lam2)
        + g * (s.p_theta * s.p_theta / (2.0 * lam2 * s.r * s.r) + ints.l * ints.l * lam2 / (2.0 * s.r * s.r * sn * sn) + 0.5)
}

/// Vector field of the regularized system, `d/d sigma` of `(P_r, p_theta, r, theta)`.
///
/// Written with the `1/Gamma` poles cancelled so it stays finite at `r = 1`.
pub fn rhs_regularized(s: RegularizedState, ints: IntegralSet, fp: FieldParameters) -> [f64; 4] {
    reg_field(&s.to_array(), ints, fp)
}

#[inline]
fn reg_field(y: &[f64; 4], ints: IntegralSet, fp: FieldParameters) -> [f64; 4] {
    let [pr, pt, r, th] = *y;
    let LambdaJet { lam, lam_r, lam_t } = lambda_jet(r, th, fp);
    let (s, c) = th.sin_cos();
    let g = 1.0 - 1.0 / r;
    let gp = 1.0 / (r * r);
    let lam2 = lam * lam;
    let lam3 = lam2 * lam;
    let l2 = ints.l * ints.l;
    let k = pr * pr - ints.e * ints.e;
    let r3 = r * r * r;
    let pt2 = pt * pt;

    let d_pr = k * (2.0 * lam_r * g + lam * gp) / (2.0 * lam3)
        - g * g * (-pt2 * (lam_r * r + lam) / (lam3 * r3) + l2 * lam * (lam_r * r - lam) / (s * s * r3));
    let d_pt = k * lam_t / lam3 + g * pt2 * lam_t / (r * r * lam3) - g * l2 * lam * (lam_t * s - lam * c) / (r * r * s * s * s);
    [d_pr, d_pt, g * pr / lam2, g * pt / (lam2 * r * r)]
}

/// Vector field of the reduced system in proper time, `d/d tau` of `(p_r, p_theta, r, theta)`.
pub fn rhs_reduced(s: ReducedState, ints: IntegralSet, fp: FieldParameters) -> [f64; 4] {
    red_field(&s.to_array(), ints, fp)
}

#[inline]
fn red_field(y: &[f64; 4], ints: IntegralSet, fp: FieldParameters) -> [f64; 4] {
    let [pr, pt, r, th] = *y;
    let LambdaJet { lam, lam_r, lam_t } = lambda_jet(r, th, fp);
    let g = 1.0 - 1.0 / r;
    let gp = 1.0 / (r * r);
    let lam2 = lam * lam;
    let lam3 = lam2 * lam;
    let (u_r, u_t) = potential_gradient(SpatialPoint::raw(r, th), ints, fp);
    let h_r = pr * pr * (gp * lam - 2.0 * g * lam_r) / (2.0 * lam3) - pt * pt * (lam_r * r + lam) / (lam3 * r * r * r) + u_r;
    let h_t = -g * pr * pr * lam_t / lam3 - pt * pt * lam_t / (r * r * lam3) + u_t;
    [-h_r, -h_t, g * pr / lam2, pt / (r * r * lam2)]
}

/// Regularized flow as an ODE system in `sigma`.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedFlow {
    pub ints: IntegralSet,
    pub fp: FieldParameters,
}

impl OdeSystem<4> for RegularizedFlow {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> [f64; 4] {
        reg_field(y, self.ints, self.fp)
    }
}

/// Reduced flow as an ODE system in proper time `tau`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedFlow {
    pub ints: IntegralSet,
    pub fp: FieldParameters,
}

impl OdeSystem<4> for ReducedFlow {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> [f64; 4] {
        red_field(y, self.ints, self.fp)
    }
}

/// Which momentum is recomputed when projecting onto `H~ = -1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    PTheta,
    PR,
}

/// Recomputes one momentum so that the state lies on `H~ = -1/2`; keeps its sign.
pub fn project_on_shell(s: RegularizedState, ints: IntegralSet, fp: FieldParameters, which: Projection) -> Result<RegularizedState> {
    if !(s.r > 1.0) {
        return Err(Error::domain("on-shell projection needs r > 1"));
    }
    let lam = lambda_factor(SpatialPoint::raw(s.r, s.theta), fp);
    let g = 1.0 - 1.0 / s.r;
    let u = effective_potential(SpatialPoint::raw(s.r, s.theta), ints, fp);
    let lam2 = lam * lam;
    match which {
        Projection::PTheta => {
            let rest = -0.5 - u - s.p_r * s.p_r / (2.0 * lam2 * g);
            if rest < 0.0 {
                return Err(Error::domain("no real p_theta puts this state on the energy level"));
            }
            let mag = lam * s.r * (2.0 * rest).sqrt();
            Ok(RegularizedState { p_theta: mag.copysign(if s.p_theta == 0.0 { 1.0 } else { s.p_theta }), ..s })
        }
        Projection::PR => {
            let rest = -0.5 - u - s.p_theta * s.p_theta / (2.0 * lam2 * s.r * s.r);
            if rest < 0.0 {
                return Err(Error::domain("no real P_r puts this state on the energy level"));
            }
            let mag = lam * (2.0 * g * rest).sqrt();
            Ok(RegularizedState { p_r: mag.copysign(if s.p_r == 0.0 { 1.0 } else { s.p_r }), ..s })
        }
    }
}

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub tol: Tolerances,
    /// Plunge threshold: stop once `r <= 1 + horizon_delta`.
    pub horizon_delta: f64,
    /// Escape threshold: stop once `r >= r_max`.
    pub r_max: f64,
    /// Record upward crossings of the equatorial plane.
    pub record_crossings: bool,
    /// Keep the dense output of every step.
    pub keep_dense: bool,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            tol: Tolerances::default(),
            horizon_delta: 1e-6,
            r_max: 1e3,
            record_crossings: true,
            keep_dense: false,
            max_steps: 50_000_000,
        }
    }
}

/// Trajectory classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryClass {
    Plunging,
    Escaping,
    BoundedInWindow,
    SectionRecurrent,
}

/// Terminal or recorded event along an integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Horizon { sigma: f64 },
    Escape { sigma: f64 },
    SectionCrossing { sigma: f64, r: f64, p_r: f64 },
}

/// One stored sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sigma: f64,
    pub tau: f64,
    pub state: RegularizedState,
    pub phi: f64,
    pub t: f64,
}

/// Output of [`integrate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub ints: IntegralSet,
    pub fp: FieldParameters,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub class: TrajectoryClass,
    /// Largest `|H~ + 1/2|` over the accepted steps (evaluated where `r > 1`).
    pub max_energy_drift: f64,
    pub stats: Stats,
    /// `true` once [`cyclic_reconstruction`] filled `phi` and `t`.
    pub cyclic: bool,
    #[serde(skip)]
    pub dense: Vec<DenseSegment<4>>,
}

const EVENT_BISECTIONS: usize = 80;

fn locate<F: Fn(&[f64; 4]) -> f64>(seg: &DenseSegment<4>, mut a: f64, mut b: f64, g: F) -> (f64, [f64; 4]) {
    let ga = g(&seg.eval(a));
    for _ in 0..EVENT_BISECTIONS {
        let m = 0.5 * (a + b);
        if (g(&seg.eval(m)) > 0.0) == (ga > 0.0) {
            a = m;
        } else {
            b = m;
        }
        if a == m && b == m {
            break;
        }
    }
    (b, seg.eval(b))
}

fn gamma_of(r: f64) -> f64 {
    1.0 - 1.0 / r
}

/// Integrates the regularized flow over `sigma_span` (either direction).
///
/// The start must be on shell (`|H~ + 1/2| <= 1e-10`). Integration stops
/// at the first horizon or escape event; section crossings are recorded
/// when requested. `tau` is accumulated by 8-point Gauss-Legendre
/// quadrature of `Gamma` over every step's dense output.
pub fn integrate(
    start: RegularizedState,
    ints: IntegralSet,
    fp: FieldParameters,
    sigma_span: (f64, f64),
    opts: &IntegrationOptions,
) -> Result<TrajectoryRecord> {
    if !(start.r > 1.0) {
        return Err(Error::domain("integration must start outside the horizon"));
    }
    let h0 = h_reg(&start.to_array(), ints, fp);
    if (h0 + 0.5).abs() > 1e-10 {
        return Err(Error::domain(format!("start is off shell: H~ + 1/2 = {:e}", h0 + 0.5)));
    }
    let flow = RegularizedFlow { ints, fp };
    let dir = if sigma_span.1 >= sigma_span.0 { 1.0 } else { -1.0 };
    let mut stepper = Stepper::new(&flow, sigma_span.0, start.to_array(), dir, opts.tol);
    let mut samples = vec![Sample { sigma: sigma_span.0, tau: 0.0, state: start, phi: 0.0, t: 0.0 }];
    let mut events = Vec::new();
    let mut dense = Vec::new();
    let mut tau = 0.0;
    let mut drift: f64 = 0.0;
    let r_h = 1.0 + opts.horizon_delta;
    let mut class = TrajectoryClass::BoundedInWindow;
    let mut steps = 0usize;

    while (sigma_span.1 - stepper.t()) * dir > 0.0 {
        let remaining = (sigma_span.1 - stepper.t()).abs();
        stepper.limit_next_step(remaining);
        let st = stepper.step()?;
        steps += 1;
        let mut t_end = st.t1;
        if (t_end - sigma_span.1) * dir > 0.0 {
            t_end = sigma_span.1;
        }
        let mut y_end = if t_end == st.t1 { st.y1 } else { st.dense.eval(t_end) };
        let mut terminal = None;

        if y_end[2] <= r_h {
            let (s_hit, _) = locate(&st.dense, st.t0, t_end, |y| y[2] - r_h);
            t_end = s_hit;
            // the interpolant is less accurate than a step, and H~ amplifies
            // state errors by 1/Gamma here, so land on the event by integrating
            y_end = crate::ode::solve(&flow, st.t0, st.y0, s_hit, opts.tol)?;
            terminal = Some(Event::Horizon { sigma: s_hit });
            class = TrajectoryClass::Plunging;
        } else if y_end[2] >= opts.r_max {
            let (s_hit, y_hit) = locate(&st.dense, st.t0, t_end, |y| y[2] - opts.r_max);
            t_end = s_hit;
            y_end = y_hit;
            terminal = Some(Event::Escape { sigma: s_hit });
            class = TrajectoryClass::Escaping;
        }

        if opts.record_crossings {
            let g0 = st.y0[3] - FRAC_PI_2;
            let g1 = y_end[3] - FRAC_PI_2;
            let upward = if dir > 0.0 { g0 < 0.0 && g1 >= 0.0 } else { g0 > 0.0 && g1 <= 0.0 };
            if upward && st.t0 != sigma_span.0 || upward && g0 != 0.0 {
                let (sc, yc) = locate(&st.dense, st.t0, t_end, |y| y[3] - FRAC_PI_2);
                events.push(Event::SectionCrossing { sigma: sc, r: yc[2], p_r: yc[0] });
            }
        }

        tau += gauss_legendre_8(st.t0, t_end, |s| gamma_of(st.dense.eval(s)[2]));
        if y_end[2] > 1.0 {
            drift = drift.max((h_reg(&y_end, ints, fp) + 0.5).abs());
        }
        samples.push(Sample { sigma: t_end, tau, state: RegularizedState::from_array(y_end), phi: 0.0, t: 0.0 });
        if opts.keep_dense {
            let mut seg = st.dense;
            seg.t1 = t_end;
            dense.push(seg);
        }
        if let Some(ev) = terminal {
            events.push(ev);
            break;
        }
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                sigma: t_end,
                state: y_end.to_vec(),
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
    }

    Ok(TrajectoryRecord {
        ints,
        fp,
        samples,
        events,
        class,
        max_energy_drift: drift,
        stats: stepper.stats(),
        cyclic: false,
        dense,
    })
}

/// Rates `(d phi/d sigma, d t/d sigma, d tau/d sigma)` for the cyclic coordinates.
pub fn cyclic_rates(s: RegularizedState, ints: IntegralSet, fp: FieldParameters) -> (f64, f64, f64) {
    let lam = lambda_factor(SpatialPoint::raw(s.r, s.theta), fp);
    let g = gamma_of(s.r);
    let sn = s.theta.sin();
    (g * lam * lam * ints.l / (s.r * s.r * sn * sn), ints.e / (lam * lam), g)
}

/// Fills `phi(sigma)` and `t(sigma)` by quadrature over the stored dense output.
///
/// The record must have been produced with `keep_dense = true`.
pub fn cyclic_reconstruction(traj: &mut TrajectoryRecord) -> Result<()> {
    if traj.dense.len() + 1 != traj.samples.len() {
        return Err(Error::domain("cyclic reconstruction needs a trajectory integrated with keep_dense"));
    }
    let (ints, fp) = (traj.ints, traj.fp);
    let mut phi = 0.0;
    let mut t = 0.0;
    for (i, seg) in traj.dense.iter().enumerate() {
        phi += gauss_legendre_8(seg.t0, seg.t1, |s| cyclic_rates(RegularizedState::from_array(seg.eval(s)), ints, fp).0);
        t += gauss_legendre_8(seg.t0, seg.t1, |s| cyclic_rates(RegularizedState::from_array(seg.eval(s)), ints, fp).1);
        traj.samples[i + 1].phi = phi;
        traj.samples[i + 1].t = t;
    }
    traj.cyclic = true;
    Ok(())
}

/// Tag of a finished integration.
///
/// A trajectory that neither plunged nor escaped but crossed the equatorial
/// section upward at least twice is `SectionRecurrent`.
pub fn classify_trajectory(traj: &TrajectoryRecord) -> TrajectoryClass {
    if traj.events.iter().any(|e| matches!(e, Event::Horizon { .. })) {
        return TrajectoryClass::Plunging;
    }
    if traj.events.iter().any(|e| matches!(e, Event::Escape { .. })) {
        return TrajectoryClass::Escaping;
    }
    let crossings = traj.events.iter().filter(|e| matches!(e, Event::SectionCrossing { .. })).count();
    if crossings >= 2 {
        TrajectoryClass::SectionRecurrent
    } else {
        TrajectoryClass::BoundedInWindow
    }
}

/// Closed-form `P_r(sigma)` on the horizon manifold `r = 1`, with `P_r(0) = E P0`.
///
/// For `|P0| > 1` the solution blows up at `sigma = (2 Lambda_s^2 / E) artanh(1/P0)`;
/// asking for a time at or beyond that point is a domain error.
pub fn horizon_manifold_flow(p0: f64, theta: f64, ints: IntegralSet, fp: FieldParameters, sigma: f64) -> Result<f64> {
    let lam_s = lambda_factor(SpatialPoint::raw(1.0, theta), fp);
    let scale = 2.0 * lam_s * lam_s / ints.e;
    if p0.abs() > 1.0 {
        let blow = scale * (1.0 / p0).atanh();
        if (blow > 0.0 && sigma >= blow) || (blow < 0.0 && sigma <= blow) {
            return Err(Error::domain(format!("P_r blows up at sigma = {blow}")));
        }
    }
    let th = (sigma / scale).tanh();
    Ok(ints.e * (p0 - th) / (1.0 - p0 * th))
}

/// Which fixed-point family on the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlungeFamily {
    /// `P_r = +E`; trajectories leave the horizon (`r -> 1` as `sigma -> -inf`).
    Plus,
    /// `P_r = -E`; trajectories fall in (`r -> 1` as `sigma -> +inf`).
    Minus,
}

impl PlungeFamily {
    fn sign(self) -> f64 {
        match self {
            PlungeFamily::Plus => 1.0,
            PlungeFamily::Minus => -1.0,
        }
    }
}

/// Linearization of the regularized flow at a point of a horizon fixed-point family.
///
/// The deviation is `z = (P_r -+ E, p_theta - p*, r - 1, theta - theta*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlungeLinearization {
    pub lambda: f64,
    /// `dz/d sigma = A z`.
    pub matrix: [[f64; 4]; 4],
    /// Covectors with `A^T b = 0`; `F = (b, z)` are linear integrals.
    pub b1: [f64; 4],
    pub b2: [f64; 4],
}

/// Linear system and linear integrals at `(P_r, p_theta, r, theta) = (+-E, p*, 1, theta*)`.
pub fn linearize_at_plunge_family(family: PlungeFamily, p_star: f64, theta_star: f64, ints: IntegralSet, fp: FieldParameters) -> Result<PlungeLinearization> {
    if !(theta_star > 0.0 && theta_star < std::f64::consts::PI) {
        return Err(Error::domain("theta* must lie in (0, pi)"));
    }
    let sg = family.sign();
    let e = ints.e;
    let l2 = ints.l * ints.l;
    let b2 = fp.b2();
    let (s, c) = theta_star.sin_cos();
    let lam = lambda_factor(SpatialPoint::raw(1.0, theta_star), fp);
    let lambda = sg * e / (lam * lam);
    let a21 = lambda * b2 * (2.0 * theta_star).sin() / (2.0 * lam);
    let a23 = 2.0 * p_star * p_star * (lam - 1.0) * c / (s * lam.powi(3)) - lam * (lam - 2.0) * l2 * c / (s * s * s);
    let a43 = p_star / (lam * lam);
    let matrix = [
        [lambda, 0.0, 0.0, 0.0],
        [a21, 0.0, a23, 0.0],
        [0.0, 0.0, lambda, 0.0],
        [0.0, 0.0, a43, 0.0],
    ];
    let b1 = [0.0, 0.0, -sg * p_star, e];
    // (b2, A z) = 0 for the z1 and z3 columns fixes b2 with the p_theta weight E.
    let b2v = [-e * a21 / lambda, e, -e * a23 / lambda, 0.0];
    Ok(PlungeLinearization { lambda, matrix, b1, b2: b2v })
}

/// Proper time elapsed along the linearized plunge `r - 1 = C3 exp(lambda sigma)`.
pub fn plunge_proper_time(lambda: f64, c3: f64, sigma: f64) -> f64 {
    ((1.0 + c3 * (lambda * sigma).exp()) / (1.0 + c3)).ln() / lambda
}
