//! Explicit adaptive Runge-Kutta integration.
//!
//! Dormand-Prince 8(5,3) with the seventh-order continuous extension of
//! Hairer, Norsett and Wanner. The stepper is exposed one step at a time so
//! callers can run their own event logic on the dense output of each step.

/// Right-hand side of an autonomous or non-autonomous ODE `y' = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N] {
        self(t, y)
    }
}

/// Absolute and relative local error tolerances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerances {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerances { abs, rel }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances::new(1e-11, 1e-11)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    StepSizeUnderflow { t: f64, y: Vec<f64> },
    NonFinite { t: f64, y: Vec<f64> },
}

impl std::fmt::Display for OdeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OdeError::StepSizeUnderflow { t, .. } => write!(f, "step size underflow at t = {t}"),
            OdeError::NonFinite { t, .. } => write!(f, "non-finite derivative near t = {t}"),
        }
    }
}

impl From<OdeError> for crate::Error {
    fn from(e: OdeError) -> Self {
        let reason = e.to_string();
        match e {
            OdeError::StepSizeUnderflow { t, y } | OdeError::NonFinite { t, y } => {
                crate::Error::Integration { sigma: t, state: y, reason }
            }
        }
    }
}

/// Counters accumulated by a [`Stepper`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Seventh-order interpolant valid on one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    y0: [f64; N],
    coeffs: [[f64; N]; 7],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let x = (t - self.t0) / h;
        let mut y = [0.0; N];
        for (i, f) in self.coeffs.iter().rev().enumerate() {
            for k in 0..N {
                y[k] += f[k];
                y[k] *= if i % 2 == 0 { x } else { 1.0 - x };
            }
        }
        for k in 0..N {
            y[k] += self.y0[k];
        }
        y
    }

    pub fn start(&self) -> [f64; N] {
        self.y0
    }

    pub fn end(&self) -> [f64; N] {
        self.eval(self.t1)
    }

    /// Whether `t` lies in the closed step interval (either direction).
    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t0 <= self.t1 { (self.t0, self.t1) } else { (self.t1, self.t0) };
        t >= lo && t <= hi
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub dense: DenseSegment<N>,
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Adaptive DOP853 stepper integrating in the direction of `direction`.
pub struct Stepper<'a, S: OdeSystem<N>, const N: usize> {
    sys: &'a S,
    tol: Tolerances,
    t: f64,
    y: [f64; N],
    /// Rounding error of `y` carried between steps (Kahan).
    comp: [f64; N],
    f: [f64; N],
    h_abs: f64,
    direction: f64,
    pub max_step: f64,
    stats: Stats,
}

impl<'a, S: OdeSystem<N>, const N: usize> Stepper<'a, S, N> {
    pub fn new(sys: &'a S, t0: f64, y0: [f64; N], direction: f64, tol: Tolerances) -> Self {
        let direction = if direction < 0.0 { -1.0 } else { 1.0 };
        let f = sys.rhs(t0, &y0);
        let mut s = Stepper {
            sys,
            tol,
            t: t0,
            y: y0,
            comp: [0.0; N],
            f,
            h_abs: 0.0,
            direction,
            max_step: f64::INFINITY,
            stats: Stats { evaluations: 1, ..Stats::default() },
        };
        s.h_abs = s.initial_step();
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; N] {
        self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    /// Caps the magnitude of the next attempted step.
    pub fn limit_next_step(&mut self, h: f64) {
        if h > 0.0 && h < self.h_abs {
            self.h_abs = h;
        }
    }

    fn scale(&self, a: &[f64; N], b: &[f64; N]) -> [f64; N] {
        let mut sc = [0.0; N];
        for k in 0..N {
            sc[k] = self.tol.abs + a[k].abs().max(b[k].abs()) * self.tol.rel;
        }
        sc
    }

    fn initial_step(&mut self) -> f64 {
        let sc = self.scale(&self.y, &self.y);
        let d0 = rms(&self.y, &sc);
        let d1 = rms(&self.f, &sc);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = self.y;
        for k in 0..N {
            y1[k] += self.direction * h0 * self.f[k];
        }
        let f1 = self.sys.rhs(self.t + self.direction * h0, &y1);
        self.stats.evaluations += 1;
        let mut diff = [0.0; N];
        for k in 0..N {
            diff[k] = f1[k] - self.f[k];
        }
        let d2 = rms(&diff, &sc) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1)
    }

    fn stages(&mut self, h: f64) -> ([[f64; N]; 13], [f64; N], [f64; N]) {
        let mut k = [[0.0; N]; 13];
        k[0] = self.f;
        for s in 1..12 {
            let mut dy = [0.0; N];
            for (j, a) in A[s].iter().enumerate() {
                if *a != 0.0 {
                    for c in 0..N {
                        dy[c] += a * k[j][c];
                    }
                }
            }
            let mut ys = self.y;
            for c in 0..N {
                ys[c] += h * dy[c];
            }
            k[s] = self.sys.rhs(self.t + C[s] * h, &ys);
        }
        // sum the increment first, then add it once with the carried compensation
        let mut dy = [0.0; N];
        for (j, b) in B.iter().enumerate() {
            if *b != 0.0 {
                for c in 0..N {
                    dy[c] += b * k[j][c];
                }
            }
        }
        let mut y_new = self.y;
        let mut comp = [0.0; N];
        for c in 0..N {
            let inc = h * dy[c] + self.comp[c];
            y_new[c] = self.y[c] + inc;
            comp[c] = (self.y[c] - y_new[c]) + inc;
        }
        k[12] = self.sys.rhs(self.t + h, &y_new);
        self.stats.evaluations += 12;
        (k, y_new, comp)
    }

    fn error_norm(&self, k: &[[f64; N]; 13], h: f64, sc: &[f64; N]) -> f64 {
        let mut e5 = 0.0;
        let mut e3 = 0.0;
        for c in 0..N {
            let mut s5 = 0.0;
            let mut s3 = 0.0;
            for j in 0..12 {
                s5 += E5[j] * k[j][c];
                s3 += E3[j] * k[j][c];
            }
            e5 += (s5 / sc[c]).powi(2);
            e3 += (s3 / sc[c]).powi(2);
        }
        if e5 == 0.0 && e3 == 0.0 {
            return 0.0;
        }
        let denom = e5 + 0.01 * e3;
        h.abs() * e5 / (denom * N as f64).sqrt()
    }

    fn dense(&mut self, k: &[[f64; N]; 13], h: f64, y_new: &[f64; N]) -> DenseSegment<N> {
        let mut kx = [[0.0; N]; 16];
        kx[..13].copy_from_slice(k);
        for s in 13..16 {
            let mut ys = self.y;
            for (j, a) in A[s].iter().enumerate() {
                if *a != 0.0 {
                    for c in 0..N {
                        ys[c] += h * a * kx[j][c];
                    }
                }
            }
            kx[s] = self.sys.rhs(self.t + C[s] * h, &ys);
        }
        self.stats.evaluations += 3;
        let mut coeffs = [[0.0; N]; 7];
        for c in 0..N {
            let dy = y_new[c] - self.y[c];
            coeffs[0][c] = dy;
            coeffs[1][c] = h * kx[0][c] - dy;
            coeffs[2][c] = 2.0 * dy - h * (kx[12][c] + kx[0][c]);
            for (r, drow) in D.iter().enumerate() {
                let mut acc = 0.0;
                for s in 0..16 {
                    acc += drow[s] * kx[s][c];
                }
                coeffs[3 + r][c] = h * acc;
            }
        }
        DenseSegment { t0: self.t, t1: self.t + h, y0: self.y, coeffs }
    }

    /// Attempts steps until one is accepted, then advances the internal state.
    pub fn step(&mut self) -> Result<Step<N>, OdeError> {
        let min_step = 10.0 * f64::EPSILON * self.t.abs().max(f64::MIN_POSITIVE);
        let mut h_abs = self.h_abs.min(self.max_step).max(min_step);
        let mut rejected = false;
        loop {
            if h_abs < min_step {
                return Err(OdeError::StepSizeUnderflow { t: self.t, y: self.y.to_vec() });
            }
            let h = h_abs * self.direction;
            let (k, y_new, comp) = self.stages(h);
            if !y_new.iter().chain(k[12].iter()).all(|v| v.is_finite()) {
                self.stats.rejected += 1;
                h_abs *= 0.25;
                rejected = true;
                continue;
            }
            let sc = self.scale(&self.y, &y_new);
            let err = self.error_norm(&k, h, &sc);
            if err.is_nan() {
                return Err(OdeError::NonFinite { t: self.t, y: self.y.to_vec() });
            }
            if err < 1.0 {
                let mut factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-1.0 / 8.0)).min(MAX_FACTOR) };
                if rejected {
                    factor = factor.min(1.0);
                }
                let dense = self.dense(&k, h, &y_new);
                let step = Step { t0: self.t, t1: self.t + h, y0: self.y, y1: y_new, dense };
                self.t += h;
                self.y = y_new;
                self.comp = comp;
                self.f = k[12];
                self.h_abs = h_abs * factor;
                self.stats.accepted += 1;
                return Ok(step);
            }
            self.stats.rejected += 1;
            h_abs *= (SAFETY * err.powf(-1.0 / 8.0)).max(MIN_FACTOR);
            rejected = true;
        }
    }

    /// Steps until `t_end`, landing on it exactly through the dense output.
    pub fn advance_to(&mut self, t_end: f64) -> Result<[f64; N], OdeError> {
        while (t_end - self.t) * self.direction > 0.0 {
            let remaining = (t_end - self.t).abs();
            if remaining < self.h_abs {
                self.h_abs = remaining;
            }
            let st = self.step()?;
            if (st.t1 - t_end) * self.direction >= 0.0 {
                let y = st.dense.eval(t_end);
                self.t = t_end;
                self.y = y;
                self.comp = [0.0; N];
                self.f = self.sys.rhs(t_end, &y);
                self.stats.evaluations += 1;
                return Ok(y);
            }
        }
        Ok(self.y)
    }
}

/// Integrates from `t0` to `t1` and returns the final state.
pub fn solve<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: Tolerances,
) -> Result<[f64; N], OdeError> {
    let mut st = Stepper::new(sys, t0, y0, (t1 - t0).signum(), tol);
    st.advance_to(t1)
}

fn rms<const N: usize>(v: &[f64; N], sc: &[f64; N]) -> f64 {
    let s: f64 = v.iter().zip(sc).map(|(a, b)| (a / b).powi(2)).sum();
    (s / N as f64).sqrt()
}

const C: [f64; 16] = [
    0.0,
    0.05260015195876773,
    0.0789002279381516,
    0.1183503419072274,
    0.2816496580927726,
    0.3333333333333333,
    0.25,
    0.3076923076923077,
    0.6512820512820513,
    0.6,
    0.8571428571428571,
    1.0,
    1.0,
    0.1,
    0.2,
    0.7777777777777778,
];

#[rustfmt::skip]
const A: [&[f64]; 16] = [
    &[],
    &[0.05260015195876773],
    &[0.0197250569845379, 0.0591751709536137],
    &[0.02958758547680685, 0.0, 0.08876275643042054],
    &[0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792],
    &[0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242],
    &[0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125],
    &[0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023],
    &[0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996],
    &[0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627],
    &[-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196],
    &[2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636],
    &[0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259],
    &[0.056167502283047954, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25350021021662483, -0.2462390374708025, -0.12419142326381637, 0.15329179827876568, 0.00820105229563469, 0.007567897660545699, -0.008298],
    &[0.03183464816350214, 0.0, 0.0, 0.0, 0.0, 0.028300909672366776, 0.053541988307438566, -0.05492374857139099, 0.0, 0.0, -0.00010834732869724932, 0.0003825710908356584, -0.00034046500868740456, 0.1413124436746325],
    &[-0.42889630158379194, 0.0, 0.0, 0.0, 0.0, -4.697621415361164, 7.683421196062599, 4.06898981839711, 0.3567271874552811, 0.0, 0.0, 0.0, -0.0013990241651590145, 2.9475147891527724, -9.15095847217987],
];

const B: [f64; 12] = [
    0.054293734116568765,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    0.3111643669578199,
    -0.1521609496625161,
    0.20136540080403034,
    0.04471061572777259,
];

const E3: [f64; 12] = [
    -0.18980075407240762,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    -0.4226823213237919,
    -0.1521609496625161,
    0.20136540080403034,
    0.02265179219836082,
];

const E5: [f64; 12] = [
    0.01312004499419488,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.2251564463762044,
    -0.4957589496572502,
    1.6643771824549864,
    -0.35032884874997366,
    0.3341791187130175,
    0.08192320648511571,
    -0.022355307863886294,
];

#[rustfmt::skip]
const D: [[f64; 16]; 4] = [
    [-8.428938276109013, 0.0, 0.0, 0.0, 0.0, 0.5667149535193777, -3.0689499459498917, 2.38466765651207, 2.117034582445028, -0.871391583777973, 2.2404374302607883, 0.6315787787694688, -0.08899033645133331, 18.148505520854727, -9.194632392478356, -4.436036387594894],
    [10.427508642579134, 0.0, 0.0, 0.0, 0.0, 242.28349177525817, 165.20045171727028, -374.5467547226902, -22.113666853125306, 7.733432668472264, -30.674084731089398, -9.332130526430229, 15.697238121770845, -31.139403219565178, -9.35292435884448, 35.81684148639408],
    [19.985053242002433, 0.0, 0.0, 0.0, 0.0, -387.0373087493518, -189.17813819516758, 527.8081592054236, -11.57390253995963, 6.8812326946963, -1.0006050966910838, 0.7777137798053443, -2.778205752353508, -60.19669523126412, 84.32040550667716, 11.99229113618279],
    [-25.69393346270375, 0.0, 0.0, 0.0, 0.0, -154.18974869023643, -231.5293791760455, 357.6391179106141, 93.40532418362432, -37.45832313645163, 104.0996495089623, 29.8402934266605, -43.53345659001114, 96.32455395918828, -39.17726167561544, -149.72683625798564],
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let sys = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = solve(&sys, 0.0, [1.0, 0.0], 2.0 * std::f64::consts::PI, Tolerances::new(1e-12, 1e-12)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
        assert!(y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_integration_of_exponential() {
        let sys = |_t: f64, y: &[f64; 1]| [y[0]];
        let y = solve(&sys, 0.0, [1.0], -3.0, Tolerances::new(1e-13, 1e-13)).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn dense_output_matches_exact_solution_inside_steps() {
        let sys = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut st = Stepper::new(&sys, 0.0, [0.0, 1.0], 1.0, Tolerances::new(1e-12, 1e-12));
        for _ in 0..20 {
            let s = st.step().unwrap();
            for i in 0..=10 {
                let t = s.t0 + (s.t1 - s.t0) * i as f64 / 10.0;
                let y = s.dense.eval(t);
                assert!((y[0] - t.sin()).abs() < 1e-10, "t = {t}");
                assert!((y[1] - t.cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn blow_up_reports_underflow() {
        let sys = |_t: f64, y: &[f64; 1]| [y[0] * y[0]];
        let err = solve(&sys, 0.0, [1.0], 2.0, Tolerances::default()).unwrap_err();
        assert!(matches!(err, OdeError::StepSizeUnderflow { .. } | OdeError::NonFinite { .. }));
    }
}
