//! Circular equatorial orbits, the bifurcation curves on the `(L, E)` plane
//! and the classification of Hill regions.

use crate::dynamics::{effective_potential, potential_gradient, IntegralSet};
use crate::spacetime::{FieldParameters, SpatialPoint};
use crate::{Curve, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Largest radius used for root isolation before the search range is widened.
pub const R_MAX: f64 = 1e3;
const BOUNDARY_TOL: f64 = 1e-8;

/// `Z(r) = 2r - 3 - B^2 r^2 (3r/2 - 5/4)`; circular orbits need `Z > 0`.
pub fn z_function(r: f64, fp: FieldParameters) -> f64 {
    2.0 * r - 3.0 - fp.b2() * r * r * (1.5 * r - 1.25)
}

/// Critical field `4 sqrt3 / sqrt(169 + 38 sqrt19)` above which no circular orbits exist.
pub fn critical_field() -> f64 {
    4.0 * 3f64.sqrt() / (169.0 + 38.0 * 19f64.sqrt()).sqrt()
}

/// `(8 + sqrt19) / 6`, the limit of the cusp radius as `B -> B_n`.
pub fn r_n() -> f64 {
    (8.0 + 19f64.sqrt()) / 6.0
}

/// Roots `r_1 < r_2` of `Z`; `None` for `B >= B_n`. At `B = 0`, `r_2` is infinite.
pub fn critical_radii(fp: FieldParameters) -> Option<(f64, f64)> {
    let b = fp.b();
    if b == 0.0 {
        return Some((1.5, f64::INFINITY));
    }
    if b >= critical_field() {
        return None;
    }
    let b2 = b * b;
    let arg = (b * (125.0 * b2 - 4752.0) / (25.0 * b2 + 144.0).powf(1.5)).clamp(-1.0, 1.0);
    let delta = arg.acos();
    let amp = (25.0 / 9.0 + 16.0 / b2).sqrt() / 3.0;
    let r1 = amp * (delta / 3.0 + 4.0 * PI / 3.0).cos() + 5.0 / 18.0;
    let r2 = amp * (delta / 3.0).cos() + 5.0 / 18.0;
    Some((r1, r2))
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

/// Cusp polynomial `N(r)`; its root in `(r_1, r_2)` is the cusp radius.
pub fn n_function(r: f64, fp: FieldParameters) -> f64 {
    let b2 = fp.b2();
    let (r2, b4) = (r * r, b2 * b2);
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    let b6 = b4 * b2;
    compensated_sum(&[
        64.0 * r,
        -192.0,
        256.0 * b2 * r4,
        -624.0 * b2 * r2 * r,
        336.0 * b2 * r2,
        -96.0 * b4 * r6,
        204.0 * b4 * r4 * r,
        -100.0 * b4 * r4,
        24.0 * b6 * r6 * r2,
        -37.0 * b6 * r6 * r,
        15.0 * b6 * r6,
    ])
}

/// `(L, E)` of the circular orbit of radius `r_c`, i.e. the point of `Sigma_r` at `r_c`.
pub fn sigma_r_point(r_c: f64, fp: FieldParameters) -> Result<(f64, f64)> {
    let z = z_function(r_c, fp);
    if !(r_c > 1.0) || !(z > 0.0) {
        return Err(Error::domain(format!("no circular orbit at r_c = {r_c} (Z = {z})")));
    }
    let b2 = fp.b2();
    let b = 1.0 + 0.25 * b2 * r_c * r_c;
    let l = r_c / b * ((4.0 * (b - 1.0) * (r_c - 1.0) + b) / z).sqrt();
    let e = b * (r_c - 1.0) * ((4.0 - b2 * r_c * r_c) / (2.0 * r_c * z)).sqrt();
    Ok((l, e))
}

/// Point of `Sigma_inf` at cylindrical radius `y_c` in `(0, 2 / (B sqrt3))`.
pub fn sigma_inf_point(y_c: f64, fp: FieldParameters) -> Result<(f64, f64)> {
    let b2 = fp.b2();
    let q = 4.0 - 3.0 * b2 * y_c * y_c;
    if !(y_c > 0.0) || !(q > 0.0) || b2 == 0.0 {
        return Err(Error::domain(format!("y_c = {y_c} outside (0, 2/(B sqrt3))")));
    }
    let beta = 1.0 + 0.25 * b2 * y_c * y_c;
    let l = 2f64.sqrt() * fp.b() * y_c * y_c / (beta * q.sqrt());
    let e = beta * ((4.0 - b2 * y_c * y_c) / q).sqrt();
    Ok((l, e))
}

/// Stability of a circular orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    CenterCenter,
    SaddleCenter,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        self == Stability::CenterCenter
    }
}

/// A relative equilibrium: circular orbit in the equatorial plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub r_c: f64,
    pub theta_c: f64,
    pub l: f64,
    pub e: f64,
    pub stability: Stability,
}

/// Diagonal Hessian `(U_rr, U_thth)` of the effective potential at a circular orbit.
pub fn equilibrium_hessian(r_c: f64, fp: FieldParameters) -> (f64, f64) {
    let z = z_function(r_c, fp);
    let b = 1.0 + 0.25 * fp.b2() * r_c * r_c;
    (
        n_function(r_c, fp) / (64.0 * r_c * r_c * z * b * b * (r_c - 1.0)),
        (4.0 - fp.b2() * r_c * r_c) / (4.0 * z),
    )
}

/// Root of `N` in `(r_1, r_2)` by bisection.
pub fn cusp_radius(fp: FieldParameters) -> Result<f64> {
    let (r1, r2) = critical_radii(fp).ok_or_else(|| Error::domain("no circular orbits for B >= B_n"))?;
    let hi = if r2.is_finite() { r2 } else { 1e6 };
    let (mut a, mut b) = (r1, hi);
    let (fa, fb) = (n_function(a, fp), n_function(b, fp));
    if fa.signum() == fb.signum() {
        return Err(Error::numerical(format!("cusp polynomial has no sign change on ({r1}, {hi})")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if n_function(m, fp).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Classifies the circular orbit at `r_c` by the sign of the radial Hessian entry.
pub fn stability_of_equilibrium(r_c: f64, fp: FieldParameters) -> Result<Stability> {
    let (r1, r2) = critical_radii(fp).ok_or_else(|| Error::domain("no circular orbits for B >= B_n"))?;
    if !(r_c > r1 && r_c < r2) {
        return Err(Error::domain(format!("r_c = {r_c} outside ({r1}, {r2})")));
    }
    let rs = cusp_radius(fp)?;
    if (r_c - rs).abs() < BOUNDARY_TOL {
        return Err(Error::Boundary { curve: Curve::SigmaR, distance: (r_c - rs).abs() });
    }
    Ok(if r_c > rs { Stability::CenterCenter } else { Stability::SaddleCenter })
}

/// Full description of the circular orbit at `r_c`.
pub fn equilibrium(r_c: f64, fp: FieldParameters) -> Result<EquilibriumPoint> {
    let (l, e) = sigma_r_point(r_c, fp)?;
    let stability = stability_of_equilibrium(r_c, fp)?;
    Ok(EquilibriumPoint { r_c, theta_c: FRAC_PI_2, l, e, stability })
}

/// One sample of a bifurcation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    /// `r_c` for `Sigma_r`, `y_c` for `Sigma_inf`.
    pub param: f64,
    pub l: f64,
    pub e: f64,
    pub stability: Option<Stability>,
}

/// A sampled bifurcation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub label: Curve,
    pub samples: Vec<CurveSample>,
    /// `(r_*, L_*, E_*)` for `Sigma_r`.
    pub cusp: Option<(f64, f64, f64)>,
    /// Parameter range was capped (the `B = 0` case of `Sigma_r`).
    pub capped: bool,
}

impl BifurcationCurve {
    /// Euclidean distance in the `(L, E)` plane from a point to the sampled polyline.
    pub fn distance_to(&self, l: f64, e: f64) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.samples.windows(2) {
            let (ax, ay, bx, by) = (w[0].l, w[0].e, w[1].l, w[1].e);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((l - ax) * dx + (e - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            best = best.min((l - ax - t * dx).hypot(e - ay - t * dy));
        }
        if self.samples.len() == 1 {
            best = (l - self.samples[0].l).hypot(e - self.samples[0].e);
        }
        best
    }
}

fn grid_open(a: f64, b: f64, n: usize) -> Vec<f64> {
    // Chebyshev-like clustering towards the endpoints, where the curves move fastest.
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            a + (b - a) * 0.5 * (1.0 - (PI * t).cos())
        })
        .collect()
}

/// Samples `Sigma_r` on `n_samples` radii in `(r_1, r_2)`.
///
/// For `B = 0` the range is capped at `r_c = R_MAX` and `capped` is set.
pub fn sigma_r(fp: FieldParameters, n_samples: usize) -> Result<BifurcationCurve> {
    if n_samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let (r1, r2) = critical_radii(fp).ok_or_else(|| Error::domain(format!("Sigma_r is empty for B = {} >= B_n", fp.b())))?;
    let capped = !r2.is_finite();
    let hi = if capped { R_MAX } else { r2 };
    let rs = cusp_radius(fp)?;
    let samples = grid_open(r1, hi, n_samples)
        .into_par_iter()
        .map(|r| {
            let (l, e) = sigma_r_point(r, fp)?;
            let stability = if r > rs { Stability::CenterCenter } else { Stability::SaddleCenter };
            Ok(CurveSample { param: r, l, e, stability: Some(stability) })
        })
        .collect::<Result<Vec<_>>>()?;
    let (ls, es) = sigma_r_point(rs, fp)?;
    Ok(BifurcationCurve { label: Curve::SigmaR, samples, cusp: Some((rs, ls, es)), capped })
}

/// Samples `Sigma_inf` on `n_samples` values of `y_c` in `(0, 2 / (B sqrt3))`.
pub fn sigma_inf(fp: FieldParameters, n_samples: usize) -> Result<BifurcationCurve> {
    if n_samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    if fp.b() == 0.0 {
        return Err(Error::domain("Sigma_inf needs B > 0"));
    }
    let hi = 2.0 / (fp.b() * 3f64.sqrt());
    let samples = grid_open(0.0, hi, n_samples)
        .into_par_iter()
        .map(|y| {
            let (l, e) = sigma_inf_point(y, fp)?;
            Ok(CurveSample { param: y, l, e, stability: None })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationCurve { label: Curve::SigmaInf, samples, cusp: None, capped: false })
}

/// `U_inf(y) = beta^2 L^2 / (2 y^2) - E^2 / (2 beta^2)`, the potential far along the axis.
pub fn asymptotic_potential(y: f64, ints: IntegralSet, fp: FieldParameters) -> f64 {
    let beta = 1.0 + 0.25 * fp.b2() * y * y;
    beta * beta * ints.l * ints.l / (2.0 * y * y) - ints.e * ints.e / (2.0 * beta * beta)
}

/// `dU_inf / dy`.
pub fn asymptotic_potential_dy(y: f64, ints: IntegralSet, fp: FieldParameters) -> f64 {
    let beta = 1.0 + 0.25 * fp.b2() * y * y;
    let dbeta = 0.5 * fp.b2() * y;
    ints.l * ints.l * beta * (dbeta * y - beta) / (y * y * y) + ints.e * ints.e * dbeta / beta.powi(3)
}

/// Minimizer and minimum of `U_inf`; for `B = 0` the infimum `-E^2/2` at `y = inf`.
pub fn asymptotic_minimum(ints: IntegralSet, fp: FieldParameters) -> (f64, f64) {
    if fp.b() == 0.0 {
        return (f64::INFINITY, -0.5 * ints.e * ints.e);
    }
    // dU_inf/dy runs from -inf to +inf; bracket on a log grid, keep the lowest local minimum
    let f = |y: f64| asymptotic_potential_dy(y, ints, fp);
    let ys = log_grid(1e-6, 1e6, 4000);
    let mut best = (f64::NAN, f64::INFINITY);
    for w in ys.windows(2) {
        if f(w[0]) < 0.0 && f(w[1]) >= 0.0 {
            let y = bisect(f, w[0], w[1]);
            let u = asymptotic_potential(y, ints, fp);
            if u < best.1 {
                best = (y, u);
            }
        }
    }
    best
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Hill region type on the `(L, E)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HillRegion {
    I,
    II,
    III,
    IV,
}

impl std::fmt::Display for HillRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HillRegion::I => "I",
            HillRegion::II => "II",
            HillRegion::III => "III",
            HillRegion::IV => "IV",
        };
        f.write_str(s)
    }
}

/// Result of [`hill_classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillClassification {
    pub region: HillRegion,
    /// Roots of `2U(r, pi/2) + 1` in increasing order.
    pub chi_roots: Vec<f64>,
    /// The allowed region reaches infinity along the axis.
    pub channel: bool,
}

fn equatorial_level(r: f64, ints: IntegralSet, fp: FieldParameters) -> f64 {
    2.0 * effective_potential(SpatialPoint::raw(r, FRAC_PI_2), ints, fp) + 1.0
}

fn equatorial_slope(r: f64, ints: IntegralSet, fp: FieldParameters) -> f64 {
    2.0 * potential_gradient(SpatialPoint::raw(r, FRAC_PI_2), ints, fp).0
}

/// Roots of `2U(r, pi/2) + 1` on `(1, r_hi)` and the stationary points of the same function.
fn equatorial_structure(ints: IntegralSet, fp: FieldParameters, n_grid: usize) -> (Vec<f64>, Vec<f64>) {
    let f = |r: f64| equatorial_level(r, ints, fp);
    let df = |r: f64| equatorial_slope(r, ints, fp);
    let mut r_hi = R_MAX;
    if fp.b() > 0.0 {
        while f(r_hi) <= 0.0 && r_hi < 1e12 {
            r_hi *= 10.0;
        }
    } else {
        r_hi = 1e6;
    }
    let r_lo = 1.0 + 1e-9;
    // stationary points split (r_lo, r_hi) into monotone pieces
    let xs: Vec<f64> = log_grid(r_lo - 1.0, r_hi - 1.0, n_grid).into_iter().map(|x| 1.0 + x).collect();
    let mut crit = Vec::new();
    for w in xs.windows(2) {
        let (a, b) = (df(w[0]), df(w[1]));
        if a == 0.0 {
            crit.push(w[0]);
        } else if a.signum() != b.signum() && b != 0.0 {
            crit.push(bisect(df, w[0], w[1]));
        }
    }
    let mut knots = vec![r_lo];
    knots.extend(crit.iter().copied());
    knots.push(r_hi);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (fa, fb) = (f(w[0]), f(w[1]));
        if fa == 0.0 {
            roots.push(w[0]);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(polish(f, df, w[0], w[1]));
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs());
    (roots, crit)
}

fn polish<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, df: D, a: f64, b: f64) -> f64 {
    let mut x = bisect(&f, a, b);
    for _ in 0..5 {
        let d = df(x);
        if d == 0.0 {
            break;
        }
        let nx = x - f(x) / d;
        if !(nx > a && nx < b) || (nx - x).abs() <= 1e-12 * x {
            if nx > a && nx < b {
                x = nx;
            }
            break;
        }
        x = nx;
    }
    x
}

/// Classifies the Hill region for the given integrals.
///
/// The equatorial roots of `2U + 1` and the existence of an escape channel
/// along the axis fix the type: I (one root, no channel), II (three roots,
/// no channel), III (an outer equatorial band plus a channel), IV (no outer
/// band, channel). Parameters within `1e-8` (in the value of `U`) of a
/// tangency report [`Error::Boundary`].
pub fn hill_classify(ints: IntegralSet, fp: FieldParameters) -> Result<HillClassification> {
    hill_classify_with_grid(ints, fp, 10_000)
}

/// [`hill_classify`] with an explicit size for the root-isolation grid.
pub fn hill_classify_with_grid(ints: IntegralSet, fp: FieldParameters, n_grid: usize) -> Result<HillClassification> {
    let (roots, crit) = equatorial_structure(ints, fp, n_grid.max(16));
    for &r in &crit {
        let v = 0.5 * equatorial_level(r, ints, fp);
        if v.abs() < BOUNDARY_TOL {
            return Err(Error::Boundary { curve: Curve::SigmaR, distance: v.abs() });
        }
    }
    let (_, umin) = asymptotic_minimum(ints, fp);
    if (umin + 0.5).abs() < BOUNDARY_TOL {
        return Err(Error::Boundary { curve: Curve::SigmaInf, distance: (umin + 0.5).abs() });
    }
    let channel = umin <= -0.5;
    let region = match (channel, roots.len()) {
        (true, n) if n >= 2 => HillRegion::III,
        (true, _) => HillRegion::IV,
        (false, 3) => HillRegion::II,
        (false, 1) => HillRegion::I,
        (false, n) => {
            return Err(Error::numerical(format!("unexpected number of equatorial turning points: {n}")));
        }
    };
    Ok(HillClassification { region, chi_roots: roots, channel })
}

/// Grid mask of the Hill region: `(y, z, inside)` with `inside = U + 1/2 <= 0`.
pub fn hill_mask(ints: IntegralSet, fp: FieldParameters, y_range: (f64, f64), z_range: (f64, f64), ny: usize, nz: usize) -> Result<Vec<(f64, f64, bool)>> {
    let vals = crate::spacetime::sample_grid(y_range, z_range, ny, nz, |p| {
        if p.r <= 1.0 || p.theta <= 0.0 || p.theta >= PI {
            1.0
        } else {
            effective_potential(p, ints, fp) + 0.5
        }
    })?;
    Ok(vals.into_iter().map(|(y, z, v)| (y, z, v <= 0.0)).collect())
}

/// Result of [`hill_grid_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTopology {
    /// Connected components of the allowed set inside the box.
    pub components: usize,
    /// The allowed set touches the outer boundary `r = r_box`.
    pub channel: bool,
    pub region: Option<HillRegion>,
}

/// Brute-force Hill region type from a polar `(r, theta)` grid.
///
/// Radii are spaced logarithmically in `r - 1` from `1e-3` to `r_box - 1`.
/// Allowed cells (`U + 1/2 <= 0`) are flood-filled with 4-neighbour
/// connectivity. The type follows from the component count and whether
/// the outer ring is reached: I (1, closed), II (2, closed), III (2, open),
/// IV (1, open). Other combinations give `region = None`.
pub fn hill_grid_oracle(ints: IntegralSet, fp: FieldParameters, n_r: usize, n_theta: usize, r_box: f64) -> Result<GridTopology> {
    if n_r < 4 || n_theta < 4 || !(r_box > 2.0) {
        return Err(Error::domain("oracle grid needs n_r, n_theta >= 4 and r_box > 2"));
    }
    let (x0, x1) = (1e-3f64.ln(), (r_box - 1.0).ln());
    let rs: Vec<f64> = (0..n_r).map(|i| 1.0 + (x0 + (x1 - x0) * i as f64 / (n_r - 1) as f64).exp()).collect();
    let allowed: Vec<bool> = rs
        .par_iter()
        .flat_map_iter(|&r| {
            (0..n_theta).map(move |j| {
                let th = PI * (j as f64 + 0.5) / n_theta as f64;
                effective_potential(SpatialPoint::raw(r, th), ints, fp) + 0.5 <= 0.0
            })
        })
        .collect();
    let idx = |i: usize, j: usize| i * n_theta + j;
    let mut label = vec![usize::MAX; allowed.len()];
    let mut components = 0;
    let mut channel = false;
    let mut stack = Vec::new();
    for start in 0..allowed.len() {
        if !allowed[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = components;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k / n_theta, k % n_theta);
            if i + 1 == n_r {
                channel = true;
            }
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(idx(i - 1, j));
            }
            if i + 1 < n_r {
                nb.push(idx(i + 1, j));
            }
            if j > 0 {
                nb.push(idx(i, j - 1));
            }
            if j + 1 < n_theta {
                nb.push(idx(i, j + 1));
            }
            for n in nb {
                if allowed[n] && label[n] == usize::MAX {
                    label[n] = components;
                    stack.push(n);
                }
            }
        }
        components += 1;
    }
    let region = match (components, channel) {
        (1, false) => Some(HillRegion::I),
        (2, false) => Some(HillRegion::II),
        (2, true) => Some(HillRegion::III),
        (1, true) => Some(HillRegion::IV),
        _ => None,
    };
    Ok(GridTopology { components, channel, region })
}
