//! Numerical quadrature: fixed Gauss-Legendre rules and adaptive Gauss-Kronrod.

use crate::{Error, Result};

// 8-point Gauss-Legendre on [-1, 1]; symmetric, positive halves listed.
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// 8-point Gauss-Legendre rule on `[a, b]` (exact for degree 15 polynomials).
pub fn gauss_legendre_8<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in GL8_X.iter().zip(GL8_W.iter()) {
        s += w * (f(mid - half * x) + f(mid + half * x));
    }
    s * half
}

// Gauss-Kronrod 7/15 nodes and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Compensated summation; panel sums of an oscillating integrand cancel heavily.
fn neumaier_sum<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive Gauss-Kronrod 7/15 on `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive_gk<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_panels: usize) -> Result<Quadrature> {
    let (v, e) = gk15(a, b, &mut f);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value = neumaier_sum(panels.iter().map(|p| p.2));
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::numerical("quadrature produced a non-finite value"));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error, panels: panels.len() });
        }
        if panels.len() >= max_panels {
            return Err(Error::numerical(format!(
                "quadrature did not reach tolerance with {max_panels} panels (error estimate {error:e})"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(lo, mid, &mut f);
        let (v2, e2) = gk15(mid, hi, &mut f);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}
