//! Circular equatorial orbits: the curves Sigma_r, Sigma_inf and the cusp r_*.

use melvin::equilibria::{critical_field, critical_radii, cusp_radius, equilibrium, r_n, sigma_inf, sigma_r};
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    println!("B_n = {:.12}, r_n = {:.12}", critical_field(), r_n());
    for b in [0.0, 0.05, 0.15, 0.3, 0.37] {
        let fp = FieldParameters::new(b)?;
        let (r1, r2) = critical_radii(fp).expect("B < B_n");
        let rs = cusp_radius(fp)?;
        println!("B = {b:<5} r in ({r1:.4}, {r2:.4}), cusp at r_* = {rs:.6}");
    }

    let fp = FieldParameters::new(0.15)?;
    for r_c in [2.0, 3.0, 4.5, 6.0] {
        let eq = equilibrium(r_c, fp)?;
        println!("r_c = {r_c}: L = {:.6}, E = {:.6}, {:?}", eq.l, eq.e, eq.stability);
    }
    let sr = sigma_r(fp, 200)?;
    let si = sigma_inf(fp, 200)?;
    let (rs, ls, es) = sr.cusp.unwrap();
    println!("Sigma_r: {} samples, cusp (L, E) = ({ls:.6}, {es:.6}) at r = {rs:.6}", sr.samples.len());
    println!("Sigma_inf: {} samples, L from {:.4} to {:.4}", si.samples.len(), si.samples[0].l, si.samples.last().unwrap().l);
    Ok(())
}
