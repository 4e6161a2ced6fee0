//! Melnikov integral J1 along the Schwarzschild homoclinic loop: closed form against quadrature.

use melvin::melnikov::{melnikov_closed_form, melnikov_table, HomoclinicParams};

fn main() -> melvin::Result<()> {
    let rows = melnikov_table(&[2.1, 2.5, 2.9], 0.5, &[0.2, 1.0, 2.0])?;
    println!("{:>5} {:>8} {:>5} {:>22} {:>22} {:>9}", "r_u", "L", "C", "closed form", "quadrature", "rel err");
    for r in &rows {
        println!("{:>5} {:>8.5} {:>5} {:>22.15e} {:>22.15e} {:>9.2e}", r.r_u, r.l, r.c_theta, r.j1_closed, r.j1_quadrature, r.rel_err);
    }

    // J1 changes sign at every multiple of pi/2
    let a = (2.0f64 * 2.5 - 3.0).sqrt() / 2.5;
    let hp = HomoclinicParams::new(2.5, 0.5 / a)?;
    for k in 1..=3 {
        let c = k as f64 * std::f64::consts::FRAC_PI_2;
        println!("C = {k} pi/2: J1(C - 0.01) = {:+.4e}, J1(C + 0.01) = {:+.4e}", melnikov_closed_form(&hp, c - 0.01), melnikov_closed_form(&hp, c + 0.01));
    }
    Ok(())
}
