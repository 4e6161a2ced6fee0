//! Hill region types on the (L, E) plane, cross-checked with the grid oracle.

use melvin::dynamics::IntegralSet;
use melvin::equilibria::{hill_classify, hill_grid_oracle, hill_mask};
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    let fp = FieldParameters::new(0.15)?;
    let points = [(2.980337253014611, 1.2060613961264195), (2.980337253014611, 1.2210613961264194), (4.3, 1.7), (0.5, 1.2)];
    for (l, e) in points {
        let ints = IntegralSet::new(l, e)?;
        let c = hill_classify(ints, fp)?;
        let g = hill_grid_oracle(ints, fp, 600, 400, 200.0)?;
        println!("L = {l:.4}, E = {e:.4}: type {:<3} roots {:?} channel {} | grid: {:?}", c.region.to_string(), c.chi_roots, c.channel, g.region);
    }

    // coarse picture of one region in the (y, z) half-plane
    let ints = IntegralSet::new(2.980337253014611, 1.2210613961264194)?;
    let (ny, nz) = (60, 24);
    let mask = hill_mask(ints, fp, (0.0, 12.0), (-6.0, 6.0), ny, nz)?;
    // points inside the horizon are left out of the mask; draw them blank
    let mut rows = vec![vec![' '; ny]; nz];
    for (y, z, inside) in mask {
        let i = (y / 12.0 * (ny - 1) as f64).round() as usize;
        let j = ((z + 6.0) / 12.0 * (nz - 1) as f64).round() as usize;
        rows[j][i] = if inside { '#' } else { '.' };
    }
    for row in rows.iter().rev() {
        println!("{}", row.iter().collect::<String>());
    }
    Ok(())
}
