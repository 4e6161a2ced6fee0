//! Force lines and energy density of the Melvin field around the hole.

use melvin::spacetime::{energy_density, field_line, FieldParameters, SpatialPoint};

fn main() -> melvin::Result<()> {
    let fp = FieldParameters::new(0.1)?;
    for y0 in [0.5, 1.5, 3.0, 6.0] {
        // start far up the axis and follow the field down
        let start = SpatialPoint::from_cylindrical(y0, 20.0);
        let line = field_line(start, fp, -60.0)?;
        let (y, z) = *line.points.last().unwrap();
        println!("seed y = {y0:>4}: {:>4} points, ends at ({y:.3}, {z:.3}) [{:?}]", line.points.len(), line.end);
    }
    println!();
    for r in [1.01, 2.0, 5.0, 10.0, 20.0] {
        let rho = energy_density(SpatialPoint::new(r, std::f64::consts::FRAC_PI_2)?, fp);
        println!("rho(r = {r:>4}, equator) = {rho:.6e}");
    }
    Ok(())
}
