//! Return map to the equatorial section at B = 0.15, L = 2.8, E = 1.24.

use melvin::dynamics::IntegralSet;
use melvin::poincare::{find_fixed_point, return_map, symmetric_fixed_points, MapOptions, SectionPoint};
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    let fp = FieldParameters::new(0.15)?;
    let ints = IntegralSet::new(2.8, 1.24)?;
    let opts = MapOptions::default();

    for x in symmetric_fixed_points(ints, fp, 1, 60, &opts)? {
        println!("symmetric  ({:.6}, {:+.6}) trace {:+.4} det-1 {:+.1e} {:?}", x.point.r, x.point.p_r, x.trace, x.det - 1.0, x.kind);
    }
    for p in [0.093877, -0.093877] {
        let x = find_fixed_point(SectionPoint::new(5.01349, p), 1, ints, fp, &opts)?;
        println!("asymmetric ({:.6}, {:+.6}) trace {:+.4} {:?}", x.point.r, x.point.p_r, x.trace, x.kind);
    }

    // an orbit around the asymmetric island
    let orbit = return_map(SectionPoint::new(5.05, 0.11), ints, fp, 200, &opts)?;
    let (rmin, rmax) = orbit.points.iter().fold((f64::MAX, f64::MIN), |(a, b), q| (a.min(q.r), b.max(q.r)));
    println!("{} iterates, r in [{rmin:.4}, {rmax:.4}], {:?}", orbit.points.len(), orbit.termination);
    Ok(())
}
