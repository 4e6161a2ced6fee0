//! Stable and unstable manifolds of the hyperbolic point, unsplit at B = 0 and split at B = 0.02.

use melvin::dynamics::IntegralSet;
use melvin::melnikov::{distance_to_loop, HomoclinicParams};
use melvin::poincare::{find_fixed_point, polyline_crossings, trace_separatrix, BranchSide, SectionPoint, SeparatrixOptions, TRANSVERSAL_FLOOR};
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    let ints = IntegralSet::new(1.8, 0.9584)?;
    let hp = HomoclinicParams::from_integrals(ints)?;
    let opts = SeparatrixOptions::default();
    for b in [0.0, 0.02] {
        let fp = FieldParameters::new(b)?;
        let x = find_fixed_point(SectionPoint::new(hp.r_u, 0.0), 1, ints, fp, &opts.map)?;
        let mu = x.dominant_real_multiplier().unwrap();
        let vu = x.eigenvector(mu).unwrap();
        let vs = x.eigenvector(x.det / mu).unwrap();
        // the branches heading to larger r trace out the loop
        let un = trace_separatrix(&x, BranchSide { unstable: true, positive: vu[0] > 0.0 }, ints, fp, &opts)?;
        let st = trace_separatrix(&x, BranchSide { unstable: false, positive: vs[0] > 0.0 }, ints, fp, &opts)?;
        println!("B = {b}: saddle at r = {:.6}, mu = {mu:.4}, branches of {} and {} points", x.point.r, un.points.len(), st.points.len());
        if b == 0.0 {
            let d = un.points.iter().chain(&st.points).map(|p| distance_to_loop(&hp, *p)).fold(0.0, f64::max);
            println!("  largest distance to the closed-form loop: {d:.2e}");
        }
        let cr = polyline_crossings(&un.points, &st.points, x.point, 1e-3);
        let tr: Vec<_> = cr.iter().filter(|c| c.is_transversal(TRANSVERSAL_FLOOR)).collect();
        println!("  {} crossings, {} transversal", cr.len(), tr.len());
        if let Some(c) = tr.first() {
            println!("  first at ({:.5}, {:+.5}), angle {:.3}", c.point.r, c.point.p_r, c.angle);
        }
    }
    Ok(())
}
