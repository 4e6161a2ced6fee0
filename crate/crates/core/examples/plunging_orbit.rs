//! A trajectory through the regularized flow: it leaves the horizon, wanders, and falls back in.

use melvin::dynamics::{classify_trajectory, cyclic_reconstruction, integrate, project_on_shell, IntegralSet, IntegrationOptions, Projection, RegularizedState};
use melvin::ode::Tolerances;
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    let fp = FieldParameters::new(0.15)?;
    let ints = IntegralSet::new(2.8, 1.3)?;
    // the rounded initial data sit slightly off the energy level; fix p_theta
    let raw = RegularizedState { p_r: 1.2842, p_theta: 0.54629, r: 1.00441, theta: 1.63352 };
    let start = project_on_shell(raw, ints, fp, Projection::PTheta)?;
    println!("p_theta: {} -> {:.6}", raw.p_theta, start.p_theta);

    let opts = IntegrationOptions { tol: Tolerances::new(1e-12, 1e-12), keep_dense: true, ..IntegrationOptions::default() };
    for span in [(0.0, -100.0), (0.0, 5000.0)] {
        let mut tr = integrate(start, ints, fp, span, &opts)?;
        cyclic_reconstruction(&mut tr)?;
        let last = tr.samples.last().unwrap();
        let crossings = tr.events.len().saturating_sub(1);
        println!(
            "sigma in {:?}: {:?}, stops at sigma = {:.4} (tau = {:.4}, r = {:.8}), {} steps, {crossings} equator crossings, max |H + 1/2| = {:.2e}",
            span,
            classify_trajectory(&tr),
            last.sigma,
            last.tau,
            last.state.r,
            tr.stats.accepted,
            tr.max_energy_drift
        );
        println!("  phi = {:.4}, t = {:.4} at the end", last.phi, last.t);
    }
    Ok(())
}
