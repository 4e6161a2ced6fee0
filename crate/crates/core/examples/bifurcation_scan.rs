//! Continuation of period-1 points in E: center, pitchfork, then period doubling.

use melvin::poincare::{scan_bifurcations, ScanOptions};
use melvin::spacetime::FieldParameters;

fn main() -> melvin::Result<()> {
    let energies: Vec<f64> = (0..=45).map(|i| 1.17 + 0.002 * i as f64).collect();
    let scan = scan_bifurcations(2.8, &energies, FieldParameters::new(0.15)?, &ScanOptions::default())?;
    for s in scan.steps.iter().step_by(5) {
        let kinds: Vec<String> = s.fixed_points.iter().map(|x| format!("{:.3}{}", x.point.r, if x.is_stable() { "s" } else { "u" })).collect();
        println!("E = {:.3}: {}", s.e, kinds.join(" "));
    }
    for ev in &scan.events {
        println!("{:?} in ({:.3}, {:.3}) at ({:.4}, {:+.4}), {} born", ev.kind, ev.e_before, ev.e_after, ev.point.r, ev.point.p_r, ev.born.len());
    }
    Ok(())
}
