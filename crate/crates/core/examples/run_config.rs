//! Runs a JSON run configuration in-process, as the `melvin` binary does.

use melvin::cli::{run, Overrides, RunConfig};

fn main() -> melvin::Result<()> {
    let mut cfg = RunConfig::from_json(
        r#"{
            "command": "poincare",
            "b": 0.15,
            "l": 2.8,
            "poincare": { "energies": [1.24], "auto_seeds": 6, "iterations": 100 }
        }"#,
    )?;
    let out = std::env::temp_dir().join("melvin-run-config");
    cfg.apply(&Overrides { out: Some(out), workers: Some(2), ..Default::default() });
    for f in run(&cfg)? {
        let size = std::fs::metadata(&f)?.len();
        println!("{} ({size} bytes)", f.display());
    }
    Ok(())
}
