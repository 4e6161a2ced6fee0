//! Run configurations and the command implementations behind the `melvin` binary.
//!
//! Every command reads a [`RunConfig`], writes CSV/JSON files into
//! `cfg.out` and returns the paths it wrote. Outputs contain no timestamps
//! and parallel work is gathered in input order, so identical configs give
//! byte-identical files.

use crate::dynamics::{cyclic_reconstruction, integrate, project_on_shell, IntegralSet, IntegrationOptions, Projection, RegularizedState, TrajectoryRecord};
use crate::equilibria::{
    critical_field, critical_radii, cusp_radius, hill_classify, hill_grid_oracle, hill_mask, r_n, sigma_inf, sigma_r, stability_of_equilibrium, BifurcationCurve, HillRegion,
    Stability,
};
use crate::melnikov::{distance_to_loop, melnikov_table, HomoclinicParams};
use crate::ode::Tolerances;
use crate::poincare::{
    delta, find_fixed_point, polyline_crossings, return_map, scan_bifurcations, symmetric_domain, symmetric_fixed_points, trace_separatrix, BranchCrossing, BranchEnd, BranchSide,
    FixedPointKind, MapFixedPoint, MapOptions, ScanOptions, SectionPoint, SeparatrixOptions, Termination, TRANSVERSAL_FLOOR,
};
use crate::spacetime::{energy_density, field_line, sample_grid, FieldLineEnd, FieldParameters, SpatialPoint};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// CLI verbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fieldlines,
    Equilibria,
    Hill,
    Trajectory,
    Poincare,
    Fixedpoints,
    Separatrix,
    Melnikov,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Fieldlines,
        Command::Equilibria,
        Command::Hill,
        Command::Trajectory,
        Command::Poincare,
        Command::Fixedpoints,
        Command::Separatrix,
        Command::Melnikov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Fieldlines => "fieldlines",
            Command::Equilibria => "equilibria",
            Command::Hill => "hill",
            Command::Trajectory => "trajectory",
            Command::Poincare => "poincare",
            Command::Fixedpoints => "fixedpoints",
            Command::Separatrix => "separatrix",
            Command::Melnikov => "melnikov",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::domain(format!("unknown command '{s}'")))
    }
}

/// Rectangular `(y, z)` grid with `y = r sin(theta)`, `z = r cos(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub ny: usize,
    pub nz: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { y_range: (0.0, 10.0), z_range: (-10.0, 10.0), ny: 201, nz: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldLinesSpec {
    /// Equatorial radii where lines are seeded; each is traced both ways.
    pub seeds: Vec<f64>,
    pub arc_length: f64,
    pub grid: GridSpec,
}

impl Default for FieldLinesSpec {
    fn default() -> Self {
        FieldLinesSpec { seeds: vec![1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0], arc_length: 40.0, grid: GridSpec::default() }
    }
}

/// Grid on the `(r_c, B)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcPlaneSpec {
    pub b_max: f64,
    pub n_b: usize,
    pub r_max: f64,
    pub n_r: usize,
}

impl Default for RcPlaneSpec {
    fn default() -> Self {
        RcPlaneSpec { b_max: 0.379, n_b: 200, r_max: 12.0, n_r: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriaSpec {
    /// One panel per value; empty means the top-level `b`.
    pub b_values: Vec<f64>,
    pub n_samples: usize,
    pub rc_plane: Option<RcPlaneSpec>,
}

impl Default for EquilibriaSpec {
    fn default() -> Self {
        EquilibriaSpec { b_values: Vec::new(), n_samples: 400, rc_plane: None }
    }
}

/// Polar grid for the brute-force Hill oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_box: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { n_r: 1200, n_theta: 800, r_box: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HillSpec {
    /// `(L, E)` pairs; empty means the top-level `l`, `e`.
    pub points: Vec<(f64, f64)>,
    pub mask: Option<GridSpec>,
    pub oracle: OracleSpec,
}

impl Default for HillSpec {
    fn default() -> Self {
        HillSpec { points: Vec::new(), mask: None, oracle: OracleSpec::default() }
    }
}

/// One integration of the regularized flow, starting at `sigma = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRun {
    /// Overrides the top-level energy.
    #[serde(default)]
    pub e: Option<f64>,
    /// `(P_r, p_theta, r, theta)`.
    pub initial: [f64; 4],
    /// A negative lower end integrates backwards from 0 as well.
    pub sigma_span: (f64, f64),
    /// Recompute one momentum so the start lies on `H~ = -1/2`.
    #[serde(default)]
    pub project: Option<Projection>,
    #[serde(default)]
    pub cyclic: bool,
    /// Write every `stride`-th sample.
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub runs: Vec<TrajectoryRun>,
}

/// `(r, P_r, Delta)` grid of the section, for shading the map domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionGridSpec {
    pub r_range: (f64, f64),
    pub p_range: (f64, f64),
    pub nr: usize,
    pub np: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareSpec {
    /// One cloud per energy; empty means the top-level `e`.
    pub energies: Vec<f64>,
    /// Explicit `(r, P_r)` seeds.
    pub seeds: Vec<(f64, f64)>,
    /// Extra seeds spread over each interval of `P_r = 0` inside the domain.
    pub auto_seeds: usize,
    pub iterations: usize,
    /// Also locate symmetric period-1 points at each energy.
    pub fixed_points: bool,
    /// Newton guesses `(r, P_r)` for further period-1 points.
    pub guesses: Vec<(f64, f64)>,
    pub domain: Option<SectionGridSpec>,
    /// Auto seeds are placed below this radius.
    pub r_seed_max: f64,
}

impl Default for PoincareSpec {
    fn default() -> Self {
        PoincareSpec {
            energies: Vec::new(),
            seeds: Vec::new(),
            auto_seeds: 12,
            iterations: 300,
            fixed_points: true,
            guesses: Vec::new(),
            domain: None,
            r_seed_max: 50.0,
        }
    }
}

/// Inclusive energy grid `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl EnergyGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.stop > self.start) {
            return Err(Error::domain("energy grid needs step > 0 and stop > start"));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + self.step * i as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointGuess {
    pub e: f64,
    pub r: f64,
    pub p_r: f64,
    #[serde(default = "one")]
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointsSpec {
    /// Continuation in `E` with bifurcation detection.
    pub scan: Option<EnergyGrid>,
    pub n_grid: usize,
    pub guesses: Vec<FixedPointGuess>,
}

impl Default for FixedPointsSpec {
    fn default() -> Self {
        FixedPointsSpec { scan: None, n_grid: 60, guesses: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparatrixSpec {
    /// One panel per value; empty means the top-level `b`.
    pub b_values: Vec<f64>,
    /// Newton guess for the hyperbolic point on `P_r = 0`; defaults to the
    /// unstable circular orbit of the Schwarzschild case.
    pub r_guess: Option<f64>,
    pub eps: f64,
    pub iterations: usize,
    pub max_points: usize,
    pub min_spacing: f64,
    pub max_spacing: f64,
    pub max_turn: f64,
    /// Crossings closer than this to the fixed point are ignored.
    pub exclude: f64,
}

impl Default for SeparatrixSpec {
    fn default() -> Self {
        let d = SeparatrixOptions::default();
        SeparatrixSpec {
            b_values: Vec::new(),
            r_guess: None,
            eps: d.eps,
            iterations: d.iterations,
            max_points: d.max_points,
            min_spacing: d.min_spacing,
            max_spacing: d.max_spacing,
            max_turn: d.max_turn,
            exclude: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelnikovSpec {
    pub r_u: Vec<f64>,
    /// `L = l_fraction / a` for every `r_u`.
    pub l_fraction: f64,
    pub c_theta: Vec<f64>,
}

impl Default for MelnikovSpec {
    fn default() -> Self {
        MelnikovSpec { r_u: vec![2.1, 2.3, 2.5, 2.7, 2.9], l_fraction: 0.5, c_theta: vec![0.2, 0.5, 1.0, 2.0, 2.8] }
    }
}

/// Everything a command needs. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub b: f64,
    pub l: Option<f64>,
    pub e: Option<f64>,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub fieldlines: FieldLinesSpec,
    pub equilibria: EquilibriaSpec,
    pub hill: HillSpec,
    pub trajectory: TrajectorySpec,
    pub poincare: PoincareSpec,
    pub fixedpoints: FixedPointsSpec,
    pub separatrix: SeparatrixSpec,
    pub melnikov: MelnikovSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            b: 0.0,
            l: None,
            e: None,
            tol_abs: 1e-12,
            tol_rel: 1e-12,
            out: PathBuf::from("out"),
            workers: None,
            fieldlines: FieldLinesSpec::default(),
            equilibria: EquilibriaSpec::default(),
            hill: HillSpec::default(),
            trajectory: TrajectorySpec::default(),
            poincare: PoincareSpec::default(),
            fixedpoints: FixedPointsSpec::default(),
            separatrix: SeparatrixSpec::default(),
            melnikov: MelnikovSpec::default(),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub b: Option<f64>,
    pub l: Option<f64>,
    pub e: Option<f64>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::domain(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(b) = o.b {
            self.b = b;
        }
        if o.l.is_some() {
            self.l = o.l;
        }
        if o.e.is_some() {
            self.e = o.e;
        }
        if let Some(t) = o.tol_abs {
            self.tol_abs = t;
        }
        if let Some(t) = o.tol_rel {
            self.tol_rel = t;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn field(&self) -> Result<FieldParameters> {
        FieldParameters::new(self.b)
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::domain("tolerances must be positive"));
        }
        Ok(Tolerances::new(self.tol_abs, self.tol_rel))
    }

    pub fn integrals(&self) -> Result<IntegralSet> {
        IntegralSet::new(self.need_l()?, self.need_e()?)
    }

    fn need_l(&self) -> Result<f64> {
        self.l.ok_or_else(|| Error::domain("this command needs L"))
    }

    fn need_e(&self) -> Result<f64> {
        self.e.ok_or_else(|| Error::domain("this command needs E"))
    }

    fn map_options(&self) -> Result<MapOptions> {
        Ok(MapOptions { tol: self.tolerances()?, ..MapOptions::default() })
    }
}

/// Runs the configured command inside a pool of `cfg.workers` threads.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let cmd = cfg.command.ok_or_else(|| Error::domain("no command given"))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        if n == 0 {
            return Err(Error::domain("workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::numerical(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io(format!("{}: {e}", cfg.out.display())))?;
    pool.install(|| match cmd {
        Command::Fieldlines => cmd_fieldlines(cfg),
        Command::Equilibria => cmd_equilibria(cfg),
        Command::Hill => cmd_hill(cfg),
        Command::Trajectory => cmd_trajectory(cfg),
        Command::Poincare => cmd_poincare(cfg),
        Command::Fixedpoints => cmd_fixedpoints(cfg),
        Command::Separatrix => cmd_separatrix(cfg),
        Command::Melnikov => cmd_melnikov(cfg),
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &str) -> Self {
        Csv { text: format!("{header}\n") }
    }

    fn with_meta(meta: &[(&str, String)], header: &str) -> Self {
        let mut text = String::new();
        for (k, v) in meta {
            let _ = writeln!(text, "# {k} = {v}");
        }
        let _ = writeln!(text, "{header}");
        Csv { text }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }
}

struct Output<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path) -> Self {
        Output { dir, written: Vec::new() }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    fn csv(&mut self, name: &str, csv: Csv) -> Result<()> {
        self.write(name, &csv.text)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

fn end_name(e: FieldLineEnd) -> &'static str {
    match e {
        FieldLineEnd::Horizon => "horizon",
        FieldLineEnd::Axis => "axis",
        FieldLineEnd::ArcLength => "arc_length",
    }
}

#[derive(Serialize)]
struct LineMeta {
    line: usize,
    seed_y: f64,
    backward_end: &'static str,
    forward_end: &'static str,
    length: f64,
    points: usize,
}

/// Force lines seeded on the equator plus the energy density on a grid.
pub fn cmd_fieldlines(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let fp = cfg.field()?;
    let spec = &cfg.fieldlines;
    let g = spec.grid;
    let mut out = Output::new(&cfg.out);
    // with no field there is nothing to trace
    let seeds: Vec<f64> = if fp.b() == 0.0 { Vec::new() } else { spec.seeds.clone() };
    let lines = seeds
        .par_iter()
        .map(|&y| {
            let start = SpatialPoint::new(y, std::f64::consts::FRAC_PI_2)?;
            let back = field_line(start, fp, -spec.arc_length)?;
            let fwd = field_line(start, fp, spec.arc_length)?;
            let mut pts: Vec<(f64, f64)> = back.points.iter().rev().copied().collect();
            pts.extend(fwd.points.iter().skip(1).copied());
            Ok((y, back.end, fwd.end, back.length + fwd.length, pts))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = Csv::new("line,seed_y,y,z");
    let mut meta = Vec::new();
    for (i, (y0, be, fe, len, pts)) in lines.iter().enumerate() {
        for &(y, z) in pts {
            csv.row(&[i.to_string(), num(*y0), num(y), num(z)]);
        }
        meta.push(LineMeta { line: i, seed_y: *y0, backward_end: end_name(*be), forward_end: end_name(*fe), length: *len, points: pts.len() });
    }
    out.csv("fieldlines.csv", csv)?;
    let rho = sample_grid(g.y_range, g.z_range, g.ny, g.nz, |p| energy_density(p, fp))?;
    let mut csv = Csv::new("y,z,rho");
    for (y, z, v) in rho {
        csv.row(&[num(y), num(z), num(v)]);
    }
    out.csv("rho.csv", csv)?;
    out.json("fieldlines.json", &serde_json::json!({ "b": fp.b(), "lines": meta, "grid": g }))?;
    Ok(out.written)
}

fn stability_name(s: Option<Stability>) -> &'static str {
    match s {
        Some(Stability::CenterCenter) => "center-center",
        Some(Stability::SaddleCenter) => "saddle-center",
        None => "",
    }
}

#[derive(Serialize)]
struct CuspMeta {
    r: f64,
    l: f64,
    e: f64,
}

#[derive(Serialize)]
struct PanelMeta {
    b: f64,
    r_1: Option<f64>,
    r_2: Option<f64>,
    cusp: Option<CuspMeta>,
    capped: bool,
    sigma_r: Option<String>,
    sigma_inf: Option<String>,
}

fn curve_csv(c: &BifurcationCurve, param: &str) -> Csv {
    let mut csv = Csv::new(&format!("{param},L,E,stability"));
    for s in &c.samples {
        csv.row(&[num(s.param), num(s.l), num(s.e), stability_name(s.stability).to_string()]);
    }
    csv
}

/// Bifurcation curves per field value, and optionally the `(r_c, B)` stability plane.
pub fn cmd_equilibria(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = &cfg.equilibria;
    let bs = if spec.b_values.is_empty() { vec![cfg.b] } else { spec.b_values.clone() };
    let mut out = Output::new(&cfg.out);
    let mut panels = Vec::new();
    for (k, &b) in bs.iter().enumerate() {
        let fp = FieldParameters::new(b)?;
        let radii = critical_radii(fp);
        let mut panel = PanelMeta { b, r_1: radii.map(|r| r.0), r_2: radii.and_then(|r| r.1.is_finite().then_some(r.1)), cusp: None, capped: false, sigma_r: None, sigma_inf: None };
        if radii.is_some() {
            let c = sigma_r(fp, spec.n_samples)?;
            panel.cusp = c.cusp.map(|(r, l, e)| CuspMeta { r, l, e });
            panel.capped = c.capped;
            let name = format!("sigma_r_{k}.csv");
            out.csv(&name, curve_csv(&c, "r_c"))?;
            panel.sigma_r = Some(name);
        }
        if b > 0.0 {
            let c = sigma_inf(fp, spec.n_samples)?;
            let name = format!("sigma_inf_{k}.csv");
            out.csv(&name, curve_csv(&c, "y_c"))?;
            panel.sigma_inf = Some(name);
        }
        panels.push(panel);
    }
    if let Some(rc) = spec.rc_plane {
        if !(rc.b_max > 0.0 && rc.n_b >= 2 && rc.n_r >= 2 && rc.r_max > 1.0) {
            return Err(Error::domain("invalid rc_plane grid"));
        }
        let b_grid: Vec<f64> = (1..=rc.n_b).map(|i| rc.b_max * i as f64 / rc.n_b as f64).collect();
        let rows = b_grid
            .par_iter()
            .map(|&b| {
                let fp = FieldParameters::new(b)?;
                let Some((r1, r2)) = critical_radii(fp) else { return Ok((b, None, Vec::new())) };
                let rs = cusp_radius(fp)?;
                let pts = (0..rc.n_r)
                    .map(|j| 1.0 + (rc.r_max - 1.0) * (j as f64 + 0.5) / rc.n_r as f64)
                    .filter(|&r| r > r1 && r < r2)
                    .map(|r| Ok((r, stability_of_equilibrium(r, fp)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((b, Some((r1, r2, rs)), pts))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut curves = Csv::new("B,r_1,r_2,r_star");
        let mut plane = Csv::new("B,r_c,stability");
        for (b, radii, pts) in rows {
            if let Some((r1, r2, rs)) = radii {
                curves.row(&[num(b), num(r1), num(r2), num(rs)]);
            }
            for (r, s) in pts {
                plane.row(&[num(b), num(r), stability_name(Some(s)).to_string()]);
            }
        }
        out.csv("rc_curves.csv", curves)?;
        out.csv("rc_plane.csv", plane)?;
    }
    out.json("equilibria.json", &serde_json::json!({ "b_n": critical_field(), "r_n": r_n(), "panels": panels }))?;
    Ok(out.written)
}

#[derive(Serialize)]
struct HillRow {
    l: f64,
    e: f64,
    region: Option<HillRegion>,
    chi_roots: Vec<f64>,
    channel: Option<bool>,
    /// Set when the point is too close to a bifurcation curve to classify.
    boundary: Option<String>,
    oracle_region: Option<HillRegion>,
    oracle_components: usize,
    agrees: bool,
    mask: Option<String>,
}

/// Hill region type of each `(L, E)` point, checked against the grid oracle.
pub fn cmd_hill(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let fp = cfg.field()?;
    let spec = &cfg.hill;
    let points = if spec.points.is_empty() { vec![(cfg.need_l()?, cfg.need_e()?)] } else { spec.points.clone() };
    let mut out = Output::new(&cfg.out);
    let mut rows = Vec::new();
    for (k, &(l, e)) in points.iter().enumerate() {
        let ints = IntegralSet::new(l, e)?;
        let (region, roots, channel, boundary) = match hill_classify(ints, fp) {
            Ok(h) => (Some(h.region), h.chi_roots, Some(h.channel), None),
            Err(err @ Error::Boundary { .. }) => (None, Vec::new(), None, Some(err.to_string())),
            Err(err) => return Err(err),
        };
        let o = spec.oracle;
        let g = hill_grid_oracle(ints, fp, o.n_r, o.n_theta, o.r_box)?;
        let mut mask_name = None;
        if let Some(m) = spec.mask {
            let mut csv = Csv::new("y,z,allowed");
            for (y, z, inside) in hill_mask(ints, fp, m.y_range, m.z_range, m.ny, m.nz)? {
                csv.row(&[num(y), num(z), u8::from(inside).to_string()]);
            }
            let name = format!("hill_mask_{k}.csv");
            out.csv(&name, csv)?;
            mask_name = Some(name);
        }
        rows.push(HillRow {
            l,
            e,
            region,
            chi_roots: roots,
            channel,
            boundary,
            oracle_region: g.region,
            oracle_components: g.components,
            agrees: region.is_some() && region == g.region,
            mask: mask_name,
        });
    }
    out.json("hill.json", &serde_json::json!({ "b": fp.b(), "oracle": spec.oracle, "points": rows }))?;
    Ok(out.written)
}

#[derive(Serialize)]
struct TrajectoryMeta {
    file: String,
    e: f64,
    start: RegularizedState,
    backward: Option<SegmentMeta>,
    forward: Option<SegmentMeta>,
}

#[derive(Serialize)]
struct SegmentMeta {
    class: crate::dynamics::TrajectoryClass,
    sigma_end: f64,
    max_energy_drift: f64,
    steps: usize,
    events: Vec<crate::dynamics::Event>,
}

fn segment_meta(t: &TrajectoryRecord) -> SegmentMeta {
    SegmentMeta {
        class: t.class,
        sigma_end: t.samples.last().map_or(0.0, |s| s.sigma),
        max_energy_drift: t.max_energy_drift,
        steps: t.samples.len() - 1,
        events: t.events.clone(),
    }
}

/// Integrates each configured run and writes the samples with Cartesian coordinates.
pub fn cmd_trajectory(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let fp = cfg.field()?;
    let l = cfg.need_l()?;
    let tol = cfg.tolerances()?;
    if cfg.trajectory.runs.is_empty() {
        return Err(Error::domain("trajectory needs at least one run"));
    }
    let base = IntegrationOptions { tol, ..IntegrationOptions::default() };
    let results = cfg
        .trajectory
        .runs
        .par_iter()
        .map(|run| {
            let e = run.e.or(cfg.e).ok_or_else(|| Error::domain("trajectory run needs E"))?;
            let ints = IntegralSet::new(l, e)?;
            let [p_r, p_theta, r, theta] = run.initial;
            let mut start = RegularizedState { p_r, p_theta, r, theta };
            if let Some(which) = run.project {
                start = project_on_shell(start, ints, fp, which)?;
            }
            let (a, b) = run.sigma_span;
            if !(a <= 0.0 && b >= 0.0 && b > a) {
                return Err(Error::domain("sigma_span must contain 0"));
            }
            let seg = |end: f64| -> Result<Option<TrajectoryRecord>> {
                if end == 0.0 {
                    return Ok(None);
                }
                let opts = IntegrationOptions { keep_dense: run.cyclic, ..base };
                let mut t = integrate(start, ints, fp, (0.0, end), &opts)?;
                if run.cyclic {
                    cyclic_reconstruction(&mut t)?;
                }
                Ok(Some(t))
            };
            Ok((e, start, seg(a)?, seg(b)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::new(&cfg.out);
    let mut meta = Vec::new();
    for (k, (run, (e, start, back, fwd))) in cfg.trajectory.runs.iter().zip(results).enumerate() {
        let mut csv = Csv::new("sigma,tau,P_r,p_theta,r,theta,phi,t,x,y,z");
        let mut samples: Vec<&crate::dynamics::Sample> = Vec::new();
        if let Some(t) = &back {
            samples.extend(t.samples.iter().rev());
        }
        if let Some(t) = &fwd {
            let skip = usize::from(back.is_some());
            samples.extend(t.samples.iter().skip(skip));
        }
        let stride = run.stride.max(1);
        let last = samples.len().saturating_sub(1);
        for (i, s) in samples.iter().enumerate() {
            if i % stride != 0 && i != last {
                continue;
            }
            let st = s.state;
            let (sn, cs) = st.theta.sin_cos();
            let (x, y) = (st.r * sn * s.phi.cos(), st.r * sn * s.phi.sin());
            csv.row(&[num(s.sigma), num(s.tau), num(st.p_r), num(st.p_theta), num(st.r), num(st.theta), num(s.phi), num(s.t), num(x), num(y), num(st.r * cs)]);
        }
        let name = format!("trajectory_{k}.csv");
        out.csv(&name, csv)?;
        meta.push(TrajectoryMeta { file: name, e, start, backward: back.as_ref().map(segment_meta), forward: fwd.as_ref().map(segment_meta) });
    }
    out.json("trajectory.json", &serde_json::json!({ "b": fp.b(), "l": l, "runs": meta }))?;
    Ok(out.written)
}

#[derive(Serialize)]
struct FixedPointRow {
    r: f64,
    p_r: f64,
    period: usize,
    trace: f64,
    det: f64,
    kind: FixedPointKind,
    symmetric: bool,
    residual: f64,
}

impl From<&MapFixedPoint> for FixedPointRow {
    fn from(x: &MapFixedPoint) -> Self {
        FixedPointRow { r: x.point.r, p_r: x.point.p_r, period: x.period, trace: x.trace, det: x.det, kind: x.kind, symmetric: x.is_symmetric(), residual: x.residual }
    }
}

#[derive(Serialize)]
struct CloudMeta {
    e: f64,
    file: String,
    seeds: Vec<SeedMeta>,
    fixed_points: Vec<FixedPointRow>,
    domain: Option<String>,
}

#[derive(Serialize)]
struct SeedMeta {
    seed_id: usize,
    r: f64,
    p_r: f64,
    points: usize,
    termination: Termination,
}

fn auto_seeds(ints: IntegralSet, fp: FieldParameters, n: usize, r_max: f64) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut seeds = Vec::new();
    for (a, b) in symmetric_domain(ints, fp, r_max) {
        // the interval touching the horizon only holds plunging orbits
        if a < 1.0 + 1e-6 {
            continue;
        }
        for i in 0..n {
            seeds.push((a + (b - a) * (i as f64 + 0.5) / n as f64, 0.0));
        }
    }
    seeds
}

fn dedup_points(mut pts: Vec<MapFixedPoint>) -> Vec<MapFixedPoint> {
    let mut outp: Vec<MapFixedPoint> = Vec::new();
    pts.sort_by(|a, b| a.point.r.total_cmp(&b.point.r).then(a.point.p_r.total_cmp(&b.point.p_r)));
    for p in pts {
        if !outp.iter().any(|q| q.point.dist(p.point) < 1e-7) {
            outp.push(p);
        }
    }
    outp
}

/// Orbits of the return map per energy, with fixed points and the map domain.
pub fn cmd_poincare(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let fp = cfg.field()?;
    let l = cfg.need_l()?;
    let spec = &cfg.poincare;
    let mo = cfg.map_options()?;
    let energies = if spec.energies.is_empty() { vec![cfg.need_e()?] } else { spec.energies.clone() };
    let mut out = Output::new(&cfg.out);
    let mut clouds = Vec::new();
    for (k, &e) in energies.iter().enumerate() {
        let ints = IntegralSet::new(l, e)?;
        let mut seeds = spec.seeds.clone();
        seeds.extend(auto_seeds(ints, fp, spec.auto_seeds, spec.r_seed_max));
        let orbits = seeds
            .par_iter()
            .map(|&(r, p)| return_map(SectionPoint::new(r, p), ints, fp, spec.iterations, &mo))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = Csv::new("seed_id,iter,r,P_r");
        let mut seed_meta = Vec::new();
        for (i, o) in orbits.iter().enumerate() {
            csv.row(&[i.to_string(), "0".into(), num(o.seed.r), num(o.seed.p_r)]);
            for (n, p) in o.points.iter().enumerate() {
                csv.row(&[i.to_string(), (n + 1).to_string(), num(p.r), num(p.p_r)]);
            }
            seed_meta.push(SeedMeta { seed_id: i, r: o.seed.r, p_r: o.seed.p_r, points: o.points.len(), termination: o.termination });
        }
        let file = format!("poincare_{k}.csv");
        out.csv(&file, csv)?;
        let mut fixed = Vec::new();
        if spec.fixed_points {
            fixed.extend(symmetric_fixed_points(ints, fp, 1, 60, &mo)?);
        }
        let found = spec.guesses.par_iter().map(|&(r, p)| find_fixed_point(SectionPoint::new(r, p), 1, ints, fp, &mo)).collect::<Vec<_>>();
        for f in found {
            match f {
                Ok(x) => fixed.push(x),
                // a guess need not be valid at every energy of the sweep
                Err(Error::Numerical(_) | Error::Domain(_)) => {}
                Err(err) => return Err(err),
            }
        }
        let fixed = dedup_points(fixed);
        let mut domain = None;
        if let Some(d) = spec.domain {
            if d.nr < 2 || d.np < 2 {
                return Err(Error::domain("section grid needs at least 2x2 points"));
            }
            let mut csv = Csv::new("r,P_r,delta");
            for i in 0..d.nr {
                let r = d.r_range.0 + (d.r_range.1 - d.r_range.0) * i as f64 / (d.nr - 1) as f64;
                for j in 0..d.np {
                    let p = d.p_range.0 + (d.p_range.1 - d.p_range.0) * j as f64 / (d.np - 1) as f64;
                    let v = if r > 1.0 { delta(r, p, ints, fp) } else { f64::NAN };
                    csv.row(&[num(r), num(p), num(v)]);
                }
            }
            let name = format!("domain_{k}.csv");
            out.csv(&name, csv)?;
            domain = Some(name);
        }
        clouds.push(CloudMeta { e, file, seeds: seed_meta, fixed_points: fixed.iter().map(FixedPointRow::from).collect(), domain });
    }
    out.json("poincare.json", &serde_json::json!({ "b": fp.b(), "l": l, "iterations": spec.iterations, "energies": clouds }))?;
    Ok(out.written)
}

fn fixed_csv(rows: &[(f64, &MapFixedPoint)]) -> Csv {
    let mut csv = Csv::new("E,period,r,P_r,trace,det,kind,symmetric,residual");
    for (e, x) in rows {
        let kind = match x.kind {
            FixedPointKind::Elliptic => "elliptic",
            FixedPointKind::Hyperbolic => "hyperbolic",
            FixedPointKind::Parabolic => "parabolic",
        };
        csv.row(&[num(*e), x.period.to_string(), num(x.point.r), num(x.point.p_r), num(x.trace), num(x.det), kind.into(), x.is_symmetric().to_string(), num(x.residual)]);
    }
    csv
}

/// Energy continuation with bifurcation detection, plus Newton from explicit guesses.
pub fn cmd_fixedpoints(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let fp = cfg.field()?;
    let l = cfg.need_l()?;
    let spec = &cfg.fixedpoints;
    let mo = cfg.map_options()?;
    if spec.scan.is_none() && spec.guesses.is_empty() {
        return Err(Error::domain("fixedpoints needs a scan grid or guesses"));
    }
    let mut out = Output::new(&cfg.out);
    if let Some(grid) = spec.scan {
        let es = grid.values()?;
        let scan = scan_bifurcations(l, &es, fp, &ScanOptions { map: mo, n_grid: spec.n_grid })?;
        let rows: Vec<(f64, &MapFixedPoint)> = scan.steps.iter().flat_map(|s| s.fixed_points.iter().map(move |x| (s.e, x))).collect();
        out.csv("scan.csv", fixed_csv(&rows))?;
        out.json("scan.json", &scan)?;
    }
    if !spec.guesses.is_empty() {
        let found = spec
            .guesses
            .par_iter()
            .map(|g| {
                let ints = IntegralSet::new(l, g.e)?;
                find_fixed_point(SectionPoint::new(g.r, g.p_r), g.period, ints, fp, &mo)
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<(f64, &MapFixedPoint)> = spec.guesses.iter().zip(&found).map(|(g, x)| (g.e, x)).collect();
        out.csv("fixedpoints.csv", fixed_csv(&rows))?;
        out.json("fixedpoints.json", &found)?;
    }
    Ok(out.written)
}

/// The four branches of one separatrix panel, in plotting order.
const BRANCH_COLORS: [(&str, bool, bool); 4] = [
    // (color, unstable, loop side)
    ("red", true, true),
    ("blue", false, true),
    ("green", false, false),
    ("purple", true, false),
];

#[derive(Serialize)]
struct BranchMeta {
    color: &'static str,
    file: String,
    unstable: bool,
    loop_side: bool,
    points: usize,
    end: BranchEnd,
}

#[derive(Serialize)]
struct SeparatrixPanel {
    b: f64,
    fixed_point: FixedPointRow,
    branches: Vec<BranchMeta>,
    /// All intersections of the red and blue polylines, including sampling noise.
    crossings_total: usize,
    transversal_crossings: Vec<BranchCrossing>,
    /// Largest distance of the loop-side branches from the closed-form loop (`B = 0` only).
    max_loop_distance: Option<f64>,
}

/// Stable and unstable manifolds of the hyperbolic point and their crossings.
pub fn cmd_separatrix(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ints = cfg.integrals()?;
    let spec = &cfg.separatrix;
    let mo = cfg.map_options()?;
    let so = SeparatrixOptions {
        map: mo,
        eps: spec.eps,
        max_spacing: spec.max_spacing,
        min_spacing: spec.min_spacing,
        max_turn: spec.max_turn,
        iterations: spec.iterations,
        max_points: spec.max_points,
        ..SeparatrixOptions::default()
    };
    let hp = HomoclinicParams::from_integrals(ints).ok();
    let r_guess = match (spec.r_guess, hp) {
        (Some(r), _) => r,
        (None, Some(h)) => h.r_u,
        (None, None) => return Err(Error::domain("separatrix needs r_guess outside the Schwarzschild homoclinic range")),
    };
    let bs = if spec.b_values.is_empty() { vec![cfg.b] } else { spec.b_values.clone() };
    let mut out = Output::new(&cfg.out);
    let mut panels = Vec::new();
    for (k, &b) in bs.iter().enumerate() {
        let fp = FieldParameters::new(b)?;
        let x = find_fixed_point(SectionPoint::new(r_guess, 0.0), 1, ints, fp, &mo)?;
        if x.kind != FixedPointKind::Hyperbolic {
            return Err(Error::domain(format!("fixed point near r = {r_guess} is {:?}, not hyperbolic", x.kind)));
        }
        let mu_u = x.dominant_real_multiplier().ok_or_else(|| Error::numerical("no real multiplier"))?;
        let vu = x.eigenvector(mu_u).ok_or_else(|| Error::numerical("no unstable eigenvector"))?;
        let vs = x.eigenvector(x.det / mu_u).ok_or_else(|| Error::numerical("no stable eigenvector"))?;
        let branches = BRANCH_COLORS
            .par_iter()
            .map(|&(_, unstable, loop_side)| {
                // the loop side is the one heading to larger r
                let v = if unstable { vu } else { vs };
                let positive = (v[0] > 0.0) == loop_side;
                trace_separatrix(&x, BranchSide { unstable, positive }, ints, fp, &so)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut metas = Vec::new();
        for ((color, unstable, loop_side), br) in BRANCH_COLORS.iter().zip(&branches) {
            let meta = [
                ("b", num(b)),
                ("l", num(ints.l)),
                ("e", num(ints.e)),
                ("manifold", if *unstable { "unstable" } else { "stable" }.to_string()),
                ("side", if *loop_side { "loop" } else { "inner" }.to_string()),
                ("fixed_point", format!("{} {}", num(x.point.r), num(x.point.p_r))),
            ];
            let mut csv = Csv::with_meta(&meta, "index,r,P_r");
            for (i, p) in br.points.iter().enumerate() {
                csv.row(&[i.to_string(), num(p.r), num(p.p_r)]);
            }
            let file = format!("separatrix_{k}_{color}.csv");
            out.csv(&file, csv)?;
            metas.push(BranchMeta { color, file, unstable: *unstable, loop_side: *loop_side, points: br.points.len(), end: br.end });
        }
        let crossings = polyline_crossings(&branches[0].points, &branches[1].points, x.point, spec.exclude);
        let crossings_total = crossings.len();
        let transversal: Vec<BranchCrossing> = crossings.into_iter().filter(|c| c.is_transversal(TRANSVERSAL_FLOOR)).collect();
        let max_loop_distance = match hp {
            Some(h) if b == 0.0 => Some(branches[..2].iter().flat_map(|br| br.points.iter()).map(|p| distance_to_loop(&h, *p)).fold(0.0, f64::max)),
            _ => None,
        };
        panels.push(SeparatrixPanel { b, fixed_point: FixedPointRow::from(&x), branches: metas, crossings_total, transversal_crossings: transversal, max_loop_distance });
    }
    out.json("separatrix.json", &serde_json::json!({ "l": ints.l, "e": ints.e, "transversal_floor": TRANSVERSAL_FLOOR, "panels": panels }))?;
    Ok(out.written)
}

/// Closed form against quadrature of the Melnikov integral on an `(r_u, C_theta)` grid.
pub fn cmd_melnikov(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = &cfg.melnikov;
    let rows = spec
        .r_u
        .par_iter()
        .map(|&r| melnikov_table(&[r], spec.l_fraction, &spec.c_theta))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let mut csv = Csv::new("r_u,L,C_theta,J1_closed,J1_quadrature,rel_err");
    for r in &rows {
        csv.row(&[num(r.r_u), num(r.l), num(r.c_theta), num(r.j1_closed), num(r.j1_quadrature), num(r.rel_err)]);
    }
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let mut out = Output::new(&cfg.out);
    out.csv("melnikov.csv", csv)?;
    out.json("melnikov.json", &serde_json::json!({ "l_fraction": spec.l_fraction, "rows": rows.len(), "max_rel_err": max_rel_err }))?;
    Ok(out.written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path, json: &str) -> RunConfig {
        let mut c = RunConfig::from_json(json).unwrap();
        c.out = dir.to_path_buf();
        c
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"bee": 0.1}"#), Err(Error::Domain(_))));
        assert!(RunConfig::from_json(r#"{"command": "hill", "b": 0.15, "l": 2.8, "e": 1.3}"#).is_ok());
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
    }

    #[test]
    fn overrides_replace_config_values() {
        let mut c = RunConfig::from_json(r#"{"b": 0.1, "l": 1.0, "tol_abs": 1e-10}"#).unwrap();
        c.apply(&Overrides { b: Some(0.2), tol_abs: Some(1e-9), ..Default::default() });
        assert_eq!((c.b, c.l, c.tol_abs, c.tol_rel), (0.2, Some(1.0), 1e-9, 1e-12));
    }

    #[test]
    fn energy_grid_is_inclusive() {
        let g = EnergyGrid { start: 1.0, stop: 1.01, step: 0.002 };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 6);
        assert!((v[5] - 1.01).abs() < 1e-12);
    }

    #[test]
    fn fieldlines_without_field_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg_in(dir.path(), r#"{"command": "fieldlines", "b": 0.0, "fieldlines": {"grid": {"y_range": [0, 4], "z_range": [-4, 4], "ny": 9, "nz": 17}}}"#);
        run(&c).unwrap();
        let lines = std::fs::read_to_string(dir.path().join("fieldlines.csv")).unwrap();
        assert_eq!(lines.lines().count(), 1);
        let rho = std::fs::read_to_string(dir.path().join("rho.csv")).unwrap();
        for row in rho.lines().skip(1) {
            assert_eq!(row.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn rho_grid_is_pure_evaluation() {
        // a refined grid contains the coarse nodes with identical values
        let fp = FieldParameters::new(0.1).unwrap();
        let coarse = sample_grid((0.0, 4.0), (-4.0, 4.0), 5, 9, |p| energy_density(p, fp)).unwrap();
        let fine = sample_grid((0.0, 4.0), (-4.0, 4.0), 9, 17, |p| energy_density(p, fp)).unwrap();
        for (y, z, v) in coarse {
            let w = fine.iter().find(|f| (f.0 - y).abs() < 1e-12 && (f.1 - z).abs() < 1e-12).unwrap();
            assert!((w.2 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibria_above_critical_field_has_no_sigma_r() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg_in(dir.path(), r#"{"command": "equilibria", "equilibria": {"b_values": [0.0, 0.4], "n_samples": 50}}"#);
        run(&c).unwrap();
        let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
        let p = &j["panels"];
        assert_eq!(p[0]["capped"], true);
        assert!(p[0]["sigma_inf"].is_null());
        assert!(p[1]["sigma_r"].is_null());
        assert_eq!(p[1]["sigma_inf"], "sigma_inf_1.csv");
        assert!(dir.path().join("sigma_r_0.csv").exists());
        assert!(!dir.path().join("sigma_r_1.csv").exists());
    }

    #[test]
    fn missing_integrals_are_domain_errors() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg_in(dir.path(), r#"{"command": "hill", "b": 0.15}"#);
        assert_eq!(run(&c).unwrap_err().exit_code(), 2);
        let c = cfg_in(dir.path(), r#"{"command": "melnikov", "melnikov": {"r_u": [3.5]}}"#);
        assert_eq!(run(&c).unwrap_err().exit_code(), 2);
    }
}
