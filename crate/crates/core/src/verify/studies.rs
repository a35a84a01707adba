//! Convergence and stability studies over grid ladders.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::{restricted_difference, ConvergenceTable, NormTriple, VerifyError};
use crate::driver::{CaseConfig, DriverError, Flow, StokesDriver, StokesState, COUETTE_OMEGA};
use crate::geometry::{BoundaryTag, CutCellGrid, Point};
use crate::projection::{write_norm_history, ProjectionContext, ProjectionError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown study '{0}'")]
    Unknown(String),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub const STUDY_NAMES: [&str; 5] = [
    "tg_projection_convergence",
    "tg_projection_stability",
    "diffusion_mms",
    "couette_richardson",
    "channel_richardson",
];

/// Reference norms `(N, L1, L2, Linf)` of the diffusion study.
pub const MMS_REFERENCE: [(usize, [f64; 3]); 4] = [
    (16, [3.676e-7, 5.323e-7, 1.271e-6]),
    (32, [1.421e-8, 2.111e-8, 6.810e-8]),
    (64, [6.449e-10, 9.529e-10, 3.186e-9]),
    (128, [3.688e-11, 5.467e-11, 2.195e-10]),
];

/// Time stepping of the diffusion study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum MmsSchedule {
    /// `dt = 0.1` at `N = 128`, doubled per coarsening, `N` steps per level.
    Scaled,
    /// The same `dt` and step count on every level.
    Fixed { dt: f64, steps: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOptions {
    /// Finest resolution; `None` uses the study default.
    pub max_n: Option<usize>,
    pub mms_schedule: MmsSchedule,
    pub projections: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            max_n: None,
            mms_schedule: MmsSchedule::Scaled,
            projections: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Comparison {
    AtLeast,
    AtMost,
}

/// One thresholded quantity of a study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            comparison: Comparison::AtLeast,
            passed: value >= threshold,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            comparison: Comparison::AtMost,
            passed: value <= threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.comparison {
            Comparison::AtLeast => ">=",
            Comparison::AtMost => "<=",
        };
        write!(
            f,
            "{} {}: {:.4e} {op} {:.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Per-level record of the JSONL summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub study: String,
    pub level: usize,
    pub field: String,
    pub norms: NormTriple,
    pub rates: Option<[f64; 3]>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StudyReport {
    pub name: String,
    /// Convergence tables by field name.
    pub tables: Vec<(String, ConvergenceTable)>,
    pub checks: Vec<Check>,
    /// Scalar facts about the run (κ_min, fluxes, step counts).
    pub facts: BTreeMap<String, f64>,
    /// Repeated-projection norms `(k, divergence, correction)`.
    pub history: Vec<(usize, NormTriple, NormTriple)>,
    pub wall_times: Vec<(usize, f64)>,
    pub notes: Vec<String>,
}

impl StudyReport {
    fn new(name: &str) -> Self {
        StudyReport {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, field: &str) -> Option<&ConvergenceTable> {
        self.tables.iter().find(|(f, _)| f == field).map(|(_, t)| t)
    }

    fn wall_time(&self, n: usize) -> f64 {
        self.wall_times.iter().find(|(k, _)| *k == n).map_or(0.0, |(_, t)| *t)
    }

    pub fn level_summaries(&self) -> Vec<LevelSummary> {
        let mut out = Vec::new();
        for (field, table) in &self.tables {
            for row in &table.rows {
                out.push(LevelSummary {
                    study: self.name.clone(),
                    level: row.n,
                    field: field.clone(),
                    norms: row.norms,
                    rates: row.rates,
                    wall_time: self.wall_time(row.n),
                });
            }
        }
        out
    }

    /// Write `<name>_<field>.csv`, `<name>.jsonl` and the projection history if any.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>, StudyError> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (field, table) in &self.tables {
            let path = dir.join(format!("{}_{field}.csv", self.name));
            table.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            files.push(path);
        }
        let path = dir.join(format!("{}.jsonl", self.name));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for s in self.level_summaries() {
            writeln!(w, "{}", serde_json::to_string(&s).expect("summary serializes"))?;
        }
        writeln!(
            w,
            "{}",
            serde_json::json!({"study": self.name, "checks": self.checks, "facts": self.facts, "notes": self.notes})
        )?;
        w.flush()?;
        files.push(path);
        if !self.history.is_empty() {
            let path = dir.join(format!("{}_divergence.csv", self.name));
            let rows: Vec<(usize, NormTriple)> = self.history.iter().map(|(k, d, _)| (*k, *d)).collect();
            write_norm_history(std::io::BufWriter::new(std::fs::File::create(&path)?), &rows)?;
            files.push(path);
            let path = dir.join(format!("{}_correction.csv", self.name));
            let rows: Vec<(usize, NormTriple)> = self.history.iter().skip(1).map(|(k, _, c)| (*k, *c)).collect();
            write_norm_history(std::io::BufWriter::new(std::fs::File::create(&path)?), &rows)?;
            files.push(path);
        }
        Ok(files)
    }
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "study {}", self.name)?;
        for (field, table) in &self.tables {
            writeln!(f, "[{field}]")?;
            write!(f, "{table}")?;
        }
        for (k, v) in &self.facts {
            writeln!(f, "{k} = {v:.6e}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Dyadic ladder of `levels` resolutions ending at `finest`.
pub fn ladder(finest: usize, levels: usize) -> Vec<usize> {
    (0..levels).rev().map(|k| finest >> k).collect()
}

/// Run a named study.
pub fn run_study(name: &str, opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    match name {
        "tg_projection_convergence" => tg_projection_convergence(opts),
        "tg_projection_stability" => tg_projection_stability(opts),
        "diffusion_mms" => diffusion_mms(opts),
        "couette_richardson" => couette_richardson(opts),
        "channel_richardson" => channel_richardson(opts),
        other => Err(StudyError::Unknown(other.to_string())),
    }
}

fn tg_context(n: usize) -> Result<(ProjectionContext, CaseConfig), StudyError> {
    let config = CaseConfig::preset(Flow::TaylorGreen, n);
    let grid = Arc::new(config.build_grid()?);
    let ctx = ProjectionContext::new(grid, config.bc)?;
    Ok((ctx, config))
}

const NO_FLOW: &crate::stencil::BoundaryFn = &|_, _, _| [0.0, 0.0];

fn rate_checks(report: &mut StudyReport, field: &str, pairs: usize, mins: [f64; 3]) {
    let Some(table) = report.table(field).cloned() else { return };
    let rated: Vec<_> = table.rows.iter().filter(|r| r.rates.is_some()).collect();
    let names = ["L1", "L2", "Linf"];
    for row in rated.iter().rev().take(pairs).rev() {
        let rates = row.rates.expect("filtered");
        for k in 0..3 {
            if mins[k] > 0.0 {
                report
                    .checks
                    .push(Check::at_least(format!("{field} {} rate at N={}", names[k], row.n), rates[k], mins[k]));
            }
        }
    }
    if rated.is_empty() {
        report.checks.push(Check::at_least(format!("{field} rate levels"), 0.0, 1.0));
    }
}

/// Divergence after one projection of the Taylor-Green field.
fn tg_projection_convergence(opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new("tg_projection_convergence");
    let mut table = ConvergenceTable::new(2.0);
    for n in ladder(opts.max_n.unwrap_or(256), 4) {
        let start = Instant::now();
        let (mut ctx, config) = tg_context(n)?;
        let d = StokesDriver::with_grid(config, ctx.grid().clone())?;
        let s = d.initialize();
        let r = ctx.project(&s.u, &s.v, NO_FLOW)?;
        log::info!("N={n}: divergence before {} after {}", r.div_before, r.div_after);
        table.push(n, r.div_after);
        report.facts.insert(format!("kappa_min N={n}"), ctx.grid().kappa_min());
        report.wall_times.push((n, start.elapsed().as_secs_f64()));
    }
    report.tables.push(("divergence".into(), table));
    rate_checks(&mut report, "divergence", 2, [3.8, 3.8, 3.5]);
    Ok(report)
}

/// Repeated projections of the Taylor-Green field.
fn tg_projection_stability(opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new("tg_projection_stability");
    let n = opts.max_n.unwrap_or(128);
    let start = Instant::now();
    let (mut ctx, config) = tg_context(n)?;
    let d = StokesDriver::with_grid(config, ctx.grid().clone())?;
    let s = d.initialize();
    let (mut u, mut v) = (s.u, s.v);
    report.history.push((0, ctx.divergence_norms(&u, &v, NO_FLOW), NormTriple::default()));
    for k in 1..=opts.projections {
        let r = ctx.project(&u, &v, NO_FLOW)?;
        report.history.push((k, r.div_after, r.correction));
        u = r.u;
        v = r.v;
    }
    report.wall_times.push((n, start.elapsed().as_secs_f64()));
    let mut div_growth = f64::NEG_INFINITY;
    let mut corr_growth = f64::NEG_INFINITY;
    for w in report.history.windows(2) {
        let (a, b) = (w[0].1.as_array(), w[1].1.as_array());
        for k in 0..3 {
            div_growth = div_growth.max(b[k] - a[k]);
        }
        if w[0].0 >= 1 {
            let (a, b) = (w[0].2.as_array(), w[1].2.as_array());
            for k in 0..3 {
                corr_growth = corr_growth.max(b[k] - a[k]);
            }
        }
    }
    report.facts.insert("projections".into(), opts.projections as f64);
    let last = report.history.last().expect("at least the initial row");
    report.facts.insert("final divergence L2".into(), last.1.l2);
    report.facts.insert("final correction L2".into(), last.2.l2);
    report.checks.push(Check::at_most("largest divergence norm increase", div_growth, 1e-14));
    report.checks.push(Check::at_most("largest correction norm increase", corr_growth, 1e-14));
    Ok(report)
}

/// Manufactured diffusion inside the circle without projection.
fn diffusion_mms(opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new("diffusion_mms");
    let mut tables = [ConvergenceTable::new(2.0), ConvergenceTable::new(2.0)];
    let mut worst_ratio: f64 = 0.0;
    for n in ladder(opts.max_n.unwrap_or(128), 4) {
        let start = Instant::now();
        let mut config = CaseConfig::preset(Flow::DiffusionMms, n);
        if let MmsSchedule::Fixed { dt, steps } = opts.mms_schedule {
            config.dt = dt;
            config.steps = Some(steps);
        }
        let mut d = StokesDriver::new(config)?;
        let out = d.run()?;
        let e = d.error_norms(&out.state).expect("exact solution known");
        report.facts.insert(format!("t_end N={n}"), out.state.t);
        if let Some((_, reference)) = MMS_REFERENCE.iter().find(|(m, _)| *m == n) {
            for (got, want) in e[0].as_array().iter().zip(reference) {
                worst_ratio = worst_ratio.max((got / want).max(want / got));
            }
        }
        for (t, ei) in tables.iter_mut().zip(e) {
            t.push(n, ei);
        }
        report.wall_times.push((n, start.elapsed().as_secs_f64()));
    }
    let [tu, tv] = tables;
    report.tables.push(("u".into(), tu));
    report.tables.push(("v".into(), tv));
    rate_checks(&mut report, "u", 3, [4.0, 4.0, 3.6]);
    report
        .checks
        .push(Check::at_most("largest error ratio to the reference table", worst_ratio, 5.0));
    Ok(report)
}

/// Restricted differences of consecutive levels for both components.
fn richardson_tables(
    levels: &[(usize, Arc<CutCellGrid>, StokesState)],
    report: &mut StudyReport,
) -> Result<(), StudyError> {
    let mut tables = [ConvergenceTable::new(2.0), ConvergenceTable::new(2.0)];
    for w in levels.windows(2) {
        let (_, gc, sc) = &w[0];
        let (nf, gf, sf) = &w[1];
        for (d, table) in tables.iter_mut().enumerate() {
            let (uc, uf) = if d == 0 { (&sc.u, &sf.u) } else { (&sc.v, &sf.v) };
            let (diff, excluded) = restricted_difference(gc, uc, gf, uf)?;
            table.push(*nf, NormTriple::of(&diff));
            if d == 0 {
                report.facts.insert(format!("excluded coarse cells N={nf}"), excluded as f64);
            }
        }
    }
    let [tu, tv] = tables;
    report.tables.push(("u".into(), tu));
    report.tables.push(("v".into(), tv));
    Ok(())
}

fn steady_levels(
    flow: Flow,
    ns: &[usize],
    report: &mut StudyReport,
) -> Result<Vec<(usize, StokesDriver, StokesState, bool)>, StudyError> {
    let mut out = Vec::new();
    for &n in ns {
        let start = Instant::now();
        let mut d = StokesDriver::new(CaseConfig::preset(flow, n))?;
        let o = d.run()?;
        log::info!("{} N={n}: {} steps, converged {}", flow.name(), o.history.len(), o.converged);
        report.facts.insert(format!("steps N={n}"), o.history.len() as f64);
        report.facts.insert(format!("kappa_min N={n}"), d.grid().kappa_min());
        report.facts.insert(format!("divergence L2 N={n}"), o.state.div.l2);
        report.wall_times.push((n, start.elapsed().as_secs_f64()));
        out.push((n, d, o.state, o.converged));
    }
    Ok(out)
}

/// Polar probe points at fractions of the gap.
pub fn couette_probes(center: Point, r_in: f64, r_out: f64, angle: f64) -> Vec<Point> {
    (1..8)
        .map(|k| {
            let r = r_in + (r_out - r_in) * k as f64 / 8.0;
            [center[0] + r * angle.cos(), center[1] + r * angle.sin()]
        })
        .collect()
}

/// Valid cell containing `x`.
pub fn cell_containing(grid: &CutCellGrid, x: Point) -> Option<usize> {
    let s = &grid.spec;
    let i = ((x[0] - s.origin[0]) / s.h).floor() as isize;
    let j = ((x[1] - s.origin[1]) / s.h).floor() as isize;
    grid.cell_at(i, j)
}

fn couette_richardson(opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new("couette_richardson");
    let ns = ladder(opts.max_n.unwrap_or(128), 3);
    let levels = steady_levels(Flow::Couette, &ns, &mut report)?;
    let all_converged = levels.iter().all(|l| l.3);
    let plain: Vec<_> = levels.iter().map(|(n, d, s, _)| (*n, d.grid().clone(), s.clone())).collect();
    richardson_tables(&plain, &mut report)?;
    rate_checks(&mut report, "u", 1, [3.8, 3.8, 0.0]);
    rate_checks(&mut report, "v", 1, [3.8, 3.8, 0.0]);

    let mut asym: f64 = 0.0;
    let mut exact_tables = [ConvergenceTable::new(2.0), ConvergenceTable::new(2.0)];
    for (n, d, s, _) in &levels {
        let e = d.error_norms(s).expect("exact solution known");
        for k in 0..3 {
            asym = asym.max((e[0].as_array()[k] - e[1].as_array()[k]).abs());
        }
        exact_tables[0].push(*n, e[0]);
        exact_tables[1].push(*n, e[1]);
    }
    let [eu, ev] = exact_tables;
    report.tables.push(("u_exact_error".into(), eu));
    report.tables.push(("v_exact_error".into(), ev));

    let (n, d, s, _) = levels.last().expect("three levels");
    let grid = d.grid();
    let h = grid.h();
    let c = &d.config;
    let [r_in, r_out] = c.couette_radii();
    let mut probe_err: f64 = 0.0;
    for x in couette_probes([0.5, 0.5], r_in, r_out, 0.3) {
        if let Some(k) = cell_containing(grid, x) {
            let ex = [0, 1].map(|dd| grid.cell_average(k, |p| c.exact(p, s.t).map_or(0.0, |e| e[dd])));
            probe_err = probe_err.max((s.u[k] - ex[0]).abs()).max((s.v[k] - ex[1]).abs());
        }
    }
    let peak = grid
        .pieces()
        .iter()
        .filter(|p| p.tag == BoundaryTag::Eb)
        .map(|p| p.average(|x, _| c.boundary_velocity(p.tag, x, 0.0)[0].hypot(c.boundary_velocity(p.tag, x, 0.0)[1])))
        .fold(0.0, f64::max);
    report.facts.insert("outer wall speed".into(), peak);
    report.facts.insert("omega".into(), COUETTE_OMEGA);
    report.checks.push(Check::at_most(format!("probe error at N={n}"), probe_err, 10.0 * h.powi(4)));
    report.checks.push(Check::at_most("u/v error norm asymmetry", asym, 1e-12));
    report.checks.push(Check::at_most(format!("kappa_min at N={n}"), grid.kappa_min(), 1e-3));
    report
        .checks
        .push(Check::at_least("levels reaching steady state", all_converged as u8 as f64, 1.0));
    Ok(report)
}

/// Inflow and outflow volumetric fluxes of a channel state.
pub fn channel_fluxes(d: &StokesDriver, s: &StokesState) -> Option<(f64, f64)> {
    let f = crate::driver::boundary_fluxes(d, s)?;
    let get = |t: BoundaryTag| f.iter().find(|(k, _)| *k == t).map_or(0.0, |(_, v)| *v);
    Some((-get(BoundaryTag::XLo), get(BoundaryTag::XHi)))
}

fn channel_richardson(opts: &StudyOptions) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new("channel_richardson");
    let finest = opts.max_n.unwrap_or(128);
    let ns = ladder(finest, 3);
    let levels = steady_levels(Flow::Channel, &ns, &mut report)?;
    let plain: Vec<_> = levels.iter().map(|(n, d, s, _)| (*n, d.grid().clone(), s.clone())).collect();
    richardson_tables(&plain, &mut report)?;
    rate_checks(&mut report, "u", 1, [3.5, 3.5, 0.0]);
    rate_checks(&mut report, "v", 1, [3.5, 3.5, 0.0]);
    let (n, d, s, converged) = &levels[1];
    let (inflow, outflow) = channel_fluxes(d, s).expect("channel has a projection");
    report.facts.insert(format!("inflow N={n}"), inflow);
    report.facts.insert(format!("outflow N={n}"), outflow);
    report
        .checks
        .push(Check::at_least(format!("steady state at N={n}"), *converged as u8 as f64, 1.0));
    report.checks.push(Check::at_most(
        format!("flux imbalance at N={n}"),
        (inflow - outflow).abs() / inflow.abs(),
        1e-6,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladders_are_dyadic() {
        assert_eq!(ladder(256, 4), vec![32, 64, 128, 256]);
        assert_eq!(ladder(128, 3), vec![32, 64, 128]);
    }

    #[test]
    fn unknown_study_is_rejected() {
        assert!(matches!(run_study("nope", &StudyOptions::default()), Err(StudyError::Unknown(_))));
    }

    #[test]
    fn check_display_and_direction() {
        let c = Check::at_least("rate", 4.1, 4.0);
        assert!(c.passed && c.to_string().starts_with("PASS rate"));
        assert!(!Check::at_most("growth", 1e-13, 1e-14).passed);
    }

    #[test]
    fn small_stability_study_is_monotone() {
        let opts = StudyOptions {
            max_n: Some(32),
            projections: 5,
            ..Default::default()
        };
        let r = run_study("tg_projection_stability", &opts).unwrap();
        assert_eq!(r.history.len(), 6);
        assert!(r.passed(), "{r}");
        let dir = tempfile::tempdir().unwrap();
        let files = r.write_artifacts(dir.path()).unwrap();
        assert!(files.iter().all(|f| std::fs::metadata(f).unwrap().len() > 0));
    }
}
