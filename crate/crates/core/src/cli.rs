//! Command-line interface: configuration files, run orchestration and manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{write_history_csv, CaseConfig, DriverError, Flow, InitialCondition, StokesDriver, viscous_bc};
use crate::geometry::{BoundaryTag, GeometryParams, CASE_NAMES};
use crate::imex::{validate_tableau, ArkTableau};
use crate::projection::{pressure_bc, ProjectionError};
use crate::stencil::{assemble_operator, OperatorBc, OperatorKind, VelocityBc};
use crate::verify::studies::{run_study, StudyError, StudyOptions, STUDY_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "EBSTOKES_THREADS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{key}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid { key: String, message: String, line: Option<usize> },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>, source: Option<&str>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
            line: source.and_then(|s| key_line(s, key)),
        }
    }
}

/// On-disk configuration; every field is optional and falls back to the case preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub bc: BcSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub name: Option<String>,
    pub largest_component_only: Option<bool>,
    pub params: Option<GeometryParams>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub h: Option<f64>,
    pub origin: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub flow: Option<String>,
    pub nu: Option<f64>,
    pub initial: Option<String>,
    pub project: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: Option<f64>,
    pub t0: Option<f64>,
    pub steps: Option<usize>,
    /// Run to steady state instead of a fixed step count.
    pub steady: Option<bool>,
    pub steady_tol: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    pub eb: Option<String>,
    pub xlo: Option<String>,
    pub xhi: Option<String>,
    pub ylo: Option<String>,
    pub yhi: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub fields: Option<bool>,
    pub history: Option<bool>,
}

/// Where and what a run writes.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub fields: bool,
    pub history: bool,
}

/// A fully resolved run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub case: CaseConfig,
    pub output: OutputSpec,
}

/// Values given on the command line; they take precedence over the file.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Cells in x.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fixed number of steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn bc_name(bc: VelocityBc) -> &'static str {
    match bc {
        VelocityBc::Velocity => "velocity",
        VelocityBc::NormalFlow => "normal_flow",
        VelocityBc::Open => "open",
    }
}

fn parse_bc(name: &str) -> Option<VelocityBc> {
    match name {
        "velocity" => Some(VelocityBc::Velocity),
        "normal_flow" => Some(VelocityBc::NormalFlow),
        "open" => Some(VelocityBc::Open),
        _ => None,
    }
}

fn bc_key(tag: BoundaryTag) -> &'static str {
    match tag {
        BoundaryTag::Eb => "eb",
        BoundaryTag::XLo => "xlo",
        BoundaryTag::XHi => "xhi",
        BoundaryTag::YLo => "ylo",
        BoundaryTag::YHi => "yhi",
    }
}

impl BcSection {
    fn entry(&self, tag: BoundaryTag) -> &Option<String> {
        match tag {
            BoundaryTag::Eb => &self.eb,
            BoundaryTag::XLo => &self.xlo,
            BoundaryTag::XHi => &self.xhi,
            BoundaryTag::YLo => &self.ylo,
            BoundaryTag::YHi => &self.yhi,
        }
    }

    fn entry_mut(&mut self, tag: BoundaryTag) -> &mut Option<String> {
        match tag {
            BoundaryTag::Eb => &mut self.eb,
            BoundaryTag::XLo => &mut self.xlo,
            BoundaryTag::XHi => &mut self.xhi,
            BoundaryTag::YLo => &mut self.ylo,
            BoundaryTag::YHi => &mut self.yhi,
        }
    }
}

/// Flow implied by a geometry name when `physics.flow` is absent.
pub fn default_flow(geometry: &str) -> Option<Flow> {
    match geometry {
        "taylor_green_contour" => Some(Flow::TaylorGreen),
        "annulus" => Some(Flow::Couette),
        "circle" => Some(Flow::DiffusionMms),
        "channel_circle" => Some(Flow::Channel),
        "gyroid_scaffold" => Some(Flow::Gyroid),
        _ => None,
    }
}

/// Cells in x per unit of preset resolution.
fn nx_per_n(flow: Flow) -> usize {
    match flow {
        Flow::Channel => 2,
        Flow::Gyroid => 8,
        _ => 1,
    }
}

/// 1-based line of `section.key` in TOML source, if it appears literally.
pub fn key_line(source: &str, key: &str) -> Option<usize> {
    let (section, name) = key.split_once('.')?;
    let mut current = String::new();
    for (k, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        let lhs = t.split('=').next().unwrap_or("").trim();
        if current == section && lhs == name {
            return Some(k + 1);
        }
    }
    None
}

pub fn parse_config_str(source: &str) -> Result<ConfigFile, ConfigError> {
    toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Read a configuration file and resolve it against the presets and overrides.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let source = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file = parse_config_str(&source)?;
    resolve(&file, Some(&source), overrides)
}

/// Fill a parsed file from the case preset and apply overrides. `source` is only used for line numbers.
pub fn resolve(file: &ConfigFile, source: Option<&str>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let invalid = |key: &str, msg: String| ConfigError::invalid(key, msg, source);
    if let Some(name) = &file.geometry.name {
        if !CASE_NAMES.contains(&name.as_str()) {
            return Err(invalid("geometry.name", format!("unknown geometry '{name}'; expected one of {CASE_NAMES:?}")));
        }
    }
    let flow = match (&file.physics.flow, &file.geometry.name) {
        (Some(f), _) => Flow::parse(f).ok_or_else(|| {
            let names: Vec<&str> = Flow::ALL.iter().map(|f| f.name()).collect();
            invalid("physics.flow", format!("unknown flow '{f}'; expected one of {names:?}"))
        })?,
        (None, Some(g)) => default_flow(g)
            .ok_or_else(|| invalid("physics.flow", format!("required for geometry '{g}'")))?,
        (None, None) => return Err(invalid("geometry.name", "either geometry.name or physics.flow is required".into())),
    };
    let nx = overrides
        .nx
        .or(file.grid.nx)
        .ok_or_else(|| invalid("grid.nx", "required".into()))?;
    let k = nx_per_n(flow);
    if nx % k != 0 || nx == 0 {
        return Err(invalid("grid.nx", format!("must be a positive multiple of {k} for flow '{}'", flow.name())));
    }
    let mut c = CaseConfig::preset(flow, nx / k);
    c.nu = 1.0;
    let g = &file.geometry;
    if let Some(name) = &g.name {
        c.geometry = name.clone();
    }
    if let Some(v) = g.largest_component_only {
        c.largest_component_only = v;
    }
    if let Some(p) = &g.params {
        c.geometry_params.extend(p.iter().map(|(k, v)| (k.clone(), *v)));
    }
    let gr = &file.grid;
    c.ny = gr.ny.unwrap_or(c.ny);
    c.h = gr.h.unwrap_or(c.h);
    c.origin = gr.origin.unwrap_or(c.origin);
    let ph = &file.physics;
    c.nu = ph.nu.unwrap_or(c.nu);
    if let Some(name) = &ph.initial {
        c.initial = InitialCondition::parse(name).map_err(|e| invalid("physics.initial", e.to_string()))?;
    }
    c.project = ph.project.unwrap_or(c.project);
    let t = &file.time;
    c.dt = overrides.dt.or(t.dt).unwrap_or(c.dt);
    c.t0 = t.t0.unwrap_or(c.t0);
    c.steady_tol = t.steady_tol.unwrap_or(c.steady_tol);
    c.max_steps = t.max_steps.unwrap_or(c.max_steps);
    match (overrides.steps.or(t.steps), t.steady) {
        (Some(_), Some(true)) if overrides.steps.is_none() => {
            return Err(invalid("time.steady", "conflicts with time.steps".into()));
        }
        (Some(n), _) => c.steps = Some(n),
        (None, Some(true)) => c.steps = None,
        (None, Some(false)) => {
            if c.steps.is_none() {
                return Err(invalid("time.steady", "false requires time.steps".into()));
            }
        }
        (None, None) => {}
    }
    for tag in BoundaryTag::ALL {
        if let Some(name) = file.bc.entry(tag) {
            let key = format!("bc.{}", bc_key(tag));
            let kind = parse_bc(name)
                .ok_or_else(|| invalid(&key, format!("unknown condition '{name}'; expected velocity, normal_flow or open")))?;
            c.bc = c.bc.with(tag, kind);
        }
    }
    c.validate().map_err(|e| match e {
        DriverError::Config(msg) => {
            let (key, message) = msg.split_once(": ").unwrap_or(("config", msg.as_str()));
            invalid(key, message.to_string())
        }
        other => invalid("config", other.to_string()),
    })?;
    let o = &file.output;
    let output = OutputSpec {
        dir: overrides.out.clone().or_else(|| o.dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        fields: o.fields.unwrap_or(true),
        history: o.history.unwrap_or(true),
    };
    Ok(RunConfig { case: c, output })
}

/// Fully specified file that resolves back to `cfg`.
pub fn echo(cfg: &RunConfig) -> ConfigFile {
    let c = &cfg.case;
    let mut bc = BcSection::default();
    for tag in BoundaryTag::ALL {
        *bc.entry_mut(tag) = Some(bc_name(c.bc.get(tag)).to_string());
    }
    ConfigFile {
        geometry: GeometrySection {
            name: Some(c.geometry.clone()),
            largest_component_only: Some(c.largest_component_only),
            params: Some(c.geometry_params.clone()),
        },
        grid: GridSection {
            nx: Some(c.nx),
            ny: Some(c.ny),
            h: Some(c.h),
            origin: Some(c.origin),
        },
        physics: PhysicsSection {
            flow: Some(c.flow.name().to_string()),
            nu: Some(c.nu),
            initial: Some(c.initial.name()),
            project: Some(c.project),
        },
        time: TimeSection {
            dt: Some(c.dt),
            t0: Some(c.t0),
            steps: c.steps,
            steady: c.steps.is_none().then_some(true),
            steady_tol: Some(c.steady_tol),
            max_steps: Some(c.max_steps),
        },
        bc,
        output: OutputSection {
            dir: Some(cfg.output.dir.clone()),
            fields: Some(cfg.output.fields),
            history: Some(cfg.output.history),
        },
    }
}

pub fn echo_toml(cfg: &RunConfig) -> String {
    toml::to_string(&echo(cfg)).expect("configuration serializes")
}

/// Summary written next to every run or study.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<ConfigFile>,
    pub parameters: BTreeMap<String, f64>,
    pub versions: BTreeMap<String, String>,
    pub timing_seconds: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub studies: BTreeMap<String, bool>,
    pub status: String,
    pub exit_code: i32,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("ebstokes".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("threads".into(), rayon::current_num_threads().to_string());
        RunManifest {
            command: command.into(),
            versions,
            ..Default::default()
        }
    }

    /// Write `manifest.json` into `dir` via a temporary file and rename.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

fn driver_exit(e: &DriverError) -> i32 {
    match e {
        DriverError::Projection(_) | DriverError::Imex(_) | DriverError::Solve(_) | DriverError::NonFinite(_) => {
            EXIT_NOT_CONVERGED
        }
        _ => EXIT_INVALID,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Driver(e) | CliError::Study(StudyError::Driver(e)) => driver_exit(e),
            CliError::Study(StudyError::Projection(ProjectionError::NotConverged { .. })) => EXIT_NOT_CONVERGED,
            _ => EXIT_INVALID,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ebstokes", version, about = "Fourth-order cut-cell Stokes solver")]
pub struct Cli {
    /// Only report errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// Include solver iteration traces.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one case from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a named verification study.
    Study {
        name: String,
        /// Finest resolution of the ladder.
        #[arg(long)]
        max_n: Option<usize>,
        /// Output directory; defaults to `study-<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the cut-cell moments of a configuration as CSV.
    DumpGeometry {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long, default_value = "moments.csv")]
        out: PathBuf,
    },
    /// Write an assembled operator as `matrix,row,col,value` triplets.
    DumpOperator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        nx: Option<usize>,
        /// laplacian, gradient_x, gradient_y or divergence.
        #[arg(long, default_value = "laplacian")]
        operator: String,
        #[arg(long, default_value = "operator.csv")]
        out: PathBuf,
    },
    /// Check the time integrator's order conditions.
    ValidateTableau,
}

impl Cli {
    pub fn log_level(&self) -> log::LevelFilter {
        if self.quiet {
            log::LevelFilter::Error
        } else if self.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Info
        }
    }
}

/// Apply `EBSTOKES_THREADS`; invalid values are reported and ignored.
pub fn configure_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("{THREADS_ENV}: {e}");
            }
        }
        _ => log::warn!("{THREADS_ENV}={v} is not a positive integer; ignored"),
    }
}

fn create_writer(path: &Path) -> std::io::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Execute a parsed command and return the process exit code.
pub fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, overrides } => cmd_run(config, overrides),
        Command::Study { name, max_n, out } => cmd_study(name, *max_n, out.as_deref()),
        Command::DumpGeometry { config, nx, out } => {
            let ov = Overrides { nx: *nx, ..Default::default() };
            let cfg = load_config(config, &ov)?;
            let grid = cfg.case.build_grid()?;
            let mut w = create_writer(out)?;
            grid.write_moments_csv(&mut w)?;
            w.flush()?;
            log::info!("wrote {} ({} valid cells)", out.display(), grid.num_valid());
            Ok(EXIT_OK)
        }
        Command::DumpOperator { config, nx, operator, out } => {
            let ov = Overrides { nx: *nx, ..Default::default() };
            let cfg = load_config(config, &ov)?;
            let c = &cfg.case;
            let (kind, bc) = match operator.as_str() {
                "laplacian" => (OperatorKind::Laplacian, OperatorBc::Scalar(viscous_bc(&c.bc))),
                "gradient_x" => (OperatorKind::Gradient(0), OperatorBc::Scalar(pressure_bc(&c.bc))),
                "gradient_y" => (OperatorKind::Gradient(1), OperatorBc::Scalar(pressure_bc(&c.bc))),
                "divergence" => (OperatorKind::Divergence, OperatorBc::Velocity(c.bc)),
                other => return Err(CliError::Usage(format!("unknown operator '{other}'"))),
            };
            let grid = c.build_grid()?;
            let op = assemble_operator(kind, &grid, &bc).map_err(DriverError::from)?;
            let mut w = create_writer(out)?;
            op.write_triplets_csv(&mut w)?;
            w.flush()?;
            log::info!("wrote {} ({} rows)", out.display(), op.a.nrows());
            Ok(EXIT_OK)
        }
        Command::ValidateTableau => {
            let report = validate_tableau(&ArkTableau::ark436l2sa());
            println!("{report}");
            Ok(if report.valid { EXIT_OK } else { EXIT_INVALID })
        }
    }
}

fn cmd_run(config: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let start = Instant::now();
    let cfg = load_config(config, overrides)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::new("run");
    manifest.config = Some(echo(&cfg));
    manifest.parameters = cfg.case.case_constants();
    let echo_path = dir.join("config.toml");
    write_atomic(&echo_path, echo_toml(&cfg).as_bytes())?;
    manifest.outputs.push(echo_path);

    let mut driver = StokesDriver::new(cfg.case.clone())?;
    manifest.timing_seconds.insert("setup".into(), start.elapsed().as_secs_f64());
    log::info!(
        "{}: {} valid cells, kappa_min {:.3e}",
        cfg.case.flow.name(),
        driver.grid().num_valid(),
        driver.grid().kappa_min()
    );
    let run_start = Instant::now();
    let outcome = driver.run()?;
    manifest.timing_seconds.insert("run".into(), run_start.elapsed().as_secs_f64());
    let s = &outcome.state;
    log::info!("finished at t = {:.6} after {} steps, divergence {}", s.t, s.step, s.div);
    if let Some(err) = driver.error_norms(s) {
        log::info!("error u {}", err[0]);
        log::info!("error v {}", err[1]);
    }
    if cfg.output.fields {
        let path = dir.join("fields.csv");
        let mut w = create_writer(&path)?;
        driver.write_fields_csv(&mut w, s)?;
        w.flush()?;
        manifest.outputs.push(path);
    }
    if cfg.output.history {
        let path = dir.join("history.csv");
        let mut w = create_writer(&path)?;
        write_history_csv(&mut w, &outcome.history)?;
        w.flush()?;
        manifest.outputs.push(path);
    }
    let code = if outcome.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    if !outcome.converged {
        log::error!("no steady state within {} steps", cfg.case.max_steps);
    }
    manifest.status = if code == EXIT_OK { "ok" } else { "not converged" }.into();
    manifest.exit_code = code;
    manifest.timing_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(dir)?;
    Ok(code)
}

fn cmd_study(name: &str, max_n: Option<usize>, out: Option<&Path>) -> Result<i32, CliError> {
    if !STUDY_NAMES.contains(&name) {
        return Err(CliError::Usage(format!("unknown study '{name}'; expected one of {STUDY_NAMES:?}")));
    }
    let start = Instant::now();
    let opts = StudyOptions {
        max_n,
        ..Default::default()
    };
    let report = run_study(name, &opts)?;
    println!("{report}");
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("study-{name}")));
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new("study");
    manifest.outputs = report.write_artifacts(&dir)?;
    manifest.parameters = report.facts.clone();
    manifest.studies.insert(name.into(), report.passed());
    manifest.timing_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    let code = if report.passed() { EXIT_OK } else { EXIT_THRESHOLD };
    manifest.status = if code == EXIT_OK { "pass" } else { "threshold failure" }.into();
    manifest.exit_code = code;
    manifest.write(&dir)?;
    Ok(code)
}

/// Full entry point: parse `args`, set up logging and threads, run, and map failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level())
        .format_timestamp(None)
        .try_init();
    configure_threads();
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            if log::max_level() < log::LevelFilter::Error {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
