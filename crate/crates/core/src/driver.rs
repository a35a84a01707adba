//! Unsteady Stokes time loop: implicit viscous update followed by a projection.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    case_geometry, BoundaryTag, CutCellGrid, GeometryError, GeometryParams, GridOptions, GridSpec, Point,
};
use crate::imex::{ark_step, stage_matrix, ArkTableau, ImexError, ImexProblem};
use crate::linear_solve::{LinearSolver, SolveError};
use crate::projection::{ProjectionContext, ProjectionError, PROJECTION_TOL};
use crate::stencil::{
    assemble_laplacian, AffineOperator, ScalarBc, ScalarBcSpec, StencilError, VelocityBc, VelocityBcSpec,
};
use crate::verify::NormTriple;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Imex(#[from] ImexError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid case: {0}")]
    Config(String),
    #[error("unknown initial condition '{0}'")]
    UnknownInitial(String),
    #[error("radius {r} outside [{r_in}, {r_out}]")]
    OutOfRange { r: f64, r_in: f64, r_out: f64 },
    #[error("non-finite velocity at t = {0}")]
    NonFinite(f64),
}

/// Built-in flow problems; each fixes boundary data, forcing and the exact solution if known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    TaylorGreen,
    Couette,
    Channel,
    DiffusionMms,
    Gyroid,
}

impl Flow {
    pub const ALL: [Flow; 5] = [Flow::TaylorGreen, Flow::Couette, Flow::Channel, Flow::DiffusionMms, Flow::Gyroid];

    pub fn name(self) -> &'static str {
        match self {
            Flow::TaylorGreen => "taylor_green",
            Flow::Couette => "couette",
            Flow::Channel => "channel",
            Flow::DiffusionMms => "diffusion_mms",
            Flow::Gyroid => "gyroid",
        }
    }

    pub fn parse(name: &str) -> Option<Flow> {
        Flow::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Named initial velocity fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    Constant([f64; 2]),
    TaylorGreen,
    /// The exact solution of the case at the start time.
    Exact,
}

impl InitialCondition {
    pub fn parse(name: &str) -> Result<Self, DriverError> {
        match name {
            "zero" => Ok(InitialCondition::Zero),
            "taylor_green" => Ok(InitialCondition::TaylorGreen),
            "exact" => Ok(InitialCondition::Exact),
            other => {
                let parts: Vec<&str> = other.strip_prefix("constant:").map(|s| s.split(',').collect()).unwrap_or_default();
                match parts.as_slice() {
                    [a, b] => match (a.trim().parse(), b.trim().parse()) {
                        (Ok(a), Ok(b)) => Ok(InitialCondition::Constant([a, b])),
                        _ => Err(DriverError::UnknownInitial(other.to_string())),
                    },
                    _ => Err(DriverError::UnknownInitial(other.to_string())),
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            InitialCondition::Zero => "zero".into(),
            InitialCondition::Constant([a, b]) => format!("constant:{a},{b}"),
            InitialCondition::TaylorGreen => "taylor_green".into(),
            InitialCondition::Exact => "exact".into(),
        }
    }
}

/// Everything needed to set up and run one case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseConfig {
    pub flow: Flow,
    pub geometry: String,
    pub geometry_params: GeometryParams,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
    pub largest_component_only: bool,
    pub nu: f64,
    pub dt: f64,
    pub t0: f64,
    /// Fixed step count; when `None` the run stops at steady state.
    pub steps: Option<usize>,
    pub steady_tol: f64,
    pub max_steps: usize,
    pub bc: VelocityBcSpec,
    pub initial: InitialCondition,
    pub project: bool,
}

/// Outer wall angular velocity giving a peak speed of one.
pub const COUETTE_OMEGA: f64 = 1.0 / 0.475;
pub const COUETTE_RADII: [f64; 2] = [0.25, 0.475];
pub const MMS_RADIUS: f64 = 0.3;
pub const MMS_START: f64 = 0.125;
pub const STEADY_TOL: f64 = 1e-8;
/// Level-independent step for the open-channel cases; the steady state of the split scheme depends on dt.
pub const CHANNEL_DT: f64 = 1.0 / 64.0;

impl CaseConfig {
    /// Defaults of each flow on a grid with `n` cells per unit length.
    pub fn preset(flow: Flow, n: usize) -> CaseConfig {
        let h = 1.0 / n as f64;
        let mut c = CaseConfig {
            flow,
            geometry: String::new(),
            geometry_params: GeometryParams::new(),
            nx: n,
            ny: n,
            h,
            origin: [0.0, 0.0],
            largest_component_only: false,
            nu: 1.0,
            dt: 1e-3 * 256.0 / n as f64,
            t0: 0.0,
            steps: None,
            steady_tol: STEADY_TOL,
            max_steps: 100_000,
            bc: VelocityBcSpec::uniform(VelocityBc::Velocity),
            initial: InitialCondition::Zero,
            project: true,
        };
        match flow {
            Flow::TaylorGreen => {
                c.geometry = "taylor_green_contour".into();
                c.bc = VelocityBcSpec::uniform(VelocityBc::NormalFlow);
                c.initial = InitialCondition::TaylorGreen;
                c.nu = 0.0;
                c.steps = Some(1);
            }
            Flow::Couette => {
                c.geometry = "annulus".into();
            }
            Flow::Channel => {
                c.geometry = "channel_circle".into();
                c.nx = 2 * n;
                c.dt = CHANNEL_DT;
                c.bc = VelocityBcSpec::uniform(VelocityBc::Velocity).with(BoundaryTag::XHi, VelocityBc::Open);
            }
            Flow::DiffusionMms => {
                c.geometry = "circle".into();
                c.geometry_params.insert("radius".into(), MMS_RADIUS);
                c.t0 = MMS_START;
                c.dt = 0.1 * 128.0 / n as f64;
                c.steps = Some(n);
                c.initial = InitialCondition::Exact;
                c.project = false;
            }
            Flow::Gyroid => {
                c.geometry = "gyroid_scaffold".into();
                c.nx = 8 * n;
                c.ny = 2 * n;
                c.origin = [0.0, -1.0];
                c.largest_component_only = true;
                c.dt = CHANNEL_DT;
                c.bc = VelocityBcSpec::uniform(VelocityBc::Velocity).with(BoundaryTag::XHi, VelocityBc::Open);
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |key: &str, msg: &str| Err(DriverError::Config(format!("{key}: {msg}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("time.dt", "must be positive");
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad("physics.nu", "must be non-negative");
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("grid.h", "must be positive");
        }
        if self.nx < 8 {
            return bad("grid.nx", "at least 8 cells are required");
        }
        if self.ny < 8 {
            return bad("grid.ny", "at least 8 cells are required");
        }
        if !self.t0.is_finite() {
            return bad("time.t0", "must be finite");
        }
        if self.max_steps == 0 {
            return bad("time.max_steps", "must be positive");
        }
        if !(self.steady_tol > 0.0) {
            return bad("time.steady_tol", "must be positive");
        }
        if self.steps == Some(0) {
            return bad("time.steps", "must be positive");
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.nx, self.ny, self.h, self.origin)
    }

    pub fn build_grid(&self) -> Result<CutCellGrid, DriverError> {
        let ls = case_geometry(&self.geometry, &self.geometry_params)?;
        let opts = GridOptions {
            largest_component_only: self.largest_component_only,
            ..GridOptions::default()
        };
        Ok(CutCellGrid::build(ls, self.grid_spec(), &opts)?)
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.geometry_params.get(key).copied().unwrap_or(default)
    }

    fn center(&self) -> Point {
        [self.param("cx", 0.5), self.param("cy", 0.5)]
    }

    /// Prescribed boundary velocity `a(t) g(tag, x)`.
    pub fn boundary_velocity(&self, tag: BoundaryTag, x: Point, t: f64) -> [f64; 2] {
        let a = self.boundary_factor(t);
        self.boundary_mode(tag, x).map(|g| a * g)
    }

    /// Time factor of the boundary velocity.
    pub fn boundary_factor(&self, t: f64) -> f64 {
        match self.flow {
            Flow::DiffusionMms => (2.0 * PI * t).sin(),
            _ => 1.0,
        }
    }

    /// Spatial part of the boundary velocity.
    pub fn boundary_mode(&self, tag: BoundaryTag, x: Point) -> [f64; 2] {
        match self.flow {
            Flow::TaylorGreen => [0.0, 0.0],
            Flow::Couette => {
                let c = self.center();
                let [r_in, r_out] = self.couette_radii();
                let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                if tag == BoundaryTag::Eb && dx.hypot(dy) > 0.5 * (r_in + r_out) {
                    [COUETTE_OMEGA * dy, -COUETTE_OMEGA * dx]
                } else {
                    [0.0, 0.0]
                }
            }
            Flow::Channel => match tag {
                BoundaryTag::XLo => [4.0 * x[1] * (1.0 - x[1]), 0.0],
                _ => [0.0, 0.0],
            },
            Flow::Gyroid => match tag {
                BoundaryTag::XLo => {
                    let r = self.param("pipe_radius", 0.95);
                    [(1.0 - (x[1] / r).powi(2)).max(0.0), 0.0]
                }
                _ => [0.0, 0.0],
            },
            Flow::DiffusionMms => {
                let u = self.mms_parts(x)[0];
                [u, u]
            }
        }
    }

    /// `sin g` and `Δ sin g` of the manufactured solution.
    fn mms_parts(&self, x: Point) -> [f64; 2] {
        let c = self.center();
        let r = self.param("radius", MMS_RADIUS);
        let d = [x[0] - c[0], x[1] - c[1]];
        let (sg, cg) = (r * r - d[0] * d[0] - d[1] * d[1]).sin_cos();
        [sg, d.iter().map(|di| -4.0 * di * di * sg - 2.0 * cg).sum()]
    }

    /// Number of separable terms `Σ_k a_k(t) s_k(x)` of the body force.
    pub fn source_modes(&self) -> usize {
        match self.flow {
            Flow::DiffusionMms => 2,
            _ => 0,
        }
    }

    pub fn source_factor(&self, k: usize, t: f64) -> f64 {
        match (self.flow, k) {
            (Flow::DiffusionMms, 0) => 2.0 * PI * (2.0 * PI * t).cos(),
            (Flow::DiffusionMms, 1) => -self.nu * (2.0 * PI * t).sin(),
            _ => 0.0,
        }
    }

    pub fn source_mode(&self, k: usize, x: Point) -> [f64; 2] {
        match self.flow {
            Flow::DiffusionMms => {
                let s = self.mms_parts(x)[k];
                [s, s]
            }
            _ => [0.0, 0.0],
        }
    }

    /// Pointwise body force.
    pub fn source(&self, x: Point, t: f64) -> Option<[f64; 2]> {
        (0..self.source_modes()).fold(None, |acc, k| {
            let a = self.source_factor(k, t);
            let s = self.source_mode(k, x);
            let prev = acc.unwrap_or([0.0, 0.0]);
            Some([prev[0] + a * s[0], prev[1] + a * s[1]])
        })
    }

    /// Exact velocity where known.
    pub fn exact(&self, x: Point, t: f64) -> Option<[f64; 2]> {
        match self.flow {
            Flow::TaylorGreen => Some(taylor_green(x)),
            Flow::DiffusionMms => {
                let u = mms_diffusion_fields(x, t, self.param("radius", MMS_RADIUS), self.center(), self.nu).0;
                Some([u, u])
            }
            Flow::Couette => {
                let c = self.center();
                let [r_in, r_out] = self.couette_radii();
                let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                let r = dx.hypot(dy).clamp(r_in, r_out);
                let ut = couette_analytic(r, r_in, r_out, COUETTE_OMEGA).ok()?;
                Some([ut * dy / r, -ut * dx / r])
            }
            _ => None,
        }
    }

    /// Physical constants of the case for reporting.
    pub fn case_constants(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self.flow {
            Flow::Couette => {
                let [r_in, r_out] = self.couette_radii();
                m.insert("r_in".into(), r_in);
                m.insert("r_out".into(), r_out);
                m.insert("omega".into(), COUETTE_OMEGA);
            }
            Flow::DiffusionMms => {
                m.insert("radius".into(), self.param("radius", MMS_RADIUS));
            }
            Flow::Channel | Flow::Gyroid => {
                m.insert("inflow_peak".into(), 1.0);
            }
            Flow::TaylorGreen => {}
        }
        m.insert("nu".into(), self.nu);
        m.insert("h".into(), self.h);
        m
    }

    pub fn couette_radii(&self) -> [f64; 2] {
        [self.param("r_in", COUETTE_RADII[0]), self.param("r_out", COUETTE_RADII[1])]
    }

    fn initial_value(&self, x: Point) -> [f64; 2] {
        match self.initial {
            InitialCondition::Zero => [0.0, 0.0],
            InitialCondition::Constant(c) => c,
            InitialCondition::TaylorGreen => taylor_green(x),
            InitialCondition::Exact => self.exact(x, self.t0).unwrap_or([0.0, 0.0]),
        }
    }
}

/// `(sin 2πx cos 2πy, -cos 2πx sin 2πy)`.
pub fn taylor_green(x: Point) -> [f64; 2] {
    let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
    [a.sin() * b.cos(), -a.cos() * b.sin()]
}

/// Manufactured solution `u = sin(2πt) sin(g)`, `g = R² - |x - x0|²`, and its
/// source `∂u/∂t - ν Δu`.
pub fn mms_diffusion_fields(x: Point, t: f64, r: f64, x0: Point, nu: f64) -> (f64, f64) {
    let d = [x[0] - x0[0], x[1] - x0[1]];
    let g = r * r - d[0] * d[0] - d[1] * d[1];
    let (sg, cg) = g.sin_cos();
    let (st, ct) = (2.0 * PI * t).sin_cos();
    let lap: f64 = d.iter().map(|di| -4.0 * di * di * sg - 2.0 * cg).sum();
    (st * sg, 2.0 * PI * ct * sg - nu * st * lap)
}

/// Azimuthal speed of circular Couette flow with a fixed inner wall.
pub fn couette_analytic(r: f64, r_in: f64, r_out: f64, omega_out: f64) -> Result<f64, DriverError> {
    if !(r >= r_in && r <= r_out) {
        return Err(DriverError::OutOfRange { r, r_in, r_out });
    }
    Ok(omega_out * r_out * (r / r_in - r_in / r) / (r_out / r_in - r_in / r_out))
}

/// Cell-averaged velocity at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
    pub step: usize,
    /// Divergence norms after the last step.
    pub div: NormTriple,
}

/// One row of the residual history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub t: f64,
    pub residual: f64,
    pub div: NormTriple,
}

pub fn write_history_csv<W: Write>(mut w: W, rows: &[HistoryRow]) -> std::io::Result<()> {
    writeln!(w, "step,t,residual,div_L1,div_L2,div_Linf")?;
    for r in rows {
        writeln!(w, "{},{:.10e},{:e},{:e},{:e},{:e}", r.step, r.t, r.residual, r.div.l1, r.div.l2, r.div.linf)?;
    }
    Ok(())
}

/// Viscous update of one velocity component: `du/dt = ν (A u + B g(t)) + s(t)`.
struct Viscous<'a> {
    config: &'a CaseConfig,
    lap: &'a AffineOperator,
    /// `ν B g` of the spatial boundary mode.
    boundary: &'a [Vec<f64>; 2],
    /// Cell averages of each source mode.
    sources: &'a [[Vec<f64>; 2]],
    component: usize,
}

impl ImexProblem for Viscous<'_> {
    fn dim(&self) -> usize {
        self.lap.a.nrows()
    }

    fn apply_implicit(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.lap.a.matvec(u);
        r.iter_mut().for_each(|x| *x *= self.config.nu);
        r
    }

    fn implicit_forcing(&self, t: f64) -> Option<Vec<f64>> {
        if self.lap.slots.is_empty() || self.config.nu == 0.0 {
            return None;
        }
        let a = self.config.boundary_factor(t);
        Some(self.boundary[self.component].iter().map(|g| a * g).collect())
    }

    fn explicit(&self, _u: &[f64], t: f64) -> Option<Vec<f64>> {
        if self.sources.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.dim()];
        for (k, s) in self.sources.iter().enumerate() {
            let a = self.config.source_factor(k, t);
            out.iter_mut().zip(&s[self.component]).for_each(|(o, v)| *o += a * v);
        }
        Some(out)
    }
}

/// Outcome of [`StokesDriver::run_to_steady`].
#[derive(Clone, Debug)]
pub struct SteadyOutcome {
    pub state: StokesState,
    pub history: Vec<HistoryRow>,
    pub converged: bool,
}

/// Assembled operators and factorizations of one case.
pub struct StokesDriver {
    pub config: CaseConfig,
    grid: Arc<CutCellGrid>,
    lap: AffineOperator,
    boundary_forcing: [Vec<f64>; 2],
    source_averages: Vec<[Vec<f64>; 2]>,
    stage_solver: LinearSolver,
    tableau: ArkTableau,
    projection: Option<ProjectionContext>,
}

impl std::fmt::Debug for StokesDriver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesDriver")
            .field("flow", &self.config.flow)
            .field("cells", &self.grid.num_valid())
            .finish()
    }
}

/// Scalar conditions of the viscous term: prescribed velocity is Dirichlet, outflow is Neumann.
pub fn viscous_bc(bc: &VelocityBcSpec) -> ScalarBcSpec {
    let mut s = ScalarBcSpec::uniform(ScalarBc::Dirichlet);
    for tag in BoundaryTag::ALL {
        if bc.get(tag) == VelocityBc::Open {
            s = s.with(tag, ScalarBc::Neumann);
        }
    }
    s
}

impl StokesDriver {
    pub fn new(config: CaseConfig) -> Result<Self, DriverError> {
        config.validate()?;
        let grid = Arc::new(config.build_grid()?);
        Self::with_grid(config, grid)
    }

    pub fn with_grid(config: CaseConfig, grid: Arc<CutCellGrid>) -> Result<Self, DriverError> {
        config.validate()?;
        let lap = assemble_laplacian(&grid, &viscous_bc(&config.bc))?;
        let tableau = ArkTableau::ark436l2sa();
        let l = lap.a.scaled(config.nu);
        let stage_solver = LinearSolver::new(stage_matrix(&l, config.dt, tableau.gamma), PROJECTION_TOL)?;
        let projection = if config.project {
            Some(ProjectionContext::new(grid.clone(), config.bc)?)
        } else {
            None
        };
        let boundary_forcing = [0, 1].map(|d| {
            let data = lap.boundary_data(&grid, &|tag, x, _| {
                if config.bc.get(tag) == VelocityBc::Open {
                    [0.0, 0.0]
                } else {
                    [config.boundary_mode(tag, x)[d], 0.0]
                }
            });
            lap.apply_data(&data).into_iter().map(|v| config.nu * v).collect()
        });
        let source_averages = (0..config.source_modes())
            .map(|k| [0, 1].map(|d| grid.cell_averages(|x| config.source_mode(k, x)[d])))
            .collect();
        Ok(StokesDriver {
            config,
            grid,
            lap,
            boundary_forcing,
            source_averages,
            stage_solver,
            tableau,
            projection,
        })
    }

    pub fn config(&self) -> &CaseConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<CutCellGrid> {
        &self.grid
    }

    pub fn laplacian(&self) -> &AffineOperator {
        &self.lap
    }

    pub fn projection(&self) -> Option<&ProjectionContext> {
        self.projection.as_ref()
    }

    fn boundary_at(&self, t: f64) -> impl Fn(BoundaryTag, Point, Point) -> [f64; 2] + Sync + '_ {
        move |tag, x, _| self.config.boundary_velocity(tag, x, t)
    }

    /// Cell averages of the initial condition.
    pub fn initialize(&self) -> StokesState {
        let c = &self.config;
        let u = self.grid.cell_averages(|x| c.initial_value(x)[0]);
        let v = self.grid.cell_averages(|x| c.initial_value(x)[1]);
        let div = self.divergence_norms(&u, &v, c.t0);
        StokesState { u, v, t: c.t0, step: 0, div }
    }

    /// Divergence norms, or zero when the case has no projection.
    pub fn divergence_norms(&self, u: &[f64], v: &[f64], t: f64) -> NormTriple {
        match &self.projection {
            Some(p) => p.divergence_norms(u, v, &self.boundary_at(t)),
            None => NormTriple::default(),
        }
    }

    /// Cell-average divergence with the boundary data at time `t`.
    pub fn divergence(&self, u: &[f64], v: &[f64], t: f64) -> Option<Vec<f64>> {
        let p = self.projection.as_ref()?;
        let data = p.divergence_data(&self.boundary_at(t));
        Some(p.divergence(u, v, &data))
    }

    /// ARK step of the viscous terms followed by one projection.
    pub fn advance(&mut self, state: &StokesState) -> Result<StokesState, DriverError> {
        let dt = self.config.dt;
        let t = state.t;
        let mut next = [Vec::new(), Vec::new()];
        for (d, w) in [&state.u, &state.v].into_iter().enumerate() {
            let problem = Viscous {
                config: &self.config,
                lap: &self.lap,
                boundary: &self.boundary_forcing,
                sources: &self.source_averages,
                component: d,
            };
            next[d] = ark_step(&self.tableau, &problem, w, t, dt, &mut self.stage_solver)?;
        }
        let [mut u, mut v] = next;
        let t_new = self.config.t0 + (state.step + 1) as f64 * dt;
        let mut div = NormTriple::default();
        if let Some(p) = self.projection.as_mut() {
            let config = &self.config;
            let boundary = move |tag, x, _| config.boundary_velocity(tag, x, t_new);
            let r = p.project(&u, &v, &boundary)?;
            u = r.u;
            v = r.v;
            div = r.div_after;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(DriverError::NonFinite(t_new));
        }
        Ok(StokesState {
            u,
            v,
            t: t_new,
            step: state.step + 1,
            div,
        })
    }

    /// Advance a fixed number of steps.
    pub fn run_steps(&mut self, state: StokesState, steps: usize) -> Result<(StokesState, Vec<HistoryRow>), DriverError> {
        let mut s = state;
        let mut history = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.advance(&s)?;
            history.push(self.history_row(&s, &next));
            s = next;
        }
        Ok((s, history))
    }

    fn history_row(&self, prev: &StokesState, next: &StokesState) -> HistoryRow {
        let change = prev
            .u
            .iter()
            .zip(&next.u)
            .chain(prev.v.iter().zip(&next.v))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        HistoryRow {
            step: next.step,
            t: next.t,
            residual: change / self.config.dt,
            div: next.div,
        }
    }

    /// Advance until `max |u^{n+1} - u^n| / dt` drops below the steady tolerance.
    pub fn run_to_steady(&mut self, state: StokesState) -> Result<SteadyOutcome, DriverError> {
        let mut s = state;
        let mut history = Vec::new();
        while history.len() < self.config.max_steps {
            let next = self.advance(&s)?;
            let row = self.history_row(&s, &next);
            if history.len() % 100 == 0 {
                log::debug!("step {} t={:.4} residual {:.3e} div {}", row.step, row.t, row.residual, row.div);
            }
            history.push(row);
            s = next;
            if row.residual < self.config.steady_tol {
                return Ok(SteadyOutcome {
                    state: s,
                    history,
                    converged: true,
                });
            }
        }
        Ok(SteadyOutcome {
            state: s,
            history,
            converged: false,
        })
    }

    /// Fixed step count when configured, otherwise run to steady state.
    pub fn run(&mut self) -> Result<SteadyOutcome, DriverError> {
        let init = self.initialize();
        match self.config.steps {
            Some(n) => {
                let (state, history) = self.run_steps(init, n)?;
                Ok(SteadyOutcome {
                    state,
                    history,
                    converged: true,
                })
            }
            None => self.run_to_steady(init),
        }
    }

    /// Error norms of each component against the exact cell averages at the state time.
    pub fn error_norms(&self, state: &StokesState) -> Option<[NormTriple; 2]> {
        let c = &self.config;
        c.exact([0.5, 0.5], state.t)?;
        let ex = [0, 1].map(|d| self.grid.cell_averages(|x| c.exact(x, state.t).map_or(0.0, |e| e[d])));
        Some([
            NormTriple::of(&diff(&state.u, &ex[0])),
            NormTriple::of(&diff(&state.v, &ex[1])),
        ])
    }

    /// Field snapshot with columns `i,j,x_c,y_c,kappa,u,v,div`.
    pub fn write_fields_csv<W: Write>(&self, mut w: W, state: &StokesState) -> std::io::Result<()> {
        let div = self
            .divergence(&state.u, &state.v, state.t)
            .unwrap_or_else(|| vec![0.0; state.u.len()]);
        writeln!(w, "i,j,x_c,y_c,kappa,u,v,div")?;
        for (k, c) in self.grid.cells().iter().enumerate() {
            let x = self.grid.cell_center(k);
            writeln!(
                w,
                "{},{},{:.10e},{:.10e},{:.10e},{:.16e},{:.16e},{:.6e}",
                c.ij[0], c.ij[1], x[0], x[1], c.kappa, state.u[k], state.v[k], div[k]
            )?;
        }
        Ok(())
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Outward volumetric flux through the pieces of each boundary tag. The flux
/// through a single open tag is what the discrete divergence leaves over.
pub fn boundary_fluxes(driver: &StokesDriver, state: &StokesState) -> Option<[(BoundaryTag, f64); 5]> {
    let div = driver.divergence(&state.u, &state.v, state.t)?;
    let grid = driver.grid();
    let c = &driver.config;
    let mut out = BoundaryTag::ALL.map(|t| (t, 0.0));
    let mut prescribed_total = 0.0;
    for piece in grid.pieces() {
        let slot = out.iter_mut().find(|(t, _)| *t == piece.tag).expect("every tag listed");
        if c.bc.get(piece.tag) == VelocityBc::Open {
            continue;
        }
        let flux = piece.area
            * piece.average(|x, n| {
                let w = c.boundary_velocity(piece.tag, x, state.t);
                w[0] * n[0] + w[1] * n[1]
            });
        slot.1 += flux;
        prescribed_total += flux;
    }
    // the divergence telescopes, so what remains of its integral left through open boundaries
    let net: f64 = div.iter().zip(grid.cells()).map(|(d, c)| d * c.volume).sum();
    let open: Vec<BoundaryTag> = BoundaryTag::ALL
        .into_iter()
        .filter(|&t| c.bc.get(t) == VelocityBc::Open && grid.pieces().iter().any(|p| p.tag == t))
        .collect();
    if let [tag] = open.as_slice() {
        out.iter_mut().find(|(t, _)| t == tag).expect("listed").1 = net - prescribed_total;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn couette_profile_endpoints() {
        let [r_in, r_out] = COUETTE_RADII;
        assert_eq!(couette_analytic(r_in, r_in, r_out, COUETTE_OMEGA).unwrap(), 0.0);
        assert!((couette_analytic(r_out, r_in, r_out, COUETTE_OMEGA).unwrap() - 1.0).abs() < 1e-15);
        // ω r_o (r/r_i - r_i/r) / (r_o/r_i - r_i/r_o) at r = 0.3625
        let want = (0.3625 / 0.25 - 0.25 / 0.3625) / (0.475 / 0.25 - 0.25 / 0.475);
        assert!((couette_analytic(0.3625, r_in, r_out, COUETTE_OMEGA).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.5535077288941737).abs() < 1e-15);
        assert!(couette_analytic(0.2, r_in, r_out, COUETTE_OMEGA).is_err());
    }

    #[test]
    fn mms_fields_at_special_points() {
        let x0 = [0.5, 0.5];
        let (u, s) = mms_diffusion_fields([0.3, 0.6], 0.0, 0.3, x0, 1.0);
        let g: f64 = 0.09 - 0.04 - 0.01;
        assert_eq!(u, 0.0);
        assert!((s - 2.0 * PI * g.sin()).abs() < 1e-15);
        let t = 0.3;
        let (u, s) = mms_diffusion_fields(x0, t, 0.3, x0, 1.0);
        let st = (2.0 * PI * t).sin();
        assert!((u - st * 0.09f64.sin()).abs() < 1e-15);
        let want = 2.0 * PI * (2.0 * PI * t).cos() * 0.09f64.sin() + 4.0 * st * 0.09f64.cos();
        assert!((s - want).abs() < 1e-14);
    }

    #[test]
    fn separable_terms_match_the_manufactured_fields() {
        let mut c = CaseConfig::preset(Flow::DiffusionMms, 16);
        c.nu = 0.6;
        for (x, t) in [([0.41, 0.62], 0.125), ([0.7, 0.5], 0.9), ([0.3, 0.35], 3.3)] {
            let (u, s) = mms_diffusion_fields(x, t, MMS_RADIUS, [0.5, 0.5], c.nu);
            let b = c.boundary_velocity(BoundaryTag::Eb, x, t);
            let src = c.source(x, t).unwrap();
            assert!((b[0] - u).abs() < 1e-15 && (b[1] - u).abs() < 1e-15);
            assert!((src[0] - s).abs() < 1e-13 && (src[1] - s).abs() < 1e-13);
        }
        assert!(CaseConfig::preset(Flow::Couette, 16).source([0.5, 0.5], 0.0).is_none());
    }

    #[test]
    fn mms_source_matches_finite_differences() {
        let x0 = [0.5, 0.5];
        let nu = 0.7;
        let e = 1e-4;
        for (k, p) in [[0.41, 0.62], [0.7, 0.5], [0.33, 0.29]].into_iter().enumerate() {
            let t = 0.125 + 0.37 * k as f64;
            let u = |x: Point, t: f64| mms_diffusion_fields(x, t, 0.3, x0, nu).0;
            let dt = (u(p, t + e) - u(p, t - e)) / (2.0 * e);
            let lap = (u([p[0] + e, p[1]], t) + u([p[0] - e, p[1]], t) + u([p[0], p[1] + e], t) + u([p[0], p[1] - e], t)
                - 4.0 * u(p, t))
                / (e * e);
            let s = mms_diffusion_fields(p, t, 0.3, x0, nu).1;
            assert!((s - (dt - nu * lap)).abs() < 1e-5, "{s} vs {}", dt - nu * lap);
        }
    }

    #[test]
    fn initial_conditions() {
        let mut c = CaseConfig::preset(Flow::Couette, 32);
        c.initial = InitialCondition::Constant([1.5, -2.0]);
        let d = StokesDriver::new(c).unwrap();
        let s = d.initialize();
        assert!(s.u.iter().all(|x| (x - 1.5).abs() < 1e-13));
        assert!(s.v.iter().all(|x| (x + 2.0).abs() < 1e-13));
        assert_eq!(InitialCondition::parse("constant:1.5,-2").unwrap(), InitialCondition::Constant([1.5, -2.0]));
        assert!(InitialCondition::parse("vortex").is_err());
    }

    #[test]
    fn taylor_green_average_on_regular_cell() {
        let c = CaseConfig::preset(Flow::TaylorGreen, 32);
        let d = StokesDriver::new(c).unwrap();
        let s = d.initialize();
        let g = d.grid();
        let (k, cell) = g
            .cells()
            .iter()
            .enumerate()
            .find(|(_, c)| c.kind == crate::geometry::CellKind::Regular)
            .unwrap();
        let h = g.h();
        let lo = g.spec.cell_lo(cell.ij[0], cell.ij[1]);
        let w = 2.0 * PI;
        // ∫∫ sin(wx) cos(wy) / h²
        let ix = ((w * lo[0]).cos() - (w * (lo[0] + h)).cos()) / w;
        let iy = ((w * (lo[1] + h)).sin() - (w * lo[1]).sin()) / w;
        assert!((s.u[k] - ix * iy / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn inviscid_divergence_free_state_is_kept() {
        let mut c = CaseConfig::preset(Flow::TaylorGreen, 32);
        c.initial = InitialCondition::Zero;
        let mut d = StokesDriver::new(c).unwrap();
        let s0 = d.initialize();
        let s1 = d.advance(&s0).unwrap();
        assert!(s1.u.iter().chain(&s1.v).all(|x| x.abs() < 1e-14));
        assert!((s1.t - 1e-3 * 8.0).abs() < 1e-15);
    }

    #[test]
    fn zero_data_is_steady_immediately() {
        let mut c = CaseConfig::preset(Flow::TaylorGreen, 32);
        c.initial = InitialCondition::Zero;
        c.nu = 1.0;
        c.steps = None;
        let mut d = StokesDriver::new(c).unwrap();
        let out = d.run_to_steady(d.initialize()).unwrap();
        assert!(out.converged);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn invalid_config_names_the_key() {
        let mut c = CaseConfig::preset(Flow::Couette, 32);
        c.dt = 0.0;
        let e = StokesDriver::new(c).unwrap_err().to_string();
        assert!(e.contains("time.dt"), "{e}");
    }
}
