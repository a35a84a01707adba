//! Approximate Hodge projection of cell-averaged velocity.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::CutCellGrid;
use crate::linear_solve::{LinearSolver, NeumannSolver, SolveError, SolveReport};
use crate::stencil::{
    assemble_divergence, assemble_gradient, assemble_laplacian, AffineOperator, BoundaryFn, ScalarBc, ScalarBcSpec,
    StencilError, VelocityBc, VelocityBcSpec,
};
use crate::verify::NormTriple;

/// Relative tolerance of the Poisson solves.
pub const PROJECTION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{what} solve failed: {report}")]
    NotConverged { what: &'static str, report: SolveReport },
}

enum PhiSolver {
    Singular(NeumannSolver),
    Regular(LinearSolver),
}

struct Potential {
    lap: AffineOperator,
    grad: [AffineOperator; 2],
    solver: LinearSolver,
}

/// Operators and factorizations of the projection, built once per grid.
pub struct ProjectionContext {
    grid: Arc<CutCellGrid>,
    pub div: AffineOperator,
    pub lap_phi: AffineOperator,
    pub grad_phi: [AffineOperator; 2],
    phi_solver: PhiSolver,
    potential: Option<Potential>,
}

impl std::fmt::Debug for ProjectionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectionContext")
            .field("cells", &self.grid.num_valid())
            .field("has_outflow", &self.has_outflow())
            .finish()
    }
}

/// Output of one projection.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub phi: Vec<f64>,
    /// Potential-flow part; `None` for closed domains.
    pub psi: Option<Vec<f64>>,
    pub div_before: NormTriple,
    pub div_after: NormTriple,
    /// Norms of `|Gφ|`.
    pub correction: NormTriple,
    pub report: SolveReport,
}

/// Conditions on the correction potential: Neumann except Dirichlet on open boundaries.
pub fn pressure_bc(bc: &VelocityBcSpec) -> ScalarBcSpec {
    let mut scalar = ScalarBcSpec::uniform(ScalarBc::Neumann);
    for tag in crate::geometry::BoundaryTag::ALL {
        if bc.get(tag) == VelocityBc::Open {
            scalar = scalar.with(tag, ScalarBc::Dirichlet);
        }
    }
    scalar
}

impl ProjectionContext {
    pub fn new(grid: Arc<CutCellGrid>, bc: VelocityBcSpec) -> Result<Self, ProjectionError> {
        let has_outflow = grid.pieces().iter().any(|p| bc.get(p.tag) == VelocityBc::Open);
        let scalar = pressure_bc(&bc);
        // only the normal component is projected; tangential data would be violated by Gφ
        let mut div_bc = bc;
        for tag in crate::geometry::BoundaryTag::ALL {
            if bc.get(tag) == VelocityBc::Velocity {
                div_bc = div_bc.with(tag, VelocityBc::NormalFlow);
            }
        }
        let div = assemble_divergence(&grid, &div_bc)?;
        let lap_phi = assemble_laplacian(&grid, &scalar)?;
        let grad_phi = [assemble_gradient(&grid, &scalar, 0)?, assemble_gradient(&grid, &scalar, 1)?];
        let phi_solver = if has_outflow {
            PhiSolver::Regular(LinearSolver::new(lap_phi.a.clone(), PROJECTION_TOL)?)
        } else {
            PhiSolver::Singular(NeumannSolver::new(&lap_phi.a, grid.volumes(), PROJECTION_TOL)?)
        };
        // ψ shares the boundary types of φ, only its data differs
        let potential = if has_outflow {
            Some(Potential {
                lap: lap_phi.clone(),
                grad: grad_phi.clone(),
                solver: LinearSolver::new(lap_phi.a.clone(), PROJECTION_TOL)?,
            })
        } else {
            None
        };
        Ok(ProjectionContext {
            grid,
            div,
            lap_phi,
            grad_phi,
            phi_solver,
            potential,
        })
    }

    pub fn grid(&self) -> &Arc<CutCellGrid> {
        &self.grid
    }

    pub fn has_outflow(&self) -> bool {
        self.potential.is_some()
    }

    /// Boundary data of the divergence operator.
    pub fn divergence_data(&self, boundary: &BoundaryFn) -> Vec<f64> {
        self.div.boundary_data(&self.grid, boundary)
    }

    /// Cell-average divergence `D(u, v)` with precomputed boundary data.
    pub fn divergence(&self, u: &[f64], v: &[f64], data: &[f64]) -> Vec<f64> {
        let mut w = u.to_vec();
        w.extend_from_slice(v);
        self.div.apply(&w, data)
    }

    pub fn divergence_norms(&self, u: &[f64], v: &[f64], boundary: &BoundaryFn) -> NormTriple {
        NormTriple::of(&self.divergence(u, v, &self.divergence_data(boundary)))
    }

    /// `u = w - Gφ` with `L φ = D w`.
    pub fn project(&mut self, u: &[f64], v: &[f64], boundary: &BoundaryFn) -> Result<ProjectionResult, ProjectionError> {
        let data = self.divergence_data(boundary);
        self.project_with_data(u, v, &data, boundary)
    }

    /// As [`project`](Self::project) with the divergence data already evaluated.
    pub fn project_with_data(
        &mut self,
        u: &[f64],
        v: &[f64],
        data: &[f64],
        boundary: &BoundaryFn,
    ) -> Result<ProjectionResult, ProjectionError> {
        let rhs = self.divergence(u, v, data);
        let div_before = NormTriple::of(&rhs);
        let (phi, report) = match &mut self.phi_solver {
            PhiSolver::Singular(s) => s.solve(&self.lap_phi.a, &rhs),
            PhiSolver::Regular(s) => s.solve(&rhs),
        };
        if !report.converged {
            return Err(ProjectionError::NotConverged { what: "pressure correction", report });
        }
        let gx = self.grad_phi[0].a.matvec(&phi);
        let gy = self.grad_phi[1].a.matvec(&phi);
        let pu: Vec<f64> = u.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let pv: Vec<f64> = v.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
        let psi = match &mut self.potential {
            Some(p) => {
                // Neumann data is u_bc·n on prescribed boundaries
                let g = p.lap.boundary_data(&self.grid, &|tag, x, n| {
                    let w = boundary(tag, x, n);
                    [w[0] * n[0] + w[1] * n[1], 0.0]
                });
                let rhs: Vec<f64> = p.lap.apply_data(&g).iter().map(|v| -v).collect();
                let (psi, rep) = p.solver.solve(&rhs);
                if !rep.converged {
                    return Err(ProjectionError::NotConverged { what: "potential flow", report: rep });
                }
                Some(psi)
            }
            None => None,
        };
        let div_after = NormTriple::of(&self.divergence(&pu, &pv, data));
        Ok(ProjectionResult {
            u: pu,
            v: pv,
            phi,
            psi,
            div_before,
            div_after,
            correction: NormTriple::of(&mag),
            report,
        })
    }

    /// Gradient of the potential-flow part, if any.
    pub fn potential_gradient(&self, psi: &[f64], boundary: &BoundaryFn) -> Option<[Vec<f64>; 2]> {
        let p = self.potential.as_ref()?;
        Some([0, 1].map(|d| {
            let g = p.grad[d].boundary_data(&self.grid, &|tag, x, n| {
                let w = boundary(tag, x, n);
                [w[0] * n[0] + w[1] * n[1], 0.0]
            });
            p.grad[d].apply(psi, &g)
        }))
    }
}

/// Norm history rows `step,L1,L2,Linf` of repeated projections.
pub fn write_norm_history<W: Write>(mut w: W, rows: &[(usize, NormTriple)]) -> std::io::Result<()> {
    writeln!(w, "step,L1,L2,Linf")?;
    for (k, n) in rows {
        writeln!(w, "{k},{:e},{:e},{:e}", n.l1, n.l2, n.linf)?;
    }
    Ok(())
}
