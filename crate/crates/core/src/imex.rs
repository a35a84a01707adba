//! Six-stage fourth-order additive implicit-explicit Runge-Kutta (ARK4(3)6L[2]SA).

use std::fmt;

use thiserror::Error;

use crate::linear_solve::{LinearSolver, SolveReport, SparseMatrix};

pub const STAGES: usize = 6;

#[derive(Debug, Error)]
pub enum ImexError {
    #[error("stage {stage} solve failed: {report}")]
    StageSolve { stage: usize, report: SolveReport },
    #[error("non-finite value in stage {0}")]
    NonFinite(usize),
}

/// Butcher coefficients of an ImEx pair sharing `b` and `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArkTableau {
    pub a_ex: [[f64; STAGES]; STAGES],
    pub a_im: [[f64; STAGES]; STAGES],
    pub b: [f64; STAGES],
    pub c: [f64; STAGES],
    pub gamma: f64,
}

impl ArkTableau {
    /// Kennedy and Carpenter's L-stable, stiffly accurate ARK4(3)6L[2]SA.
    pub fn ark436l2sa() -> Self {
        let g = 0.25;
        let b = [
            82889.0 / 524892.0,
            0.0,
            15625.0 / 83664.0,
            69875.0 / 102672.0,
            -2260.0 / 8211.0,
            0.25,
        ];
        let a_im = [
            [0.0; 6],
            [g, g, 0.0, 0.0, 0.0, 0.0],
            [8611.0 / 62500.0, -1743.0 / 31250.0, g, 0.0, 0.0, 0.0],
            [
                5012029.0 / 34652500.0,
                -654441.0 / 2922500.0,
                174375.0 / 388108.0,
                g,
                0.0,
                0.0,
            ],
            [
                15267082809.0 / 155376265600.0,
                -71443401.0 / 120774400.0,
                730878875.0 / 902184768.0,
                2285395.0 / 8070912.0,
                g,
                0.0,
            ],
            b,
        ];
        let a_ex = [
            [0.0; 6],
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            [13861.0 / 62500.0, 6889.0 / 62500.0, 0.0, 0.0, 0.0, 0.0],
            [
                -116923316275.0 / 2393684061468.0,
                -2731218467317.0 / 15368042101831.0,
                9408046702089.0 / 11113171139209.0,
                0.0,
                0.0,
                0.0,
            ],
            [
                -451086348788.0 / 2902428689909.0,
                -2682348792572.0 / 7519795681897.0,
                12662868775082.0 / 11960479115383.0,
                3355817975965.0 / 11060851509271.0,
                0.0,
                0.0,
            ],
            [
                647845179188.0 / 3216320057751.0,
                73281519250.0 / 8382639484533.0,
                552539513391.0 / 3454668386233.0,
                3354512671639.0 / 8306763924573.0,
                4040.0 / 17871.0,
                0.0,
            ],
        ];
        let c = [0.0, 0.5, 83.0 / 250.0, 31.0 / 50.0, 17.0 / 20.0, 1.0];
        ArkTableau {
            a_ex,
            a_im,
            b,
            c,
            gamma: g,
        }
    }

    /// Stability function of the implicit tableau, `1 + z bᵀ (I - z A)⁻¹ 1`.
    pub fn stability(&self, z: f64) -> f64 {
        // forward substitution: A is lower triangular
        let mut y = [0.0; STAGES];
        for i in 0..STAGES {
            let s: f64 = (0..i).map(|j| self.a_im[i][j] * y[j]).sum();
            y[i] = (1.0 + z * s) / (1.0 - z * self.a_im[i][i]);
        }
        1.0 + z * (0..STAGES).map(|i| self.b[i] * y[i]).sum::<f64>()
    }
}

/// Residuals of the consistency and order conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct TableauReport {
    pub row_sum: f64,
    pub order: [f64; 4],
    pub stiff_limit: f64,
    pub diagonal: f64,
    pub valid: bool,
}

impl fmt::Display for TableauReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "row sums        {:.3e}", self.row_sum)?;
        for (k, r) in self.order.iter().enumerate() {
            writeln!(f, "order {}         {:.3e}", k + 1, r)?;
        }
        writeln!(f, "diagonal        {:.3e}", self.diagonal)?;
        writeln!(f, "|R(-1e6)|       {:.3e}", self.stiff_limit)?;
        write!(f, "valid           {}", self.valid)
    }
}

pub const ORDER_TOL: f64 = 1e-10;
pub const STIFF_LIMIT: f64 = 1e-4;

/// Check row sums, additive order conditions through order four, the ESDIRK
/// structure and `|R(-1e6)|`.
pub fn validate_tableau(tab: &ArkTableau) -> TableauReport {
    let n = STAGES;
    let (b, c) = (&tab.b, &tab.c);
    let mats = [&tab.a_ex, &tab.a_im];
    let mut row_sum: f64 = 0.0;
    for a in mats {
        for i in 0..n {
            row_sum = row_sum.max((a[i].iter().sum::<f64>() - c[i]).abs());
        }
    }
    let av = |a: &[[f64; STAGES]; STAGES], v: &[f64]| -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| a[i][j] * v[j]).sum()).collect()
    };
    let bdot = |v: &[f64]| -> f64 { (0..n).map(|i| b[i] * v[i]).sum() };
    let cpow = |k: i32| -> Vec<f64> { c.iter().map(|x| x.powi(k)).collect() };

    let o1 = (bdot(&[1.0; STAGES]) - 1.0).abs();
    let o2 = (bdot(c) - 0.5).abs();
    let mut o3 = (bdot(&cpow(2)) - 1.0 / 3.0).abs();
    let mut o4 = (bdot(&cpow(3)) - 0.25).abs();
    for a in mats {
        let ac = av(a, c);
        o3 = o3.max((bdot(&ac) - 1.0 / 6.0).abs());
        let cac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();
        o4 = o4.max((bdot(&cac) - 0.125).abs());
        o4 = o4.max((bdot(&av(a, &cpow(2))) - 1.0 / 12.0).abs());
        for a2 in mats {
            o4 = o4.max((bdot(&av(a, &av(a2, c))) - 1.0 / 24.0).abs());
        }
    }
    let mut diagonal: f64 = tab.a_im[0][0].abs();
    for i in 1..n {
        diagonal = diagonal.max((tab.a_im[i][i] - tab.gamma).abs());
        diagonal = diagonal.max(tab.a_ex[i][i].abs());
        for j in i + 1..n {
            diagonal = diagonal.max(tab.a_im[i][j].abs()).max(tab.a_ex[i][j].abs());
        }
    }
    let stiff_limit = tab.stability(-1e6).abs();
    let order = [o1, o2, o3, o4];
    let valid = row_sum < ORDER_TOL
        && order.iter().all(|&r| r < ORDER_TOL)
        && diagonal < ORDER_TOL
        && stiff_limit < STIFF_LIMIT;
    TableauReport {
        row_sum,
        order,
        stiff_limit,
        diagonal,
        valid,
    }
}

/// `du/dt = L u + f(t) + S(u, t)` with `L u + f` implicit and `S` explicit.
pub trait ImexProblem {
    fn dim(&self) -> usize;
    /// `L u`.
    fn apply_implicit(&self, u: &[f64]) -> Vec<f64>;
    /// `f(t)`, the affine part of the implicit term.
    fn implicit_forcing(&self, t: f64) -> Option<Vec<f64>>;
    /// `S(u, t)`; `None` when identically zero.
    fn explicit(&self, u: &[f64], t: f64) -> Option<Vec<f64>>;
}

/// `I - dt γ L`, the matrix of every implicit stage.
pub fn stage_matrix(l: &SparseMatrix, dt: f64, gamma: f64) -> SparseMatrix {
    SparseMatrix::identity(l.nrows()).add(1.0, l, -dt * gamma)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One step from `t` to `t + dt`. `solver` must hold [`stage_matrix`] for this `dt`.
pub fn ark_step<P: ImexProblem + ?Sized>(
    tab: &ArkTableau,
    problem: &P,
    u: &[f64],
    t: f64,
    dt: f64,
    solver: &mut LinearSolver,
) -> Result<Vec<f64>, ImexError> {
    let n = problem.dim();
    assert_eq!(u.len(), n);
    let mut implicit: Vec<Vec<f64>> = Vec::with_capacity(STAGES);
    let mut explicit: Vec<Option<Vec<f64>>> = Vec::with_capacity(STAGES);
    for i in 0..STAGES {
        let ti = t + tab.c[i] * dt;
        let mut rhs = u.to_vec();
        for j in 0..i {
            if let Some(s) = &explicit[j] {
                axpy(&mut rhs, dt * tab.a_ex[i][j], s);
            }
            axpy(&mut rhs, dt * tab.a_im[i][j], &implicit[j]);
        }
        let forcing = problem.implicit_forcing(ti);
        let stage = if i == 0 || tab.a_im[i][i] == 0.0 {
            rhs
        } else {
            if let Some(f) = &forcing {
                axpy(&mut rhs, dt * tab.a_im[i][i], f);
            }
            let (x, report) = solver.solve(&rhs);
            if !report.converged {
                return Err(ImexError::StageSolve { stage: i + 1, report });
            }
            x
        };
        if stage.iter().any(|v| !v.is_finite()) {
            return Err(ImexError::NonFinite(i + 1));
        }
        let mut fi = problem.apply_implicit(&stage);
        if let Some(f) = &forcing {
            axpy(&mut fi, 1.0, f);
        }
        explicit.push(problem.explicit(&stage, ti));
        implicit.push(fi);
    }
    let mut out = u.to_vec();
    for j in 0..STAGES {
        if tab.b[j] == 0.0 {
            continue;
        }
        axpy(&mut out, dt * tab.b[j], &implicit[j]);
        if let Some(s) = &explicit[j] {
            axpy(&mut out, dt * tab.b[j], s);
        }
    }
    Ok(out)
}

/// Linear test problem `y' = λ y + μ y` with `λ` implicit and `μ` explicit.
pub struct ScalarLinear {
    pub lambda: f64,
    pub mu: f64,
}

impl ImexProblem for ScalarLinear {
    fn dim(&self) -> usize {
        1
    }
    fn apply_implicit(&self, u: &[f64]) -> Vec<f64> {
        vec![self.lambda * u[0]]
    }
    fn implicit_forcing(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }
    fn explicit(&self, u: &[f64], _t: f64) -> Option<Vec<f64>> {
        (self.mu != 0.0).then(|| vec![self.mu * u[0]])
    }
}

impl ScalarLinear {
    /// Error at `t_end` after `steps` uniform steps from `y(0) = 1`.
    pub fn error(&self, tab: &ArkTableau, t_end: f64, steps: usize) -> f64 {
        let dt = t_end / steps as f64;
        let l = SparseMatrix::from_triplets(1, 1, [(0, 0, self.lambda)]);
        let mut solver = LinearSolver::new(stage_matrix(&l, dt, tab.gamma), 1e-14).expect("1x1 stage matrix");
        let mut y = vec![1.0];
        for k in 0..steps {
            y = ark_step(tab, self, &y, k as f64 * dt, dt, &mut solver).expect("scalar stage");
        }
        (y[0] - ((self.lambda + self.mu) * t_end).exp()).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_is_valid() {
        let r = validate_tableau(&ArkTableau::ark436l2sa());
        assert!(r.valid, "{r}");
        assert!(r.stiff_limit < 1e-4);
    }

    #[test]
    fn perturbed_weights_fail() {
        let mut tab = ArkTableau::ark436l2sa();
        tab.b[2] += 1e-3;
        let r = validate_tableau(&tab);
        assert!(!r.valid && r.order[0] > 1e-4);
    }

    #[test]
    fn zero_operator_keeps_state() {
        let tab = ArkTableau::ark436l2sa();
        let p = ScalarLinear { lambda: 0.0, mu: 0.0 };
        let l = SparseMatrix::from_triplets(1, 1, [(0, 0, 0.0)]);
        let mut s = LinearSolver::new(stage_matrix(&l, 0.1, tab.gamma), 1e-14).unwrap();
        assert_eq!(ark_step(&tab, &p, &[3.25], 0.0, 0.1, &mut s).unwrap(), vec![3.25]);
    }

    #[test]
    fn one_step_matches_stability_function() {
        let tab = ArkTableau::ark436l2sa();
        for z in [-0.5, -3.0, -40.0] {
            let p = ScalarLinear { lambda: z, mu: 0.0 };
            let err = p.error(&tab, 1.0, 1) - ((z).exp() - tab.stability(z)).abs();
            assert!(err.abs() < 1e-14, "z = {z}");
        }
    }

    #[test]
    fn exponential_growth_is_fourth_order() {
        let tab = ArkTableau::ark436l2sa();
        // all-explicit and all-implicit splittings of y' = y
        for p in [ScalarLinear { lambda: 1.0, mu: 0.0 }, ScalarLinear { lambda: 0.0, mu: 1.0 }, ScalarLinear { lambda: 0.5, mu: 0.5 }] {
            let e: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| p.error(&tab, 1.0, n)).collect();
            let last = (e[2] / e[3]).log2();
            assert!(last >= 3.9, "λ={} μ={}: {e:?}", p.lambda, p.mu);
        }
    }
}
