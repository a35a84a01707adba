use std::sync::Arc;

use super::*;
use crate::geometry::cases::{AllFluid, Annulus, Circle};
use crate::geometry::{GridOptions, GridSpec, LevelSet};

fn grid(ls: impl LevelSet + 'static, n: usize) -> CutCellGrid {
    CutCellGrid::build(Arc::new(ls), GridSpec::unit_square(n), &GridOptions::default()).unwrap()
}

/// Polynomial of degree `deg` about (0.5, 0.5) with fixed coefficients.
#[derive(Clone, Copy)]
struct Poly {
    deg: u32,
    seed: f64,
}

impl Poly {
    fn coef(&self, q: MultiIndex) -> f64 {
        let k = q.position() as f64;
        (0.7 * k + self.seed).sin() + 0.25
    }
    fn eval(&self, x: Point) -> f64 {
        crate::geometry::multi_index_set(self.deg)
            .into_iter()
            .map(|q| self.coef(q) * q.eval([x[0] - 0.5, x[1] - 0.5]))
            .sum()
    }
    fn deriv(&self, x: Point, d: usize) -> f64 {
        crate::geometry::multi_index_set(self.deg)
            .into_iter()
            .filter_map(|q| q.lower(d).map(|l| f64::from(q.0[d]) * self.coef(q) * l.eval([x[0] - 0.5, x[1] - 0.5])))
            .sum()
    }
    fn second(&self, x: Point, d: usize) -> f64 {
        crate::geometry::multi_index_set(self.deg)
            .into_iter()
            .filter_map(|q| {
                let l = q.lower(d)?.lower(d)?;
                Some(f64::from(q.0[d] * (q.0[d] - 1)) * self.coef(q) * l.eval([x[0] - 0.5, x[1] - 0.5]))
            })
            .sum()
    }
}

fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().map(|v| v.abs()).fold(1.0, f64::max);
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn check_laplacian(g: &CutCellGrid, bc: ScalarBc) -> f64 {
    let p = Poly { deg: 4, seed: 0.3 };
    let op = assemble_laplacian(g, &ScalarBcSpec::uniform(bc)).unwrap();
    let u = g.cell_averages(|x| p.eval(x));
    let data = op.boundary_data(g, &|_, x, n| match bc {
        ScalarBc::Dirichlet => [p.eval(x), 0.0],
        ScalarBc::Neumann => [p.deriv(x, 0) * n[0] + p.deriv(x, 1) * n[1], 0.0],
    });
    let want = g.cell_averages(|x| p.second(x, 0) + p.second(x, 1));
    max_rel_err(&op.apply(&u, &data), &want)
}

#[test]
fn laplacian_exact_for_quartics_on_circle() {
    let g = grid(Circle::inside([0.5, 0.5], 0.3), 32);
    assert!(check_laplacian(&g, ScalarBc::Dirichlet) < 1e-8);
    assert!(check_laplacian(&g, ScalarBc::Neumann) < 1e-8);
}

#[test]
fn laplacian_exact_for_quartics_on_annulus() {
    let g = grid(Annulus::new([0.5, 0.5], 0.25, 0.475), 32);
    assert!(check_laplacian(&g, ScalarBc::Dirichlet) < 1e-8);
    assert!(check_laplacian(&g, ScalarBc::Neumann) < 1e-8);
}

#[test]
fn gradient_exact_for_cubics() {
    let g = grid(Annulus::new([0.5, 0.5], 0.25, 0.475), 32);
    let p = Poly { deg: 3, seed: 1.1 };
    let u = g.cell_averages(|x| p.eval(x));
    for d in 0..2 {
        for bc in [ScalarBc::Dirichlet, ScalarBc::Neumann] {
            let op = assemble_gradient(&g, &ScalarBcSpec::uniform(bc), d).unwrap();
            let data = op.boundary_data(&g, &|_, x, n| match bc {
                ScalarBc::Dirichlet => [p.eval(x), 0.0],
                ScalarBc::Neumann => [p.deriv(x, 0) * n[0] + p.deriv(x, 1) * n[1], 0.0],
            });
            let want = g.cell_averages(|x| p.deriv(x, d));
            let e = max_rel_err(&op.apply(&u, &data), &want);
            assert!(e < 1e-8, "d={d} {bc:?}: {e}");
        }
    }
}

#[test]
fn divergence_exact_for_quartics() {
    let g = grid(Circle::inside([0.5, 0.5], 0.3), 32);
    let (pu, pv) = (Poly { deg: 4, seed: 0.1 }, Poly { deg: 4, seed: 2.0 });
    let mut w = g.cell_averages(|x| pu.eval(x));
    w.extend(g.cell_averages(|x| pv.eval(x)));
    let want = g.cell_averages(|x| pu.deriv(x, 0) + pv.deriv(x, 1));
    for bc in [VelocityBc::Velocity, VelocityBc::NormalFlow, VelocityBc::Open] {
        let op = assemble_divergence(&g, &VelocityBcSpec::uniform(bc)).unwrap();
        let data = op.boundary_data(&g, &|_, x, _| [pu.eval(x), pv.eval(x)]);
        let e = max_rel_err(&op.apply(&w, &data), &want);
        assert!(e < 1e-8, "{bc:?}: {e}");
    }
}

#[test]
fn constants_are_annihilated() {
    let g = grid(Annulus::new([0.5, 0.5], 0.25, 0.475), 32);
    let n = g.num_valid();
    let lap = assemble_laplacian(&g, &ScalarBcSpec::uniform(ScalarBc::Neumann)).unwrap();
    let zero = lap.zero_data();
    let r = lap.apply(&vec![2.5; n], &zero);
    assert!(r.iter().all(|v| v.abs() < 1e-8), "{:e}", r.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let grad = assemble_gradient(&g, &ScalarBcSpec::uniform(ScalarBc::Dirichlet), 1).unwrap();
    let data = grad.boundary_data(&g, &|_, _, _| [2.5, 0.0]);
    assert!(grad.apply(&vec![2.5; n], &data).iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn regular_grid_uses_closed_form() {
    let g = grid(AllFluid, 16);
    let op = assemble_laplacian(&g, &ScalarBcSpec::uniform(ScalarBc::Neumann)).unwrap();
    let v = g.cell_at(8, 8).unwrap();
    let h2 = g.h() * g.h();
    // (-1, 16, -30, 16, -1) / 12 in each direction
    let expect = [(0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];
    for (off, w) in expect {
        let c = g.cell_at(8 + off, 8).unwrap();
        let want = if off == 0 { 2.0 * w } else { w };
        assert!((op.a.get(v, c) * h2 - want).abs() < 1e-13, "offset {off}");
    }
    assert_eq!(op.a.row(v).count(), 9);
    // Δ(x² + y²) = 4
    let u = g.cell_averages(|x| x[0] * x[0] + x[1] * x[1]);
    let lu = op.apply(&u, &op.zero_data());
    assert!((lu[v] - 4.0).abs() < 1e-9);
    assert!(regular_face_fraction(&g) > 0.3);
}

#[test]
fn face_stencil_support_counts() {
    use super::wls::cells_in_ball;
    let g = grid(AllFluid, 16);
    let f = g.face_at(0, 8, 8).unwrap();
    assert_eq!(cells_in_ball(&g, f.center, &f.cells, 3).len(), 18);
    let v = g.cell_at(8, 8).unwrap();
    assert_eq!(cells_in_ball(&g, g.cell_center(v), &[v], 3).len(), 25);
}

#[test]
fn assembly_is_deterministic() {
    let g = grid(Circle::inside([0.5, 0.5], 0.3), 16);
    let bc = VelocityBcSpec::uniform(VelocityBc::NormalFlow);
    let a = assemble_divergence(&g, &bc).unwrap();
    let b = assemble_divergence(&g, &bc).unwrap();
    assert_eq!(a.a, b.a);
    assert_eq!(a.b, b.b);
}
