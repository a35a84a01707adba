//! Randomized properties of the geometry, operators, integrator, norms and configuration.

use std::sync::{Arc, OnceLock};

use ebstokes::cli::{echo_toml, parse_config_str, resolve, Overrides};
use ebstokes::driver::Flow;
use ebstokes::geometry::{
    case_geometry, multi_index_set, CutCellGrid, GeometryParams, GridOptions, GridSpec, MultiIndex, Point,
};
use ebstokes::imex::{ArkTableau, ScalarLinear};
use ebstokes::stencil::{assemble_laplacian, AffineOperator, ScalarBc, ScalarBcSpec};
use ebstokes::verify::{observed_rate, restrict, NormTriple};
use proptest::prelude::*;

fn grid(name: &str, params: &[(&str, f64)], n: usize) -> CutCellGrid {
    let p: GeometryParams = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    CutCellGrid::build(case_geometry(name, &p).unwrap(), GridSpec::unit_square(n), &GridOptions::default()).unwrap()
}

fn poly_eval(coef: &[f64], deg: u32, x: Point) -> f64 {
    multi_index_set(deg).iter().zip(coef).map(|(q, c)| c * q.eval([x[0] - 0.5, x[1] - 0.5])).sum()
}

fn poly_laplacian(coef: &[f64], deg: u32, x: Point) -> f64 {
    let second = |q: &MultiIndex, d: usize| -> Option<f64> {
        let l = q.lower(d)?.lower(d)?;
        Some(f64::from(q.0[d] * (q.0[d] - 1)) * l.eval([x[0] - 0.5, x[1] - 0.5]))
    };
    multi_index_set(deg)
        .iter()
        .zip(coef)
        .map(|(q, c)| c * (second(q, 0).unwrap_or(0.0) + second(q, 1).unwrap_or(0.0)))
        .sum()
}

fn annulus_laplacian() -> &'static (Arc<CutCellGrid>, AffineOperator) {
    static CELL: OnceLock<(Arc<CutCellGrid>, AffineOperator)> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = Arc::new(grid("annulus", &[], 24));
        let op = assemble_laplacian(&g, &ScalarBcSpec::uniform(ScalarBc::Dirichlet)).unwrap();
        (g, op)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norms_are_homogeneous_and_ordered(
        values in prop::collection::vec(-1e3f64..1e3, 1..64),
        scale in -1e3f64..1e3,
    ) {
        let n = NormTriple::of(&values);
        prop_assert!(n.l1 <= n.l2 * (1.0 + 1e-12) + 1e-300);
        prop_assert!(n.l2 <= n.linf * (1.0 + 1e-12) + 1e-300);
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let m = NormTriple::of(&scaled);
        for (a, b) in m.as_array().iter().zip(n.as_array()) {
            prop_assert!((a - scale.abs() * b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn observed_rate_inverts_power_law(e in 1e-12f64..1.0, p in 0.5f64..6.0, r in 1.5f64..4.0) {
        let fine = e / r.powf(p);
        prop_assert!((observed_rate(e, fine, r).unwrap() - p).abs() < 1e-10);
    }

    #[test]
    fn restriction_reproduces_coarse_averages(
        coef in prop::collection::vec(-1.0f64..1.0, 15),
        radius in 0.2f64..0.45,
    ) {
        let coarse = grid("circle", &[("radius", radius)], 8);
        let fine = grid("circle", &[("radius", radius)], 16);
        let u = fine.cell_averages(|x| poly_eval(&coef, 4, x));
        let want = coarse.cell_averages(|x| poly_eval(&coef, 4, x));
        let got = restrict(&fine, &u, &coarse).unwrap();
        prop_assert!(got.iter().any(Option::is_some));
        for (g, w) in got.iter().zip(&want) {
            if let Some(g) = g {
                prop_assert!((g - w).abs() < 1e-11, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn laplacian_is_exact_for_random_quartics(coef in prop::collection::vec(-1.0f64..1.0, 15)) {
        let (g, op) = annulus_laplacian();
        let data = op.boundary_data(g, &|_, x, _| [poly_eval(&coef, 4, x), 0.0]);
        let got = op.apply(&g.cell_averages(|x| poly_eval(&coef, 4, x)), &data);
        let want = g.cell_averages(|x| poly_laplacian(&coef, 4, x));
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = got.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err / scale < 1e-8, "{err}");
    }

    #[test]
    fn neumann_laplacian_is_exact_on_random_circles(
        coef in prop::collection::vec(-1.0f64..1.0, 15),
        cx in 0.4f64..0.6,
        cy in 0.4f64..0.6,
        radius in 0.15f64..0.38,
        n in 12usize..30,
    ) {
        let g = grid("circle", &[("cx", cx), ("cy", cy), ("radius", radius)], n);
        for v in 0..g.num_valid() {
            let r = g.closure_residual(v);
            prop_assert!(r[0].abs().max(r[1].abs()) < 1e-12 * g.h(), "closure {r:?}");
        }
        let op = assemble_laplacian(&g, &ScalarBcSpec::uniform(ScalarBc::Neumann)).unwrap();
        let grad = |x: Point, d: usize| {
            multi_index_set(4)
                .iter()
                .zip(&coef)
                .filter_map(|(q, c)| q.lower(d).map(|l| f64::from(q.0[d]) * c * l.eval([x[0] - 0.5, x[1] - 0.5])))
                .sum::<f64>()
        };
        let data = op.boundary_data(&g, &|_, x, nrm| [grad(x, 0) * nrm[0] + grad(x, 1) * nrm[1], 0.0]);
        let got = op.apply(&g.cell_averages(|x| poly_eval(&coef, 4, x)), &data);
        let want = g.cell_averages(|x| poly_laplacian(&coef, 4, x));
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        // flux-sum form: random cuts reach volume fractions where 1/V amplifies round-off
        let err = (0..got.len())
            .map(|v| g.cell(v).kappa * (got[v] - want[v]).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(err / scale < 1e-8, "{err}");
    }

    #[test]
    fn half_plane_cells_close_and_sum_to_polygon_area(
        angle in 0.0f64..std::f64::consts::TAU,
        offset in -0.2f64..0.2,
    ) {
        let nrm = [angle.cos(), angle.sin()];
        let p0 = [0.5 + offset * nrm[0], 0.5 + offset * nrm[1]];
        let g = grid("half_space", &[("px", p0[0]), ("py", p0[1]), ("nx", nrm[0]), ("ny", nrm[1])], 8);
        for v in 0..g.num_valid() {
            let r = g.closure_residual(v);
            prop_assert!(r[0].abs().max(r[1].abs()) < 1e-12);
        }
        // fluid area of the unit square by clipping and the shoelace formula
        let f = |x: Point| (x[0] - p0[0]) * nrm[0] + (x[1] - p0[1]) * nrm[1];
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut poly = Vec::new();
        for k in 0..4 {
            let (a, b): (Point, Point) = (square[k], square[(k + 1) % 4]);
            if f(a) <= 0.0 {
                poly.push(a);
            }
            if (f(a) < 0.0) != (f(b) < 0.0) {
                let s = f(a) / (f(a) - f(b));
                poly.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            }
        }
        let area: f64 = (0..poly.len())
            .map(|k| {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0;
        let total: f64 = g.cells().iter().map(|c| c.volume).sum();
        prop_assert!((total - area).abs() < 1e-12, "{total} vs {area}");
    }

    #[test]
    fn implicit_stability_function_is_bounded(z in -1e8f64..0.0) {
        let r = ArkTableau::ark436l2sa().stability(z);
        prop_assert!(r.abs() <= 1.0 + 1e-12, "R({z}) = {r}");
    }

    #[test]
    fn split_scalar_problem_converges(lambda in -50.0f64..-0.1, mu in -1.0f64..1.0) {
        let tab = ArkTableau::ark436l2sa();
        let p = ScalarLinear { lambda, mu };
        let (coarse, fine) = (p.error(&tab, 1.0, 64), p.error(&tab, 1.0, 128));
        prop_assert!(fine <= (coarse / 8.0).max(1e-13), "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn config_round_trips_through_echo(
        flow in prop::sample::select(Flow::ALL.to_vec()),
        k in 1usize..5,
        dt in 1e-4f64..1.0,
    ) {
        let per_n = match flow {
            Flow::Channel => 2,
            Flow::Gyroid => 8,
            _ => 1,
        };
        let src = format!("[physics]\nflow = \"{}\"\n[grid]\nnx = {}\n[time]\ndt = {dt:?}\n", flow.name(), 16 * per_n * k);
        let cfg = resolve(&parse_config_str(&src).unwrap(), Some(&src), &Overrides::default()).unwrap();
        prop_assert_eq!(cfg.case.dt, dt);
        let text = echo_toml(&cfg);
        let again = resolve(&parse_config_str(&text).unwrap(), Some(&text), &Overrides::default()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}
