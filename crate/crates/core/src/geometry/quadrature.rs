//! Quadrature over cut cells, cut faces and embedded-boundary segments.
//!
//! A cell is recursively bisected until every sub-box is either sign-definite
//! (tensor Gauss-Legendre) or admits a height direction along which the level
//! set is strictly monotone. In the latter case the interface is a graph over
//! the base direction: the base interval is split at the points where the
//! interface crosses the box edges, each piece is integrated with adaptive
//! Gauss-Legendre in the base direction, and the interface height at each base
//! node is located by bracketed root finding.

use std::sync::OnceLock;

use super::{GeometryError, LevelSet, Point};

/// A volume or face quadrature node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadNode {
    pub x: Point,
    pub w: f64,
}

/// An embedded-boundary quadrature node carrying the outward unit normal
/// (pointing out of the fluid).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub x: Point,
    pub w: f64,
    pub n: Point,
}

/// Quadrature rules for one cut cell.
#[derive(Clone, Debug, Default)]
pub struct CellQuadrature {
    pub volume: Vec<QuadNode>,
    pub boundary: Vec<BoundaryNode>,
}

impl CellQuadrature {
    pub fn volume_measure(&self) -> f64 {
        self.volume.iter().map(|n| n.w).sum()
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary.iter().map(|n| n.w).sum()
    }
}

/// Points per axis on the sign-check lattice.
pub const LATTICE: usize = 9;
/// Gauss points for sign-definite boxes and along heights.
pub const TENSOR_ORDER: usize = 8;
/// Gauss points per base sub-interval under a cut.
pub const BASE_ORDER: usize = 12;
/// Samples used to detect crossings along an edge.
const EDGE_SAMPLES: usize = 17;
const MAX_DEPTH: u32 = 16;
const MAX_BASE_SPLITS: u32 = 12;
const REL_TOL: f64 = 1e-13;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn cached_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=32).map(gauss_legendre).collect());
    &rules[n]
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_on(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = cached_rule(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    x.iter().zip(w.iter()).map(move |(&xi, &wi)| (mid + half * xi, half * wi))
}

/// Tensor Gauss rule over the box `[lo, hi]`.
pub fn tensor_nodes(lo: Point, hi: Point, n: usize) -> Vec<QuadNode> {
    let mut out = Vec::with_capacity(n * n);
    for (x, wx) in gauss_on(n, lo[0], hi[0]) {
        for (y, wy) in gauss_on(n, lo[1], hi[1]) {
            out.push(QuadNode { x: [x, y], w: wx * wy });
        }
    }
    out
}

/// Brent's method for a root of `f` in `[a, b]` given `f(a) f(b) <= 0`.
pub fn brent<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    if fa * fb > 0.0 {
        // no bracket: return the endpoint closer to zero
        return if fa.abs() < fb.abs() { a } else { b };
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    b
}

#[inline]
fn is_fluid(v: f64) -> bool {
    v < 0.0
}

/// Level-set values below this fraction of `|∇φ| * length` are round-off.
const ROUNDOFF: f64 = 1e-12;

/// Fluid flag of a sample, and whether the sample is at round-off level.
fn classify(ls: &dyn LevelSet, p: Point, len: f64) -> (bool, bool) {
    let v = ls.value(p);
    let g = ls.gradient(p);
    (is_fluid(v), v.abs() <= ROUNDOFF * len * g[0].hypot(g[1]))
}

/// Give every undecided flag the value of its nearest decided neighbor. A
/// tangential touch leaves a sliver between two spurious crossings whose
/// midpoint lies on the interface.
fn resolve_ambiguous(flags: &[(bool, bool)]) -> Vec<bool> {
    (0..flags.len())
        .map(|i| {
            if !flags[i].1 {
                return flags[i].0;
            }
            (1..flags.len())
                .flat_map(|d| [i.checked_sub(d), Some(i + d)])
                .flatten()
                .filter_map(|j| flags.get(j))
                .find(|f| !f.1)
                .map_or(flags[i].0, |f| f.0)
        })
        .collect()
}

fn lerp(p0: Point, p1: Point, t: f64) -> Point {
    [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
}

/// Parameters `t ∈ (0, 1)` where the fluid indicator changes along `p0 → p1`.
pub fn segment_crossings(ls: &dyn LevelSet, p0: Point, p1: Point) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = ls.value(p0);
    for k in 1..EDGE_SAMPLES {
        let t = k as f64 / (EDGE_SAMPLES - 1) as f64;
        let v = ls.value(lerp(p0, p1, t));
        if is_fluid(prev) != is_fluid(v) {
            let g = |s: f64| ls.value(lerp(p0, p1, s));
            let mut r = brent(g, prev_t, t, 1e-16);
            // land on the solid side of a zero so the indicator is consistent
            r = r.clamp(prev_t, t);
            ts.push(r);
        }
        prev = v;
        prev_t = t;
    }
    ts
}

/// Fluid sub-intervals (as parameters) of the segment `p0 → p1`.
///
/// Points where the level set vanishes identically are attributed to the side
/// indicated by `probe` (an offset direction), so a face lying exactly on the
/// interface takes its area from the fluid side.
pub fn segment_fluid_intervals(
    ls: &dyn LevelSet,
    p0: Point,
    p1: Point,
    probe: Option<Point>,
) -> Vec<(f64, f64)> {
    let eval = |t: f64| -> f64 {
        let p = lerp(p0, p1, t);
        let v = ls.value(p);
        match probe {
            Some(dir) if v == 0.0 => ls.value([p[0] + dir[0], p[1] + dir[1]]),
            _ => v,
        }
    };
    let mut breaks = vec![0.0];
    let mut prev_t = 0.0;
    let mut prev = eval(0.0);
    for k in 1..EDGE_SAMPLES {
        let t = k as f64 / (EDGE_SAMPLES - 1) as f64;
        let v = eval(t);
        if is_fluid(prev) != is_fluid(v) {
            breaks.push(brent(eval, prev_t, t, 1e-16).clamp(prev_t, t));
        }
        prev = v;
        prev_t = t;
    }
    breaks.push(1.0);
    breaks.dedup();
    let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
    let flags: Vec<(bool, bool)> = breaks
        .windows(2)
        .map(|w| {
            let t = 0.5 * (w[0] + w[1]);
            let (_, ambiguous) = classify(ls, lerp(p0, p1, t), len);
            (is_fluid(eval(t)), ambiguous)
        })
        .collect();
    let fluid = resolve_ambiguous(&flags);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (w, &f) in breaks.windows(2).zip(&fluid) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        if f {
            match out.last_mut() {
                Some(last) if last.1 == w[0] => last.1 = w[1],
                _ => out.push((w[0], w[1])),
            }
        }
    }
    out
}

/// Gauss quadrature over the fluid part of an axis-aligned segment.
pub fn segment_quadrature(
    ls: &dyn LevelSet,
    p0: Point,
    p1: Point,
    order: usize,
    probe: Option<Point>,
) -> Vec<QuadNode> {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    let mut out = Vec::new();
    for (a, b) in segment_fluid_intervals(ls, p0, p1, probe) {
        for (t, w) in gauss_on(order, a, b) {
            out.push(QuadNode {
                x: lerp(p0, p1, t),
                w: w * len,
            });
        }
    }
    out
}

/// Sign summary of the level set over a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSign {
    Fluid,
    Solid,
    Mixed,
}

/// Classify a box from a lattice of samples plus edge crossings.
pub fn box_sign(ls: &dyn LevelSet, lo: Point, hi: Point) -> Result<BoxSign, GeometryError> {
    let mut fluid = 0usize;
    let mut zeros = 0usize;
    let total = LATTICE * LATTICE;
    for a in 0..LATTICE {
        for b in 0..LATTICE {
            let p = [
                lo[0] + (hi[0] - lo[0]) * a as f64 / (LATTICE - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * b as f64 / (LATTICE - 1) as f64,
            ];
            let v = ls.value(p);
            if v == 0.0 {
                zeros += 1;
            }
            if is_fluid(v) {
                fluid += 1;
            }
        }
    }
    if zeros == total {
        return Err(GeometryError::Degenerate { lo, hi });
    }
    if fluid != 0 && fluid != total {
        return Ok(BoxSign::Mixed);
    }
    if zeros > 0 {
        return Ok(BoxSign::Mixed);
    }
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    for k in 0..4 {
        if !segment_crossings(ls, corners[k], corners[(k + 1) % 4]).is_empty() {
            return Ok(BoxSign::Mixed);
        }
    }
    Ok(if fluid == total {
        BoxSign::Fluid
    } else {
        BoxSign::Solid
    })
}

/// Quadrature for the fluid part of the box `[lo, hi]`.
pub fn cut_box_quadrature(
    ls: &dyn LevelSet,
    lo: Point,
    hi: Point,
) -> Result<CellQuadrature, GeometryError> {
    let mut out = CellQuadrature::default();
    integrate_box(ls, lo, hi, 0, &mut out)?;
    Ok(out)
}

fn integrate_box(
    ls: &dyn LevelSet,
    lo: Point,
    hi: Point,
    depth: u32,
    out: &mut CellQuadrature,
) -> Result<(), GeometryError> {
    match box_sign(ls, lo, hi)? {
        BoxSign::Fluid => {
            out.volume.extend(tensor_nodes(lo, hi, TENSOR_ORDER));
            return Ok(());
        }
        BoxSign::Solid => return Ok(()),
        BoxSign::Mixed => {}
    }
    if let Some(k) = height_direction(ls, lo, hi) {
        return height_integrate(ls, lo, hi, k, out);
    }
    if depth >= MAX_DEPTH {
        return Err(GeometryError::QuadratureFailed { lo, hi });
    }
    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    for (a, b) in [
        (lo, mid),
        ([mid[0], lo[1]], [hi[0], mid[1]]),
        ([lo[0], mid[1]], [mid[0], hi[1]]),
        (mid, hi),
    ] {
        integrate_box(ls, a, b, depth + 1, out)?;
    }
    Ok(())
}

/// A direction along which the level set is strictly monotone over the box.
fn height_direction(ls: &dyn LevelSet, lo: Point, hi: Point) -> Option<usize> {
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let gc = ls.gradient(center);
    let k = if gc[0].abs() >= gc[1].abs() { 0 } else { 1 };
    let sign = gc[k].signum();
    if gc[k] == 0.0 {
        return None;
    }
    let mut gmax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for a in 0..LATTICE {
        for b in 0..LATTICE {
            let p = [
                lo[0] + (hi[0] - lo[0]) * a as f64 / (LATTICE - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * b as f64 / (LATTICE - 1) as f64,
            ];
            let g = ls.gradient(p);
            let gk = g[k] * sign;
            if gk <= 0.0 {
                return None;
            }
            dmin = dmin.min(gk);
            gmax = gmax.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        }
    }
    (dmin >= 0.3 * gmax).then_some(k)
}

/// Per-column contribution under the interface graph.
struct Column {
    base: f64,
    weight: f64,
    range: Option<(f64, f64)>,
    boundary: Option<BoundaryNode>,
}

fn height_integrate(
    ls: &dyn LevelSet,
    lo: Point,
    hi: Point,
    k: usize,
    out: &mut CellQuadrature,
) -> Result<(), GeometryError> {
    let j = 1 - k;
    let at = |base: f64, height: f64| -> Point {
        let mut p = [0.0; 2];
        p[j] = base;
        p[k] = height;
        p
    };
    let (a, b) = (lo[j], hi[j]);
    let (c, d) = (lo[k], hi[k]);

    let mut breaks = vec![a, b];
    for height in [c, d] {
        for t in segment_crossings(ls, at(a, height), at(b, height)) {
            breaks.push(a + t * (b - a));
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();

    let edge_flags = |height: f64| -> Vec<bool> {
        let flags: Vec<(bool, bool)> = breaks
            .windows(2)
            .map(|w| classify(ls, at(0.5 * (w[0] + w[1]), height), b - a))
            .collect();
        resolve_ambiguous(&flags)
    };
    let (lower, upper) = (edge_flags(c), edge_flags(d));
    for (k_int, w) in breaks.windows(2).enumerate() {
        let (s0, s1) = (w[0], w[1]);
        if s1 <= s0 {
            continue;
        }
        let (lower_fluid, upper_fluid) = (lower[k_int], upper[k_int]);
        match (lower_fluid, upper_fluid) {
            (true, true) => {
                let (p, q) = (at(s0, c), at(s1, d));
                let lo = [p[0].min(q[0]), p[1].min(q[1])];
                let hi = [p[0].max(q[0]), p[1].max(q[1])];
                out.volume.extend(tensor_nodes(lo, hi, TENSOR_ORDER));
            }
            (false, false) => {}
            _ => {
                let column = |base: f64, weight: f64| -> Column {
                    let f = |h: f64| ls.value(at(base, h));
                    let root = brent(f, c, d, 1e-16 * (d - c).max(1e-300));
                    let range = if lower_fluid { (c, root) } else { (root, d) };
                    let p = at(base, root);
                    let g = ls.gradient(p);
                    let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    let boundary = (gn > 0.0).then(|| BoundaryNode {
                        x: p,
                        w: weight * gn / g[k].abs(),
                        n: [g[0] / gn, g[1] / gn],
                    });
                    Column {
                        base,
                        weight,
                        range: (range.1 > range.0).then_some(range),
                        boundary,
                    }
                };
                adaptive_columns(&column, s0, s1, 0, &mut |col: Column| {
                    if let Some((h0, h1)) = col.range {
                        for (h, wh) in gauss_on(TENSOR_ORDER, h0, h1) {
                            out.volume.push(QuadNode {
                                x: at(col.base, h),
                                w: col.weight * wh,
                            });
                        }
                    }
                    if let Some(bn) = col.boundary {
                        out.boundary.push(bn);
                    }
                });
            }
        }
    }
    Ok(())
}

/// Integrate columns over `[s0, s1]`, bisecting until a coarse and a fine
/// Gauss rule agree on the enclosed area, first moment and boundary length.
fn adaptive_columns(
    column: &dyn Fn(f64, f64) -> Column,
    s0: f64,
    s1: f64,
    level: u32,
    emit: &mut dyn FnMut(Column),
) {
    let summarize = |cols: &[Column]| -> [f64; 3] {
        let mut acc = [0.0; 3];
        for col in cols {
            if let Some((h0, h1)) = col.range {
                acc[0] += col.weight * (h1 - h0);
                acc[1] += col.weight * 0.5 * (h1 * h1 - h0 * h0);
            }
            if let Some(bn) = col.boundary {
                acc[2] += bn.w;
            }
        }
        acc
    };
    let fine: Vec<Column> = gauss_on(BASE_ORDER, s0, s1)
        .map(|(s, w)| column(s, w))
        .collect();
    if level < MAX_BASE_SPLITS {
        let coarse: Vec<Column> = gauss_on(BASE_ORDER / 2, s0, s1)
            .map(|(s, w)| column(s, w))
            .collect();
        let f = summarize(&fine);
        let g = summarize(&coarse);
        let scale = (s1 - s0).max(f[0].abs()).max(f[2].abs());
        let err = (f[0] - g[0]).abs() + (f[1] - g[1]).abs() + (f[2] - g[2]).abs();
        if err > REL_TOL * scale {
            let mid = 0.5 * (s0 + s1);
            adaptive_columns(column, s0, mid, level + 1, emit);
            adaptive_columns(column, mid, s1, level + 1, emit);
            return;
        }
    }
    for col in fine {
        emit(col);
    }
}
