//! Built-in level-set geometries. All use the convention `φ < 0` in the fluid.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{GeometryError, LevelSet, Point};

/// Everything is fluid.
#[derive(Clone, Debug, Default)]
pub struct AllFluid;

impl LevelSet for AllFluid {
    fn value(&self, _p: Point) -> f64 {
        -1.0
    }
    fn gradient(&self, _p: Point) -> Point {
        [0.0, 0.0]
    }
}

/// Fluid on the side of the plane opposite to `normal`.
#[derive(Clone, Debug)]
pub struct HalfSpace {
    point: Point,
    normal: Point,
}

impl HalfSpace {
    pub fn new(point: Point, normal: Point) -> Self {
        let n = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        HalfSpace {
            point,
            normal: [normal[0] / n, normal[1] / n],
        }
    }
}

impl LevelSet for HalfSpace {
    fn value(&self, p: Point) -> f64 {
        (p[0] - self.point[0]) * self.normal[0] + (p[1] - self.point[1]) * self.normal[1]
    }
    fn gradient(&self, _p: Point) -> Point {
        self.normal
    }
}

/// A circle with fluid either inside or outside.
#[derive(Clone, Debug)]
pub struct Circle {
    center: Point,
    radius: f64,
    sign: f64,
}

impl Circle {
    pub fn inside(center: Point, radius: f64) -> Self {
        Circle {
            center,
            radius,
            sign: 1.0,
        }
    }

    pub fn outside(center: Point, radius: f64) -> Self {
        Circle {
            center,
            radius,
            sign: -1.0,
        }
    }
}

impl LevelSet for Circle {
    fn value(&self, p: Point) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        self.sign * (dx * dx + dy * dy - self.radius * self.radius) / (2.0 * self.radius)
    }
    fn gradient(&self, p: Point) -> Point {
        let s = self.sign / self.radius;
        [s * (p[0] - self.center[0]), s * (p[1] - self.center[1])]
    }
}

/// Fluid between two concentric circles.
#[derive(Clone, Debug)]
pub struct Annulus {
    center: Point,
    r_in: f64,
    r_out: f64,
}

impl Annulus {
    pub fn new(center: Point, r_in: f64, r_out: f64) -> Self {
        Annulus {
            center,
            r_in,
            r_out,
        }
    }
}

impl LevelSet for Annulus {
    fn value(&self, p: Point) -> f64 {
        let r = (p[0] - self.center[0]).hypot(p[1] - self.center[1]);
        (r - self.r_in) * (r - self.r_out) / (self.r_out - self.r_in)
    }
    fn gradient(&self, p: Point) -> Point {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let r = dx.hypot(dy);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let dr = (2.0 * r - self.r_in - self.r_out) / (self.r_out - self.r_in);
        [dr * dx / r, dr * dy / r]
    }
}

/// Taylor-Green stream-function contour: fluid where `sin(nπx) sin(nπy) > level`.
#[derive(Clone, Debug)]
pub struct StreamContour {
    n: f64,
    level: f64,
}

impl StreamContour {
    pub fn new(n: f64, level: f64) -> Self {
        StreamContour { n, level }
    }
}

impl LevelSet for StreamContour {
    fn value(&self, p: Point) -> f64 {
        let k = self.n * PI;
        self.level - (k * p[0]).sin() * (k * p[1]).sin()
    }
    fn gradient(&self, p: Point) -> Point {
        let k = self.n * PI;
        [
            -k * (k * p[0]).cos() * (k * p[1]).sin(),
            -k * (k * p[0]).sin() * (k * p[1]).cos(),
        ]
    }
}

/// Polynomial smooth maximum with blending width `k`.
fn smooth_max(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.max(b);
    }
    let h = (0.5 + 0.5 * (a - b) / k).clamp(0.0, 1.0);
    b + (a - b) * h + k * h * (1.0 - h)
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    -smooth_max(-a, -b, k)
}

/// Two-dimensional slice of a thickened gyroid sheet inside a pipe.
///
/// The solid is the sheet `|f| / |∇f| < thickness / 2` restricted to the
/// block `|x - center| < block_half` and kept clear of the centerline channel
/// `|y| < channel_radius`. Fluid is the pipe `|y| < pipe_radius` minus the solid.
/// Corners are rounded with a smooth max of width `smoothing`.
#[derive(Clone, Debug)]
pub struct GyroidScaffold {
    pub n: f64,
    pub z: f64,
    pub thickness: f64,
    pub pipe_radius: f64,
    pub center_x: f64,
    pub block_half: f64,
    pub channel_radius: f64,
    pub smoothing: f64,
}

impl GyroidScaffold {
    /// Gyroid function `cos(nπx) sin(nπy) + cos(nπy) sin(nπz) + cos(nπz) sin(nπx)`.
    pub fn gyroid(&self, x: f64, y: f64, z: f64) -> f64 {
        let k = self.n * PI;
        (k * x).cos() * (k * y).sin() + (k * y).cos() * (k * z).sin() + (k * z).cos() * (k * x).sin()
    }

    fn sheet(&self, p: Point) -> f64 {
        let k = self.n * PI;
        let x = p[0] - self.center_x;
        let f = self.gyroid(x, p[1], self.z);
        let fx = -k * (k * x).sin() * (k * p[1]).sin() + k * (k * self.z).cos() * (k * x).cos();
        let fy = k * (k * x).cos() * (k * p[1]).cos() - k * (k * p[1]).sin() * (k * self.z).sin();
        let g = fx.hypot(fy).max(0.25 * k);
        // positive inside the solid sheet
        0.5 * self.thickness - f.abs() / g
    }
}

impl LevelSet for GyroidScaffold {
    fn value(&self, p: Point) -> f64 {
        let s = self.smoothing;
        let block = self.block_half - (p[0] - self.center_x).abs();
        let off_axis = p[1].abs() - self.channel_radius;
        let solid = smooth_min(smooth_min(self.sheet(p), block, s), off_axis, s);
        let pipe = p[1].abs() - self.pipe_radius;
        smooth_max(pipe, solid, s)
    }
}

/// Named geometry parameters as read from configuration.
pub type GeometryParams = BTreeMap<String, f64>;

fn param(params: &GeometryParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Names accepted by [`case_geometry`].
pub const CASE_NAMES: &[&str] = &[
    "taylor_green_contour",
    "annulus",
    "circle",
    "channel_circle",
    "gyroid_scaffold",
    "half_space",
    "all_fluid",
];

/// Build one of the built-in geometries by name.
pub fn case_geometry(
    name: &str,
    params: &GeometryParams,
) -> Result<Arc<dyn LevelSet>, GeometryError> {
    let g: Arc<dyn LevelSet> = match name {
        "taylor_green_contour" => Arc::new(StreamContour::new(
            param(params, "n", 2.0),
            param(params, "level", -0.8),
        )),
        "annulus" => Arc::new(Annulus::new(
            [param(params, "cx", 0.5), param(params, "cy", 0.5)],
            param(params, "r_in", 0.25),
            param(params, "r_out", 0.475),
        )),
        "circle" => Arc::new(Circle::inside(
            [param(params, "cx", 0.5), param(params, "cy", 0.5)],
            param(params, "radius", 0.3),
        )),
        "channel_circle" => Arc::new(Circle::outside(
            [param(params, "cx", 1.0), param(params, "cy", 0.5)],
            param(params, "radius", 0.15),
        )),
        "gyroid_scaffold" => Arc::new(GyroidScaffold {
            n: param(params, "n", 2.0),
            z: param(params, "z", 0.1),
            thickness: param(params, "thickness", 1.0 / 6.0),
            pipe_radius: param(params, "pipe_radius", 0.95),
            center_x: param(params, "center_x", 4.0),
            block_half: param(params, "block_half", 0.95),
            channel_radius: param(params, "channel_radius", 0.175),
            smoothing: param(params, "smoothing", 0.05),
        }),
        "half_space" => Arc::new(HalfSpace::new(
            [param(params, "px", 0.5), param(params, "py", 0.0)],
            [param(params, "nx", 1.0), param(params, "ny", 0.0)],
        )),
        "all_fluid" => Arc::new(AllFluid),
        other => return Err(GeometryError::UnknownCase(other.to_string())),
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_zero_on_both_walls() {
        let a = Annulus::new([0.5, 0.5], 0.25, 0.475);
        assert!(a.value([0.75, 0.5]).abs() < 1e-15);
        assert!(a.value([0.5, 0.975]).abs() < 1e-15);
        assert!(a.value([0.5 + 0.3625, 0.5]) < 0.0);
    }

    #[test]
    fn gyroid_vanishes_at_origin() {
        let g = GyroidScaffold {
            n: 2.0,
            z: 0.1,
            thickness: 1.0 / 6.0,
            pipe_radius: 0.95,
            center_x: 4.0,
            block_half: 0.95,
            channel_radius: 0.175,
            smoothing: 0.05,
        };
        assert_eq!(g.gyroid(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn taylor_green_pocket_is_solid() {
        let tg = case_geometry("taylor_green_contour", &GeometryParams::new()).unwrap();
        // ψ(0.75, 0.25) = -1 < -0.8
        assert!(tg.value([0.75, 0.25]) > 0.0);
        assert!(tg.value([0.25, 0.25]) < 0.0);
    }

    #[test]
    fn unknown_case_is_rejected() {
        assert!(matches!(
            case_geometry("sphere", &GeometryParams::new()),
            Err(GeometryError::UnknownCase(_))
        ));
    }
}
