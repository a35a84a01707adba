//! Multi-indices and geometric moment sets.

use std::cmp::Ordering;
use std::fmt;

use super::Point;

/// Exponent pair `q = (q_x, q_y)` for the monomial `(x - x̄)^q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub [u32; 2]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0]);

    pub fn new(qx: u32, qy: u32) -> Self {
        MultiIndex([qx, qy])
    }

    /// Total degree `|q|`.
    pub fn degree(&self) -> u32 {
        self.0[0] + self.0[1]
    }

    /// `q! = q_x! q_y!`
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| (1..=k).map(f64::from).product::<f64>()).product()
    }

    /// Position in the graded ordering `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
    pub fn position(&self) -> usize {
        let n = self.degree() as usize;
        n * (n + 1) / 2 + (n - self.0[0] as usize)
    }

    /// `q - e_d`, or `None` when `q_d = 0`.
    pub fn lower(&self, d: usize) -> Option<MultiIndex> {
        if self.0[d] == 0 {
            None
        } else {
            let mut q = self.0;
            q[d] -= 1;
            Some(MultiIndex(q))
        }
    }

    /// Evaluate the monomial `dx^q` for an offset `dx = x - x̄`.
    pub fn eval(&self, dx: Point) -> f64 {
        powi(dx[0], self.0[0]) * powi(dx[1], self.0[1])
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.position().cmp(&other.position())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

fn powi(x: f64, k: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..k {
        r *= x;
    }
    r
}

/// Number of multi-indices with `|q| <= degree` in two dimensions.
pub fn basis_len(degree: u32) -> usize {
    let d = degree as usize;
    (d + 1) * (d + 2) / 2
}

/// All multi-indices with `|q| <= max_degree`, in graded order.
pub fn multi_index_set(max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(basis_len(max_degree));
    for n in 0..=max_degree {
        for qx in (0..=n).rev() {
            out.push(MultiIndex::new(qx, n - qx));
        }
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * f64::from(n - i) / f64::from(i + 1);
    }
    r
}

/// Moments `m^q(x̄) = ∫ (x - x̄)^q w(x) dA` for every `|q| <= degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    center: Point,
    degree: u32,
    values: Vec<f64>,
}

impl MomentSet {
    pub fn zeros(center: Point, degree: u32) -> Self {
        MomentSet {
            center,
            degree,
            values: vec![0.0; basis_len(degree)],
        }
    }

    /// Accumulate moments from weighted samples `(x, w)`.
    pub fn from_samples<I>(center: Point, degree: u32, samples: I) -> Self
    where
        I: IntoIterator<Item = (Point, f64)>,
    {
        let mut ms = MomentSet::zeros(center, degree);
        let mut px = vec![0.0; degree as usize + 1];
        let mut py = vec![0.0; degree as usize + 1];
        for (x, w) in samples {
            let dx = x[0] - center[0];
            let dy = x[1] - center[1];
            px[0] = 1.0;
            py[0] = 1.0;
            for k in 1..=degree as usize {
                px[k] = px[k - 1] * dx;
                py[k] = py[k - 1] * dy;
            }
            let mut idx = 0;
            for n in 0..=degree as usize {
                for qx in (0..=n).rev() {
                    ms.values[idx] += w * px[qx] * py[n - qx];
                    idx += 1;
                }
            }
        }
        ms
    }

    /// Closed-form moments of the full box `[-a/2, a/2] x [-b/2, b/2]` about its center.
    pub fn rectangle(center: Point, widths: [f64; 2], degree: u32) -> Self {
        let line = |a: f64, k: u32| -> f64 {
            if k % 2 == 1 {
                0.0
            } else {
                2.0 * powi(0.5 * a, k + 1) / f64::from(k + 1)
            }
        };
        let mut ms = MomentSet::zeros(center, degree);
        for q in multi_index_set(degree) {
            ms.values[q.position()] = line(widths[0], q.0[0]) * line(widths[1], q.0[1]);
        }
        ms
    }

    /// Closed-form moments of a full grid-aligned segment of length `len` normal to `axis`.
    pub fn segment(center: Point, axis: usize, len: f64, degree: u32) -> Self {
        let mut ms = MomentSet::zeros(center, degree);
        let along = 1 - axis;
        for q in multi_index_set(degree) {
            if q.0[axis] != 0 {
                continue;
            }
            let k = q.0[along];
            if k % 2 == 0 {
                ms.values[q.position()] = 2.0 * powi(0.5 * len, k + 1) / f64::from(k + 1);
            }
        }
        ms
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Zeroth moment (area or length).
    pub fn measure(&self) -> f64 {
        self.values[0]
    }

    /// Moment for `q`; zero for indices beyond the stored degree.
    pub fn get(&self, q: MultiIndex) -> f64 {
        if q.degree() > self.degree {
            0.0
        } else {
            self.values[q.position()]
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for v in &mut self.values {
            *v *= s;
        }
        self
    }

    /// Re-center the moments using the binomial shift
    /// `m^q(x̄') = Σ_{p <= q} C(q,p) (x̄ - x̄')^(q-p) m^p(x̄)`.
    pub fn translate(&self, new_center: Point) -> MomentSet {
        let shift = [
            self.center[0] - new_center[0],
            self.center[1] - new_center[1],
        ];
        let deg = self.degree;
        let mut sx = vec![1.0; deg as usize + 1];
        let mut sy = vec![1.0; deg as usize + 1];
        for k in 1..=deg as usize {
            sx[k] = sx[k - 1] * shift[0];
            sy[k] = sy[k - 1] * shift[1];
        }
        let mut out = MomentSet::zeros(new_center, deg);
        for q in multi_index_set(deg) {
            let mut acc = 0.0;
            for px in 0..=q.0[0] {
                let cx = binomial(q.0[0], px) * sx[(q.0[0] - px) as usize];
                for py in 0..=q.0[1] {
                    let cy = binomial(q.0[1], py) * sy[(q.0[1] - py) as usize];
                    acc += cx * cy * self.values[MultiIndex::new(px, py).position()];
                }
            }
            out.values[q.position()] = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order_and_counts() {
        assert_eq!(multi_index_set(0), vec![MultiIndex::ZERO]);
        assert_eq!(multi_index_set(3).len(), 10);
        assert_eq!(multi_index_set(4).len(), 15);
        let set = multi_index_set(5);
        for (k, q) in set.iter().enumerate() {
            assert_eq!(q.position(), k);
        }
        assert!(set.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(MultiIndex::new(2, 3).factorial(), 12.0);
    }

    #[test]
    fn regular_cell_moments() {
        let h = 0.125;
        let m = MomentSet::rectangle([0.3, 0.7], [h, h], 5);
        assert_eq!(m.get(MultiIndex::ZERO), h * h);
        assert_eq!(m.get(MultiIndex::new(1, 0)), 0.0);
        assert!((m.get(MultiIndex::new(2, 0)) - h.powi(4) / 12.0).abs() < 1e-18);
    }

    #[test]
    fn shift_of_second_moment() {
        let h = 0.25;
        let m = MomentSet::rectangle([0.0, 0.0], [h, h], 4);
        // moments about a center displaced by -h in x
        let t = m.translate([-h, 0.0]);
        let expect = 13.0 * h.powi(4) / 12.0;
        assert!((t.get(MultiIndex::new(2, 0)) - expect).abs() < 1e-15);
        assert_eq!(t.measure(), m.measure());
        assert_eq!(m.translate(m.center()), m);
    }
}
