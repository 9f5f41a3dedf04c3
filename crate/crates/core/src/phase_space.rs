//! One-dimensional phase spaces and their uniform cell partitions.
//!
//! Two compact manifolds are supported: the circle `R/Z` and the unit
//! interval `[0, 1]`. Both have total Lebesgue length one, so normalized
//! Lebesgue measure and length coincide.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Circle,
    Interval,
}

impl Topology {
    /// Reduce a real number to a point of the manifold.
    ///
    /// Circle points are taken mod 1 into `[0, 1)`; interval points are
    /// clamped into `[0, 1]`.
    pub fn wrap(self, x: f64) -> f64 {
        match self {
            Topology::Circle => {
                let r = x.rem_euclid(1.0);
                // rem_euclid can round up to exactly 1.0 for tiny negative inputs
                if r >= 1.0 {
                    0.0
                } else {
                    r
                }
            }
            Topology::Interval => x.clamp(0.0, 1.0),
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Topology::Circle => (0.0..1.0).contains(&x),
            Topology::Interval => (0.0..=1.0).contains(&x),
        }
    }

    /// Geodesic distance between two points of the manifold.
    pub fn distance(self, a: f64, b: f64) -> f64 {
        match self {
            Topology::Circle => {
                let d = (a - b).abs().rem_euclid(1.0);
                d.min(1.0 - d)
            }
            Topology::Interval => (a.clamp(0.0, 1.0) - b.clamp(0.0, 1.0)).abs(),
        }
    }

    /// Signed displacement `b - a` measured along the shortest arc.
    pub fn displacement(self, a: f64, b: f64) -> f64 {
        match self {
            Topology::Circle => {
                let d = (b - a).rem_euclid(1.0);
                if d > 0.5 {
                    d - 1.0
                } else {
                    d
                }
            }
            Topology::Interval => b - a,
        }
    }

    /// Exclusive upper bound for admissible ball radii.
    pub fn max_radius(self) -> f64 {
        match self {
            Topology::Circle => 0.5,
            Topology::Interval => 1.0,
        }
    }

    pub fn validate_radius(self, radius: f64) -> Result<()> {
        if !(radius > 0.0 && radius < self.max_radius()) {
            return Err(param(
                "epsilon",
                format!(
                    "noise radius {radius} must satisfy 0 < epsilon < {} on the {}",
                    self.max_radius(),
                    self.name()
                ),
            ));
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Circle => "circle",
            Topology::Interval => "interval",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circle" | "s1" => Ok(Topology::Circle),
            "interval" => Ok(Topology::Interval),
            other => Err(param("topology", format!("unknown topology `{other}`"))),
        }
    }
}

/// Half-open subinterval `[start, end)` of `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }
}

/// The ball `B_eps(center)` intersected with the manifold.
///
/// On the circle this is a single arc, stored as one or two segments when
/// it wraps through 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: f64,
    pub radius: f64,
    topology: Topology,
    segments: Vec<Segment>,
}

impl Ball {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Lebesgue length of the ball within the manifold.
    pub fn length(&self) -> f64 {
        match self.topology {
            Topology::Circle => 2.0 * self.radius,
            Topology::Interval => (self.center + self.radius).min(1.0) - (self.center - self.radius).max(0.0),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        self.topology.distance(self.center, y) < self.radius && self.topology.contains(self.topology.wrap(y))
    }

    /// Lower and upper ends of the ball written in the lifted coordinate
    /// (circle) or clipped to `[0, 1]` (interval).
    pub fn lifted_bounds(&self) -> (f64, f64) {
        match self.topology {
            Topology::Circle => (self.center - self.radius, self.center + self.radius),
            Topology::Interval => (
                (self.center - self.radius).max(0.0),
                (self.center + self.radius).min(1.0),
            ),
        }
    }
}

/// Build `B_radius(center) ∩ M`.
pub fn ball(topology: Topology, center: f64, radius: f64) -> Result<Ball> {
    topology.validate_radius(radius)?;
    if !center.is_finite() {
        return Err(param("center", "ball center must be finite"));
    }
    let center = topology.wrap(center);
    let lo = center - radius;
    let hi = center + radius;
    let segments = match topology {
        Topology::Circle if lo < 0.0 => vec![
            Segment {
                start: lo + 1.0,
                end: 1.0,
            },
            Segment { start: 0.0, end: hi },
        ],
        Topology::Circle if hi > 1.0 => vec![
            Segment { start: lo, end: 1.0 },
            Segment {
                start: 0.0,
                end: hi - 1.0,
            },
        ],
        Topology::Circle => vec![Segment { start: lo, end: hi }],
        Topology::Interval => vec![Segment {
            start: lo.max(0.0),
            end: hi.min(1.0),
        }],
    };
    Ok(Ball {
        center,
        radius,
        topology,
        segments,
    })
}

/// Uniform partition of the manifold into `n_cells` cells `[iΔ, (i+1)Δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub topology: Topology,
    pub n_cells: usize,
}

impl Grid {
    pub fn new(topology: Topology, n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(param("n_cells", "grid needs at least one cell"));
        }
        if n_cells > u32::MAX as usize {
            return Err(param("n_cells", "grid too large"));
        }
        Ok(Grid { topology, n_cells })
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_cells as f64
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }

    pub fn left_edge(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    /// Index of the cell containing `x` (after reduction into the manifold).
    pub fn cell_of(&self, x: f64) -> usize {
        let x = self.topology.wrap(x);
        let i = (x * self.n_cells as f64).floor() as usize;
        i.min(self.n_cells - 1)
    }

    /// Lebesgue length of `ball ∩ cell_i` for every cell.
    pub fn cell_overlap(&self, ball: &Ball) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cells];
        for (i, len) in self.overlap_entries(ball) {
            out[i] += len;
        }
        out
    }

    /// Sparse form of [`Grid::cell_overlap`]: `(cell, length)` pairs with
    /// positive overlap, in order along each segment.
    pub fn overlap_entries(&self, ball: &Ball) -> Vec<(usize, f64)> {
        let n = self.n_cells as f64;
        let mut out = Vec::new();
        for seg in ball.segments() {
            if seg.length() <= 0.0 {
                continue;
            }
            let first = ((seg.start * n).floor().max(0.0) as usize).min(self.n_cells - 1);
            let last = (((seg.end * n).ceil() as usize).max(first + 1)).min(self.n_cells);
            for i in first..last {
                let lo = seg.start.max(self.left_edge(i));
                let hi = seg.end.min(self.left_edge(i + 1));
                let len = hi - lo;
                // slivers below this are round-off from edge arithmetic
                if len > 1e-15 {
                    out.push((i, len));
                }
            }
        }
        out
    }

    /// `g` equally spaced points `(k + 1/2)/g`, used as initial states.
    pub fn uniform_points(g: usize) -> Vec<f64> {
        Self::offset_points(g, 0.5)
    }

    /// `g` equally spaced points `(k + offset)/g`.
    pub fn offset_points(g: usize, offset: f64) -> Vec<f64> {
        (0..g).map(|k| (k as f64 + offset) / g as f64).collect()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(crate::Error::GridMismatch(format!(
                "{} cells on the {} vs {} cells on the {}",
                self.n_cells,
                self.topology.name(),
                other.n_cells,
                other.topology.name()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ball_examples() {
        let b = ball(Topology::Circle, 0.5, 0.1).unwrap();
        assert_eq!(b.segments().len(), 1);
        assert!(close(b.segments()[0].start, 0.4) && close(b.segments()[0].end, 0.6));
        assert!(close(b.length(), 0.2));

        let b = ball(Topology::Circle, 0.05, 0.1).unwrap();
        let segs = b.segments();
        assert_eq!(segs.len(), 2);
        assert!(close(segs[0].start, 0.95) && close(segs[0].end, 1.0));
        assert!(close(segs[1].start, 0.0) && close(segs[1].end, 0.15));
        assert!(close(b.length(), 0.2));

        let b = ball(Topology::Interval, 0.05, 0.1).unwrap();
        assert_eq!(b.segments().len(), 1);
        assert!(close(b.segments()[0].start, 0.0) && close(b.segments()[0].end, 0.15));
        assert!(close(b.length(), 0.15));
    }

    #[test]
    fn ball_rejects_bad_radius() {
        assert!(ball(Topology::Circle, 0.5, 0.0).is_err());
        assert!(ball(Topology::Circle, 0.5, 0.5).is_err());
        assert!(ball(Topology::Circle, 0.5, -0.1).is_err());
        assert!(ball(Topology::Interval, 0.5, 1.0).is_err());
        assert!(ball(Topology::Interval, 0.5, 0.7).is_ok());
    }

    #[test]
    fn overlap_examples() {
        let g = Grid::new(Topology::Circle, 10).unwrap();
        let ov = g.cell_overlap(&ball(Topology::Circle, 0.5, 0.1).unwrap());
        for (i, v) in ov.iter().enumerate() {
            let want = if i == 4 || i == 5 { 0.1 } else { 0.0 };
            assert!(close(*v, want), "cell {i}: {v}");
        }
        let ov = g.cell_overlap(&ball(Topology::Circle, 0.5, 0.05).unwrap());
        assert!(close(ov[4], 0.05) && close(ov[5], 0.05));
        assert!(close(ov.iter().sum::<f64>(), 0.1));

        let g = Grid::new(Topology::Interval, 4).unwrap();
        let ov = g.cell_overlap(&ball(Topology::Interval, 0.05, 0.1).unwrap());
        assert!(close(ov[0], 0.15));
        assert!(ov[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cell_lookup() {
        let g = Grid::new(Topology::Circle, 10).unwrap();
        assert_eq!(g.cell_of(0.34), 3);
        assert_eq!(g.cell_of(0.999), 9);
        assert_eq!(g.cell_of(1.0), 0);
        assert_eq!(g.cell_of(-0.01), 9);
        let g = Grid::new(Topology::Interval, 4).unwrap();
        assert_eq!(g.cell_of(1.0), 3);
        assert_eq!(g.cell_of(0.0), 0);
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(Topology::Circle.wrap(-1e-20), 0.0);
        assert_eq!(Topology::Circle.wrap(1.0), 0.0);
        assert!(close(Topology::Circle.wrap(2.25), 0.25));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn overlap_conserves_length(center in 0.0f64..1.0, eps in 1e-4f64..0.4999, circle: bool, n in 1usize..400) {
            let topo = if circle { Topology::Circle } else { Topology::Interval };
            let g = Grid::new(topo, n).unwrap();
            let b = ball(topo, center, eps).unwrap();
            let ov = g.cell_overlap(&b);
            let total: f64 = ov.iter().sum();
            prop_assert!((total - b.length()).abs() <= 1e-12);
            prop_assert!(ov.iter().all(|&v| v >= 0.0 && v <= g.width() + 1e-15));
            if circle {
                prop_assert_eq!(b.length(), 2.0 * eps);
            }
        }

        #[test]
        fn circle_distance_is_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let d = Topology::Circle.distance(a, b);
            prop_assert_eq!(d, Topology::Circle.distance(b, a));
            prop_assert!(d <= 0.5);
            prop_assert!(d >= 0.0);
        }
    }
}
