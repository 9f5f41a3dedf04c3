//! Deterministic zero-noise maps `f : M -> M` and their orbits.
//!
//! Maps are closed-form evaluators. Orbits of the integer-slope shift maps
//! (`k x mod 1` and the tent map) are generated on base-`k` digit windows
//! instead of by repeated floating-point evaluation: every `f64` is a dyadic
//! rational, so `2x mod 1` evaluated in floating point reaches the fixed
//! point 0 after at most ~1075 steps from any start, and typically after 53.
//! The digit window holds the leading digits of the start point and is fed
//! with seeded random digits beyond `f64` precision, so a start point stands
//! for a Lebesgue-typical real within one ulp of it. The tail seed is a
//! hash of the start point's bits, so orbits are reproducible.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::phase_space::Topology;

const TAIL_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `k x mod 1` on the circle.
    Multiply { factor: u32 },
    /// `2x + alpha sin(2 pi x) mod 1` on the circle, expanding for `|alpha| < 1/(2 pi)`.
    ExpandingPerturbed { alpha: f64 },
    /// `factor * x` on the interval; 0 is a global sink.
    Contraction { factor: f64 },
    /// `x + amplitude sin(4 pi x) mod 1` on the circle: sinks at 1/4 and 3/4,
    /// sources at 0 and 1/2 for the catalog amplitude.
    TwoSink { amplitude: f64 },
    /// `1 - |1 - 2x|` on the interval.
    Tent,
    /// Linear interpolation through `(x_i, y_i)`, `x_0 = 0`, `x_k = 1`.
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub name: String,
    pub topology: Topology,
    pub kind: MapKind,
}

impl MapSpec {
    pub fn doubling() -> Self {
        Self::multiply("doubling", 2)
    }

    pub fn triple() -> Self {
        Self::multiply("triple", 3)
    }

    fn multiply(name: &str, factor: u32) -> Self {
        MapSpec {
            name: name.into(),
            topology: Topology::Circle,
            kind: MapKind::Multiply { factor },
        }
    }

    pub fn expanding_perturbed(alpha: f64) -> Result<Self> {
        if !(alpha.abs() < 1.0 / (2.0 * PI)) {
            return Err(param(
                "alpha",
                format!("|alpha| must be below 1/(2 pi) ~ 0.159 for expansion, got {alpha}"),
            ));
        }
        Ok(MapSpec {
            name: "expanding_perturbed".into(),
            topology: Topology::Circle,
            kind: MapKind::ExpandingPerturbed { alpha },
        })
    }

    pub fn single_sink() -> Self {
        MapSpec {
            name: "single_sink".into(),
            topology: Topology::Interval,
            kind: MapKind::Contraction { factor: 0.5 },
        }
    }

    pub fn two_sink() -> Self {
        MapSpec {
            name: "two_sink".into(),
            topology: Topology::Circle,
            kind: MapKind::TwoSink { amplitude: 0.1 },
        }
    }

    pub fn tent() -> Self {
        MapSpec {
            name: "tent".into(),
            topology: Topology::Interval,
            kind: MapKind::Tent,
        }
    }

    /// Piecewise-linear map through the given breakpoints.
    pub fn custom(topology: Topology, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(param("map.custom", "need at least two breakpoints"));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(param("map.custom", "breakpoints must be finite"));
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(param("map.custom", "first x must be 0 and last x must be 1"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(param("map.custom", "x coordinates must be strictly increasing"));
        }
        match topology {
            Topology::Interval => {
                if points.iter().any(|&(_, y)| !(0.0..=1.0).contains(&y)) {
                    return Err(param("map.custom", "interval maps need every y in [0, 1]"));
                }
            }
            Topology::Circle => {
                let jump = points[points.len() - 1].1 - points[0].1;
                if (jump - jump.round()).abs() > 1e-12 {
                    return Err(param(
                        "map.custom",
                        format!("circle maps need y_k - y_0 to be an integer, got {jump}"),
                    ));
                }
            }
        }
        Ok(MapSpec {
            name: "custom".into(),
            topology,
            kind: MapKind::PiecewiseLinear { points },
        })
    }

    /// Look up a catalog map by name. `alpha` only applies to
    /// `expanding_perturbed` (default 0.1).
    pub fn by_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        match name {
            "doubling" => Ok(Self::doubling()),
            "triple" => Ok(Self::triple()),
            "expanding_perturbed" => Self::expanding_perturbed(alpha.unwrap_or(0.1)),
            "single_sink" => Ok(Self::single_sink()),
            "two_sink" => Ok(Self::two_sink()),
            "tent" => Ok(Self::tent()),
            other => Err(param(
                "map.name",
                format!(
                    "unknown map `{other}` (catalog: doubling, triple, expanding_perturbed, single_sink, two_sink, tent, custom)"
                ),
            )),
        }
    }

    /// Named real parameters of the map.
    pub fn params(&self) -> Vec<(String, f64)> {
        match &self.kind {
            MapKind::Multiply { factor } => vec![("factor".into(), *factor as f64)],
            MapKind::ExpandingPerturbed { alpha } => vec![("alpha".into(), *alpha)],
            MapKind::Contraction { factor } => vec![("factor".into(), *factor)],
            MapKind::TwoSink { amplitude } => vec![("amplitude".into(), *amplitude)],
            MapKind::Tent => vec![],
            MapKind::PiecewiseLinear { points } => points
                .iter()
                .enumerate()
                .flat_map(|(i, &(x, y))| [(format!("x{i}"), x), (format!("y{i}"), y)])
                .collect(),
        }
    }

    /// `f(x)`, reduced into the manifold.
    pub fn eval(&self, x: f64) -> f64 {
        self.topology.wrap(self.lift(x))
    }

    /// `f(x)` before reduction mod 1 (identical to `eval` on the interval).
    pub fn lift(&self, x: f64) -> f64 {
        match &self.kind {
            MapKind::Multiply { factor } => *factor as f64 * x,
            MapKind::ExpandingPerturbed { alpha } => 2.0 * x + alpha * (2.0 * PI * x).sin(),
            MapKind::Contraction { factor } => factor * x,
            MapKind::TwoSink { amplitude } => x + amplitude * (4.0 * PI * x).sin(),
            MapKind::Tent => 1.0 - (1.0 - 2.0 * x).abs(),
            MapKind::PiecewiseLinear { points } => {
                let k = segment_index(points, x);
                let (x0, y0) = points[k];
                let (x1, y1) = points[k + 1];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        Some(match &self.kind {
            MapKind::Multiply { factor } => *factor as f64,
            MapKind::ExpandingPerturbed { alpha } => 2.0 + 2.0 * PI * alpha * (2.0 * PI * x).cos(),
            MapKind::Contraction { factor } => *factor,
            MapKind::TwoSink { amplitude } => 1.0 + 4.0 * PI * amplitude * (4.0 * PI * x).cos(),
            MapKind::Tent => {
                if x < 0.5 {
                    2.0
                } else {
                    -2.0
                }
            }
            MapKind::PiecewiseLinear { points } => {
                let k = segment_index(points, x);
                (points[k + 1].1 - points[k].1) / (points[k + 1].0 - points[k].0)
            }
        })
    }

    /// `log |f'(x)|`, the Lyapunov integrand.
    pub fn log_abs_derivative(&self, x: f64) -> Result<f64> {
        let d = self
            .derivative(x)
            .ok_or_else(|| Error::Unsupported(format!("map `{}` has no derivative", self.name)))?;
        if d == 0.0 {
            return Err(Error::Singularity { x });
        }
        Ok(d.abs().ln())
    }

    pub fn is_expanding(&self) -> bool {
        match &self.kind {
            MapKind::Multiply { factor } => *factor >= 2,
            MapKind::ExpandingPerturbed { alpha } => alpha.abs() < 1.0 / (2.0 * PI),
            MapKind::Tent => true,
            MapKind::PiecewiseLinear { points } => points
                .windows(2)
                .all(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs() > 1.0),
            MapKind::Contraction { .. } | MapKind::TwoSink { .. } => false,
        }
    }

    /// Interior breakpoints separating the monotone (and, on the circle,
    /// injective) branches of the map.
    pub fn branch_partition(&self) -> Vec<f64> {
        match &self.kind {
            MapKind::Multiply { factor } => (1..*factor).map(|i| i as f64 / *factor as f64).collect(),
            // the lift is increasing and equals 1 exactly at x = 1/2
            MapKind::ExpandingPerturbed { .. } => vec![0.5],
            MapKind::Contraction { .. } => vec![],
            MapKind::TwoSink { amplitude } => {
                let c = -1.0 / (4.0 * PI * amplitude);
                if c.abs() > 1.0 {
                    return vec![];
                }
                let a = c.acos();
                let mut pts: Vec<f64> = [a, 2.0 * PI - a, 2.0 * PI + a, 4.0 * PI - a]
                    .iter()
                    .map(|t| t / (4.0 * PI))
                    .collect();
                pts.dedup();
                pts
            }
            MapKind::Tent => vec![0.5],
            MapKind::PiecewiseLinear { points } => pl_partition(self.topology, points),
        }
    }

    /// Branch index of `x` under [`MapSpec::branch_partition`].
    pub fn symbol(&self, partition: &[f64], x: f64) -> usize {
        partition.partition_point(|&b| b <= x)
    }

    /// Iterator over `f(x0), f^2(x0), ...`.
    pub fn orbit(&self, x0: f64) -> Orbit<'_> {
        let x0 = self.topology.wrap(x0);
        let state = match self.kind {
            MapKind::Multiply { factor } if factor >= 2 => OrbitState::Shift(DigitShift::new(factor as u64, x0, false)),
            MapKind::Tent => OrbitState::Shift(DigitShift::new(2, x0, true)),
            _ => OrbitState::Float(x0),
        };
        Orbit { map: self, state }
    }

    /// The first `n` iterates `f(x0), ..., f^n(x0)`.
    pub fn orbit_points(&self, x0: f64, n: usize) -> Vec<f64> {
        self.orbit(x0).take(n).collect()
    }
}

/// The built-in catalog of test maps.
pub fn builtin_catalog() -> Vec<MapSpec> {
    vec![
        MapSpec::doubling(),
        MapSpec::triple(),
        MapSpec::expanding_perturbed(0.1).expect("catalog alpha is admissible"),
        MapSpec::single_sink(),
        MapSpec::two_sink(),
        MapSpec::tent(),
    ]
}

fn segment_index(points: &[(f64, f64)], x: f64) -> usize {
    let k = points.partition_point(|&(px, _)| px <= x);
    k.saturating_sub(1).min(points.len() - 2)
}

fn pl_partition(topology: Topology, points: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::new();
    let slopes: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    for k in 1..slopes.len() {
        if slopes[k].signum() != slopes[k - 1].signum() {
            out.push(points[k].0);
        }
    }
    if topology == Topology::Circle {
        // preimages of integer levels of the lift
        for w in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let (lo, hi) = (y0.min(y1), y0.max(y1));
            let mut level = lo.floor() + 1.0;
            while level < hi {
                out.push(x0 + (level - y0) * (x1 - x0) / (y1 - y0));
                level += 1.0;
            }
        }
        for &(x, y) in &points[1..points.len() - 1] {
            if y.fract() == 0.0 {
                out.push(x);
            }
        }
    }
    out.retain(|&b| b > 0.0 && b < 1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

enum OrbitState {
    Float(f64),
    Shift(DigitShift),
}

/// Zero-noise orbit iterator; yields `f^j(x0)` for `j = 1, 2, ...`.
pub struct Orbit<'a> {
    map: &'a MapSpec,
    state: OrbitState,
}

impl Iterator for Orbit<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(match &mut self.state {
            OrbitState::Float(x) => {
                *x = self.map.eval(*x);
                *x
            }
            OrbitState::Shift(s) => {
                s.step();
                s.value()
            }
        })
    }
}

/// Base-`k` digit window for the shift maps.
///
/// `window` holds the next `width` digits `d_{j+1} ... d_{j+width}` of the
/// current point. For the tent map, `flip` records the parity of the
/// complement operations applied so far.
struct DigitShift {
    base: u64,
    lead: u64,
    full: u64,
    window: u64,
    scale: f64,
    tent: bool,
    flip: bool,
    rng: ChaCha8Rng,
}

impl DigitShift {
    fn new(base: u64, x: f64, tent: bool) -> Self {
        let mut width = 1u32;
        while base.checked_pow(width + 1).is_some_and(|p| p <= 1 << 63) {
            width += 1;
        }
        let full = base.pow(width);
        let lead = full / base;
        let precise = (52.0 / (base as f64).log2()).floor() as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(x.to_bits() ^ TAIL_SALT ^ base.rotate_left(32));
        let mut frac = x.clamp(0.0, BELOW_ONE);
        let mut window = 0u64;
        for i in 0..width {
            let d = if i < precise {
                let y = frac * base as f64;
                let d = (y.floor() as u64).min(base - 1);
                frac = y - d as f64;
                d
            } else {
                rng.gen_range(0..base)
            };
            window = window * base + d;
        }
        DigitShift {
            base,
            lead,
            full,
            window,
            scale: 1.0 / full as f64,
            tent,
            flip: false,
            rng,
        }
    }

    fn step(&mut self) {
        let d = self.window / self.lead;
        self.window = (self.window - d * self.lead) * self.base + self.rng.gen_range(0..self.base);
        if self.tent && (d == 1) != self.flip {
            self.flip = !self.flip;
        }
    }

    fn value(&self) -> f64 {
        let w = if self.flip {
            self.full - 1 - self.window
        } else {
            self.window
        };
        (w as f64 * self.scale).min(BELOW_ONE)
    }
}
