//! Probability measures on a grid and the Wasserstein-1 metric.
//!
//! W1 is the weak* metric used throughout. On the interval it is the L1
//! distance between cumulative distribution functions; on the circle the
//! cumulative difference is additionally shifted by its median, which is
//! the optimal rotation of the transport plan.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::phase_space::{Grid, Topology};

pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Validate a probability vector on `grid`.
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n_cells {
            return Err(param(
                "weights",
                format!("expected {} weights, got {}", grid.n_cells, weights.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(param("weights", "weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(param("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(GridMeasure { grid, weights })
    }

    /// Normalize non-negative masses to a probability vector.
    pub fn from_masses(grid: Grid, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n_cells {
            return Err(param(
                "weights",
                format!("expected {} weights, got {}", grid.n_cells, weights.len()),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(param("weights", "masses must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(param("weights", "total mass must be positive"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(GridMeasure { grid, weights })
    }

    /// Dirac mass on the cell containing `x`.
    pub fn dirac(grid: Grid, x: f64) -> Self {
        let mut weights = vec![0.0; grid.n_cells];
        weights[grid.cell_of(x)] = 1.0;
        GridMeasure { grid, weights }
    }

    /// Normalized Lebesgue measure.
    pub fn lebesgue(grid: Grid) -> Self {
        GridMeasure {
            grid,
            weights: vec![1.0 / grid.n_cells as f64; grid.n_cells],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Midpoint-rule integral of `values` (sampled at cell centers).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Integral of a function evaluated at cell centers.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| w * f(self.grid.center(i)))
            .sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn wasserstein1(&self, other: &GridMeasure) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(wasserstein1_weights(self.grid.topology, &self.weights, &other.weights))
    }

    /// Weighted mean `(a * self + b * other) / (a + b)`.
    pub fn blend(&self, a: f64, other: &GridMeasure, b: f64) -> Result<GridMeasure> {
        self.grid.ensure_same(&other.grid)?;
        let masses = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridMeasure::from_masses(self.grid, masses)
    }

    /// CSV rows `cell_index,cell_center,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_index", "cell_center", "weight"])?;
        for (i, weight) in self.weights.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(self.grid.center(i)), fmt_f64(*weight)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON object with grid metadata and the weight array.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "topology": self.grid.topology,
            "n_cells": self.grid.n_cells,
            "weights": self.weights,
        })
    }
}

/// Floats in output files: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Closed-form W1 between two weight vectors on the same uniform grid.
pub fn wasserstein1_weights(topology: Topology, p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let n = p.len();
    let width = 1.0 / n as f64;
    let mut acc = 0.0;
    let cumulative: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            acc += a - b;
            acc
        })
        .collect();
    let shift = match topology {
        Topology::Interval => 0.0,
        Topology::Circle => median(&cumulative),
    };
    width * cumulative.iter().map(|d| (d - shift).abs()).sum::<f64>()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    // any point between the two middle order statistics minimizes the L1 sum
    *m
}

/// A finite family of grid measures, standing in for a compact set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub members: Vec<GridMeasure>,
}

impl MeasureSet {
    pub fn new(members: Vec<GridMeasure>) -> Self {
        MeasureSet { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distance to the set, with the convention `+inf` for the empty set.
    pub fn distance_or_inf(&self, mu: &GridMeasure) -> Result<f64> {
        let mut best = f64::INFINITY;
        for m in &self.members {
            best = best.min(mu.wasserstein1(m)?);
        }
        Ok(best)
    }
}

/// `min_{k in K} W1(mu, k)`.
pub fn dist_to_set(mu: &GridMeasure, set: &MeasureSet) -> Result<f64> {
    if set.is_empty() {
        return Err(param("K", "distance to an empty measure set"));
    }
    set.distance_or_inf(mu)
}

/// Greedy clusters with running-mean representatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub representatives: Vec<GridMeasure>,
    pub counts: Vec<usize>,
}

impl Clustering {
    pub fn into_set(self) -> MeasureSet {
        MeasureSet::new(self.representatives)
    }

    /// Repeatedly merge the closest pair of representatives lying within
    /// `radius`, weighting by member counts, until all pairs are separated.
    pub fn consolidate(mut self, radius: f64) -> Result<Clustering> {
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.representatives.len() {
                for j in i + 1..self.representatives.len() {
                    let d = self.representatives[i].wasserstein1(&self.representatives[j])?;
                    if d <= radius && best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
            let Some((_, i, j)) = best else {
                return Ok(self);
            };
            let (ci, cj) = (self.counts[i] as f64, self.counts[j] as f64);
            let merged = self.representatives[i].blend(ci, &self.representatives[j], cj)?;
            self.representatives[i] = merged;
            self.counts[i] += self.counts[j];
            self.representatives.remove(j);
            self.counts.remove(j);
        }
    }
}

/// Scan `samples` in order; a sample within `radius` of an existing
/// representative joins the nearest one (whose representative becomes the
/// running mean), otherwise it founds a new cluster.
pub fn cluster_measures(samples: &[GridMeasure], radius: f64) -> Result<Clustering> {
    if !(radius > 0.0) {
        return Err(param("radius", "cluster radius must be positive"));
    }
    let mut reps: Vec<GridMeasure> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for s in samples {
        let mut nearest: Option<(usize, f64)> = None;
        for (k, r) in reps.iter().enumerate() {
            let d = s.wasserstein1(r)?;
            if d < radius && nearest.is_none_or(|(_, bd)| d < bd) {
                nearest = Some((k, d));
            }
        }
        match nearest {
            Some((k, _)) => {
                let c = counts[k] as f64;
                reps[k] = reps[k].blend(c, s, 1.0)?;
                counts[k] += 1;
            }
            None => {
                reps.push(s.clone());
                counts.push(1);
            }
        }
    }
    Ok(Clustering {
        representatives: reps,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle(n: usize) -> Grid {
        Grid::new(Topology::Circle, n).unwrap()
    }

    fn interval(n: usize) -> Grid {
        Grid::new(Topology::Interval, n).unwrap()
    }

    fn random_measure(rng: &mut impl Rng, grid: Grid) -> GridMeasure {
        let masses = (0..grid.n_cells)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
            .collect::<Vec<_>>();
        let masses = if masses.iter().all(|&m| m == 0.0) {
            vec![1.0; grid.n_cells]
        } else {
            masses
        };
        GridMeasure::from_masses(grid, masses).unwrap()
    }

    #[test]
    fn dirac_and_lebesgue() {
        assert_eq!(GridMeasure::dirac(circle(10), 0.34).weights()[3], 1.0);
        assert_eq!(GridMeasure::dirac(circle(10), 0.999).weights()[9], 1.0);
        assert_eq!(GridMeasure::dirac(interval(4), 0.0).weights()[0], 1.0);
        assert_eq!(GridMeasure::lebesgue(interval(4)).weights(), &[0.25; 4]);
        assert_eq!(GridMeasure::lebesgue(interval(1)).weights(), &[1.0]);
        let m = GridMeasure::lebesgue(interval(1000));
        assert!((m.integrate_fn(|x| x) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn validation() {
        assert!(GridMeasure::new(interval(2), vec![0.5, 0.6]).is_err());
        assert!(GridMeasure::new(interval(2), vec![1.5, -0.5]).is_err());
        assert!(GridMeasure::new(interval(3), vec![0.5, 0.5]).is_err());
        assert!(GridMeasure::from_masses(interval(2), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn w1_examples() {
        let g = circle(10);
        let d0 = GridMeasure::dirac(g, 0.0);
        assert_eq!(d0.wasserstein1(&d0).unwrap(), 0.0);
        assert!((d0.wasserstein1(&GridMeasure::dirac(g, 0.5)).unwrap() - 0.5).abs() < 1e-12);
        assert!((d0.wasserstein1(&GridMeasure::dirac(g, 0.9)).unwrap() - 0.1).abs() < 1e-12);
        let g = interval(10);
        let a = GridMeasure::dirac(g, 0.0);
        assert!((a.wasserstein1(&GridMeasure::dirac(g, 0.5)).unwrap() - 0.5).abs() < 1e-12);
        assert!(a.wasserstein1(&GridMeasure::dirac(circle(10), 0.5)).is_err());
    }

    #[test]
    fn set_distance() {
        let g = circle(100);
        let k = MeasureSet::new(vec![GridMeasure::dirac(g, 0.25), GridMeasure::dirac(g, 0.75)]);
        let nu = GridMeasure::dirac(g, 0.3);
        assert!((dist_to_set(&nu, &k).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(dist_to_set(&k.members[0], &k).unwrap(), 0.0);
        let single = MeasureSet::new(vec![GridMeasure::lebesgue(g)]);
        assert_eq!(
            dist_to_set(&nu, &single).unwrap(),
            nu.wasserstein1(&single.members[0]).unwrap()
        );
        assert!(dist_to_set(&nu, &MeasureSet::default()).is_err());
        assert_eq!(MeasureSet::default().distance_or_inf(&nu).unwrap(), f64::INFINITY);
    }

    #[test]
    fn clustering_examples() {
        let g = circle(100);
        let m = GridMeasure::dirac(g, 0.4);
        let c = cluster_measures(&vec![m.clone(); 5], 0.1).unwrap();
        assert_eq!(c.representatives, vec![m]);
        assert_eq!(c.counts, vec![5]);

        let two = vec![GridMeasure::dirac(g, 0.25), GridMeasure::dirac(g, 0.75)];
        assert_eq!(cluster_measures(&two, 0.1).unwrap().representatives.len(), 2);
        assert!(cluster_measures(&two, 0.0).is_err());
    }

    #[test]
    fn jittered_lebesgue_forms_one_cluster() {
        let g = circle(200);
        let leb = GridMeasure::lebesgue(g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<_> = (0..100)
            .map(|_| {
                let masses = (0..200).map(|_| 1.0 + 0.2 * (rng.gen::<f64>() - 0.5)).collect();
                GridMeasure::from_masses(g, masses).unwrap()
            })
            .collect();
        // confirm the premise before clustering
        for a in &samples {
            for b in &samples {
                assert!(a.wasserstein1(b).unwrap() < 0.01);
            }
        }
        let c = cluster_measures(&samples, 0.05).unwrap();
        assert_eq!(c.representatives.len(), 1);
        assert!(c.representatives[0].wasserstein1(&leb).unwrap() < 0.01);
    }

    #[test]
    fn consolidation_merges_close_clusters() {
        let g = circle(100);
        let c = Clustering {
            representatives: vec![
                GridMeasure::dirac(g, 0.20),
                GridMeasure::dirac(g, 0.22),
                GridMeasure::dirac(g, 0.70),
            ],
            counts: vec![3, 1, 2],
        };
        let c = c.consolidate(0.03).unwrap();
        assert_eq!(c.counts, vec![4, 2]);
    }

    #[test]
    fn csv_and_json() {
        let m = GridMeasure::dirac(interval(2), 0.9);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "cell_index,cell_center,weight\n0,2.5000000000000000e-1,0.0000000000000000e0\n1,7.5000000000000000e-1,1.0000000000000000e0\n"
        );
        let j = m.to_json();
        assert_eq!(j["n_cells"], 2);
        assert_eq!(j["topology"], "interval");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn w1_is_a_metric(seed: u64, n in 1usize..40, circle_topo: bool) {
            let grid = if circle_topo { circle(n) } else { interval(n) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (
                random_measure(&mut rng, grid),
                random_measure(&mut rng, grid),
                random_measure(&mut rng, grid),
            );
            let ab = a.wasserstein1(&b).unwrap();
            let ba = b.wasserstein1(&a).unwrap();
            let bc = b.wasserstein1(&c).unwrap();
            let ac = a.wasserstein1(&c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(a.wasserstein1(&a).unwrap() < 1e-15);
        }

        #[test]
        fn rotation_never_hurts(seed: u64, n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_measure(&mut rng, circle(n));
            let b = random_measure(&mut rng, circle(n));
            let on_circle = wasserstein1_weights(Topology::Circle, a.weights(), b.weights());
            let on_interval = wasserstein1_weights(Topology::Interval, a.weights(), b.weights());
            prop_assert!(on_circle <= on_interval + 1e-12);
        }

        #[test]
        fn dirac_distance_matches_geometry(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 1usize..500, circle_topo: bool) {
            let grid = if circle_topo { circle(n) } else { interval(n) };
            let w = GridMeasure::dirac(grid, x).wasserstein1(&GridMeasure::dirac(grid, y)).unwrap();
            prop_assert!((w - grid.topology.distance(x, y)).abs() <= grid.width() + 1e-12);
        }
    }
}
