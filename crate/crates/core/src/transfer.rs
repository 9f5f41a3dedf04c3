//! Ball-uniform noise kernels and the transfer operators they induce.
//!
//! Row `i` of a [`NoiseKernel`] is the law of the next state given the
//! current state `c_i` (the center of cell `i`): uniform on the ball of
//! radius `eps` around `f(c_i)`, normalized by the ball's length inside
//! the manifold, expressed as exact cell masses.
//!
//! Acting on the right on observables the kernel is `L_eps`; acting on
//! the left on measures it is the dual `L*_eps`. Operator powers are
//! always applied as repeated sparse products.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSpec;
use crate::error::{param, Result};
use crate::measures::{fmt_f64, GridMeasure};
use crate::phase_space::{ball, Grid};

/// Successive pushforwards closer than this in L1 are treated as stationary.
///
/// Stochastic matrices contract L1, so freezing at a step whose increment is
/// `tol` perturbs the `k`-th later iterate by at most `k * tol`.
pub const STATIONARY_TOL: f64 = 1e-13;

const RENORMALIZE_TOL: f64 = 1e-12;

/// An observable sampled at cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    pub values: Vec<f64>,
}

impl Observable {
    pub fn from_fn(grid: Grid, name: impl Into<String>, f: impl Fn(f64) -> f64) -> Self {
        Observable {
            name: name.into(),
            values: grid.centers().map(f).collect(),
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Observable {
            name: format!("constant({c})"),
            values: vec![c; grid.n_cells],
        }
    }

    /// Indicator of `[a, b)`, sampled at cell centers.
    pub fn indicator(grid: Grid, a: f64, b: f64) -> Self {
        Self::from_fn(grid, format!("indicator[{a},{b})"), |x| {
            if (a..b).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Row-stochastic cell-to-cell transition matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct NoiseKernel {
    grid: Grid,
    map: MapSpec,
    epsilon: f64,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Build the kernel of `map` on `grid` with noise level `epsilon`.
pub fn build_kernel(grid: Grid, map: &MapSpec, epsilon: f64) -> Result<NoiseKernel> {
    NoiseKernel::build(grid, map, epsilon)
}

impl NoiseKernel {
    pub fn build(grid: Grid, map: &MapSpec, epsilon: f64) -> Result<Self> {
        if grid.topology != map.topology {
            return Err(param(
                "topology",
                format!(
                    "map `{}` lives on the {}, grid is on the {}",
                    map.name,
                    map.topology.name(),
                    grid.topology.name()
                ),
            ));
        }
        grid.topology.validate_radius(epsilon)?;
        let rows: Vec<Vec<(usize, f64)>> = (0..grid.n_cells)
            .into_par_iter()
            .map(|i| transition_row(grid, map, epsilon, grid.center(i)))
            .collect::<Result<_>>()?;
        let mut offsets = Vec::with_capacity(grid.n_cells + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for row in rows {
            for (j, p) in row {
                cols.push(j as u32);
                vals.push(p);
            }
            offsets.push(cols.len());
        }
        Ok(NoiseKernel {
            grid,
            map: map.clone(),
            epsilon,
            offsets,
            cols,
            vals,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&j, &p)| (j as usize, p))
    }

    pub fn row_measure(&self, i: usize) -> GridMeasure {
        let mut w = vec![0.0; self.grid.n_cells];
        for (j, p) in self.row(i) {
            w[j] += p;
        }
        GridMeasure::from_masses(self.grid, w).expect("kernel rows are probability vectors")
    }

    /// `p_eps(x, .)` at an arbitrary point, as sparse cell masses.
    pub fn row_at(&self, x: f64) -> Vec<(usize, f64)> {
        transition_row(self.grid, &self.map, self.epsilon, x).expect("epsilon validated at construction")
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.grid.n_cells)
            .map(|i| (self.row(i).map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `dst = src * P` (the dual operator on mass vectors).
    fn push_into(&self, src: &[f64], dst: &mut [f64]) {
        dst.iter_mut().for_each(|v| *v = 0.0);
        for (i, &m) in src.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for k in self.offsets[i]..self.offsets[i + 1] {
                dst[self.cols[k] as usize] += m * self.vals[k];
            }
        }
        let total: f64 = dst.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL && total > 0.0 {
            dst.iter_mut().for_each(|v| *v /= total);
        }
    }

    /// `dst = P * src` (the operator on observables).
    fn apply_into(&self, src: &[f64], dst: &mut [f64]) {
        for (i, out) in dst.iter_mut().enumerate() {
            *out = (self.offsets[i]..self.offsets[i + 1])
                .map(|k| self.vals[k] * src[self.cols[k] as usize])
                .sum();
        }
    }

    /// `L*_eps mu`.
    pub fn push_forward(&self, mu: &GridMeasure) -> Result<GridMeasure> {
        self.grid.ensure_same(&mu.grid())?;
        let mut out = vec![0.0; self.grid.n_cells];
        self.push_into(mu.weights(), &mut out);
        GridMeasure::from_masses(self.grid, out)
    }

    /// `L_eps phi`.
    pub fn apply_to_observable(&self, phi: &Observable) -> Result<Observable> {
        self.check_observable(phi)?;
        let mut values = vec![0.0; self.grid.n_cells];
        self.apply_into(&phi.values, &mut values);
        Ok(Observable {
            name: format!("L({})", phi.name),
            values,
        })
    }

    /// `(L_eps phi)(x)` at an arbitrary point, using the exact row `p_eps(x, .)`.
    pub fn apply_at_point(&self, phi: &Observable, x: f64) -> Result<f64> {
        self.check_observable(phi)?;
        Ok(self.row_at(x).into_iter().map(|(j, p)| p * phi.values[j]).sum())
    }

    fn check_observable(&self, phi: &Observable) -> Result<()> {
        if phi.values.len() != self.grid.n_cells {
            return Err(crate::Error::GridMismatch(format!(
                "observable has {} values, grid has {} cells",
                phi.values.len(),
                self.grid.n_cells
            )));
        }
        Ok(())
    }

    /// `int (L_eps)^n phi d(initial)`; `n = 0` integrates `phi` itself.
    pub fn expected_value_observable(&self, phi: &Observable, n: usize, initial: &GridMeasure) -> Result<f64> {
        self.check_observable(phi)?;
        self.grid.ensure_same(&initial.grid())?;
        let mut cur = phi.values.clone();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..n {
            self.apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(initial.integrate(&cur))
    }

    /// `(1/n) sum_{j=1..n} (L_eps^j phi)(x)`, evaluated as `int phi d sigma_{eps,n,x}`.
    pub fn time_average_observable(&self, phi: &Observable, x: f64, n: usize) -> Result<f64> {
        self.check_observable(phi)?;
        Ok(self.empiric_stochastic_probability(x, n)?.integrate(&phi.values))
    }

    /// `sigma_{eps,n,x} = (1/n) sum_{j=1..n} (L*_eps)^j delta_x`.
    ///
    /// The first step uses the exact law `p_eps(x, .)` at `x`; later steps
    /// use the cell rows.
    pub fn empiric_stochastic_probability(&self, x: f64, n: usize) -> Result<GridMeasure> {
        Ok(self.empiric_stochastic_probabilities(x, &[n])?.remove(0))
    }

    /// [`NoiseKernel::empiric_stochastic_probability`] at several increasing
    /// horizons from one pass.
    pub fn empiric_stochastic_probabilities(&self, x: f64, horizons: &[usize]) -> Result<Vec<GridMeasure>> {
        check_horizons(horizons)?;
        let mut first = vec![0.0; self.grid.n_cells];
        for (j, p) in self.row_at(x) {
            first[j] += p;
        }
        let sums = self.cesaro_sums(first, horizons);
        sums.into_iter()
            .map(|w| GridMeasure::from_masses(self.grid, w))
            .collect()
    }

    /// `(1/n) sum_{j=1..n} (L*_eps)^j initial` at several increasing horizons.
    pub fn cesaro_from_measure(&self, initial: &GridMeasure, horizons: &[usize]) -> Result<Vec<GridMeasure>> {
        check_horizons(horizons)?;
        let first = self.push_forward(initial)?.into_weights();
        self.cesaro_sums(first, horizons)
            .into_iter()
            .map(|w| GridMeasure::from_masses(self.grid, w))
            .collect()
    }

    /// Cesaro averages of `first, P first, P^2 first, ...` at each horizon.
    fn cesaro_sums(&self, first: Vec<f64>, horizons: &[usize]) -> Vec<Vec<f64>> {
        let n_max = *horizons.last().expect("non-empty horizons");
        let mut out = Vec::with_capacity(horizons.len());
        let mut cur = first;
        let mut sum = cur.clone();
        let mut next = vec![0.0; cur.len()];
        let mut j = 1;
        let mut h = 0;
        loop {
            while h < horizons.len() && horizons[h] == j {
                out.push(sum.iter().map(|s| s / j as f64).collect());
                h += 1;
            }
            if j == n_max {
                break;
            }
            self.push_into(&cur, &mut next);
            let diff: f64 = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut cur, &mut next);
            j += 1;
            sum.iter_mut().zip(&cur).for_each(|(s, c)| *s += c);
            if diff <= STATIONARY_TOL {
                for &n in &horizons[h..] {
                    if n == j {
                        out.push(sum.iter().map(|s| s / j as f64).collect());
                    } else {
                        let rest = (n - j) as f64;
                        out.push(sum.iter().zip(&cur).map(|(s, c)| (s + rest * c) / n as f64).collect());
                    }
                }
                break;
            }
        }
        out
    }

    /// Sparse triplet CSV `row,col,mass`.
    pub fn write_triplets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "mass"])?;
        for i in 0..self.grid.n_cells {
            for (j, p) in self.row(i) {
                w.write_record([i.to_string(), j.to_string(), fmt_f64(p)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn transition_row(grid: Grid, map: &MapSpec, epsilon: f64, x: f64) -> Result<Vec<(usize, f64)>> {
    let b = ball(grid.topology, map.eval(x), epsilon)?;
    let len = b.length();
    let mut row: Vec<(usize, f64)> = grid
        .overlap_entries(&b)
        .into_iter()
        .map(|(j, l)| (j, l / len))
        .collect();
    row.sort_by_key(|&(j, _)| j);
    Ok(row)
}

fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons[0] == 0 {
        return Err(param("n", "horizons must be at least 1"));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("n", "horizons must be strictly increasing"));
    }
    Ok(())
}

/// `sigma_{n,x} = (1/n) sum_{j=1..n} delta_{f^j(x)}`.
pub fn empiric_probability_zero_noise(map: &MapSpec, grid: Grid, x: f64, n: usize) -> Result<GridMeasure> {
    Ok(empiric_probabilities_zero_noise(map, grid, x, &[n])?.remove(0))
}

/// Zero-noise empiric probabilities at several increasing horizons.
pub fn empiric_probabilities_zero_noise(
    map: &MapSpec,
    grid: Grid,
    x: f64,
    horizons: &[usize],
) -> Result<Vec<GridMeasure>> {
    check_horizons(horizons)?;
    let mut counts = vec![0.0; grid.n_cells];
    let mut out = Vec::with_capacity(horizons.len());
    let mut h = 0;
    for (j, y) in map.orbit(x).take(*horizons.last().unwrap()).enumerate() {
        counts[grid.cell_of(y)] += 1.0;
        if horizons[h] == j + 1 {
            out.push(GridMeasure::from_masses(grid, counts.clone())?);
            h += 1;
        }
    }
    Ok(out)
}

/// Zero-noise pushforward of a grid measure: the mass of cell `i` moves to
/// the cell of `f(c_i)`.
pub fn zero_noise_push_forward(map: &MapSpec, mu: &GridMeasure) -> GridMeasure {
    let grid = mu.grid();
    let mut w = vec![0.0; grid.n_cells];
    for (i, m) in mu.weights().iter().enumerate() {
        w[grid.cell_of(map.eval(grid.center(i)))] += m;
    }
    GridMeasure::from_masses(grid, w).expect("pushforward preserves mass")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin_catalog;
    use crate::phase_space::Topology;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn circle(n: usize) -> Grid {
        Grid::new(Topology::Circle, n).unwrap()
    }

    fn random_measure(rng: &mut impl Rng, grid: Grid) -> GridMeasure {
        let masses = (0..grid.n_cells).map(|_| rng.gen::<f64>()).collect();
        GridMeasure::from_masses(grid, masses).unwrap()
    }

    #[test]
    fn doubling_row_example() {
        let k = build_kernel(circle(10), &MapSpec::doubling(), 0.1).unwrap();
        // c_2 = 0.25 -> f = 0.5, ball (0.4, 0.6)
        let row: Vec<_> = k.row(2).collect();
        assert_eq!(row.len(), 2);
        assert_eq!(row[0].0, 4);
        assert_eq!(row[1].0, 5);
        assert!(close(row[0].1, 0.5, 1e-12) && close(row[1].1, 0.5, 1e-12));
    }

    #[test]
    fn boundary_row_example() {
        let g = Grid::new(Topology::Interval, 10).unwrap();
        let k = build_kernel(g, &MapSpec::single_sink(), 0.1).unwrap();
        let row: Vec<_> = k.row(0).collect();
        assert_eq!(row.len(), 2);
        assert!(close(row[0].1, 0.8, 1e-12));
        assert!(close(row[1].1, 0.2, 1e-12));
    }

    #[test]
    fn rejects_bad_epsilon_and_topology() {
        assert!(build_kernel(circle(10), &MapSpec::doubling(), 0.7).is_err());
        assert!(build_kernel(circle(10), &MapSpec::doubling(), 0.0).is_err());
        assert!(build_kernel(circle(10), &MapSpec::single_sink(), 0.1).is_err());
    }

    #[test]
    fn rows_are_stochastic_and_confined() {
        for map in builtin_catalog() {
            for n in [100, 1000] {
                for eps in [0.01, 0.1] {
                    let g = Grid::new(map.topology, n).unwrap();
                    let k = build_kernel(g, &map, eps).unwrap();
                    assert!(k.max_row_sum_deviation() <= 1e-12, "{} N={n} eps={eps}", map.name);
                    for i in 0..n {
                        let b = ball(g.topology, map.eval(g.center(i)), eps).unwrap();
                        let allowed = g.overlap_entries(&b);
                        for (j, p) in k.row(i) {
                            assert!(p > 0.0);
                            assert!(allowed.iter().any(|&(a, _)| a == j));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn push_forward_of_cell_dirac_is_row() {
        let g = circle(50);
        let k = build_kernel(g, &MapSpec::triple(), 0.05).unwrap();
        for i in [0, 7, 49] {
            let pushed = k.push_forward(&GridMeasure::dirac(g, g.center(i))).unwrap();
            assert_eq!(pushed, k.row_measure(i));
        }
    }

    #[test]
    fn mass_is_conserved() {
        let g = circle(200);
        let k = build_kernel(g, &MapSpec::two_sink(), 0.03).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mu = random_measure(&mut rng, g);
            assert!(close(k.push_forward(&mu).unwrap().total_mass(), 1.0, 1e-10));
        }
    }

    #[test]
    fn lebesgue_is_nearly_stationary_for_doubling() {
        for n in [100, 400] {
            let g = circle(n);
            let k = build_kernel(g, &MapSpec::doubling(), 0.1).unwrap();
            let m = GridMeasure::lebesgue(g);
            let w = k.push_forward(&m).unwrap().wasserstein1(&m).unwrap();
            assert!(w < 2.0 * g.width(), "N={n}: {w}");
        }
    }

    #[test]
    fn observable_operator() {
        let g = circle(10);
        let k = build_kernel(g, &MapSpec::doubling(), 0.1).unwrap();
        let one = k.apply_to_observable(&Observable::constant(g, 1.0)).unwrap();
        assert!(one.values.iter().all(|v| close(*v, 1.0, 1e-12)));
        let ind = Observable::indicator(g, 0.4, 0.6);
        assert!(close(k.apply_at_point(&ind, 0.25).unwrap(), 1.0, 1e-12));
        assert!(close(k.apply_to_observable(&ind).unwrap().values[2], 1.0, 1e-12));
    }

    #[test]
    fn duality_holds() {
        let g = circle(300);
        let k = build_kernel(g, &MapSpec::expanding_perturbed(0.1).unwrap(), 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mu = random_measure(&mut rng, g);
            let phi = Observable {
                name: "random".into(),
                values: (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let lhs = k.push_forward(&mu).unwrap().integrate(&phi.values);
            let rhs = mu.integrate(&k.apply_to_observable(&phi).unwrap().values);
            assert!(close(lhs, rhs, 1e-10));
        }
    }

    #[test]
    fn empiric_stochastic_probability_basics() {
        let g = circle(100);
        let k = build_kernel(g, &MapSpec::doubling(), 0.05).unwrap();
        let x = g.center(17);
        assert_eq!(k.empiric_stochastic_probability(x, 1).unwrap(), k.row_measure(17));
        for n in [1, 5, 50] {
            let s = k.empiric_stochastic_probability(0.1234, n).unwrap();
            assert!(close(s.total_mass(), 1.0, 1e-10));
            // absolutely continuous: no cell holds all the mass
            assert!(s.max_weight() < 1.0);
        }
        assert!(k.empiric_stochastic_probability(0.3, 0).is_err());
        assert!(k.empiric_stochastic_probabilities(0.3, &[5, 3]).is_err());
    }

    #[test]
    fn multi_horizon_matches_single() {
        let g = circle(100);
        let k = build_kernel(g, &MapSpec::two_sink(), 0.02).unwrap();
        let many = k.empiric_stochastic_probabilities(0.4, &[1, 3, 40, 300]).unwrap();
        for (n, m) in [1, 3, 40, 300].iter().zip(&many) {
            let single = k.empiric_stochastic_probability(0.4, *n).unwrap();
            assert!(single.wasserstein1(m).unwrap() < 1e-12);
        }
    }

    // The stationary shortcut against a brute-force Cesaro sum.
    #[test]
    fn stationary_shortcut_is_accurate() {
        let g = circle(120);
        let k = build_kernel(g, &MapSpec::doubling(), 0.05).unwrap();
        let x = 0.377;
        let n = 400;
        let mut cur = GridMeasure::from_masses(g, {
            let mut w = vec![0.0; 120];
            for (j, p) in k.row_at(x) {
                w[j] += p;
            }
            w
        })
        .unwrap();
        let mut sum = cur.weights().to_vec();
        for _ in 1..n {
            cur = k.push_forward(&cur).unwrap();
            sum.iter_mut().zip(cur.weights()).for_each(|(s, c)| *s += c);
        }
        let brute = GridMeasure::from_masses(g, sum).unwrap();
        let fast = k.empiric_stochastic_probability(x, n).unwrap();
        let l1: f64 = brute
            .weights()
            .iter()
            .zip(fast.weights())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(l1 < 1e-10, "{l1}");
    }

    #[test]
    fn cesaro_from_cell_dirac_matches_point_version() {
        let g = circle(80);
        let k = build_kernel(g, &MapSpec::triple(), 0.04).unwrap();
        let x = g.center(11);
        let a = k.cesaro_from_measure(&GridMeasure::dirac(g, x), &[1, 9]).unwrap();
        let b = k.empiric_stochastic_probabilities(x, &[1, 9]).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(p.wasserstein1(q).unwrap() < 1e-14);
        }
    }

    #[test]
    fn expected_values() {
        let g = circle(64);
        let k = build_kernel(g, &MapSpec::triple(), 0.03).unwrap();
        let c = Observable::constant(g, 2.5);
        for n in [0, 1, 7] {
            let v = k.expected_value_observable(&c, n, &GridMeasure::dirac(g, 0.3)).unwrap();
            assert!(close(v, 2.5, 1e-12));
        }
        let phi = Observable::from_fn(g, "cos", |x| (2.0 * std::f64::consts::PI * x).cos());
        let i = 9;
        let dirac = GridMeasure::dirac(g, g.center(i));
        let one_step = k.expected_value_observable(&phi, 1, &dirac).unwrap();
        assert!(close(one_step, k.apply_to_observable(&phi).unwrap().values[i], 1e-14));
        assert!(close(
            k.expected_value_observable(&phi, 0, &dirac).unwrap(),
            phi.values[i],
            0.0
        ));
    }

    #[test]
    fn time_average_identity() {
        let g = circle(128);
        let k = build_kernel(g, &MapSpec::expanding_perturbed(0.1).unwrap(), 0.04).unwrap();
        let phi = Observable::from_fn(g, "x^2", |x| x * x);
        let x = g.center(40);
        let dirac = GridMeasure::dirac(g, x);
        for n in [1, 4, 25] {
            let avg = (1..=n)
                .map(|j| k.expected_value_observable(&phi, j, &dirac).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!(close(avg, k.time_average_observable(&phi, x, n).unwrap(), 1e-10));
        }
    }

    #[test]
    fn zero_noise_examples() {
        let g = circle(100);
        let two = MapSpec::two_sink();
        let fixed = empiric_probability_zero_noise(&two, g, 0.25, 50).unwrap();
        assert_eq!(fixed, GridMeasure::dirac(g, 0.25));

        let s = empiric_probability_zero_noise(&MapSpec::doubling(), g, 1.0 / 3.0, 2).unwrap();
        assert!(close(s.weights()[g.cell_of(1.0 / 3.0)], 0.5, 1e-15));
        assert!(close(s.weights()[g.cell_of(2.0 / 3.0)], 0.5, 1e-15));
        assert!(empiric_probability_zero_noise(&two, g, 0.3, 0).is_err());
    }

    // Orbit 2^-j: the mass at step j sits at most 2^-j + width/2 from 0,
    // so W1 <= width/2 + (1/n) sum 2^-j <= width + 2/n.
    #[test]
    fn single_sink_zero_noise_tail_bound() {
        let g = Grid::new(Topology::Interval, 200).unwrap();
        let sink = GridMeasure::dirac(g, 0.0);
        for n in [10, 100, 1000] {
            let s = empiric_probability_zero_noise(&MapSpec::single_sink(), g, 1.0, n).unwrap();
            let w = s.wasserstein1(&sink).unwrap();
            assert!(w <= g.width() + 2.0 / n as f64, "n={n}: {w}");
        }
    }

    #[test]
    fn kernel_concentrates_on_image() {
        for map in builtin_catalog() {
            let g = Grid::new(map.topology, 400).unwrap();
            for eps in [0.1, 0.02, 0.005] {
                let k = build_kernel(g, &map, eps).unwrap();
                for i in (0..400).step_by(7) {
                    let target = GridMeasure::dirac(g, map.eval(g.center(i)));
                    let w = k.row_measure(i).wasserstein1(&target).unwrap();
                    assert!(w <= eps + g.width(), "{} eps={eps} row {i}: {w}", map.name);
                }
            }
        }
    }

    #[test]
    fn triplet_csv_has_header_and_rows() {
        let k = build_kernel(circle(10), &MapSpec::doubling(), 0.1).unwrap();
        let mut buf = Vec::new();
        k.write_triplets_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("row,col,mass"));
        assert_eq!(lines.count(), k.nnz());
    }
}
