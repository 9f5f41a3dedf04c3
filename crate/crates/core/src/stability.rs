//! Finite-schedule stability diagnostics: C-sets, strong and weak basins,
//! pω-limit estimates, empiric stochastic stability verdicts for measures
//! and sets, and the pseudo-physical scan.
//!
//! Asymptotic quantifiers are truncated to a [`Schedule`]. "Every large n"
//! means every horizon in the tail `n_list[tail_start..]`; "every small ε"
//! means every entry of `eps_list` at or below the chosen `ε₀`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSpec;
use crate::error::{param, Result};
use crate::measures::{cluster_measures, fmt_f64, GridMeasure, MeasureSet};
use crate::phase_space::Grid;
use crate::transfer::{build_kernel, empiric_probabilities_zero_noise, zero_noise_push_forward, NoiseKernel};

/// Default number of initial points.
pub const DEFAULT_G: usize = 512;
/// Default number of cells for stability experiments.
pub const DEFAULT_N_CELLS: usize = 500;
/// Offset of the initial-point grid inside each slot: the golden-ratio
/// fraction, so no grid point is a dyadic or triadic rational.
pub const X_GRID_OFFSET: f64 = 0.618_033_988_749_894_8;
/// Default positive-measure threshold.
pub const DEFAULT_PASS_FRACTION: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub rho_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub eps_list: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// First index of `n_list` belonging to the tail.
    pub tail_start: usize,
    pub cluster_radius: f64,
    /// Fraction of initial points allowed to fail a global statement.
    pub boundary_slack: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::new(
            vec![0.1, 0.05, 0.02],
            vec![200, 500, 1000],
            vec![0.05, 0.02, 0.01, 0.005],
            DEFAULT_G,
        )
    }
}

impl Schedule {
    /// A schedule over the uniform grid `(k + X_GRID_OFFSET)/g`, with the tail
    /// taken as the second half of `n_list`.
    pub fn new(rho_list: Vec<f64>, n_list: Vec<usize>, eps_list: Vec<f64>, g: usize) -> Self {
        let tail_start = n_list.len() / 2;
        Schedule {
            rho_list,
            n_list,
            eps_list,
            x_grid: Grid::offset_points(g, X_GRID_OFFSET),
            tail_start,
            cluster_radius: 0.03,
            boundary_slack: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn decreasing(v: &[f64]) -> bool {
            v.windows(2).all(|w| w[1] < w[0])
        }
        if self.rho_list.is_empty() || !decreasing(&self.rho_list) || self.rho_list.iter().any(|r| !(*r > 0.0)) {
            return Err(param(
                "schedule.rho",
                "must be a non-empty, strictly decreasing list of positive values",
            ));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param(
                "schedule.n",
                "must be a non-empty, strictly increasing list of horizons >= 1",
            ));
        }
        if self.eps_list.is_empty() || !decreasing(&self.eps_list) || self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(param(
                "schedule.eps",
                "must be a non-empty, strictly decreasing list of positive values",
            ));
        }
        if self.x_grid.is_empty() {
            return Err(param("schedule.g", "need at least one initial point"));
        }
        if self.tail_start >= self.n_list.len() {
            return Err(param("schedule.tail_start", "tail must contain at least one horizon"));
        }
        if !(self.cluster_radius > 0.0) {
            return Err(param("schedule.cluster_radius", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.boundary_slack) {
            return Err(param("schedule.boundary_slack", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn tail(&self) -> &[usize] {
        &self.n_list[self.tail_start..]
    }

    pub fn rho_min(&self) -> f64 {
        *self.rho_list.last().expect("validated schedule")
    }

    pub fn g(&self) -> usize {
        self.x_grid.len()
    }
}

/// A single measure or a finite measure set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Measure(GridMeasure),
    Set(MeasureSet),
}

impl Target {
    /// W1 to the measure, or distance to the set (`+inf` when empty).
    pub fn distance(&self, mu: &GridMeasure) -> Result<f64> {
        match self {
            Target::Measure(t) => mu.wasserstein1(t),
            Target::Set(k) => k.distance_or_inf(mu),
        }
    }
}

/// `sigma_{n,x}` for every initial point and horizon, indexed `[x][n]`.
#[derive(Clone, Debug)]
pub struct ZeroNoiseTable {
    pub grid: Grid,
    pub x_grid: Vec<f64>,
    pub horizons: Vec<usize>,
    pub sigma: Vec<Vec<GridMeasure>>,
}

impl ZeroNoiseTable {
    pub fn compute(map: &MapSpec, grid: Grid, x_grid: &[f64], horizons: &[usize]) -> Result<Self> {
        let sigma = x_grid
            .par_iter()
            .map(|&x| empiric_probabilities_zero_noise(map, grid, x, horizons))
            .collect::<Result<Vec<_>>>()?;
        Ok(ZeroNoiseTable {
            grid,
            x_grid: x_grid.to_vec(),
            horizons: horizons.to_vec(),
            sigma,
        })
    }

    fn horizon_index(&self, n: usize) -> Result<usize> {
        self.horizons
            .iter()
            .position(|&h| h == n)
            .ok_or_else(|| param("n", format!("horizon {n} was not tabulated")))
    }
}

/// `sigma_{eps,n,x}` for every initial point, noise level and horizon,
/// indexed `[x][eps][n]`.
#[derive(Clone, Debug)]
pub struct NoisyTable {
    pub grid: Grid,
    pub x_grid: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub horizons: Vec<usize>,
    pub sigma: Vec<Vec<Vec<GridMeasure>>>,
}

impl NoisyTable {
    pub fn compute(map: &MapSpec, grid: Grid, schedule: &Schedule) -> Result<Self> {
        schedule.validate()?;
        let kernels = schedule
            .eps_list
            .iter()
            .map(|&e| build_kernel(grid, map, e))
            .collect::<Result<Vec<NoiseKernel>>>()?;
        let sigma = schedule
            .x_grid
            .par_iter()
            .map(|&x| {
                kernels
                    .iter()
                    .map(|k| k.empiric_stochastic_probabilities(x, &schedule.n_list))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NoisyTable {
            grid,
            x_grid: schedule.x_grid.clone(),
            eps_list: schedule.eps_list.clone(),
            horizons: schedule.n_list.clone(),
            sigma,
        })
    }
}

/// `C_{n,rho}(target)` restricted to `x_grid`.
pub fn c_set(map: &MapSpec, grid: Grid, target: &Target, n: usize, rho: f64, x_grid: &[f64]) -> Result<Vec<bool>> {
    if n == 0 || !(rho > 0.0) {
        return Err(param("c_set", "need n >= 1 and rho > 0"));
    }
    let table = ZeroNoiseTable::compute(map, grid, x_grid, &[n])?;
    c_set_from_table(&table, target, n, rho)
}

pub fn c_set_from_table(table: &ZeroNoiseTable, target: &Target, n: usize, rho: f64) -> Result<Vec<bool>> {
    let k = table.horizon_index(n)?;
    table
        .sigma
        .iter()
        .map(|row| Ok(target.distance(&row[k])? < rho))
        .collect()
}

/// Late-horizon approximation of `pω_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomegaEstimate {
    pub x: f64,
    pub clusters: MeasureSet,
    pub counts: Vec<usize>,
    /// More than one well-separated cluster: the averages may not converge.
    pub historic: bool,
}

pub fn pomega_estimate(map: &MapSpec, grid: Grid, x: f64, n_list: &[usize], radius: f64) -> Result<PomegaEstimate> {
    let samples = empiric_probabilities_zero_noise(map, grid, x, n_list)?;
    pomega_from_samples(x, &samples, radius)
}

pub fn pomega_from_samples(x: f64, samples: &[GridMeasure], radius: f64) -> Result<PomegaEstimate> {
    let c = cluster_measures(samples, radius)?.consolidate(radius)?;
    Ok(PomegaEstimate {
        x,
        historic: c.representatives.len() > 1,
        counts: c.counts,
        clusters: MeasureSet::new(c.representatives),
    })
}

/// Which criterion produced a membership vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasinCriterion {
    ZeroNoise,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub map: MapSpec,
    pub criterion: BasinCriterion,
    pub target: Target,
    pub membership: Vec<bool>,
    pub lebesgue_fraction: f64,
    pub schedule: Schedule,
}

impl BasinReport {
    pub fn write_membership_csv<W: Write>(&self, out: W) -> Result<()> {
        write_membership(out, &self.schedule.x_grid, &self.membership)
    }
}

fn write_membership<W: Write>(out: W, xs: &[f64], member: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "member"])?;
    for (x, m) in xs.iter().zip(member) {
        w.write_record([fmt_f64(*x), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn fraction(member: &[bool]) -> f64 {
    member.iter().filter(|&&m| m).count() as f64 / member.len() as f64
}

/// Strong basin via zero-noise C-sets: `x` is a member iff every
/// `rho` in `rho_list` has `dist(sigma_{n,x}, target) < rho` for every
/// tail horizon `n`.
pub fn strong_basin(map: &MapSpec, grid: Grid, target: &Target, schedule: &Schedule) -> Result<BasinReport> {
    schedule.validate()?;
    let table = ZeroNoiseTable::compute(map, grid, &schedule.x_grid, &schedule.n_list)?;
    strong_basin_from_table(map, &table, target, schedule)
}

pub fn strong_basin_from_table(
    map: &MapSpec,
    table: &ZeroNoiseTable,
    target: &Target,
    schedule: &Schedule,
) -> Result<BasinReport> {
    let tail = tail_indices(&table.horizons, schedule)?;
    let membership = table
        .sigma
        .iter()
        .map(|row| {
            let mut worst = 0.0f64;
            for &k in &tail {
                worst = worst.max(target.distance(&row[k])?);
            }
            Ok(schedule.rho_list.iter().all(|&rho| worst < rho))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(BasinReport {
        map: map.clone(),
        criterion: BasinCriterion::ZeroNoise,
        target: target.clone(),
        lebesgue_fraction: fraction(&membership),
        membership,
        schedule: schedule.clone(),
    })
}

fn tail_indices(horizons: &[usize], schedule: &Schedule) -> Result<Vec<usize>> {
    schedule
        .tail()
        .iter()
        .map(|n| {
            horizons
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| param("schedule.n", format!("horizon {n} was not tabulated")))
        })
        .collect()
}

/// Largest `eps_0` passing at one `(rho, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub rho: f64,
    pub n: usize,
    pub epsilon: Option<f64>,
}

/// A point where no `eps_0` works: `sigma_{eps,n,x}` at the smallest `eps`
/// stays at `distance >= rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub x: f64,
    pub rho: f64,
    pub n: usize,
    pub epsilon: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberProbe {
    pub index: usize,
    pub coverage_without: usize,
    pub redundant: bool,
}

/// Finite minimality check; passing it is necessary, not sufficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityProbe {
    /// `"probe-passed"` or `"failed"`.
    pub status: String,
    pub radius: f64,
    pub coverage: usize,
    pub members: Vec<MemberProbe>,
}

impl MinimalityProbe {
    pub fn passed(&self) -> bool {
        self.status == "probe-passed"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub map: MapSpec,
    pub target: Target,
    pub stable: bool,
    pub globally_stable: bool,
    pub basin_fraction: f64,
    pub pass_fraction: f64,
    pub witness_epsilon: Vec<Witness>,
    pub failures: Vec<Failure>,
    /// The noisy-criterion basin over `x_grid`.
    pub membership: Vec<bool>,
    pub minimality: Option<MinimalityProbe>,
    pub schedule: Schedule,
}

impl StabilityVerdict {
    pub fn write_membership_csv<W: Write>(&self, out: W) -> Result<()> {
        write_membership(out, &self.schedule.x_grid, &self.membership)
    }

    pub fn noisy_basin(&self) -> BasinReport {
        BasinReport {
            map: self.map.clone(),
            criterion: BasinCriterion::Noisy,
            target: self.target.clone(),
            membership: self.membership.clone(),
            lebesgue_fraction: self.basin_fraction,
            schedule: self.schedule.clone(),
        }
    }
}

/// Per-point evaluation of the noisy criterion.
struct PointEval {
    /// `eps_0` index per `(rho, tail n)`, row-major in rho.
    eps0: Vec<Option<usize>>,
    failure: Option<Failure>,
}

fn evaluate_point(
    x: f64,
    sigma: &[Vec<GridMeasure>],
    tail: &[usize],
    target: &Target,
    schedule: &Schedule,
) -> Result<PointEval> {
    let ne = schedule.eps_list.len();
    // dist[t][e]
    let dist = tail
        .iter()
        .map(|&k| {
            (0..ne)
                .map(|e| target.distance(&sigma[e][k]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eps0 = Vec::with_capacity(schedule.rho_list.len() * tail.len());
    let mut failure = None;
    for &rho in &schedule.rho_list {
        for (t, d) in dist.iter().enumerate() {
            // smallest index whose whole suffix passes
            let mut start = None;
            for e in (0..ne).rev() {
                if d[e] < rho {
                    start = Some(e);
                } else {
                    break;
                }
            }
            if start.is_none() && failure.is_none() {
                failure = Some(Failure {
                    x,
                    rho,
                    n: schedule.tail()[t],
                    epsilon: schedule.eps_list[ne - 1],
                    distance: d[ne - 1],
                });
            }
            eps0.push(start);
        }
    }
    Ok(PointEval { eps0, failure })
}

fn passing_set(table: &NoisyTable, target: &Target, schedule: &Schedule) -> Result<Vec<PointEval>> {
    check_table(table, schedule)?;
    let tail = tail_indices(&table.horizons, schedule)?;
    table
        .x_grid
        .par_iter()
        .zip(&table.sigma)
        .map(|(&x, sigma)| evaluate_point(x, sigma, &tail, target, schedule))
        .collect()
}

fn check_table(table: &NoisyTable, schedule: &Schedule) -> Result<()> {
    schedule.validate()?;
    if table.eps_list != schedule.eps_list || table.x_grid != schedule.x_grid {
        return Err(param("schedule", "noise table was computed for a different schedule"));
    }
    Ok(())
}

/// Empiric stochastic stability of a single measure.
pub fn empiric_stability_verdict(
    map: &MapSpec,
    grid: Grid,
    target: &GridMeasure,
    schedule: &Schedule,
    pass_fraction: f64,
) -> Result<StabilityVerdict> {
    let table = NoisyTable::compute(map, grid, schedule)?;
    verdict_from_table(map, &table, &Target::Measure(target.clone()), schedule, pass_fraction)
}

pub fn verdict_from_table(
    map: &MapSpec,
    table: &NoisyTable,
    target: &Target,
    schedule: &Schedule,
    pass_fraction: f64,
) -> Result<StabilityVerdict> {
    if !(pass_fraction > 0.0 && pass_fraction <= 1.0) {
        return Err(param("pass_fraction", "must lie in (0, 1]"));
    }
    let evals = passing_set(table, target, schedule)?;
    let membership: Vec<bool> = evals.iter().map(|p| p.failure.is_none()).collect();
    let basin_fraction = fraction(&membership);
    let stable = basin_fraction > 0.0 && basin_fraction >= pass_fraction;
    let globally_stable = stable && basin_fraction >= 1.0 - schedule.boundary_slack;

    let tail = schedule.tail();
    let mut witness_epsilon = Vec::new();
    for (r, &rho) in schedule.rho_list.iter().enumerate() {
        for (t, &n) in tail.iter().enumerate() {
            let slot = r * tail.len() + t;
            let idx = evals
                .iter()
                .filter(|p| p.failure.is_none())
                .map(|p| p.eps0[slot].expect("member passes every slot"))
                .max();
            witness_epsilon.push(Witness {
                rho,
                n,
                epsilon: idx.map(|i| schedule.eps_list[i]),
            });
        }
    }
    let failures = evals.into_iter().filter_map(|p| p.failure).collect();
    Ok(StabilityVerdict {
        map: map.clone(),
        target: target.clone(),
        stable,
        globally_stable,
        basin_fraction,
        pass_fraction,
        witness_epsilon,
        failures,
        membership,
        minimality: None,
        schedule: schedule.clone(),
    })
}

/// Empiric stochastic stability of a finite measure set, with the
/// member-removal minimality probe.
pub fn set_stability_verdict(
    map: &MapSpec,
    grid: Grid,
    k: &MeasureSet,
    schedule: &Schedule,
    pass_fraction: f64,
) -> Result<StabilityVerdict> {
    let table = NoisyTable::compute(map, grid, schedule)?;
    set_verdict_from_table(map, &table, k, schedule, pass_fraction)
}

pub fn set_verdict_from_table(
    map: &MapSpec,
    table: &NoisyTable,
    k: &MeasureSet,
    schedule: &Schedule,
    pass_fraction: f64,
) -> Result<StabilityVerdict> {
    if k.is_empty() {
        return Err(param("K", "measure set must be non-empty"));
    }
    let mut verdict = verdict_from_table(map, table, &Target::Set(k.clone()), schedule, pass_fraction)?;
    let coverage = verdict.membership.iter().filter(|&&m| m).count();
    let radius = schedule.rho_min();
    let mut members = Vec::with_capacity(k.len());
    for (j, mu) in k.members.iter().enumerate() {
        let mut reduced = Vec::new();
        for nu in &k.members {
            if nu.wasserstein1(mu)? >= radius {
                reduced.push(nu.clone());
            }
        }
        let target = Target::Set(MeasureSet::new(reduced));
        let coverage_without = passing_set(table, &target, schedule)?
            .iter()
            .filter(|p| p.failure.is_none())
            .count();
        members.push(MemberProbe {
            index: j,
            coverage_without,
            redundant: coverage_without >= coverage,
        });
    }
    let ok = members.iter().all(|m| !m.redundant);
    verdict.minimality = Some(MinimalityProbe {
        status: if ok { "probe-passed" } else { "failed" }.into(),
        radius,
        coverage,
        members,
    });
    verdict.stable &= ok;
    verdict.globally_stable &= ok;
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    FromPomegaClusters,
    UserList(MeasureSet),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub map: MapSpec,
    pub members: MeasureSet,
    /// Pooled initial points per retained member.
    pub counts: Vec<usize>,
    pub strong_basin_fractions: Vec<f64>,
    /// Fraction of points whose tail averages come within `rho_min`.
    pub weak_basin_fractions: Vec<f64>,
    /// `W1(f_* mu, mu)` under the zero-noise grid pushforward.
    pub invariance_defects: Vec<f64>,
    pub candidates_considered: usize,
    /// Initial points whose pω estimate split into several clusters.
    pub historic_points: Vec<f64>,
    pub pass_fraction: f64,
    pub schedule: Schedule,
}

impl ScanReport {
    pub fn strong_basin_total(&self) -> f64 {
        self.strong_basin_fractions.iter().sum()
    }
}

/// Estimate the set of pseudo-physical measures.
pub fn pseudo_physical_scan(
    map: &MapSpec,
    grid: Grid,
    schedule: &Schedule,
    source: &CandidateSource,
    pass_fraction: f64,
) -> Result<ScanReport> {
    schedule.validate()?;
    let table = ZeroNoiseTable::compute(map, grid, &schedule.x_grid, &schedule.n_list)?;
    scan_from_table(map, &table, schedule, source, pass_fraction)
}

pub fn scan_from_table(
    map: &MapSpec,
    table: &ZeroNoiseTable,
    schedule: &Schedule,
    source: &CandidateSource,
    pass_fraction: f64,
) -> Result<ScanReport> {
    if !(pass_fraction > 0.0 && pass_fraction <= 1.0) {
        return Err(param("pass_fraction", "must lie in (0, 1]"));
    }
    let tail = tail_indices(&table.horizons, schedule)?;
    let radius = schedule.cluster_radius;
    let mut historic_points = Vec::new();
    let (candidates, pooled_counts) = match source {
        CandidateSource::FromPomegaClusters => {
            let estimates = table
                .x_grid
                .par_iter()
                .zip(&table.sigma)
                .map(|(&x, row)| {
                    let samples: Vec<GridMeasure> = tail.iter().map(|&k| row[k].clone()).collect();
                    pomega_from_samples(x, &samples, radius)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut pool = Vec::new();
            for est in estimates {
                if est.historic {
                    historic_points.push(est.x);
                }
                pool.extend(est.clusters.members);
            }
            let c = cluster_measures(&pool, radius)?.consolidate(radius)?;
            (c.representatives, c.counts)
        }
        CandidateSource::UserList(set) => {
            let n = set.len();
            (set.members.clone(), vec![0; n])
        }
    };
    let candidates_considered = candidates.len();
    let rho_min = schedule.rho_min();
    let mut members = Vec::new();
    let mut counts = Vec::new();
    let mut strong = Vec::new();
    let mut weak = Vec::new();
    let mut defects = Vec::new();
    for (mu, count) in candidates.into_iter().zip(pooled_counts) {
        let near = table
            .sigma
            .iter()
            .map(|row| {
                let mut best = f64::INFINITY;
                for &k in &tail {
                    best = best.min(row[k].wasserstein1(&mu)?);
                }
                Ok(best < rho_min)
            })
            .collect::<Result<Vec<bool>>>()?;
        let weak_fraction = fraction(&near);
        if weak_fraction < pass_fraction {
            continue;
        }
        let target = Target::Measure(mu.clone());
        let sb = strong_basin_from_table(map, table, &target, schedule)?;
        defects.push(zero_noise_push_forward(map, &mu).wasserstein1(&mu)?);
        strong.push(sb.lebesgue_fraction);
        weak.push(weak_fraction);
        counts.push(count);
        members.push(mu);
    }
    Ok(ScanReport {
        map: map.clone(),
        members: MeasureSet::new(members),
        counts,
        strong_basin_fractions: strong,
        weak_basin_fractions: weak,
        invariance_defects: defects,
        candidates_considered,
        historic_points,
        pass_fraction,
        schedule: schedule.clone(),
    })
}
