//! Entropy formula check for expanding circle maps: the Lyapunov integral
//! against the detected stable measure versus a symbolic block-entropy
//! estimate computed from Lebesgue-typical orbits.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSpec;
use crate::error::{param, Error, Result};
use crate::measures::{fmt_f64, GridMeasure};
use crate::phase_space::{Grid, Topology};
use crate::stability::{pseudo_physical_scan, CandidateSource, Schedule, DEFAULT_PASS_FRACTION};

/// Minimum count every observed block must reach for a depth to be reliable.
pub const MIN_BLOCK_COUNT: u64 = 10;

const MAX_BLOCKS: usize = 1 << 26;

/// `sum_i mu_i log|f'(c_i)|` over cells of positive weight.
pub fn lyapunov_integral(map: &MapSpec, mu: &GridMeasure) -> Result<f64> {
    let grid = mu.grid();
    // centered at the first supported value so constant integrands are exact
    let mut reference = None;
    let mut total = 0.0;
    for (i, &w) in mu.weights().iter().enumerate() {
        if w > 0.0 {
            let v = map.log_abs_derivative(grid.center(i))?;
            let r = *reference.get_or_insert(v);
            total += w * (v - r);
        }
    }
    Ok(reference.unwrap_or(0.0) + total)
}

/// Block entropies `H_m` (nats) of the branch coding and the resulting
/// entropy-rate estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntropy {
    pub depths: Vec<usize>,
    pub entropies: Vec<f64>,
    /// `H_m - H_{m-1}` per depth.
    pub differences: Vec<f64>,
    pub estimate: f64,
    pub symbols: usize,
    pub samples: usize,
    pub orbit_length: usize,
}

impl BlockEntropy {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "H_m", "H_m_minus_H_m_minus_1"])?;
        for ((m, h), d) in self.depths.iter().zip(&self.entropies).zip(&self.differences) {
            w.write_record([m.to_string(), fmt_f64(*h), fmt_f64(*d)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` seeded Lebesgue-uniform starting points.
pub fn uniform_samples(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen::<f64>()).collect()
}

/// Entropy rate from block entropies of the branch coding of orbits of
/// length `orbit_length` started at each of `x_samples`.
///
/// The estimate is the median of `H_m - H_{m-1}` over the three deepest
/// depths. Fails with [`Error::UnderSampled`] if some observed block at the
/// deepest depth occurs fewer than [`MIN_BLOCK_COUNT`] times.
pub fn block_entropy_estimate(
    map: &MapSpec,
    x_samples: &[f64],
    orbit_length: usize,
    depths: &[usize],
) -> Result<BlockEntropy> {
    if !map.is_expanding() {
        return Err(Error::Unsupported(format!(
            "block entropy needs an expanding map; `{}` is not",
            map.name
        )));
    }
    let partition = map.branch_partition();
    let k = partition.len() + 1;
    if k < 2 {
        return Err(Error::Unsupported(format!("`{}` has a single branch", map.name)));
    }
    if x_samples.is_empty() {
        return Err(param("x_samples", "need at least one starting point"));
    }
    if depths.is_empty() || depths[0] == 0 || depths.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(param("depths", "must be consecutive positive integers"));
    }
    let max_depth = *depths.last().unwrap();
    if orbit_length < max_depth {
        return Err(param("orbit_length", "shorter than the deepest block"));
    }
    if k.checked_pow(max_depth as u32).is_none_or(|b| b > MAX_BLOCKS) {
        return Err(param(
            "depths",
            format!("{k}^{max_depth} blocks exceed the tally limit"),
        ));
    }
    // depths min-1 ..= max, so every requested depth has a difference
    let all: Vec<usize> = (depths[0] - 1..=max_depth).collect();

    let counts = x_samples
        .par_iter()
        .map(|&x0| {
            let mut tallies: Vec<Vec<u64>> = all.iter().map(|&m| vec![0u64; k.pow(m as u32)]).collect();
            let mut codes = vec![0usize; all.len()];
            let points = std::iter::once(map.topology.wrap(x0)).chain(map.orbit(x0));
            for (j, x) in points.take(orbit_length).enumerate() {
                let s = map.symbol(&partition, x);
                for (d, &m) in all.iter().enumerate() {
                    if m == 0 {
                        continue;
                    }
                    let size = tallies[d].len();
                    codes[d] = (codes[d] * k + s) % size;
                    if j + 1 >= m {
                        tallies[d][codes[d]] += 1;
                    }
                }
            }
            tallies
        })
        .reduce(
            || all.iter().map(|&m| vec![0u64; k.pow(m as u32)]).collect(),
            |mut acc, t| {
                for (a, b) in acc.iter_mut().zip(t) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
                acc
            },
        );

    let mut h = Vec::with_capacity(all.len());
    let mut largest_reliable = None;
    for (d, &m) in all.iter().enumerate() {
        if m == 0 {
            h.push(0.0);
            continue;
        }
        let tally = &counts[d];
        let total: u64 = tally.iter().sum();
        let min_seen = tally.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
        if min_seen >= MIN_BLOCK_COUNT {
            largest_reliable = Some(m);
        } else if depths.contains(&m) {
            return Err(Error::UnderSampled {
                depth: m,
                largest_reliable,
            });
        }
        let t = total as f64;
        h.push(
            -tally
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / t;
                    p * p.ln()
                })
                .sum::<f64>(),
        );
    }
    let entropies = h[1..].to_vec();
    let differences: Vec<f64> = h.windows(2).map(|w| w[1] - w[0]).collect();
    let mut last: Vec<f64> = differences.iter().rev().take(3).copied().collect();
    last.sort_by(f64::total_cmp);
    let estimate = last[last.len() / 2];
    Ok(BlockEntropy {
        depths: depths.to_vec(),
        entropies,
        differences,
        estimate,
        symbols: k,
        samples: x_samples.len(),
        orbit_length,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PesinOptions {
    pub x_samples: usize,
    pub orbit_length: usize,
    pub depths: Vec<usize>,
    pub seed: u64,
}

impl Default for PesinOptions {
    fn default() -> Self {
        PesinOptions {
            x_samples: 8,
            orbit_length: 1_000_000,
            depths: (4..=10).collect(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberCheck {
    pub lyapunov_integral: f64,
    pub residual: f64,
    pub strong_basin_fraction: f64,
    pub w1_to_lebesgue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PesinReport {
    pub map: MapSpec,
    pub n_cells: usize,
    /// Against the member with the largest strong basin.
    pub lyapunov_integral: f64,
    pub entropy_estimate: f64,
    pub residual: f64,
    pub block_depths: Vec<usize>,
    pub block_entropy: BlockEntropy,
    pub stable_measure: GridMeasure,
    pub members: Vec<MemberCheck>,
    pub options: PesinOptions,
    pub note: String,
}

/// Scan for the stable measures, then compare both sides of the formula.
pub fn pesin_check(map: &MapSpec, grid: Grid, schedule: &Schedule, options: &PesinOptions) -> Result<PesinReport> {
    if map.topology != Topology::Circle || !map.is_expanding() {
        return Err(Error::Unsupported(format!(
            "the entropy check needs an expanding circle map; `{}` is not",
            map.name
        )));
    }
    let scan = pseudo_physical_scan(
        map,
        grid,
        schedule,
        &CandidateSource::FromPomegaClusters,
        DEFAULT_PASS_FRACTION,
    )?;
    if scan.members.is_empty() {
        return Err(Error::Unsupported("no stable measure was detected".into()));
    }
    let xs = uniform_samples(options.x_samples, options.seed);
    let be = block_entropy_estimate(map, &xs, options.orbit_length, &options.depths)?;
    let lebesgue = GridMeasure::lebesgue(grid);
    let mut members = Vec::new();
    for (mu, &frac) in scan.members.members.iter().zip(&scan.strong_basin_fractions) {
        let l = lyapunov_integral(map, mu)?;
        members.push(MemberCheck {
            lyapunov_integral: l,
            residual: be.estimate - l,
            strong_basin_fraction: frac,
            w1_to_lebesgue: mu.wasserstein1(&lebesgue)?,
        });
    }
    let main = (0..members.len())
        .max_by(|&a, &b| {
            members[a]
                .strong_basin_fraction
                .total_cmp(&members[b].strong_basin_fraction)
        })
        .unwrap();
    Ok(PesinReport {
        map: map.clone(),
        n_cells: grid.n_cells,
        lyapunov_integral: members[main].lyapunov_integral,
        entropy_estimate: be.estimate,
        residual: members[main].residual,
        block_depths: be.depths.clone(),
        stable_measure: scan.members.members[main].clone(),
        block_entropy: be,
        members,
        options: options.clone(),
        note: "entropy is sampled along Lebesgue-typical orbits, so it checks the formula for the physical member only"
            .into(),
    })
}
