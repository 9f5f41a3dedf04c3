//! Sampling realization of the noisy Markov chain, used as an independent
//! oracle for the operator pipeline.
//!
//! Every orbit draws from its own ChaCha8 stream selected by
//! `(seed, orbit_index)`, so results do not depend on scheduling.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSpec;
use crate::error::{param, Result};
use crate::measures::{fmt_f64, GridMeasure};
use crate::phase_space::{Grid, Topology};

const CHUNK: usize = 1024;

/// One realization `x_0, x_1, ..., x_n` of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyOrbit {
    pub states: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub orbit_index: u64,
}

impl NoisyOrbit {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "x"])?;
        for (k, x) in self.states.iter().enumerate() {
            w.write_record([k.to_string(), fmt_f64(*x)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where each orbit starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Point(f64),
    /// `x_0` drawn from Lebesgue measure, independently per orbit.
    Uniform,
}

/// The RNG stream of orbit `orbit_index` under `seed`.
pub fn orbit_rng(seed: u64, orbit_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(orbit_index);
    rng
}

/// Draw uniformly from `B_eps(y) ∩ M`.
pub fn noise_step(topology: Topology, y: f64, epsilon: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    match topology {
        Topology::Circle => topology.wrap(y + epsilon * (2.0 * u - 1.0)),
        Topology::Interval => {
            let lo = (y - epsilon).max(0.0);
            let hi = (y + epsilon).min(1.0);
            topology.wrap(lo + u * (hi - lo))
        }
    }
}

fn validate(map: &MapSpec, topology: Topology, epsilon: f64, n: usize) -> Result<()> {
    if map.topology != topology {
        return Err(param(
            "topology",
            format!("map `{}` lives on the {}", map.name, map.topology.name()),
        ));
    }
    topology.validate_radius(epsilon)?;
    if n == 0 {
        return Err(param("n", "orbit length must be at least 1"));
    }
    Ok(())
}

/// Sample orbit index 0 of `seed`.
pub fn sample_noisy_orbit(
    map: &MapSpec,
    topology: Topology,
    x0: f64,
    epsilon: f64,
    n: usize,
    seed: u64,
) -> Result<NoisyOrbit> {
    sample_noisy_orbit_indexed(map, topology, InitialState::Point(x0), epsilon, n, seed, 0)
}

pub fn sample_noisy_orbit_indexed(
    map: &MapSpec,
    topology: Topology,
    initial: InitialState,
    epsilon: f64,
    n: usize,
    seed: u64,
    orbit_index: u64,
) -> Result<NoisyOrbit> {
    validate(map, topology, epsilon, n)?;
    let mut rng = orbit_rng(seed, orbit_index);
    let mut x = start(topology, initial, &mut rng);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x);
    for _ in 0..n {
        x = noise_step(topology, map.eval(x), epsilon, &mut rng);
        states.push(x);
    }
    Ok(NoisyOrbit {
        states,
        epsilon,
        seed,
        orbit_index,
    })
}

fn start(topology: Topology, initial: InitialState, rng: &mut impl Rng) -> f64 {
    match initial {
        InitialState::Point(x) => topology.wrap(x),
        InitialState::Uniform => rng.gen(),
    }
}

/// Normalized histogram of all pooled states; `skip_initial` drops `x_0`.
pub fn occupation_measure(orbits: &[NoisyOrbit], grid: Grid, skip_initial: bool) -> Result<GridMeasure> {
    if orbits.is_empty() {
        return Err(param("orbits", "at least one orbit is required"));
    }
    let skip = usize::from(skip_initial);
    let mut counts = vec![0.0; grid.n_cells];
    for orbit in orbits {
        for &x in &orbit.states[skip..] {
            counts[grid.cell_of(x)] += 1.0;
        }
    }
    GridMeasure::from_masses(grid, counts)
}

/// Occupation measure of `n_orbits` orbits generated on the fly.
///
/// Equivalent to sampling orbits `0..n_orbits` with
/// [`sample_noisy_orbit_indexed`] and calling [`occupation_measure`], without
/// storing the orbits.
#[allow(clippy::too_many_arguments)]
pub fn streaming_occupation(
    map: &MapSpec,
    grid: Grid,
    initial: InitialState,
    epsilon: f64,
    n: usize,
    n_orbits: usize,
    seed: u64,
    skip_initial: bool,
) -> Result<GridMeasure> {
    validate(map, grid.topology, epsilon, n)?;
    if n_orbits == 0 {
        return Err(param("orbits", "at least one orbit is required"));
    }
    let topology = grid.topology;
    let chunks: Vec<(usize, usize)> = (0..n_orbits)
        .step_by(CHUNK)
        .map(|a| (a, (a + CHUNK).min(n_orbits)))
        .collect();
    let counts = chunks
        .into_par_iter()
        .map(|(a, b)| {
            let mut hist = vec![0u64; grid.n_cells];
            for idx in a..b {
                let mut rng = orbit_rng(seed, idx as u64);
                let mut x = start(topology, initial, &mut rng);
                if !skip_initial {
                    hist[grid.cell_of(x)] += 1;
                }
                for _ in 0..n {
                    x = noise_step(topology, map.eval(x), epsilon, &mut rng);
                    hist[grid.cell_of(x)] += 1;
                }
            }
            hist
        })
        .reduce(
            || vec![0u64; grid.n_cells],
            |mut acc, h| {
                acc.iter_mut().zip(h).for_each(|(a, c)| *a += c);
                acc
            },
        );
    GridMeasure::from_masses(grid, counts.into_iter().map(|c| c as f64).collect())
}
