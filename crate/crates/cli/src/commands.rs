//! Subcommand implementations. Each one resolves and validates its whole
//! configuration before any computation starts.

use empiric_core::dynamics::MapSpec;
use empiric_core::measures::{fmt_f64, GridMeasure, MeasureSet, NORMALIZATION_TOL};
use empiric_core::montecarlo::{sample_noisy_orbit_indexed, streaming_occupation, InitialState};
use empiric_core::pesin::{pesin_check, PesinOptions};
use empiric_core::phase_space::{Grid, Topology};
use empiric_core::stability::{
    empiric_stability_verdict, pseudo_physical_scan, set_stability_verdict, strong_basin, CandidateSource, Schedule,
    Target,
};
use empiric_core::transfer::{build_kernel, empiric_probabilities_zero_noise};
use empiric_core::Error;
use serde_json::json;

use crate::config::{parse_points, RawConfig, KEYS};
use crate::output::{Audits, Outputs};
use crate::CliError;

/// Row-sum tolerance of the exported kernel.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Attach a core error to the config key it concerns.
fn at(cfg: &RawConfig, key: &str, e: Error) -> CliError {
    match e {
        Error::Parameter { name, reason } if KEYS.iter().any(|(k, _)| *k == name) => cfg.error(name, reason),
        Error::Parameter { .. } | Error::GridMismatch(_) => cfg.error(key, e),
        other => CliError::Core(other),
    }
}

fn map(cfg: &RawConfig) -> Result<MapSpec, CliError> {
    let name = cfg.string("map.name")?;
    let topology = match cfg.raw("topology") {
        None => None,
        Some(t) => Some(t.parse::<Topology>().map_err(|e| at(cfg, "topology", e))?),
    };
    let map = if name == "custom" {
        let Some(topology) = topology else {
            return Err(cfg.error("topology", "custom maps need an explicit topology"));
        };
        let raw = cfg.string("map.custom")?;
        let points = parse_points(raw).ok_or_else(|| cfg.error("map.custom", "expected `[(x0,y0),(x1,y1),...]`"))?;
        MapSpec::custom(topology, points).map_err(|e| at(cfg, "map.custom", e))?
    } else {
        let alpha = if name == "expanding_perturbed" {
            Some(cfg.f64("map.alpha")?)
        } else {
            None
        };
        let key = if alpha.is_some() { "map.alpha" } else { "map.name" };
        MapSpec::by_name(name, alpha).map_err(|e| match e {
            Error::Parameter { reason, .. } => cfg.error(
                if reason.contains("unknown map") {
                    "map.name"
                } else {
                    key
                },
                reason,
            ),
            other => CliError::Core(other),
        })?
    };
    if let Some(t) = topology {
        if t != map.topology {
            return Err(cfg.error(
                "topology",
                format!(
                    "map `{}` lives on the {}, not the {}",
                    map.name,
                    map.topology.name(),
                    t.name()
                ),
            ));
        }
    }
    Ok(map)
}

fn grid(cfg: &RawConfig, map: &MapSpec) -> Result<Grid, CliError> {
    Grid::new(map.topology, cfg.usize("grid.n_cells")?).map_err(|e| at(cfg, "grid.n_cells", e))
}

fn epsilons(cfg: &RawConfig, topology: Topology) -> Result<Vec<f64>, CliError> {
    let list = cfg.f64_list("noise.epsilon")?;
    if list.is_empty() {
        return Err(cfg.error("noise.epsilon", "at least one noise radius is required"));
    }
    for &eps in &list {
        topology.validate_radius(eps).map_err(|e| at(cfg, "noise.epsilon", e))?;
    }
    Ok(list)
}

fn epsilon(cfg: &RawConfig, topology: Topology) -> Result<f64, CliError> {
    match epsilons(cfg, topology)?.as_slice() {
        [eps] => Ok(*eps),
        _ => Err(cfg.error("noise.epsilon", "this command takes a single noise radius")),
    }
}

fn horizons(cfg: &RawConfig, key: &str) -> Result<Vec<usize>, CliError> {
    let n = cfg.usize_list(key)?;
    if n.is_empty() || n[0] == 0 || n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(cfg.error(key, "must be a non-empty, strictly increasing list of horizons >= 1"));
    }
    Ok(n)
}

fn schedule(cfg: &RawConfig, topology: Topology) -> Result<Schedule, CliError> {
    let mut s = Schedule::new(
        cfg.f64_list("schedule.rho")?,
        cfg.usize_list("schedule.n")?,
        cfg.f64_list("schedule.eps")?,
        cfg.usize("schedule.g")?,
    );
    if let Some(t) = cfg.opt_usize("schedule.tail_start")? {
        s.tail_start = t;
    }
    s.cluster_radius = cfg.f64("schedule.cluster_radius")?;
    s.boundary_slack = cfg.f64("schedule.boundary_slack")?;
    s.validate().map_err(|e| at(cfg, "schedule.n", e))?;
    for &eps in &s.eps_list {
        topology
            .validate_radius(eps)
            .map_err(|e| cfg.error("schedule.eps", e))?;
    }
    Ok(s)
}

fn pass_fraction(cfg: &RawConfig) -> Result<f64, CliError> {
    let p = cfg.f64("schedule.pass_fraction")?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(cfg.error("schedule.pass_fraction", "must lie in (0, 1]"));
    }
    Ok(p)
}

/// Parsed form of a target description.
enum TargetSpec {
    Scan,
    Measure(GridMeasure),
    Set(Vec<GridMeasure>),
}

fn measure_spec(cfg: &RawConfig, key: &str, grid: Grid, item: &str) -> Result<GridMeasure, CliError> {
    if item == "lebesgue" {
        return Ok(GridMeasure::lebesgue(grid));
    }
    if let Some(x) = item.strip_prefix("dirac:") {
        let x: f64 = x
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && (0.0..=1.0).contains(v))
            .ok_or_else(|| cfg.error(key, format!("dirac location must lie in [0, 1], found `{x}`")))?;
        return Ok(GridMeasure::dirac(grid, x));
    }
    Err(cfg.error(
        key,
        format!("unknown measure `{item}` (expected `lebesgue`, `dirac:<x>`, `scan` or a `;`-separated set)"),
    ))
}

fn target_spec(cfg: &RawConfig, key: &str, grid: Grid) -> Result<TargetSpec, CliError> {
    let raw = cfg.string(key)?;
    if raw == "scan" {
        return Ok(TargetSpec::Scan);
    }
    let (forced_set, body) = match raw.strip_prefix("set:") {
        Some(rest) => (true, rest),
        None => (false, raw),
    };
    let items: Vec<&str> = body.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(cfg.error(key, "empty target"));
    }
    let measures = items
        .iter()
        .map(|item| measure_spec(cfg, key, grid, item))
        .collect::<Result<Vec<_>, _>>()?;
    if forced_set || measures.len() > 1 {
        Ok(TargetSpec::Set(measures))
    } else {
        Ok(TargetSpec::Measure(measures.into_iter().next().expect("one item")))
    }
}

fn scan_members(map: &MapSpec, grid: Grid, schedule: &Schedule, pass: f64) -> Result<MeasureSet, CliError> {
    let report = pseudo_physical_scan(map, grid, schedule, &CandidateSource::FromPomegaClusters, pass)?;
    Ok(report.members)
}

fn mass_audit(audits: &mut Audits, label: &str, mu: &GridMeasure) {
    let dev = (mu.total_mass() - 1.0).abs();
    audits.check(
        "mass-normalization",
        dev <= NORMALIZATION_TOL,
        format!("{label}: |mass - 1| = {dev:e}"),
    );
}

pub fn kernel(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let eps = epsilon(cfg, map.topology)?;

    let k = build_kernel(grid, &map, eps)?;
    out.csv("kernel.csv", |w| k.write_triplets_csv(w))?;
    let dev = k.max_row_sum_deviation();
    let mut audits = Audits::default();
    audits.check(
        "row-stochasticity",
        dev <= ROW_SUM_TOL,
        format!("max |row sum - 1| = {dev:e}, tolerance {ROW_SUM_TOL:e}"),
    );
    out.json(
        "kernel_audit.json",
        &json!({
            "map": map,
            "n_cells": grid.n_cells,
            "epsilon": eps,
            "rows": grid.n_cells,
            "nnz": k.nnz(),
            "max_row_sum_deviation": dev,
            "audits": audits,
        }),
    )?;
    audits.finish()
}

pub fn evolve(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let eps_list = epsilons(cfg, map.topology)?;
    let x = cfg.f64("evolve.x")?;
    if !map.topology.contains(x) {
        return Err(cfg.error("evolve.x", "initial point must lie in [0, 1]"));
    }
    let ns = horizons(cfg, "evolve.n")?;

    let mut audits = Audits::default();
    let zero = empiric_probabilities_zero_noise(&map, grid, x, &ns)?;
    for (n, mu) in ns.iter().zip(&zero) {
        mass_audit(&mut audits, &format!("zero noise n={n}"), mu);
        out.csv(&format!("zero_noise_n{n}.csv"), |w| mu.write_csv(w))?;
    }
    let mut rows = Vec::new();
    let mut distances = Vec::new();
    for &eps in &eps_list {
        let k = build_kernel(grid, &map, eps)?;
        let sigmas = k.empiric_stochastic_probabilities(x, &ns)?;
        for ((n, sigma), zero) in ns.iter().zip(&sigmas).zip(&zero) {
            mass_audit(&mut audits, &format!("eps={eps} n={n}"), sigma);
            out.csv(&format!("stochastic_eps{eps}_n{n}.csv"), |w| sigma.write_csv(w))?;
            let d = sigma.wasserstein1(zero)?;
            rows.push(vec![fmt_f64(eps), n.to_string(), fmt_f64(d)]);
            distances.push(json!({"epsilon": eps, "n": n, "w1": d}));
        }
    }
    out.table("evolve_w1.csv", &["epsilon", "n", "w1"], &rows)?;
    out.json(
        "evolve.json",
        &json!({
            "map": map,
            "n_cells": grid.n_cells,
            "x": x,
            "horizons": ns,
            "epsilons": eps_list,
            "distances": distances,
            "audits": audits,
        }),
    )?;
    audits.finish()
}

fn resolve_target(
    cfg: &RawConfig,
    key: &str,
    map: &MapSpec,
    grid: Grid,
    schedule: &Schedule,
    pass: f64,
) -> Result<Target, CliError> {
    Ok(match target_spec(cfg, key, grid)? {
        TargetSpec::Scan => Target::Set(scan_members(map, grid, schedule, pass)?),
        TargetSpec::Measure(mu) => Target::Measure(mu),
        TargetSpec::Set(ms) => Target::Set(MeasureSet::new(ms)),
    })
}

pub fn basin(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let schedule = schedule(cfg, map.topology)?;
    let pass = pass_fraction(cfg)?;
    let noisy = match cfg.string("basin.criterion")? {
        "zero_noise" => false,
        "noisy" => true,
        other => {
            return Err(cfg.error(
                "basin.criterion",
                format!("expected `zero_noise` or `noisy`, found `{other}`"),
            ))
        }
    };
    target_spec(cfg, "basin.target", grid)?;

    let target = resolve_target(cfg, "basin.target", &map, grid, &schedule, pass)?;
    let report = if noisy {
        let verdict = match &target {
            Target::Measure(mu) => empiric_stability_verdict(&map, grid, mu, &schedule, pass)?,
            Target::Set(k) => set_stability_verdict(&map, grid, k, &schedule, pass)?,
        };
        verdict.noisy_basin()
    } else {
        strong_basin(&map, grid, &target, &schedule)?
    };
    let mut audits = Audits::default();
    let count = report.membership.iter().filter(|&&m| m).count();
    let expected = count as f64 / report.membership.len() as f64;
    audits.check(
        "basin-fraction-consistency",
        report.lebesgue_fraction == expected,
        format!(
            "reported {} for {count} of {} points",
            report.lebesgue_fraction,
            report.membership.len()
        ),
    );
    out.csv("basin_membership.csv", |w| report.write_membership_csv(w))?;
    out.json("basin.json", &json!({"report": report, "audits": audits}))?;
    audits.finish()
}

pub fn stability(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let schedule = schedule(cfg, map.topology)?;
    let pass = pass_fraction(cfg)?;
    target_spec(cfg, "stability.target", grid)?;

    let target = resolve_target(cfg, "stability.target", &map, grid, &schedule, pass)?;
    let verdict = match &target {
        Target::Measure(mu) => empiric_stability_verdict(&map, grid, mu, &schedule, pass)?,
        Target::Set(k) => set_stability_verdict(&map, grid, k, &schedule, pass)?,
    };
    let mut audits = Audits::default();
    audits.check(
        "global-implies-stable",
        !verdict.globally_stable || verdict.stable,
        format!(
            "stable = {}, globally_stable = {}",
            verdict.stable, verdict.globally_stable
        ),
    );
    audits.check(
        "global-basin-bound",
        !verdict.globally_stable || verdict.basin_fraction >= 1.0 - schedule.boundary_slack,
        format!(
            "basin fraction {} against slack {}",
            verdict.basin_fraction, schedule.boundary_slack
        ),
    );
    let minimality = verdict.minimality.as_ref().map(|m| format!("minimality: {}", m.status));
    out.csv("stability_membership.csv", |w| verdict.write_membership_csv(w))?;
    out.json(
        "stability.json",
        &json!({"verdict": verdict, "minimality_note": minimality, "audits": audits}),
    )?;
    audits.finish()
}

pub fn scan(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let schedule = schedule(cfg, map.topology)?;
    let pass = pass_fraction(cfg)?;
    let source = match cfg.string("scan.candidates")? {
        "pomega" => CandidateSource::FromPomegaClusters,
        _ => match target_spec(cfg, "scan.candidates", grid)? {
            TargetSpec::Scan => return Err(cfg.error("scan.candidates", "use `pomega` for scan-derived candidates")),
            TargetSpec::Measure(mu) => CandidateSource::UserList(MeasureSet::new(vec![mu])),
            TargetSpec::Set(ms) => CandidateSource::UserList(MeasureSet::new(ms)),
        },
    };

    let report = pseudo_physical_scan(&map, grid, &schedule, &source, pass)?;
    let mut audits = Audits::default();
    let worst = report.invariance_defects.iter().cloned().fold(0.0, f64::max);
    audits.check(
        "member-invariance",
        worst <= schedule.cluster_radius,
        format!(
            "max W1(f_* mu, mu) = {worst:e} against cluster radius {}",
            schedule.cluster_radius
        ),
    );
    let mut member_rows = Vec::new();
    for (j, mu) in report.members.members.iter().enumerate() {
        for (i, &w) in mu.weights().iter().enumerate() {
            if w != 0.0 {
                member_rows.push(vec![j.to_string(), i.to_string(), fmt_f64(grid.center(i)), fmt_f64(w)]);
            }
        }
    }
    let basin_rows: Vec<Vec<String>> = (0..report.members.len())
        .map(|j| {
            vec![
                j.to_string(),
                report.counts[j].to_string(),
                fmt_f64(report.strong_basin_fractions[j]),
                fmt_f64(report.weak_basin_fractions[j]),
                fmt_f64(report.invariance_defects[j]),
            ]
        })
        .collect();
    out.table(
        "scan_members.csv",
        &["member", "cell_index", "cell_center", "weight"],
        &member_rows,
    )?;
    out.table(
        "scan_basins.csv",
        &[
            "member",
            "count",
            "strong_basin_fraction",
            "weak_basin_fraction",
            "invariance_defect",
        ],
        &basin_rows,
    )?;
    out.json(
        "scan.json",
        &json!({
            "report": report,
            "strong_basin_total": report.strong_basin_total(),
            "audits": audits,
        }),
    )?;
    audits.finish()
}

pub fn pesin(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let schedule = schedule(cfg, map.topology)?;
    if map.topology != Topology::Circle || !map.is_expanding() {
        return Err(cfg.error("map.name", format!("`{}` is not an expanding circle map", map.name)));
    }
    let options = PesinOptions {
        x_samples: cfg.usize("pesin.x_samples")?,
        orbit_length: cfg.usize("pesin.orbit_length")?,
        depths: cfg.usize_list("pesin.depths")?,
        seed: cfg.u64("seed")?,
    };
    if options.x_samples == 0 {
        return Err(cfg.error("pesin.x_samples", "must be at least 1"));
    }
    if options.depths.is_empty() || options.depths[0] == 0 || options.depths.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(cfg.error("pesin.depths", "must be consecutive depths starting at 1 or more"));
    }
    if options.orbit_length <= *options.depths.last().expect("non-empty") {
        return Err(cfg.error("pesin.orbit_length", "must exceed the deepest block length"));
    }

    let report = pesin_check(&map, grid, &schedule, &options).map_err(|e| at(cfg, "pesin.depths", e))?;
    let mut audits = Audits::default();
    audits.check(
        "positive-lyapunov-integral",
        report.lyapunov_integral > 0.0,
        format!("integral = {}", report.lyapunov_integral),
    );
    audits.check(
        "non-negative-entropy",
        report.entropy_estimate >= 0.0,
        format!("estimate = {}", report.entropy_estimate),
    );
    out.csv("pesin_blocks.csv", |w| report.block_entropy.write_csv(w))?;
    out.json("pesin.json", &json!({"report": report, "audits": audits}))?;
    audits.finish()
}

pub fn oracle(cfg: &RawConfig, mut out: Outputs) -> Result<(), CliError> {
    let map = map(cfg)?;
    let grid = grid(cfg, &map)?;
    let eps = epsilon(cfg, map.topology)?;
    let initial = match cfg.string("oracle.x0")? {
        "uniform" => InitialState::Uniform,
        _ => {
            let x = cfg.f64("oracle.x0")?;
            if !map.topology.contains(x) {
                return Err(cfg.error("oracle.x0", "initial point must lie in [0, 1] or be `uniform`"));
            }
            InitialState::Point(x)
        }
    };
    let n = cfg.usize("oracle.n")?;
    if n == 0 {
        return Err(cfg.error("oracle.n", "orbit length must be at least 1"));
    }
    let orbit_counts = cfg.usize_list("oracle.orbits")?;
    if orbit_counts.is_empty() || orbit_counts.contains(&0) {
        return Err(cfg.error("oracle.orbits", "need positive orbit counts"));
    }
    let seeds = match cfg.raw("oracle.seeds") {
        None => vec![cfg.u64("seed")?],
        Some(_) => cfg.u64_list("oracle.seeds")?,
    };
    if seeds.is_empty() {
        return Err(cfg.error("oracle.seeds", "at least one seed is required"));
    }
    let skip_initial = cfg.bool("oracle.skip_initial")?;

    let k = build_kernel(grid, &map, eps)?;
    let (start, sigma) = match initial {
        InitialState::Point(x) => (GridMeasure::dirac(grid, x), k.empiric_stochastic_probability(x, n)?),
        InitialState::Uniform => {
            let leb = GridMeasure::lebesgue(grid);
            let sigma = k.cesaro_from_measure(&leb, &[n])?.remove(0);
            (leb, sigma)
        }
    };
    let operator = if skip_initial {
        sigma
    } else {
        start.blend(1.0 / (n as f64 + 1.0), &sigma, n as f64 / (n as f64 + 1.0))?
    };
    let mut audits = Audits::default();
    mass_audit(&mut audits, "operator", &operator);
    out.csv("operator.csv", |w| operator.write_csv(w))?;

    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &seed in &seeds {
        let orbit = sample_noisy_orbit_indexed(&map, grid.topology, initial, eps, n, seed, 0)?;
        out.csv(&format!("orbit_seed{seed}.csv"), |w| orbit.write_csv(w))?;
        for &orbits in &orbit_counts {
            let occ = streaming_occupation(&map, grid, initial, eps, n, orbits, seed, skip_initial)?;
            mass_audit(&mut audits, &format!("seed={seed} orbits={orbits}"), &occ);
            let d = occ.wasserstein1(&operator)?;
            out.csv(&format!("occupation_seed{seed}_orbits{orbits}.csv"), |w| {
                occ.write_csv(w)
            })?;
            rows.push(vec![seed.to_string(), orbits.to_string(), fmt_f64(d)]);
            table.push(json!({"seed": seed, "orbits": orbits, "w1": d}));
        }
    }
    out.table("oracle.csv", &["seed", "orbits", "w1"], &rows)?;
    out.json(
        "oracle.json",
        &json!({
            "map": map,
            "n_cells": grid.n_cells,
            "epsilon": eps,
            "initial": initial,
            "n": n,
            "skip_initial": skip_initial,
            "comparisons": table,
            "audits": audits,
        }),
    )?;
    audits.finish()
}
