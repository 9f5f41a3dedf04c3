use empiric_core::dynamics::{builtin_catalog, MapSpec};
use empiric_core::measures::GridMeasure;
use empiric_core::montecarlo::{noise_step, orbit_rng, streaming_occupation, InitialState};
use empiric_core::phase_space::{Grid, Topology};
use empiric_core::transfer::{build_kernel, empiric_probability_zero_noise, Observable};
use proptest::prelude::*;

fn weights_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter("non-zero", |w| w.iter().sum::<f64>() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn push_forward_conserves_mass(w in weights_strategy(150), eps in 0.005f64..0.3, map_idx in 0usize..6) {
        let map = &builtin_catalog()[map_idx];
        let g = Grid::new(map.topology, 150).unwrap();
        let k = build_kernel(g, map, eps).unwrap();
        let mu = GridMeasure::from_masses(g, w).unwrap();
        let pushed = k.push_forward(&mu).unwrap();
        prop_assert!((pushed.total_mass() - 1.0).abs() <= 1e-10);
        prop_assert!(pushed.weights().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn duality(w in weights_strategy(120), phi in prop::collection::vec(-5.0f64..5.0, 120), eps in 0.005f64..0.2) {
        let map = MapSpec::two_sink();
        let g = Grid::new(map.topology, 120).unwrap();
        let k = build_kernel(g, &map, eps).unwrap();
        let mu = GridMeasure::from_masses(g, w).unwrap();
        let phi = Observable { name: "random".into(), values: phi };
        let lhs = k.push_forward(&mu).unwrap().integrate(&phi.values);
        let rhs = mu.integrate(&k.apply_to_observable(&phi).unwrap().values);
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn empiric_stochastic_probability_is_a_probability(x in 0.0f64..1.0, n in 1usize..80, eps in 0.003f64..0.2) {
        let map = MapSpec::expanding_perturbed(0.1).unwrap();
        let g = Grid::new(map.topology, 200).unwrap();
        let k = build_kernel(g, &map, eps).unwrap();
        let s = k.empiric_stochastic_probability(x, n).unwrap();
        prop_assert!((s.total_mass() - 1.0).abs() <= 1e-10);
        prop_assert!(s.max_weight() < 1.0);
    }
}

// Kernel rows concentrate on the image point as the noise shrinks.
#[test]
fn kernel_converges_to_the_map() {
    for map in builtin_catalog() {
        let g = Grid::new(map.topology, 500).unwrap();
        for eps in [0.1, 0.01, 0.004] {
            let k = build_kernel(g, &map, eps).unwrap();
            for i in 0..g.n_cells {
                let d = k
                    .row_measure(i)
                    .wasserstein1(&GridMeasure::dirac(g, map.eval(g.center(i))))
                    .unwrap();
                assert!(d <= eps + g.width(), "{} eps={eps} i={i}: {d}", map.name);
            }
        }
    }
}

// For contracting maps the noisy averages approach the zero-noise ones
// monotonically (up to 2 cells) with a linear-in-eps bound.
#[test]
fn small_noise_limit_for_sink_maps() {
    for (map, x) in [(MapSpec::single_sink(), 0.9), (MapSpec::two_sink(), 0.3)] {
        let g = Grid::new(map.topology, 1000).unwrap();
        let n = 20;
        let zero = empiric_probability_zero_noise(&map, g, x, n).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.05, 0.02, 0.01, 0.005, 0.002] {
            let k = build_kernel(g, &map, eps).unwrap();
            let d = k
                .empiric_stochastic_probability(x, n)
                .unwrap()
                .wasserstein1(&zero)
                .unwrap();
            assert!(d <= prev + 2.0 * g.width(), "{} eps={eps}: {d} after {prev}", map.name);
            assert!(d <= g.width() + 2.0 * eps, "{} eps={eps}: {d}", map.name);
            prev = d;
        }
    }
}

#[test]
fn monte_carlo_matches_operator() {
    let map = MapSpec::doubling();
    let g = Grid::new(map.topology, 200).unwrap();
    let k = build_kernel(g, &map, 0.05).unwrap();
    let sigma = k.empiric_stochastic_probability(0.1234, 50).unwrap();
    let mut errors = Vec::new();
    for orbits in [100, 10_000, 100_000] {
        let occ = streaming_occupation(&map, g, InitialState::Point(0.1234), 0.05, 50, orbits, 17, true).unwrap();
        errors.push(occ.wasserstein1(&sigma).unwrap());
    }
    assert!(errors[2] < 0.01, "{errors:?}");
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 2.0 * g.width(), "{errors:?}");
    }
}

#[test]
fn monte_carlo_matches_operator_on_the_interval() {
    let map = MapSpec::single_sink();
    let g = Grid::new(map.topology, 200).unwrap();
    let k = build_kernel(g, &map, 0.1).unwrap();
    let sigma = k.empiric_stochastic_probability(0.9, 30).unwrap();
    let occ = streaming_occupation(&map, g, InitialState::Point(0.9), 0.1, 30, 50_000, 4, true).unwrap();
    assert!(occ.wasserstein1(&sigma).unwrap() < 0.01);
}

#[test]
fn disjoint_seed_batches_agree() {
    let map = MapSpec::doubling();
    let g = Grid::new(map.topology, 200).unwrap();
    let a = streaming_occupation(&map, g, InitialState::Point(0.1234), 0.05, 50, 100_000, 100, true).unwrap();
    let b = streaming_occupation(&map, g, InitialState::Point(0.1234), 0.05, 50, 100_000, 200, true).unwrap();
    assert!(a.wasserstein1(&b).unwrap() < 0.005);
}

// Uniform initial states reproduce the Lebesgue-started chain.
#[test]
fn uniform_start_matches_lebesgue_push_forward() {
    let map = MapSpec::triple();
    let g = Grid::new(map.topology, 100).unwrap();
    let k = build_kernel(g, &map, 0.05).unwrap();
    let one_step = k.push_forward(&GridMeasure::lebesgue(g)).unwrap();
    let occ = streaming_occupation(&map, g, InitialState::Uniform, 0.05, 1, 200_000, 3, true).unwrap();
    assert!(occ.wasserstein1(&one_step).unwrap() < 0.005);
}

// Chi-square goodness of fit for draws from the truncated ball [0, 0.125).
#[test]
fn boundary_law_is_uniform_on_truncated_ball() {
    let y = MapSpec::single_sink().eval(0.05);
    let eps = 0.1;
    let hi = y + eps;
    let bins = 25;
    let draws = 100_000;
    let mut counts = vec![0usize; bins];
    let mut rng = orbit_rng(99, 0);
    for _ in 0..draws {
        let x = noise_step(Topology::Interval, y, eps, &mut rng);
        assert!((0.0..hi).contains(&x));
        counts[((x / hi) * bins as f64) as usize] += 1;
    }
    let expected = draws as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.99 quantile of chi-square with 24 degrees of freedom
    assert!(chi2 < 42.98, "{chi2}");
}

#[test]
fn occupation_is_seed_deterministic() {
    let map = MapSpec::two_sink();
    let g = Grid::new(map.topology, 100).unwrap();
    let a = streaming_occupation(&map, g, InitialState::Uniform, 0.02, 40, 5000, 8, false).unwrap();
    let b = streaming_occupation(&map, g, InitialState::Uniform, 0.02, 40, 5000, 8, false).unwrap();
    assert_eq!(a, b);
}

// For the doubling map the noise doubles every step, so the j-th noisy
// pushforward stays within about 2^j eps of the zero-noise atom.
#[test]
fn doubling_pushforwards_track_the_orbit_step_by_step() {
    let map = MapSpec::doubling();
    let g = Grid::new(map.topology, 2000).unwrap();
    let x = 0.1234;
    let orbit = map.orbit_points(x, 5);
    for eps in [0.01, 0.001] {
        let k = build_kernel(g, &map, eps).unwrap();
        let mut w = vec![0.0; g.n_cells];
        for (j, m) in k.row_at(x) {
            w[j] += m;
        }
        let mut mu = GridMeasure::from_masses(g, w).unwrap();
        for (j, y) in orbit.iter().enumerate() {
            let bound = eps * 2f64.powi(j as i32) + 2.0 * g.width();
            let d = mu.wasserstein1(&GridMeasure::dirac(g, *y)).unwrap();
            assert!(d <= bound, "eps={eps} step {}: {d} > {bound}", j + 1);
            mu = k.push_forward(&mu).unwrap();
        }
    }
}
