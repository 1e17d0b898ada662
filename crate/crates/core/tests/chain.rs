use densewire::graph::{single_cell_template, StageConfig};
use densewire::mcmc::{
    chain_diagnostics, stationary_distribution, transition_matrix, ChainSpec, StateSpace,
};
use densewire::pipeline::SyntheticB;

fn space() -> StateSpace {
    let t = single_cell_template(5, StageConfig::new(16, 1, 8, 8)).unwrap();
    StateSpace::enumerate(&t, &SyntheticB::new(3)).unwrap()
}

#[test]
fn longer_chains_get_closer() {
    let space = space();
    let tv = |steps| {
        let spec = ChainSpec {
            temperature: 0.5,
            steps,
            burn_in: 1000,
            seed: 1,
        };
        chain_diagnostics(&space, &spec)
            .unwrap()
            .diagnostics
            .tv_distance
    };
    let (short, long) = (tv(10_000), tv(1_000_000));
    assert!(long < short, "tv {short} -> {long}");
    assert!(long < 0.03);
}

#[test]
fn rows_are_stochastic_and_pi_is_invariant() {
    let space = space();
    let p = transition_matrix(&space, 0.2).unwrap();
    let pi = stationary_distribution(space.perf(), 0.2).unwrap();
    for i in 0..space.len() {
        let row: f64 = p.row(i).iter().sum();
        assert!((row - 1.0).abs() < 1e-12);
        assert!(p.row(i).iter().all(|&x| x >= 0.0));
    }
    for j in 0..space.len() {
        let flow: f64 = (0..space.len()).map(|i| pi[i] * p[(i, j)]).sum();
        assert!((flow - pi[j]).abs() < 1e-12);
    }
}

#[test]
fn colder_law_concentrates_on_the_best_state() {
    let space = space();
    let best = (0..space.len())
        .max_by(|&a, &b| space.perf()[a].total_cmp(&space.perf()[b]))
        .unwrap();
    let warm = stationary_distribution(space.perf(), 1.0).unwrap();
    let cold = stationary_distribution(space.perf(), 0.01).unwrap();
    assert!(cold[best] > warm[best]);
}
