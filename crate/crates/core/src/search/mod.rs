//! Population search over meta-graphs: random search, local search,
//! evolution strategy and the annealed Metropolis-Hastings variant that
//! interpolates between the last two.

mod mutate;

pub use mutate::{mutate, mutate_detailed, Mutation, MutationKind, MUTATION_RETRIES};

use crate::graph::MetaGraph;
use crate::pipeline::draw_random;
use crate::rng::stream;
use rand::Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("external oracle protocol error: {0}")]
    ExternalProtocol(String),
    #[error(transparent)]
    Predictor(#[from] crate::predictor::PredictorError),
    #[error("oracle returned non-finite score {0}")]
    NonFinite(f64),
    #[error("{0}")]
    Failed(String),
}

/// Anything that scores a meta-graph; larger is better.
pub trait Oracle: Sync {
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError>;

    /// Whether `score` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Wraps a plain function as an oracle.
pub struct FnOracle<F>(pub F);

impl<F> Oracle for FnOracle<F>
where
    F: Fn(&MetaGraph) -> f64 + Sync,
{
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
        Ok((self.0)(meta))
    }
}

/// Scores every meta-graph, in order, in parallel when the oracle allows it.
pub fn score_all(oracle: &dyn Oracle, metas: &[MetaGraph]) -> Result<Vec<f64>, OracleError> {
    let check = |s: f64| {
        if s.is_finite() {
            Ok(s)
        } else {
            Err(OracleError::NonFinite(s))
        }
    };
    if oracle.concurrent() {
        metas
            .par_iter()
            .map(|m| oracle.score(m).and_then(check))
            .collect()
    } else {
        metas
            .iter()
            .map(|m| oracle.score(m).and_then(check))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("oracle failed in round {round}: {source}")]
    Oracle {
        round: usize,
        #[source]
        source: OracleError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Local,
    Evolution,
    MetropolisEvolution,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "rs",
            Strategy::Local => "ls",
            Strategy::Evolution => "es",
            Strategy::MetropolisEvolution => "mh-es",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rs" | "random" => Ok(Strategy::Random),
            "ls" | "local" => Ok(Strategy::Local),
            "es" | "evolution" => Ok(Strategy::Evolution),
            "mh-es" | "mhes" | "mh" => Ok(Strategy::MetropolisEvolution),
            other => Err(format!(
                "unknown strategy '{other}' (expected rs, ls, es or mh-es)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub strategy: Strategy,
    /// Rounds `R`.
    pub rounds: usize,
    /// Children per round `P`.
    pub population: usize,
    /// Random meta-graphs drawn before the first round `P0`.
    pub initial_population: usize,
    /// Initial temperature `T0`; only the Metropolis variant reads it.
    /// `f64::INFINITY` is allowed.
    pub initial_temperature: f64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        SearchConfig {
            strategy,
            rounds: 10_000,
            population: 96,
            initial_population: 4096,
            initial_temperature: 1e-3,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.population == 0 || self.initial_population == 0 {
            return Err(SearchError::Config(
                "population sizes must be positive".into(),
            ));
        }
        if self.initial_temperature.is_nan() || self.initial_temperature < 0.0 {
            return Err(SearchError::Config(format!(
                "initial temperature must be >= 0, got {}",
                self.initial_temperature
            )));
        }
        Ok(())
    }

    /// Temperature used in round `r` (1-based).
    pub fn temperature(&self, r: usize) -> f64 {
        match self.strategy {
            Strategy::Random => f64::NAN,
            Strategy::Local => 0.0,
            Strategy::Evolution => f64::INFINITY,
            Strategy::MetropolisEvolution => {
                cosine_temperature(self.initial_temperature, r, self.rounds)
            }
        }
    }
}

/// `T0 * (1 + cos(r pi / R)) / 2`; an infinite `T0` stays infinite.
pub fn cosine_temperature(t0: f64, r: usize, rounds: usize) -> f64 {
    if t0.is_infinite() {
        return f64::INFINITY;
    }
    if rounds == 0 {
        return t0;
    }
    let t = t0 * (1.0 + (r as f64 * std::f64::consts::PI / rounds as f64).cos()) / 2.0;
    t.max(0.0)
}

/// Metropolis-Hastings acceptance of a child over the parent. Strict
/// improvements always pass and, at zero temperature, nothing else does.
/// The random stream is only consumed when the outcome is uncertain, so
/// zero and infinite temperatures never draw.
pub fn mh_accept<R: Rng + ?Sized>(child: f64, parent: f64, temperature: f64, rng: &mut R) -> bool {
    if child > parent {
        return true;
    }
    if temperature <= 0.0 {
        return false;
    }
    let p = ((child - parent) / temperature).exp();
    if p >= 1.0 {
        return true;
    }
    rng.gen::<f64>() < p
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub temperature: f64,
    pub best_child_score: f64,
    pub accepted: bool,
    pub parent_score: f64,
    pub best_ever_score: f64,
    /// Children that are copies of the parent because every mutation
    /// attempt failed. Not part of the CSV export.
    pub unchanged_children: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTrace {
    pub records: Vec<RoundRecord>,
}

pub const TRACE_HEADER: &str =
    "round,temperature,best_child_score,accepted,parent_score,best_ever_score";

impl SearchTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.round,
                r.temperature,
                r.best_child_score,
                u8::from(r.accepted),
                r.parent_score,
                r.best_ever_score
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: MetaGraph,
    pub best_score: f64,
    pub trace: SearchTrace,
    pub evaluations: usize,
}

// stream tags, kept apart from round numbers
const TAG_INIT: u64 = 0x696e_6974;
const TAG_ACCEPT: u64 = 0x6163_6370;
const TAG_CHILD: u64 = 0x6368_6c64;

fn first_max(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn draw_batch(template: &MetaGraph, seed: u64, round: u64, count: usize) -> Vec<MetaGraph> {
    (0..count)
        .into_par_iter()
        .map(|i| draw_random(template, &mut stream(&[seed, TAG_INIT, round, i as u64])))
        .collect()
}

/// Runs one search from random initial samples of `template`'s space.
/// Results depend only on the configuration and the oracle's scores.
pub fn run_search(
    cfg: &SearchConfig,
    oracle: &dyn Oracle,
    template: &MetaGraph,
) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let fail = |round| move |source| SearchError::Oracle { round, source };

    let init = draw_batch(template, cfg.seed, 0, cfg.initial_population);
    let init_scores = score_all(oracle, &init).map_err(fail(0))?;
    let i0 = first_max(&init_scores);
    let mut parent = init[i0].clone();
    let mut parent_score = init_scores[i0];
    let mut best = parent.clone();
    let mut best_score = parent_score;
    let mut evaluations = init.len();
    let mut trace = SearchTrace::default();
    let mut accept_rng = stream(&[cfg.seed, TAG_ACCEPT]);

    for r in 1..=cfg.rounds {
        let temperature = cfg.temperature(r);
        let mut unchanged = 0;
        let children: Vec<MetaGraph> = if cfg.strategy == Strategy::Random {
            draw_batch(template, cfg.seed, r as u64, cfg.population)
        } else {
            (0..cfg.population)
                .into_par_iter()
                .map(|i| {
                    mutate_detailed(
                        &parent,
                        &mut stream(&[cfg.seed, TAG_CHILD, r as u64, i as u64]),
                    )
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(|m| {
                    unchanged += usize::from(m.applied.is_none());
                    m.meta
                })
                .collect()
        };
        let scores = score_all(oracle, &children).map_err(fail(r))?;
        evaluations += children.len();
        let c = first_max(&scores);
        let child_score = scores[c];

        let accepted = match cfg.strategy {
            Strategy::Random => false,
            _ => mh_accept(child_score, parent_score, temperature, &mut accept_rng),
        };
        if child_score > best_score {
            best = children[c].clone();
            best_score = child_score;
        }
        if accepted {
            parent = children.into_iter().nth(c).expect("index in range");
            parent_score = child_score;
        }
        trace.records.push(RoundRecord {
            round: r,
            temperature,
            best_child_score: child_score,
            accepted,
            parent_score,
            best_ever_score: best_score,
            unchanged_children: unchanged,
        });
    }

    Ok(SearchOutcome {
        best,
        best_score,
        trace,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{single_cell_template, CellGraph, StageConfig};
    use crate::iso::canonical_key;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn template() -> MetaGraph {
        single_cell_template(6, StageConfig::new(8, 1, 4, 4)).unwrap()
    }

    fn edge_score(meta: &MetaGraph) -> f64 {
        let cell: &CellGraph = &meta.cells()[0];
        let mut s = 0.0;
        for (u, v) in cell.edges() {
            s += ((u * 7 + v * 3) % 5) as f64 / 10.0 - 0.15;
        }
        s
    }

    #[test]
    fn temperature_endpoints() {
        assert_eq!(cosine_temperature(2.0, 0, 10), 2.0);
        assert!((cosine_temperature(2.0, 5, 10) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_temperature(2.0, 10, 10), 0.0);
        assert_eq!(cosine_temperature(f64::INFINITY, 10, 10), f64::INFINITY);
    }

    #[test]
    fn temperature_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for r in 0..=50 {
            let t = cosine_temperature(0.3, r, 50);
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn accept_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mh_accept(0.5, 0.4, 0.0, &mut rng));
        assert!(!mh_accept(0.4, 0.4, 0.0, &mut rng));
        assert!(!mh_accept(0.3, 0.4, 0.0, &mut rng));
        assert!(mh_accept(0.3, 0.4, f64::INFINITY, &mut rng));
        assert!(mh_accept(-1e9, 0.4, f64::INFINITY, &mut rng));
        // neither limit consumed randomness
        assert_eq!(rng, ChaCha8Rng::seed_from_u64(0));
    }

    #[test]
    fn accept_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = 0.1;
        let n = 200_000;
        let hits = (0..n).filter(|_| mh_accept(0.4, 0.5, t, &mut rng)).count();
        let expected = (-1.0f64).exp();
        assert!((hits as f64 / n as f64 - expected).abs() < 0.005);
    }

    fn small(strategy: Strategy, t0: f64, seed: u64) -> SearchConfig {
        SearchConfig {
            strategy,
            rounds: 40,
            population: 6,
            initial_population: 5,
            initial_temperature: t0,
            seed,
        }
    }

    #[test]
    fn zero_temperature_reduces_to_local_search() {
        let oracle = FnOracle(edge_score);
        for seed in 0..4 {
            let mh = run_search(
                &small(Strategy::MetropolisEvolution, 0.0, seed),
                &oracle,
                &template(),
            )
            .unwrap();
            let ls = run_search(&small(Strategy::Local, 0.0, seed), &oracle, &template()).unwrap();
            assert_eq!(mh.trace, ls.trace);
            assert_eq!(mh.best, ls.best);
        }
    }

    #[test]
    fn infinite_temperature_reduces_to_evolution() {
        let oracle = FnOracle(edge_score);
        for seed in 0..4 {
            let mh = run_search(
                &small(Strategy::MetropolisEvolution, f64::INFINITY, seed),
                &oracle,
                &template(),
            )
            .unwrap();
            let es =
                run_search(&small(Strategy::Evolution, 0.0, seed), &oracle, &template()).unwrap();
            assert_eq!(mh.trace, es.trace);
            assert_eq!(mh.best, es.best);
        }
    }

    #[test]
    fn best_ever_is_monotone_and_bounds_parent() {
        let oracle = FnOracle(edge_score);
        for strategy in [
            Strategy::Random,
            Strategy::Local,
            Strategy::Evolution,
            Strategy::MetropolisEvolution,
        ] {
            let out = run_search(&small(strategy, 0.05, 3), &oracle, &template()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for r in &out.trace.records {
                assert!(r.best_ever_score >= prev);
                assert!(r.best_ever_score >= r.parent_score);
                prev = r.best_ever_score;
            }
            assert_eq!(out.best_score, edge_score(&out.best));
            assert_eq!(out.evaluations, 5 + 40 * 6);
        }
    }

    #[test]
    fn local_search_parent_never_decreases() {
        let oracle = FnOracle(edge_score);
        let out = run_search(&small(Strategy::Local, 0.0, 11), &oracle, &template()).unwrap();
        for w in out.trace.records.windows(2) {
            assert!(w[1].parent_score >= w[0].parent_score);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let oracle = FnOracle(edge_score);
        let cfg = small(Strategy::MetropolisEvolution, 0.2, 8);
        let a = run_search(&cfg, &oracle, &template()).unwrap();
        let b = run_search(&cfg, &oracle, &template()).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_eq!(canonical_key(&a.best), canonical_key(&b.best));
    }

    #[test]
    fn csv_layout() {
        let oracle = FnOracle(edge_score);
        let out = run_search(&small(Strategy::Evolution, 0.0, 1), &oracle, &template()).unwrap();
        let csv = out.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0], "1");
        assert_eq!(first[1], "inf");
        assert_eq!(first[3], "1");
    }

    #[test]
    fn failing_oracle_reports_round() {
        struct Flaky;
        impl Oracle for Flaky {
            fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
                if meta.cells()[0].edge_count() > 6 {
                    Err(OracleError::Failed("too many edges".into()))
                } else {
                    Ok(meta.cells()[0].edge_count() as f64)
                }
            }
        }
        let err = run_search(&small(Strategy::Local, 0.0, 2), &Flaky, &template()).unwrap_err();
        assert!(matches!(err, SearchError::Oracle { round, .. } if round > 0));
    }

    #[test]
    fn rejects_bad_config() {
        let oracle = FnOracle(edge_score);
        let mut cfg = small(Strategy::Local, 0.0, 0);
        cfg.population = 0;
        assert!(matches!(
            run_search(&cfg, &oracle, &template()),
            Err(SearchError::Config(_))
        ));
        let mut cfg = small(Strategy::MetropolisEvolution, -1.0, 0);
        cfg.population = 3;
        assert!(matches!(
            run_search(&cfg, &oracle, &template()),
            Err(SearchError::Config(_))
        ));
    }
}
