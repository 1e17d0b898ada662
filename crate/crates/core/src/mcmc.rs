//! Exact checks of the Metropolis chain on single-cell spaces small enough
//! to enumerate.
//!
//! States are the valid labeled cells. A proposal picks uniformly among
//! the `M` upper-triangular slots plus one padding choice that stays put,
//! then flips the chosen slot; a flip that leaves the state space is a
//! rejected move. The proposal is symmetric, so the chain's stationary law
//! is `pi(s) ∝ exp(f(s) / T)`, and the padding gives every state a
//! self-transition, which makes the chain aperiodic.

use crate::graph::{CellGraph, MetaGraph};
use crate::pipeline::{enumerate_space, PipelineError};
use crate::rng::stream;
use crate::search::{mh_accept, score_all, Oracle};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum McmcError {
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("proposal graph is disconnected: {reachable} of {total} states reachable")]
    DisconnectedSpace { reachable: usize, total: usize },
    #[error("state space is empty")]
    EmptySpace,
    #[error("state space must have exactly one cell per state")]
    NotSingleCell,
    #[error("states do not share one cell template")]
    MixedTemplates,
    #[error("state {0} appears twice")]
    DuplicateState(usize),
    #[error("{states} states but {values} performance values")]
    LengthMismatch { states: usize, values: usize },
    #[error("non-finite performance value {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn slot_mask(cell: &CellGraph) -> u32 {
    let mut mask = 0;
    for (u, v) in cell.edges() {
        mask |= 1 << cell.slot_index(u, v);
    }
    mask
}

/// Enumerated states with their scores and slot-flip neighborhoods.
#[derive(Clone, Debug)]
pub struct StateSpace {
    cells: Vec<CellGraph>,
    perf: Vec<f64>,
    slots: usize,
    /// `neighbors[i * slots + s]`: state reached by flipping slot `s`.
    neighbors: Vec<Option<usize>>,
}

impl StateSpace {
    pub fn new(states: Vec<MetaGraph>, perf: Vec<f64>) -> Result<Self, McmcError> {
        if states.len() != perf.len() {
            return Err(McmcError::LengthMismatch {
                states: states.len(),
                values: perf.len(),
            });
        }
        if let Some(&p) = perf.iter().find(|p| !p.is_finite()) {
            return Err(McmcError::NonFinite(p));
        }
        let first = states.first().ok_or(McmcError::EmptySpace)?;
        if states.iter().any(|m| m.num_stages() != 1) {
            return Err(McmcError::NotSingleCell);
        }
        let head = first.cells()[0].clone();
        let cells: Vec<CellGraph> = states.into_iter().map(|m| m.cells()[0].clone()).collect();
        if cells.iter().any(|c| !c.same_template(&head)) {
            return Err(McmcError::MixedTemplates);
        }
        let slots = head.slot_count();
        let mut index = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if index.insert(slot_mask(c), i).is_some() {
                return Err(McmcError::DuplicateState(i));
            }
        }
        let mut neighbors = Vec::with_capacity(cells.len() * slots);
        for c in &cells {
            let m = slot_mask(c);
            for s in 0..slots {
                neighbors.push(index.get(&(m ^ (1 << s))).copied());
            }
        }
        Ok(StateSpace {
            cells,
            perf,
            slots,
            neighbors,
        })
    }

    /// All valid labeled cells of a single-cell template, scored by `oracle`.
    pub fn enumerate(template: &MetaGraph, oracle: &dyn Oracle) -> Result<Self, McmcError> {
        if template.num_stages() != 1 {
            return Err(McmcError::NotSingleCell);
        }
        let states = enumerate_space(template)?;
        let perf = score_all(oracle, &states).map_err(PipelineError::from)?;
        StateSpace::new(states, perf)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn perf(&self) -> &[f64] {
        &self.perf
    }

    pub fn cell(&self, i: usize) -> &CellGraph {
        &self.cells[i]
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn neighbor(&self, i: usize, slot: usize) -> Option<usize> {
        self.neighbors[i * self.slots + slot]
    }

    /// Row-major slot bits of state `i` as hex, most significant first.
    pub fn state_hex(&self, i: usize) -> String {
        let cell = &self.cells[i];
        let mut bytes = vec![0u8; self.slots.div_ceil(8).max(1)];
        for (u, v) in cell.edges() {
            let s = cell.slot_index(u, v);
            bytes[s / 8] |= 0x80 >> (s % 8);
        }
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of states reachable from state 0 through allowed flips.
    pub fn reachable_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for s in 0..self.slots {
                if let Some(j) = self.neighbor(i, s) {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        count
    }

    fn check_connected(&self) -> Result<(), McmcError> {
        let reachable = self.reachable_count();
        if reachable != self.len() {
            return Err(McmcError::DisconnectedSpace {
                reachable,
                total: self.len(),
            });
        }
        Ok(())
    }
}

fn check_temperature(t: f64) -> Result<(), McmcError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(McmcError::NonPositiveTemperature(t));
    }
    Ok(())
}

/// `pi_i = exp(f_i / T) / Z`, computed after shifting by the maximum.
pub fn stationary_distribution(perf: &[f64], temperature: f64) -> Result<Vec<f64>, McmcError> {
    check_temperature(temperature)?;
    let top = perf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = perf
        .iter()
        .map(|f| ((f - top) / temperature).exp())
        .collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Exact one-step transition matrix of the chain.
pub fn transition_matrix(space: &StateSpace, temperature: f64) -> Result<DMatrix<f64>, McmcError> {
    check_temperature(temperature)?;
    let n = space.len();
    let q = 1.0 / (space.slots() + 1) as f64;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut moved = 0.0;
        for s in 0..space.slots() {
            if let Some(j) = space.neighbor(i, s) {
                let a = ((space.perf[j] - space.perf[i]) / temperature)
                    .exp()
                    .min(1.0);
                p[(i, j)] += q * a;
                moved += q * a;
            }
        }
        p[(i, i)] += 1.0 - moved;
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSpec {
    pub temperature: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    /// Visits per state after burn-in, one per step.
    pub visits: Vec<u64>,
    pub accepted: u64,
    pub proposed_valid: u64,
}

impl ChainRun {
    pub fn frequencies(&self) -> Vec<f64> {
        let total: u64 = self.visits.iter().sum();
        self.visits
            .iter()
            .map(|&v| v as f64 / total.max(1) as f64)
            .collect()
    }
}

/// Runs `burn_in + steps` transitions from a seeded uniform start state.
pub fn run_metropolis_chain(space: &StateSpace, spec: &ChainSpec) -> Result<ChainRun, McmcError> {
    check_temperature(spec.temperature)?;
    space.check_connected()?;
    let mut rng = stream(&[spec.seed, 0x6d63_6d63]);
    let mut state = rng.gen_range(0..space.len());
    let mut run = ChainRun {
        visits: vec![0; space.len()],
        accepted: 0,
        proposed_valid: 0,
    };
    for step in 0..spec.burn_in + spec.steps {
        let slot = rng.gen_range(0..=space.slots());
        let proposal = if slot < space.slots() {
            space.neighbor(state, slot)
        } else {
            None
        };
        if let Some(next) = proposal {
            run.proposed_valid += 1;
            if mh_accept(
                space.perf[next],
                space.perf[state],
                spec.temperature,
                &mut rng,
            ) {
                state = next;
                run.accepted += 1;
            }
        }
        if step >= spec.burn_in {
            run.visits[state] += 1;
        }
    }
    Ok(run)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDiagnostics {
    pub states: usize,
    /// `max_j |(pi P)_j - pi_j|`.
    pub balance_residual: f64,
    /// `max_ij |pi_i P_ij - pi_j P_ji|`.
    pub detailed_balance_residual: f64,
    /// `1 - lambda_2`, with eigenvalues in decreasing order.
    pub spectral_gap: f64,
    /// `1 - max(|lambda_i|)` over all but the top eigenvalue.
    pub absolute_spectral_gap: f64,
    pub tv_distance: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug)]
pub struct McmcReport {
    pub pi: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

pub fn exact_diagnostics(space: &StateSpace, pi: &[f64], p: &DMatrix<f64>) -> (f64, f64, f64, f64) {
    let n = space.len();
    let mut balance: f64 = 0.0;
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| pi[i] * p[(i, j)]).sum();
        balance = balance.max((flow - pi[j]).abs());
    }
    let mut detailed: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            detailed = detailed.max((pi[i] * p[(i, j)] - pi[j] * p[(j, i)]).abs());
        }
    }
    // D^1/2 P D^-1/2 is symmetric under detailed balance and shares P's spectrum
    let sq: Vec<f64> = pi.iter().map(|x| x.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| sq[i] * p[(i, j)] / sq[j]);
    s = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let (gap, abs_gap) = if eig.len() < 2 {
        (1.0, 1.0)
    } else {
        let second = eig[1];
        let largest_rest = eig[1..].iter().map(|x| x.abs()).fold(0.0, f64::max);
        (1.0 - second, 1.0 - largest_rest)
    };
    (balance, detailed, gap, abs_gap)
}

/// Runs the chain and compares it against the exact stationary law.
pub fn chain_diagnostics(space: &StateSpace, spec: &ChainSpec) -> Result<McmcReport, McmcError> {
    let run = run_metropolis_chain(space, spec)?;
    let pi = stationary_distribution(&space.perf, spec.temperature)?;
    let p = transition_matrix(space, spec.temperature)?;
    let (balance, detailed, gap, abs_gap) = exact_diagnostics(space, &pi, &p);
    let frequencies = run.frequencies();
    let total = spec.burn_in + spec.steps;
    let diagnostics = ChainDiagnostics {
        states: space.len(),
        balance_residual: balance,
        detailed_balance_residual: detailed,
        spectral_gap: gap,
        absolute_spectral_gap: abs_gap,
        tv_distance: total_variation(&frequencies, &pi),
        acceptance_rate: run.accepted as f64 / total.max(1) as f64,
    };
    Ok(McmcReport {
        pi,
        frequencies,
        diagnostics,
    })
}

impl McmcReport {
    /// One row per state, then a `#` summary line.
    pub fn to_csv(&self, space: &StateSpace) -> String {
        let mut out = String::from("state_hex,perf,pi_analytic,freq_empirical\n");
        for i in 0..space.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                space.state_hex(i),
                space.perf[i],
                self.pi[i],
                self.frequencies[i]
            );
        }
        let d = &self.diagnostics;
        let _ = writeln!(
            out,
            "# tv={} spectral_gap={} balance_residual={} states={}",
            d.tv_distance, d.spectral_gap, d.balance_residual, d.states
        );
        out
    }
}
