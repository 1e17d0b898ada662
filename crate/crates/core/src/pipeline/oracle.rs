use super::PipelineError;
use crate::graph::{active_subgraph, bits, CellGraph, MetaGraph, MetaGraphDoc};
use crate::iso::canonical_key;
use crate::predictor::{predict, PredictorModel};
use crate::search::{Oracle, OracleError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Uniform value in `[0, 1)` keyed by `salt` and `parts`; stable across
/// platforms and releases.
fn keyed_unit(salt: u64, parts: &[&[u8]]) -> f64 {
    let mut h = Sha256::new();
    h.update(salt.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Vertex role for edge typing: 0 input, 1..=4 operator, 5 output.
fn role(cell: &CellGraph, v: usize) -> usize {
    match cell.op(v) {
        Some(op) => 1 + op.index(),
        None if v == 0 => 0,
        None => 5,
    }
}

/// Smooth synthetic landscape: a sigmoid of per-stage edge counts grouped
/// by endpoint roles, each group with a salt-keyed weight, plus a small
/// class-keyed noise term. Every feature is invariant under relabeling,
/// so isomorphic meta-graphs score the same.
#[derive(Clone, Debug)]
pub struct SyntheticA {
    pub salt: u64,
    weights: Vec<[[f64; 6]; 6]>,
}

impl SyntheticA {
    pub const NOISE: f64 = 0.15;
    const MAX_STAGES: usize = 16;

    pub fn new(salt: u64) -> Self {
        let weights = (0..Self::MAX_STAGES)
            .map(|k| {
                let mut w = [[0.0; 6]; 6];
                for (a, row) in w.iter_mut().enumerate() {
                    for (b, x) in row.iter_mut().enumerate() {
                        let key = [k as u8, a as u8, b as u8];
                        *x = 2.0 * keyed_unit(salt, &[b"synthetic-a/w", &key]) - 1.0;
                    }
                }
                w
            })
            .collect();
        SyntheticA { salt, weights }
    }

    pub fn structural(&self, meta: &MetaGraph) -> f64 {
        let mut z = 0.0;
        for (k, cell) in meta.cells().iter().enumerate() {
            let w = &self.weights[k % Self::MAX_STAGES];
            let mut s = 0.0;
            for (u, v) in cell.edges() {
                s += w[role(cell, u)][role(cell, v)];
            }
            z += s / (cell.slot_count().max(1) as f64).sqrt();
        }
        sigmoid(2.0 * z)
    }

    pub fn value(&self, meta: &MetaGraph) -> f64 {
        let noise = keyed_unit(
            self.salt,
            &[b"synthetic-a/n", canonical_key(meta).as_bytes()],
        );
        (1.0 - Self::NOISE) * self.structural(meta) + Self::NOISE * noise
    }
}

impl Oracle for SyntheticA {
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
        Ok(self.value(meta))
    }
}

/// Rugged synthetic landscape: rewards many active vertices, long
/// input-to-output paths and a mixed operator population, blended with a
/// large class-keyed noise term.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticB {
    pub salt: u64,
}

impl SyntheticB {
    pub const NOISE: f64 = 0.5;

    pub fn new(salt: u64) -> Self {
        SyntheticB { salt }
    }

    /// Mean over cells of (active fraction + depth fraction + operator
    /// entropy) / 3, in `[0, 1]`.
    pub fn structural(meta: &MetaGraph) -> f64 {
        let mut total = 0.0;
        for cell in meta.cells() {
            let inter = cell.num_vertices().saturating_sub(2);
            let Ok(sub) = active_subgraph(cell) else {
                continue;
            };
            let active_frac = sub.active_count() as f64 / inter as f64;

            let mut depth = vec![0usize; cell.num_vertices()];
            for v in sub.active_vertices() {
                let preds = sub.cell.predecessors(v) & sub.active;
                depth[v] = 1 + bits(preds).map(|u| depth[u]).max().unwrap_or(0);
            }
            let longest = sub.feeder_vertices().map(|v| depth[v]).max().unwrap_or(0);
            let depth_frac = longest as f64 / inter as f64;

            let mut counts = [0usize; 4];
            for v in sub.active_vertices() {
                counts[cell.op(v).expect("intermediate").index()] += 1;
            }
            let n = sub.active_count() as f64;
            let entropy: f64 = counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum();
            let kinds = cell
                .ops()
                .iter()
                .map(|op| op.index())
                .fold(0u32, |m, i| m | 1 << i);
            let max_entropy = (kinds.count_ones() as f64).ln();
            let entropy_frac = if max_entropy > 0.0 {
                entropy / max_entropy
            } else {
                1.0
            };

            total += (active_frac + depth_frac + entropy_frac) / 3.0;
        }
        total / meta.num_stages() as f64
    }

    pub fn value(&self, meta: &MetaGraph) -> f64 {
        let noise = keyed_unit(
            self.salt,
            &[b"synthetic-b/n", canonical_key(meta).as_bytes()],
        );
        (1.0 - Self::NOISE) * Self::structural(meta) + Self::NOISE * noise
    }
}

impl Oracle for SyntheticB {
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
        Ok(self.value(meta))
    }
}

/// Scores with a trained surrogate.
#[derive(Clone, Debug)]
pub struct PredictorOracle {
    pub model: PredictorModel,
}

impl Oracle for PredictorOracle {
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
        Ok(predict(&self.model, meta)?)
    }
}

/// Training budget forwarded to an external evaluator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epochs: u32,
    pub data_fraction: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            epochs: 10,
            data_fraction: 1.0,
        }
    }
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    meta: &'a MetaGraphDoc,
    budget: Budget,
}

#[derive(Deserialize)]
struct Reply {
    id: u64,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
}

fn protocol(msg: String) -> OracleError {
    OracleError::ExternalProtocol(msg)
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| protocol(format!("cannot start '{command}': {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
            next_id: 0,
            broken: None,
        })
    }

    /// Exit status of a child that has stopped or is about to.
    fn exit_note(&mut self) -> String {
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return format!(" ({status})");
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        String::new()
    }

    fn exchange(
        &mut self,
        meta: &MetaGraph,
        budget: Budget,
        timeout: Duration,
    ) -> Result<f64, OracleError> {
        let doc = MetaGraphDoc::from(meta);
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request {
            id,
            meta: &doc,
            budget,
        })
        .map_err(|e| protocol(e.to_string()))?;
        line.push('\n');
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => return Err(protocol("evaluator stdin closed".into())),
        };
        if let Err(e) = written {
            let note = self.exit_note();
            return Err(protocol(format!("write to evaluator failed: {e}{note}")));
        }

        let deadline = Instant::now() + timeout;
        let reply = loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(l)) if l.trim().is_empty() => continue,
                Ok(Ok(l)) => break l,
                Ok(Err(e)) => return Err(protocol(format!("read from evaluator failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(protocol(format!(
                        "no reply to request {id} within {timeout:?}"
                    )));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let note = self.exit_note();
                    return Err(protocol(format!(
                        "evaluator exited before answering request {id}{note}"
                    )));
                }
            }
        };
        let reply: Reply = serde_json::from_str(&reply)
            .map_err(|e| protocol(format!("malformed reply {reply:?}: {e}")))?;
        if reply.id != id {
            return Err(protocol(format!(
                "reply id {} does not match request {id}",
                reply.id
            )));
        }
        match (reply.score, reply.error) {
            (_, Some(msg)) => Err(protocol(format!("evaluator error for request {id}: {msg}"))),
            (Some(s), None) if (0.0..=1.0).contains(&s) => Ok(s),
            (Some(s), None) => Err(protocol(format!(
                "score {s} for request {id} outside [0, 1]"
            ))),
            (None, None) => Err(protocol(format!("reply {id} has neither score nor error"))),
        }
    }

    fn shutdown(&mut self) {
        self.stdin.take();
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Long-lived child processes answering one JSON request per line on stdin
/// with one JSON reply per line on stdout. Each worker has at most one
/// request in flight; a worker that fails once refuses further work.
pub struct ExternalOracle {
    workers: Vec<Mutex<Worker>>,
    idle: Mutex<Vec<usize>>,
    wake: Condvar,
    pub budget: Budget,
    pub timeout: Duration,
}

impl ExternalOracle {
    /// Starts `workers` copies of `command`, each through `sh -c`.
    pub fn spawn(
        command: &str,
        workers: usize,
        budget: Budget,
        timeout: Duration,
    ) -> Result<Self, OracleError> {
        if workers == 0 {
            return Err(protocol("at least one evaluator worker is required".into()));
        }
        let pool = (0..workers)
            .map(|_| Worker::spawn(command).map(Mutex::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExternalOracle {
            workers: pool,
            idle: Mutex::new((0..workers).rev().collect()),
            wake: Condvar::new(),
            budget,
            timeout,
        })
    }

    fn checkout(&self) -> usize {
        let mut idle = self.idle.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            if let Some(i) = idle.pop() {
                return i;
            }
            idle = self.wake.wait(idle).unwrap_or_else(|p| p.into_inner());
        }
    }

    fn checkin(&self, i: usize) {
        self.idle.lock().unwrap_or_else(|p| p.into_inner()).push(i);
        self.wake.notify_one();
    }
}

impl Oracle for ExternalOracle {
    fn score(&self, meta: &MetaGraph) -> Result<f64, OracleError> {
        let i = self.checkout();
        let result = {
            let mut w = self.workers[i].lock().unwrap_or_else(|p| p.into_inner());
            match &w.broken {
                Some(msg) => Err(protocol(format!("evaluator unusable after: {msg}"))),
                None => {
                    let r = w.exchange(meta, self.budget, self.timeout);
                    if let Err(e) = &r {
                        w.broken = Some(e.to_string());
                    }
                    r
                }
            }
        };
        self.checkin(i);
        result
    }

    fn concurrent(&self) -> bool {
        self.workers.len() > 1
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        for w in &mut self.workers {
            w.get_mut().unwrap_or_else(|p| p.into_inner()).shutdown();
        }
    }
}

/// Command-line oracle selector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleSpec {
    SyntheticA(u64),
    SyntheticB(u64),
    Predictor(PathBuf),
    External(String),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let salt = |a: Option<&str>| -> Result<u64, String> {
            a.map_or(Ok(0), |v| {
                v.parse().map_err(|_| format!("bad oracle salt '{v}'"))
            })
        };
        match (kind, arg) {
            ("synthetic-a", a) => Ok(OracleSpec::SyntheticA(salt(a)?)),
            ("synthetic-b", a) => Ok(OracleSpec::SyntheticB(salt(a)?)),
            ("predictor", Some(p)) if !p.is_empty() => Ok(OracleSpec::Predictor(p.into())),
            ("external", Some(c)) if !c.trim().is_empty() => Ok(OracleSpec::External(c.to_string())),
            _ => Err(format!(
                "unknown oracle '{s}' (expected synthetic-a[:salt], synthetic-b[:salt], predictor:<path> or external:<command>)"
            )),
        }
    }
}

/// Settings that only matter for external evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalSettings {
    pub budget: Budget,
    pub timeout: Duration,
    pub workers: usize,
}

impl Default for ExternalSettings {
    fn default() -> Self {
        ExternalSettings {
            budget: Budget::default(),
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
            workers: 1,
        }
    }
}

pub fn make_oracle(
    spec: &OracleSpec,
    external: ExternalSettings,
) -> Result<Box<dyn Oracle>, PipelineError> {
    Ok(match spec {
        OracleSpec::SyntheticA(salt) => Box::new(SyntheticA::new(*salt)),
        OracleSpec::SyntheticB(salt) => Box::new(SyntheticB::new(*salt)),
        OracleSpec::Predictor(path) => Box::new(PredictorOracle {
            model: PredictorModel::load(path)?,
        }),
        OracleSpec::External(cmd) => Box::new(ExternalOracle::spawn(
            cmd,
            external.workers,
            external.budget,
            external.timeout,
        )?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{preset_space, OperatorKind::*, StageConfig};
    use crate::iso::{apply_permutation, random_permutation};
    use crate::pipeline::draw_random;
    use crate::rng::stream;

    #[test]
    fn keyed_unit_is_stable() {
        let a = keyed_unit(1, &[b"x"]);
        assert_eq!(a, keyed_unit(1, &[b"x"]));
        assert_ne!(a, keyed_unit(2, &[b"x"]));
        assert!((0.0..1.0).contains(&a));
        // length prefixes keep part boundaries apart
        assert_ne!(keyed_unit(0, &[b"ab", b"c"]), keyed_unit(0, &[b"a", b"bc"]));
    }

    #[test]
    fn synthetic_scores_are_isomorphism_invariant() {
        let template = preset_space("cifar10").unwrap();
        let a = SyntheticA::new(3);
        let b = SyntheticB::new(3);
        let mut rng = stream(&[17]);
        for _ in 0..10 {
            let meta = draw_random(&template, &mut rng);
            for k in 0..meta.num_stages() {
                let p = random_permutation(&meta.cells()[k], &mut rng);
                let cell = apply_permutation(&meta.cells()[k], &p).unwrap();
                let twin = meta.with_cell(k, cell).unwrap();
                assert_eq!(a.value(&meta), a.value(&twin));
                assert_eq!(b.value(&meta), b.value(&twin));
            }
            let (va, vb) = (a.value(&meta), b.value(&meta));
            assert!((0.0..=1.0).contains(&va) && (0.0..=1.0).contains(&vb));
        }
    }

    #[test]
    fn chain_maximizes_structure() {
        let stage = StageConfig::new(8, 1, 4, 4);
        let cell = CellGraph::with_edges(
            vec![Conv1x1, DwConv3, DwConv5],
            [(0, 1), (1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let chain = MetaGraph::new(vec![cell], vec![stage]).unwrap();
        assert!((SyntheticB::structural(&chain) - 1.0).abs() < 1e-12);
        let cell = CellGraph::with_edges(vec![Conv1x1, DwConv3, DwConv5], [(0, 1)]).unwrap();
        let single = MetaGraph::new(vec![cell], vec![stage]).unwrap();
        // one active vertex of three, depth one, a single operator kind
        assert!((SyntheticB::structural(&single) - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn parse_specs() {
        assert_eq!("synthetic-a".parse(), Ok(OracleSpec::SyntheticA(0)));
        assert_eq!("synthetic-b:9".parse(), Ok(OracleSpec::SyntheticB(9)));
        assert_eq!(
            "predictor:m.json".parse(),
            Ok(OracleSpec::Predictor("m.json".into()))
        );
        assert_eq!(
            "external:python3 eval.py --x".parse(),
            Ok(OracleSpec::External("python3 eval.py --x".into()))
        );
        assert!("predictor".parse::<OracleSpec>().is_err());
        assert!("oracle".parse::<OracleSpec>().is_err());
        assert!("synthetic-a:x".parse::<OracleSpec>().is_err());
    }
}
