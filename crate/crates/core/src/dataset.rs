//! Experience data: state vectors, transitions, batches and their JSON Lines
//! encoding.
//!
//! A batch file holds one transition per line:
//!
//! ```text
//! {"s":[1,5],"a":1,"r":2,"sp":[3,3],"traj":0,"t":0}
//! ```
//!
//! Integral reals are written without a fractional part; everything else uses
//! the shortest decimal form that parses back to the same `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Number;

use crate::error::{Error, Result};

/// Vehicle counts per observation channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Self {
        StateVector(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Hashable exact-equality key. `-0.0` and `0.0` map to the same key.
    pub fn key(&self) -> StateKey {
        StateKey(
            self.0
                .iter()
                .map(|&x| if x == 0.0 { 0u64 } else { x.to_bits() })
                .collect(),
        )
    }

    pub fn scaled(&self, c: f64) -> StateVector {
        StateVector(self.0.iter().map(|x| x * c).collect())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for &x in &self.0 {
            if !x.is_finite() {
                return Err(format!("non-finite coordinate {x}"));
            }
            if x < 0.0 {
                return Err(format!("negative coordinate {x}"));
            }
        }
        Ok(())
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

impl<const N: usize> From<[f64; N]> for StateVector {
    fn from(v: [f64; N]) -> Self {
        StateVector(v.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateKey(Vec<u64>);

/// One experience tuple `(s, a, r, s')` tagged with its trajectory and step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: StateVector,
    pub a: usize,
    pub r: f64,
    pub s_next: StateVector,
    pub traj_id: i64,
    pub t: i64,
}

/// An immutable, validated collection of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    transitions: Vec<Transition>,
    action_count: usize,
    dim: usize,
    reward_bound: f64,
}

impl Batch {
    /// Validates and wraps `transitions`.
    ///
    /// Trajectories must be contiguous with strictly increasing step indices,
    /// all states must share one dimensionality, actions must be below
    /// `action_count` and `reward_bound` must dominate every reward.
    pub fn new(transitions: Vec<Transition>, action_count: usize, reward_bound: f64) -> Result<Self> {
        let first = transitions.first().ok_or(Error::EmptyBatch)?;
        let dim = first.s.dim();
        if dim == 0 {
            return Err(Error::InvalidBatch("zero-dimensional state".into()));
        }
        let mut seen_traj: HashMap<i64, usize> = HashMap::new();
        let mut prev: Option<(i64, i64)> = None;
        for (i, tr) in transitions.iter().enumerate() {
            let ctx = |msg: String| Error::InvalidBatch(format!("transition {i}: {msg}"));
            if tr.s.dim() != dim || tr.s_next.dim() != dim {
                return Err(ctx(format!(
                    "dimension mismatch (expected {dim}, got {} -> {})",
                    tr.s.dim(),
                    tr.s_next.dim()
                )));
            }
            tr.s.validate().map_err(ctx)?;
            tr.s_next.validate().map_err(ctx)?;
            if tr.a >= action_count {
                return Err(ctx(format!("action {} >= action count {action_count}", tr.a)));
            }
            if !tr.r.is_finite() {
                return Err(ctx("non-finite reward".into()));
            }
            if tr.r > reward_bound {
                return Err(ctx(format!("reward {} exceeds bound {reward_bound}", tr.r)));
            }
            match prev {
                Some((traj, t)) if traj == tr.traj_id => {
                    if tr.t <= t {
                        return Err(ctx(format!("step {} does not follow {t} in trajectory {traj}", tr.t)));
                    }
                }
                _ => {
                    if seen_traj.insert(tr.traj_id, i).is_some() {
                        return Err(ctx(format!("trajectory {} is not contiguous", tr.traj_id)));
                    }
                }
            }
            prev = Some((tr.traj_id, tr.t));
        }
        Ok(Batch {
            transitions,
            action_count,
            dim,
            reward_bound,
        })
    }

    /// Like [`Batch::new`] with the action count and reward bound inferred
    /// from the data.
    pub fn from_transitions(transitions: Vec<Transition>) -> Result<Self> {
        let action_count = transitions.iter().map(|t| t.a + 1).max().unwrap_or(0);
        let reward_bound = transitions.iter().map(|t| t.r).fold(0.0, f64::max);
        Batch::new(transitions, action_count, reward_bound)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// Appends the trajectories of `other`, renumbering its trajectory ids so
    /// they stay distinct.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        let offset = self.transitions.iter().map(|t| t.traj_id).max().unwrap_or(-1) + 1
            - other.transitions.iter().map(|t| t.traj_id).min().unwrap_or(0);
        let mut transitions = self.transitions.clone();
        transitions.extend(other.transitions.iter().cloned().map(|mut t| {
            t.traj_id += offset;
            t
        }));
        Batch::new(
            transitions,
            self.action_count.max(other.action_count),
            self.reward_bound.max(other.reward_bound),
        )
    }

    /// Multiplies every state coordinate by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Batch> {
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition {
                s: t.s.scaled(c),
                s_next: t.s_next.scaled(c),
                ..t.clone()
            })
            .collect();
        Batch::new(transitions, self.action_count, self.reward_bound)
    }
}

/// Deduplicated next states in order of first appearance.
pub fn core_states(batch: &Batch) -> Vec<StateVector> {
    let mut seen = HashMap::new();
    let mut core = Vec::new();
    for tr in batch.transitions() {
        if seen.insert(tr.s_next.key(), core.len()).is_none() {
            core.push(tr.s_next.clone());
        }
    }
    core
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub count: usize,
    pub action_counts: Vec<usize>,
    pub reward_min: f64,
    pub reward_max: f64,
    pub reward_mean: f64,
    pub dim: usize,
}

pub fn batch_stats(batch: &Batch) -> BatchStats {
    let mut action_counts = vec![0; batch.action_count()];
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for tr in batch.transitions() {
        action_counts[tr.a] += 1;
        min = min.min(tr.r);
        max = max.max(tr.r);
        sum += tr.r;
    }
    BatchStats {
        count: batch.len(),
        action_counts,
        reward_min: min,
        reward_max: max,
        reward_mean: sum / batch.len() as f64,
        dim: batch.dim(),
    }
}

#[derive(Deserialize)]
struct RawRecord {
    s: Vec<f64>,
    a: Number,
    r: f64,
    sp: Vec<f64>,
    traj: i64,
    t: i64,
}

#[derive(Serialize)]
struct OutRecord {
    s: Vec<Number>,
    a: usize,
    r: Number,
    sp: Vec<Number>,
    traj: i64,
    t: i64,
}

fn encode_real(x: f64) -> Number {
    const EXACT_INT: f64 = 9_007_199_254_740_992.0;
    if x.fract() == 0.0 && x.abs() < EXACT_INT && !(x == 0.0 && x.is_sign_negative()) {
        Number::from(x as i64)
    } else {
        Number::from_f64(x).expect("finite real")
    }
}

/// Options for [`load_batch_with`]; `None` infers the value from the data.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub action_count: Option<usize>,
    pub reward_bound: Option<f64>,
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<Batch> {
    load_batch_with(path, LoadOptions::default())
}

pub fn load_batch_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Batch> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_batch(BufReader::new(file), opts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses JSON Lines from any reader. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_batch(reader: impl BufRead, opts: LoadOptions) -> Result<Batch> {
    let mut transitions = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let a = raw
            .a
            .as_u64()
            .ok_or_else(|| Error::parse(lineno, format!("action {} is not a non-negative integer", raw.a)))?
            as usize;
        let expected = *dim.get_or_insert(raw.s.len());
        if raw.s.len() != expected || raw.sp.len() != expected {
            return Err(Error::parse(
                lineno,
                format!("dimension mismatch (expected {expected}, got {} -> {})", raw.s.len(), raw.sp.len()),
            ));
        }
        if let Some(x) = raw.s.iter().chain(&raw.sp).find(|x| **x < 0.0) {
            return Err(Error::parse(lineno, format!("negative coordinate {x}")));
        }
        transitions.push(Transition {
            s: StateVector(raw.s),
            a,
            r: raw.r,
            s_next: StateVector(raw.sp),
            traj_id: raw.traj,
            t: raw.t,
        });
    }
    if transitions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let action_count = opts
        .action_count
        .unwrap_or_else(|| transitions.iter().map(|t| t.a + 1).max().unwrap_or(0));
    let reward_bound = opts
        .reward_bound
        .unwrap_or_else(|| transitions.iter().map(|t| t.r).fold(0.0, f64::max));
    Batch::new(transitions, action_count, reward_bound)
}

pub fn write_batch(batch: &Batch, mut out: impl Write) -> std::io::Result<()> {
    for tr in batch.transitions() {
        let rec = OutRecord {
            s: tr.s.coords().iter().map(|&x| encode_real(x)).collect(),
            a: tr.a,
            r: encode_real(tr.r),
            sp: tr.s_next.coords().iter().map(|&x| encode_real(x)).collect(),
            traj: tr.traj_id,
            t: tr.t,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_batch(batch: &Batch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_batch(batch, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// The six-transition two-flow example dataset (0 = NS, 1 = EW).
pub fn table1_batch() -> Batch {
    let rows: [([f64; 2], usize, [f64; 2], f64, i64, i64); 6] = [
        ([1.0, 5.0], 1, [3.0, 3.0], 2.0, 0, 0),
        ([3.0, 3.0], 0, [1.0, 5.0], 2.0, 0, 1),
        ([6.0, 1.0], 0, [2.0, 3.0], 4.0, 1, 0),
        ([2.0, 3.0], 1, [6.0, 1.0], 2.0, 1, 1),
        ([0.0, 5.0], 1, [2.0, 3.0], 2.0, 2, 0),
        ([2.0, 3.0], 0, [0.0, 5.0], 2.0, 2, 1),
    ];
    let transitions = rows
        .iter()
        .map(|&(s, a, sp, r, traj, t)| Transition {
            s: s.into(),
            a,
            r,
            s_next: sp.into(),
            traj_id: traj,
            t,
        })
        .collect();
    Batch::new(transitions, 2, 4.0).expect("static example is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Batch> {
        parse_batch(text.as_bytes(), LoadOptions::default())
    }

    #[test]
    fn table1_file_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/table1.jsonl");
        let batch = load_batch(path).unwrap();
        assert_eq!(batch.len(), 6);
        assert_eq!(batch.dim(), 2);
        assert_eq!(batch.action_count(), 2);
        assert_eq!(batch, table1_batch());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse(""), Err(Error::EmptyBatch)));
        assert!(matches!(parse("\n\n"), Err(Error::EmptyBatch)));
    }

    #[test]
    fn minimal_batch() {
        let b = parse(r#"{"s":[0,0],"a":0,"r":0,"sp":[0,0],"traj":0,"t":0}"#).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(batch_stats(&b).reward_mean, 0.0);
        assert_eq!(core_states(&b).len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"s\":[0,0],\"a\":0,\"r\":0,\"sp\":[0,0],\"traj\":0,\"t\":0}\n{\"s\":[0,0],\"a\":0\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let dim = "{\"s\":[0,0],\"a\":0,\"r\":0,\"sp\":[0,0],\"traj\":0,\"t\":0}\n{\"s\":[0],\"a\":0,\"r\":0,\"sp\":[0],\"traj\":0,\"t\":1}";
        assert!(matches!(parse(dim), Err(Error::Parse { line: 2, .. })));
        let neg = r#"{"s":[0,-1],"a":0,"r":0,"sp":[0,0],"traj":0,"t":0}"#;
        assert!(matches!(parse(neg), Err(Error::Parse { line: 1, .. })));
        let frac = r#"{"s":[0,0],"a":0.5,"r":0,"sp":[0,0],"traj":0,"t":0}"#;
        assert!(matches!(parse(frac), Err(Error::Parse { line: 1, .. })));
        let negact = r#"{"s":[0,0],"a":-1,"r":0,"sp":[0,0],"traj":0,"t":0}"#;
        assert!(matches!(parse(negact), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn trajectory_structure_is_checked() {
        let rec = |traj: i64, t: i64| {
            format!(r#"{{"s":[0],"a":0,"r":0,"sp":[0],"traj":{traj},"t":{t}}}"#)
        };
        let ok = [rec(0, 0), rec(0, 1), rec(1, 0)].join("\n");
        assert!(parse(&ok).is_ok());
        let backwards = [rec(0, 1), rec(0, 1)].join("\n");
        assert!(matches!(parse(&backwards), Err(Error::InvalidBatch(_))));
        let split = [rec(0, 0), rec(1, 0), rec(0, 1)].join("\n");
        assert!(matches!(parse(&split), Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn core_states_table1() {
        let core: Vec<Vec<f64>> = core_states(&table1_batch()).into_iter().map(|s| s.0).collect();
        assert_eq!(
            core,
            vec![vec![3.0, 3.0], vec![1.0, 5.0], vec![2.0, 3.0], vec![6.0, 1.0], vec![0.0, 5.0]]
        );
    }

    #[test]
    fn identical_next_states_give_one_core_state() {
        let transitions = (0..4)
            .map(|t| Transition {
                s: [t as f64, 1.0].into(),
                a: 0,
                r: 1.0,
                s_next: [7.0, 7.0].into(),
                traj_id: 0,
                t,
            })
            .collect();
        let b = Batch::from_transitions(transitions).unwrap();
        assert_eq!(core_states(&b), vec![StateVector::from([7.0, 7.0])]);
    }

    #[test]
    fn stats_table1() {
        let st = batch_stats(&table1_batch());
        assert_eq!(st.count, 6);
        assert_eq!(st.action_counts, vec![3, 3]);
        assert_eq!(st.reward_max, 4.0);
        assert_eq!(st.reward_min, 2.0);
        assert_eq!(st.action_counts.iter().sum::<usize>(), st.count);
    }

    #[test]
    fn integral_rewards_are_written_without_fraction() {
        let mut tr = table1_batch().transitions()[0].clone();
        tr.r = 2.5;
        let b = Batch::from_transitions(vec![tr]).unwrap();
        let mut buf = Vec::new();
        write_batch(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "{\"s\":[1,5],\"a\":1,\"r\":2.5,\"sp\":[3,3],\"traj\":0,\"t\":0}\n");
    }

    #[test]
    fn table1_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t1.jsonl");
        save_batch(&table1_batch(), &path).unwrap();
        let back = load_batch_with(
            &path,
            LoadOptions {
                action_count: Some(2),
                reward_bound: Some(4.0),
            },
        )
        .unwrap();
        assert_eq!(back, table1_batch());
    }
}
