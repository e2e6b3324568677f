//! Stochastic Pauli noise by trajectory sampling, and the mitigation toolbox:
//! readout inversion, Pauli twirling, XX dynamical decoupling and zero-noise
//! extrapolation by unitary folding.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, TrotterPlan};
use crate::greens::{self, dimer_ground_circuit, dimer_suite_analytic, dimer_suite_specs, Evolution, GreensError, Kind, Protocol, ProtocolCircuit};
use crate::oracle::FermionHamiltonian;
use crate::pauli::JwLayout;
use crate::rng::{self, child_seed, Channel};
use crate::statevector::{cumulative, draw_outcome, Counts, Gate, GateOp, SimError};

type C = num_complex::Complex64;

const DEVICE5: &str = include_str!("../data/device5.toml");

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: String, value: f64 },
    #[error("{name} = {value} must be finite and non-negative")]
    Duration { name: String, value: f64 },
    #[error("qubit entries must be numbered 0..n without gaps (found {0})")]
    QubitIndex(usize),
    #[error("pair ({0}, {1}) is not a pair of distinct model qubits")]
    BadPair(usize, usize),
    #[error("idle noise enabled but qubit {0} has neither idle_detuning nor t2")]
    MissingIdleRate(usize),
    #[error("model has {model} qubits, circuit has {circuit}")]
    WidthMismatch { model: usize, circuit: usize },
    #[error("op {0} acts on more than two qubits; the noise model has no channel for it")]
    UnsupportedOp(String),
    #[error("readout confusion of measured bit {0} is singular")]
    SingularConfusion(usize),
    #[error("{confusions} confusion matrices for {bits} measured bits")]
    ConfusionCount { confusions: usize, bits: usize },
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("scale factor {0} is below 1")]
    ScaleBelowOne(f64),
    #[error("degenerate fit: order {order} needs more than {order} distinct scales, got {distinct}")]
    DegenerateFit { order: usize, distinct: usize },
    #[error("invalid mitigation config: {0}")]
    Config(String),
    #[error("unknown DD sequence {0:?} (expected none or xx)")]
    UnknownSequence(String),
    #[error("noise model file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Greens(#[from] GreensError),
}

fn probability(name: impl Into<String>, value: f64) -> Result<f64, NoiseError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(NoiseError::Probability { name: name.into(), value })
    }
}

fn duration(name: impl Into<String>, value: f64) -> Result<f64, NoiseError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(NoiseError::Duration { name: name.into(), value })
    }
}

/// Readout confusion, row-stochastic: `m[prepared][read]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion([[f64; 2]; 2]);

impl Confusion {
    pub fn identity() -> Self {
        Confusion([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn symmetric(p: f64) -> Result<Self, NoiseError> {
        Self::asymmetric(p, p)
    }

    /// `p10` = P(read 1 | prepared 0), `p01` = P(read 0 | prepared 1).
    pub fn asymmetric(p10: f64, p01: f64) -> Result<Self, NoiseError> {
        let p10 = probability("P(1|0)", p10)?;
        let p01 = probability("P(0|1)", p01)?;
        Ok(Confusion([[1.0 - p10, p10], [p01, 1.0 - p01]]))
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.0
    }

    /// Probability that a prepared `bit` is read flipped.
    pub fn flip(&self, bit: usize) -> f64 {
        self.0[bit][1 - bit]
    }

    fn is_identity(&self) -> bool {
        self.0[0][1] == 0.0 && self.0[1][0] == 0.0
    }

    /// Maps a prepared (p0, p1) to the read distribution.
    fn forward(&self) -> [[f64; 2]; 2] {
        let m = self.0;
        [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
    }

    fn backward(&self) -> Option<[[f64; 2]; 2]> {
        let f = self.forward();
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        if det.abs() < 1e-12 {
            return None;
        }
        Some([[f[1][1] / det, -f[0][1] / det], [-f[1][0] / det, f[0][0] / det]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitCalibration {
    pub physical: Option<u32>,
    pub gate_error: f64,
    pub gate_duration: f64,
    pub readout: Confusion,
    pub readout_duration: f64,
    /// Metadata only; relaxation is not simulated.
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// Spread (rad/s) of the quasi-static detuning used when idle noise is on.
    pub idle_detuning: Option<f64>,
}

impl QubitCalibration {
    pub fn ideal() -> Self {
        QubitCalibration {
            physical: None,
            gate_error: 0.0,
            gate_duration: 0.0,
            readout: Confusion::identity(),
            readout_duration: 0.0,
            t1: None,
            t2: None,
            idle_detuning: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCalibration {
    pub error: f64,
    pub duration: f64,
}

/// Depolarizing gate errors, readout confusion, durations and an optional
/// quasi-static idle detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub name: String,
    qubits: Vec<QubitCalibration>,
    pairs: BTreeMap<(usize, usize), PairCalibration>,
    idle: bool,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(rename = "qubit", default)]
    qubits: Vec<QubitEntry>,
    #[serde(rename = "pair", default)]
    pairs: Vec<PairEntry>,
    #[serde(default)]
    idle: IdleEntry,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct QubitEntry {
    index: usize,
    physical: Option<u32>,
    #[serde(default)]
    gate_error: f64,
    #[serde(default)]
    gate_duration: f64,
    #[serde(default)]
    readout_error: f64,
    readout_p10: Option<f64>,
    readout_p01: Option<f64>,
    #[serde(default)]
    readout_duration: f64,
    t1: Option<f64>,
    t2: Option<f64>,
    idle_detuning: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    qubits: [usize; 2],
    error: f64,
    duration: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct IdleEntry {
    #[serde(default)]
    enabled: bool,
}

impl NoiseModel {
    /// No errors at all; durations zero.
    pub fn ideal(n_qubits: usize) -> Self {
        NoiseModel { name: "ideal".into(), qubits: vec![QubitCalibration::ideal(); n_qubits], pairs: BTreeMap::new(), idle: false }
    }

    /// The bundled five-qubit calibration (linear coupling 0-1-2-3-4).
    pub fn device5() -> Self {
        Self::from_toml_str(DEVICE5).expect("bundled model is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NoiseError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, NoiseError> {
        let file: ModelFile = toml::from_str(text)?;
        let mut entries = file.qubits;
        entries.sort_by_key(|e| e.index);
        let mut qubits = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            if e.index != i {
                return Err(NoiseError::QubitIndex(e.index));
            }
            let p10 = e.readout_p10.unwrap_or(e.readout_error);
            let p01 = e.readout_p01.unwrap_or(e.readout_error);
            for (name, v) in [("t1", e.t1), ("t2", e.t2), ("idle_detuning", e.idle_detuning)] {
                if let Some(v) = v {
                    duration(format!("qubit {i} {name}"), v)?;
                }
            }
            qubits.push(QubitCalibration {
                physical: e.physical,
                gate_error: probability(format!("qubit {i} gate_error"), e.gate_error)?,
                gate_duration: duration(format!("qubit {i} gate_duration"), e.gate_duration)?,
                readout: Confusion::asymmetric(probability(format!("qubit {i} readout P(1|0)"), p10)?, probability(format!("qubit {i} readout P(0|1)"), p01)?)?,
                readout_duration: duration(format!("qubit {i} readout_duration"), e.readout_duration)?,
                t1: e.t1,
                t2: e.t2,
                idle_detuning: e.idle_detuning,
            });
        }
        let mut model = NoiseModel { name: file.name.unwrap_or_else(|| "custom".into()), qubits, pairs: BTreeMap::new(), idle: false };
        for p in file.pairs {
            model.set_pair(p.qubits[0], p.qubits[1], PairCalibration { error: p.error, duration: p.duration })?;
        }
        if file.idle.enabled {
            model = model.with_idle(true)?;
        }
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ModelFile {
            name: Some(self.name.clone()),
            qubits: self
                .qubits
                .iter()
                .enumerate()
                .map(|(i, q)| QubitEntry {
                    index: i,
                    physical: q.physical,
                    gate_error: q.gate_error,
                    gate_duration: q.gate_duration,
                    readout_error: q.readout.flip(0),
                    readout_p10: Some(q.readout.flip(0)),
                    readout_p01: Some(q.readout.flip(1)),
                    readout_duration: q.readout_duration,
                    t1: q.t1,
                    t2: q.t2,
                    idle_detuning: q.idle_detuning,
                })
                .collect(),
            pairs: self.pairs.iter().map(|(&(a, b), p)| PairEntry { qubits: [a, b], error: p.error, duration: p.duration }).collect(),
            idle: IdleEntry { enabled: self.idle },
        };
        toml::to_string(&file).expect("model serializes")
    }

    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubit(&self, q: usize) -> &QubitCalibration {
        &self.qubits[q]
    }

    pub fn qubit_mut(&mut self, q: usize) -> &mut QubitCalibration {
        &mut self.qubits[q]
    }

    pub fn set_pair(&mut self, a: usize, b: usize, cal: PairCalibration) -> Result<(), NoiseError> {
        if a == b || a >= self.n_qubits() || b >= self.n_qubits() {
            return Err(NoiseError::BadPair(a, b));
        }
        probability(format!("pair ({a},{b}) error"), cal.error)?;
        duration(format!("pair ({a},{b}) duration"), cal.duration)?;
        self.pairs.insert((a.min(b), a.max(b)), cal);
        Ok(())
    }

    pub fn coupled_pairs(&self) -> impl Iterator<Item = ((usize, usize), PairCalibration)> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    /// Calibration for a two-qubit gate. Pairs without a direct coupler get
    /// the worst listed error and the longest listed duration.
    pub fn pair(&self, a: usize, b: usize) -> PairCalibration {
        if let Some(p) = self.pairs.get(&(a.min(b), a.max(b))) {
            return *p;
        }
        self.pairs.values().fold(PairCalibration { error: 0.0, duration: 0.0 }, |acc, p| PairCalibration {
            error: acc.error.max(p.error),
            duration: acc.duration.max(p.duration),
        })
    }

    pub fn idle_enabled(&self) -> bool {
        self.idle
    }

    /// Turns the quasi-static idle detuning on or off. Each qubit needs either
    /// an explicit spread or a T2 (spread sqrt(2)/T2, the Gaussian 1/e time).
    pub fn with_idle(mut self, on: bool) -> Result<Self, NoiseError> {
        if on {
            for (i, q) in self.qubits.iter().enumerate() {
                if q.idle_detuning.is_none() && q.t2.is_none() {
                    return Err(NoiseError::MissingIdleRate(i));
                }
            }
        }
        self.idle = on;
        Ok(self)
    }

    pub fn idle_sigma(&self, q: usize) -> f64 {
        if !self.idle {
            return 0.0;
        }
        let c = &self.qubits[q];
        c.idle_detuning.or_else(|| c.t2.map(|t2| 2f64.sqrt() / t2)).unwrap_or(0.0)
    }

    /// Gate errors and readout removed, durations kept.
    pub fn without_errors(&self) -> Self {
        let mut m = self.clone();
        for q in &mut m.qubits {
            q.gate_error = 0.0;
            q.readout = Confusion::identity();
        }
        for p in m.pairs.values_mut() {
            p.error = 0.0;
        }
        m
    }

    pub fn confusions(&self, measured: &[usize]) -> Vec<Confusion> {
        measured.iter().map(|&q| self.qubits[q].readout).collect()
    }

    fn check_op(&self, op: &GateOp) -> Result<(), NoiseError> {
        if op.n_qubits() > 2 {
            return Err(NoiseError::UnsupportedOp(format!("{}{:?}", op.gate.name(), op.qubits().collect::<Vec<_>>())));
        }
        Ok(())
    }

    /// Depolarizing probability attached to an op (virtual gates and delays are free).
    pub fn op_error(&self, op: &GateOp) -> f64 {
        if op.gate.is_virtual() && op.controls.is_empty() || op.is_delay() {
            return 0.0;
        }
        let qs: Vec<usize> = op.qubits().collect();
        match qs.len() {
            1 => self.qubits[qs[0]].gate_error,
            _ => self.pair(qs[0], qs[1]).error,
        }
    }

    pub fn op_duration(&self, op: &GateOp) -> f64 {
        if let Gate::Delay(t) = op.gate {
            return t;
        }
        if op.gate.is_virtual() && op.controls.is_empty() {
            return 0.0;
        }
        let qs: Vec<usize> = op.qubits().collect();
        match qs.len() {
            1 => self.qubits[qs[0]].gate_duration,
            _ => self.pair(qs[0], qs[1]).duration,
        }
    }

    fn check_width(&self, c: &Circuit) -> Result<(), NoiseError> {
        if c.n_qubits() != self.n_qubits() {
            return Err(NoiseError::WidthMismatch { model: self.n_qubits(), circuit: c.n_qubits() });
        }
        Ok(())
    }
}

/// Ops that carry a gate error (everything except virtual Z-type gates and delays).
pub fn noisy_gate_count(circuit: &Circuit) -> usize {
    circuit.ops().iter().filter(|o| is_physical(o)).count()
}

fn is_physical(op: &GateOp) -> bool {
    !(op.is_delay() || op.gate.is_virtual() && op.controls.is_empty())
}

/// As-soon-as-possible start time of every op, and the total duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub total: f64,
}

pub fn schedule(circuit: &Circuit, model: &NoiseModel) -> Result<Schedule, NoiseError> {
    model.check_width(circuit)?;
    let mut avail = vec![0.0f64; circuit.n_qubits()];
    let (mut start, mut end) = (Vec::with_capacity(circuit.len()), Vec::with_capacity(circuit.len()));
    for op in circuit.ops() {
        model.check_op(op)?;
        let s = op.qubits().map(|q| avail[q]).fold(0.0, f64::max);
        let e = s + model.op_duration(op);
        for q in op.qubits() {
            avail[q] = e;
        }
        start.push(s);
        end.push(e);
    }
    let total = avail.iter().copied().fold(0.0, f64::max);
    Ok(Schedule { start, end, total })
}

const GAP_EPS: f64 = 1e-15;

/// Makes every idle window explicit as a delay. A qubit's windows start after
/// its first physical gate (before that it sits in |0>) and run to the end of
/// the circuit, where everything is read out together.
pub fn pad_idle(circuit: &Circuit, model: &NoiseModel) -> Result<Circuit, NoiseError> {
    let sched = schedule(circuit, model)?;
    let n = circuit.n_qubits();
    let mut free_at = vec![0.0f64; n];
    let mut active = vec![false; n];
    let mut out = Circuit::new(n);
    out.add_global_phase(circuit.global_phase());
    for (i, op) in circuit.ops().iter().enumerate() {
        for q in op.qubits() {
            let gap = sched.start[i] - free_at[q];
            if active[q] && gap > GAP_EPS {
                out.push(GateOp::delay(q, gap))?;
            }
        }
        out.push(op.clone())?;
        for q in op.qubits() {
            free_at[q] = sched.end[i];
            active[q] |= is_physical(op);
        }
    }
    for q in 0..n {
        let gap = sched.total - free_at[q];
        if active[q] && gap > GAP_EPS {
            out.push(GateOp::delay(q, gap))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DdSequence {
    #[default]
    None,
    Xx,
}

impl fmt::Display for DdSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DdSequence::None => "none",
            DdSequence::Xx => "xx",
        })
    }
}

impl FromStr for DdSequence {
    type Err = NoiseError;
    fn from_str(s: &str) -> Result<Self, NoiseError> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(DdSequence::None),
            "xx" => Ok(DdSequence::Xx),
            _ => Err(NoiseError::UnknownSequence(s.into())),
        }
    }
}

/// Fills every idle window long enough for two X pulses with
/// `d/4 - X - d/2 - X - d/4`, d being the slack left after the pulses.
/// Circuits without such windows come back unchanged.
pub fn dynamical_decoupling(circuit: &Circuit, model: &NoiseModel, seq: DdSequence) -> Result<Circuit, NoiseError> {
    if seq == DdSequence::None {
        return Ok(circuit.clone());
    }
    let padded = pad_idle(circuit, model)?;
    let mut out = Circuit::new(circuit.n_qubits());
    out.add_global_phase(padded.global_phase());
    let mut inserted = false;
    for op in padded.ops() {
        if let Gate::Delay(t) = op.gate {
            let q = op.targets[0];
            let pulse = model.op_duration(&GateOp::x(q));
            let slack = t - 2.0 * pulse;
            if slack > GAP_EPS {
                out.push(GateOp::delay(q, slack / 4.0))?;
                out.push(GateOp::x(q))?;
                out.push(GateOp::delay(q, slack / 2.0))?;
                out.push(GateOp::x(q))?;
                out.push(GateOp::delay(q, slack / 4.0))?;
                inserted = true;
                continue;
            }
        }
        out.push(op.clone())?;
    }
    Ok(if inserted { out } else { circuit.clone() })
}

fn letter_gate(l: usize) -> Gate {
    match l {
        1 => Gate::X,
        2 => Gate::Y,
        3 => Gate::Z,
        _ => unreachable!("identity has no gate"),
    }
}

fn letter_matrix(l: usize) -> DMatrix<C> {
    if l == 0 {
        DMatrix::identity(2, 2)
    } else {
        letter_gate(l).matrix()
    }
}

/// For each of the 16 sandwiches `(a, b)` before the gate: the Paulis `(a', b')`
/// after it, and whether the pair picks up a sign. Letters: 0=I 1=X 2=Y 3=Z;
/// `a` acts on `targets[0]`, the high bit of `Gate::matrix`.
fn sandwich_table(gate: &Gate) -> [(usize, usize, bool); 16] {
    let g = gate.matrix();
    let kron = |a: usize, b: usize| letter_matrix(a).kronecker(&letter_matrix(b));
    let mut table = [(0, 0, false); 16];
    for (k, entry) in table.iter_mut().enumerate() {
        let (a, b) = (k / 4, k % 4);
        let image = &g * kron(a, b) * g.adjoint();
        *entry = (0..16)
            .find_map(|j| {
                let q = kron(j / 4, j % 4);
                if (&image - &q).norm() < 1e-9 {
                    Some((j / 4, j % 4, false))
                } else if (&image + &q).norm() < 1e-9 {
                    Some((j / 4, j % 4, true))
                } else {
                    None
                }
            })
            .expect("Clifford maps Paulis to Paulis");
    }
    table
}

/// Random Pauli sandwiches around every CNOT and CZ. Each variant is exactly
/// the original unitary (a sign is absorbed into the global phase).
pub fn pauli_twirl(circuit: &Circuit, n_variants: usize, seed: u64) -> Result<Vec<Circuit>, NoiseError> {
    let cx = sandwich_table(&Gate::Cnot);
    let cz = sandwich_table(&Gate::Cz);
    (0..n_variants)
        .map(|v| {
            let mut rng = rng::stream(seed, v as u64, Channel::Twirl);
            let mut out = Circuit::new(circuit.n_qubits());
            out.add_global_phase(circuit.global_phase());
            for op in circuit.ops() {
                let table = match op.gate {
                    Gate::Cnot if op.controls.is_empty() => &cx,
                    Gate::Cz if op.controls.is_empty() => &cz,
                    _ => {
                        out.push(op.clone())?;
                        continue;
                    }
                };
                let k: usize = rng.random_range(0..16);
                let (a, b) = (k / 4, k % 4);
                let (a2, b2, neg) = table[k];
                let (t0, t1) = (op.targets[0], op.targets[1]);
                for (l, q) in [(a, t0), (b, t1)] {
                    if l != 0 {
                        out.push(GateOp::new(letter_gate(l), vec![q]))?;
                    }
                }
                out.push(op.clone())?;
                for (l, q) in [(a2, t0), (b2, t1)] {
                    if l != 0 {
                        out.push(GateOp::new(letter_gate(l), vec![q]))?;
                    }
                }
                if neg {
                    out.add_global_phase(PI);
                }
            }
            Ok(out)
        })
        .collect()
}

/// Ops lowered to plain amplitude kernels; trajectories run millions of these
/// on small registers, so the general simulator's checks are paid once here.
#[derive(Debug, Clone)]
enum Kernel {
    Idle { q: usize, t: f64 },
    Diag { q: usize, d: [C; 2] },
    Mat { q: usize, m: [[C; 2]; 2] },
    Cx { c: usize, t: usize },
    Both { a: usize, b: usize, ph: C },
    CMat { c: usize, t: usize, m: [[C; 2]; 2] },
    Dense2 { hi: usize, lo: usize, m: [[C; 4]; 4] },
}

impl Kernel {
    fn compile(op: &GateOp) -> Result<Kernel, NoiseError> {
        let unsupported = || NoiseError::UnsupportedOp(format!("{}{:?}", op.gate.name(), op.qubits().collect::<Vec<_>>()));
        let one = |g: &Gate| g.diag1().map(|d| [[d[0], C::new(0.0, 0.0)], [C::new(0.0, 0.0), d[1]]]).or_else(|| g.mat2());
        Ok(match (op.controls.as_slice(), &op.gate) {
            (_, Gate::Delay(t)) => Kernel::Idle { q: op.targets[0], t: *t },
            ([], g) if g.diag1().is_some() => Kernel::Diag { q: op.targets[0], d: g.diag1().expect("diagonal") },
            ([], Gate::Cnot) => Kernel::Cx { c: op.targets[0], t: op.targets[1] },
            ([], Gate::Cz) => Kernel::Both { a: op.targets[0], b: op.targets[1], ph: C::new(-1.0, 0.0) },
            ([], Gate::CPhase(t)) => Kernel::Both { a: op.targets[0], b: op.targets[1], ph: C::from_polar(1.0, *t) },
            ([], Gate::Unitary(m)) if m.nrows() == 4 => Kernel::Dense2 {
                hi: op.targets[0],
                lo: op.targets[1],
                m: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            },
            ([], g) => Kernel::Mat { q: op.targets[0], m: g.mat2().ok_or_else(unsupported)? },
            ([c], g) if op.targets.len() == 1 => Kernel::CMat { c: *c, t: op.targets[0], m: one(g).ok_or_else(unsupported)? },
            _ => return Err(unsupported()),
        })
    }

    /// Global phases are dropped: only probabilities are read from trajectories.
    fn apply(&self, a: &mut [C], detuning: Option<&[f64]>) {
        match *self {
            Kernel::Idle { q, t } => {
                if let Some(d) = detuning {
                    let th = d[q] * t;
                    if th != 0.0 {
                        phase_one(a, q, C::from_polar(1.0, th));
                    }
                }
            }
            Kernel::Diag { q, d } => phase_one(a, q, d[1] / d[0]),
            Kernel::Mat { q, m } => mat(a, q, m),
            Kernel::Cx { c, t } => {
                let (cb, tb) = (1 << c, 1 << t);
                for k in 0..a.len() >> 2 {
                    let i = with_zero_bits(k, c, t) | cb;
                    a.swap(i, i | tb);
                }
            }
            Kernel::Both { a: p, b: q, ph } => {
                let both = (1 << p) | (1 << q);
                for k in 0..a.len() >> 2 {
                    a[with_zero_bits(k, p, q) | both] *= ph;
                }
            }
            Kernel::CMat { c, t, m } => {
                let (cb, tb) = (1 << c, 1 << t);
                for k in 0..a.len() >> 2 {
                    let i = with_zero_bits(k, c, t) | cb;
                    let (x0, x1) = (a[i], a[i | tb]);
                    a[i] = m[0][0] * x0 + m[0][1] * x1;
                    a[i | tb] = m[1][0] * x0 + m[1][1] * x1;
                }
            }
            Kernel::Dense2 { hi, lo, m } => {
                let (hb, lb) = (1 << hi, 1 << lo);
                for k in 0..a.len() >> 2 {
                    let i = with_zero_bits(k, hi, lo);
                    let idx = [i, i | lb, i | hb, i | hb | lb];
                    let v = idx.map(|j| a[j]);
                    for (r, &j) in idx.iter().enumerate() {
                        a[j] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
                    }
                }
            }
        }
    }
}

fn insert_zero(k: usize, q: usize) -> usize {
    ((k >> q) << (q + 1)) | (k & ((1 << q) - 1))
}

fn with_zero_bits(k: usize, p: usize, q: usize) -> usize {
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    insert_zero(insert_zero(k, lo), hi)
}

/// Multiplies the |1> half of qubit `q` by `ph`.
fn phase_one(a: &mut [C], q: usize, ph: C) {
    let half = 1usize << q;
    for chunk in a.chunks_mut(2 * half) {
        chunk[half..].iter_mut().for_each(|x| *x *= ph);
    }
}

fn mat(a: &mut [C], q: usize, m: [[C; 2]; 2]) {
    let half = 1usize << q;
    for chunk in a.chunks_mut(2 * half) {
        let (lo, hi) = chunk.split_at_mut(half);
        for (x0, x1) in lo.iter_mut().zip(hi.iter_mut()) {
            let (a0, a1) = (*x0, *x1);
            *x0 = m[0][0] * a0 + m[0][1] * a1;
            *x1 = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

fn pauli(a: &mut [C], q: usize, letter: usize) {
    let half = 1usize << q;
    for chunk in a.chunks_mut(2 * half) {
        let (lo, hi) = chunk.split_at_mut(half);
        match letter {
            1 => lo.swap_with_slice(hi),
            2 => {
                for (x0, x1) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (a0, a1) = (*x0, *x1);
                    *x0 = C::new(a1.im, -a1.re); // -i a1
                    *x1 = C::new(-a0.im, a0.re); // i a0
                }
            }
            3 => hi.iter_mut().for_each(|x| *x = -*x),
            _ => {}
        }
    }
}

/// One trajectory's random content: (op index, Pauli code) errors and
/// per-qubit detunings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Pattern {
    errors: Vec<(u32, u8)>,
    detuning: Vec<u64>,
}

struct Program {
    kernels: Vec<Kernel>,
    qubits: Vec<[usize; 2]>,
    arity: Vec<u8>,
    hazard: Vec<f64>,
    idle_sigma: Vec<f64>,
    width: usize,
}

impl Program {
    fn new(circuit: &Circuit, model: &NoiseModel) -> Result<Self, NoiseError> {
        model.check_width(circuit)?;
        for op in circuit.ops() {
            model.check_op(op)?;
        }
        let c = if model.idle_enabled() { pad_idle(circuit, model)? } else { circuit.clone() };
        let kernels = c.ops().iter().map(Kernel::compile).collect::<Result<_, _>>()?;
        let qubits = c
            .ops()
            .iter()
            .map(|o| {
                let q: Vec<usize> = o.qubits().collect();
                [q[0], *q.get(1).unwrap_or(&0)]
            })
            .collect();
        let arity = c.ops().iter().map(|o| o.n_qubits() as u8).collect();
        let mut acc = 0.0;
        let hazard = c
            .ops()
            .iter()
            .map(|o| {
                acc += -(1.0 - model.op_error(o)).ln();
                acc
            })
            .collect();
        let idle_sigma = (0..c.n_qubits()).map(|q| model.idle_sigma(q)).collect();
        Ok(Program { kernels, qubits, arity, hazard, idle_sigma, width: c.n_qubits() })
    }

    /// Errors are placed by walking the cumulative hazard `sum -ln(1-p)`:
    /// one exponential draw per error instead of one uniform per gate.
    fn sample(&self, seed: u64, shot: u64) -> Pattern {
        let mut rng = rng::stream(seed, shot, Channel::Noise);
        let detuning = self
            .idle_sigma
            .iter()
            .map(|&s| if s > 0.0 { Normal::new(0.0, s).expect("finite sigma").sample(&mut rng).to_bits() } else { 0 })
            .collect();
        let mut errors = vec![];
        let total = self.hazard.last().copied().unwrap_or(0.0);
        if total > 0.0 {
            let mut level = 0.0;
            let mut from = 0;
            loop {
                level += <Exp1 as Distribution<f64>>::sample(&Exp1, &mut rng);
                if !(level < total) {
                    break;
                }
                let i = from + self.hazard[from..].partition_point(|&h| h <= level);
                let kinds = if self.arity[i] == 1 { 3 } else { 15 };
                errors.push((i as u32, 1 + rng.random_range(0..kinds)));
                // memoryless: continue from the end of this gate
                level = self.hazard[i];
                from = i + 1;
                if from == self.hazard.len() {
                    break;
                }
            }
        }
        Pattern { errors, detuning }
    }

    fn apply_error(&self, a: &mut [C], i: usize, code: u8) {
        let [q0, q1] = self.qubits[i];
        if self.arity[i] == 1 {
            pauli(a, q0, code as usize);
        } else {
            pauli(a, q0, code as usize / 4);
            pauli(a, q1, code as usize % 4);
        }
    }

    /// Final amplitudes of one trajectory, resumed from the latest noiseless
    /// checkpoint before its first random event.
    fn run(&self, pat: &Pattern, checkpoints: &Checkpoints) -> Vec<C> {
        let detuning: Option<Vec<f64>> = pat.detuning.iter().any(|&d| d != 0).then(|| pat.detuning.iter().map(|&d| f64::from_bits(d)).collect());
        let first = if detuning.is_some() { 0 } else { pat.errors.first().map_or(self.kernels.len(), |e| e.0 as usize) };
        let (mut a, from) = checkpoints.before(first);
        let mut next = pat.errors.iter().skip_while(|e| (e.0 as usize) < from).peekable();
        for (i, k) in self.kernels.iter().enumerate().skip(from) {
            k.apply(&mut a, detuning.as_deref());
            while let Some(&&(j, code)) = next.peek() {
                if j as usize != i {
                    break;
                }
                self.apply_error(&mut a, i, code);
                next.next();
            }
        }
        a
    }
}

fn marginal(a: &[C], measured: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; 1 << measured.len()];
    for (i, x) in a.iter().enumerate() {
        let key: usize = measured.iter().enumerate().map(|(m, &q)| ((i >> q) & 1) << m).sum();
        out[key] += x.norm_sqr();
    }
    out
}

struct Checkpoints {
    every: usize,
    states: Vec<Vec<C>>,
}

impl Checkpoints {
    const BUDGET: usize = 1 << 22; // amplitudes

    fn new(prog: &Program) -> Self {
        let dim = 1usize << prog.width;
        let slots = (Self::BUDGET / dim).max(1);
        let every = prog.kernels.len().div_ceil(slots).max(1);
        let mut a = vec![C::new(0.0, 0.0); dim];
        a[0] = C::new(1.0, 0.0);
        let mut states = vec![a.clone()];
        for (i, k) in prog.kernels.iter().enumerate() {
            k.apply(&mut a, None);
            if (i + 1) % every == 0 {
                states.push(a.clone());
            }
        }
        Checkpoints { every, states }
    }

    /// Amplitudes equal to the noiseless state before op `first`, and that op's index.
    fn before(&self, first: usize) -> (Vec<C>, usize) {
        let k = (first / self.every).min(self.states.len() - 1);
        (self.states[k].clone(), k * self.every)
    }
}

/// Shot-by-shot noisy sampling. Shot `s` draws its Pauli errors (and detunings)
/// from its own noise stream, its outcome by inverse CDF from its measure
/// stream (so an error-free model reproduces [`Counts::sample`] exactly) and its
/// readout flips from its readout stream. Shots sharing an error pattern share
/// one state-vector run.
pub fn run_noisy(circuit: &Circuit, measured: &[usize], model: &NoiseModel, shots: u64, seed: u64) -> Result<Counts, NoiseError> {
    if shots == 0 {
        return Err(NoiseError::ZeroShots);
    }
    let prog = Program::new(circuit, model)?;
    for &q in measured {
        if q >= prog.width {
            return Err(SimError::QubitOutOfRange { qubit: q, n: prog.width }.into());
        }
    }
    let patterns: Vec<Pattern> = (0..shots).into_par_iter().map(|s| prog.sample(seed, s)).collect();
    let mut groups: HashMap<&Pattern, usize> = HashMap::new();
    let mut unique: Vec<&Pattern> = vec![];
    let slot: Vec<usize> = patterns
        .iter()
        .map(|p| {
            *groups.entry(p).or_insert_with(|| {
                unique.push(p);
                unique.len() - 1
            })
        })
        .collect();
    let checkpoints = Checkpoints::new(&prog);
    let cdfs: Vec<Vec<f64>> = unique.par_iter().map(|p| cumulative(&marginal(&prog.run(p, &checkpoints), measured))).collect();
    let confusions = model.confusions(measured);
    let outcomes: Vec<u64> = (0..shots)
        .into_par_iter()
        .map(|s| {
            let mut o = draw_outcome(&cdfs[slot[s as usize]], seed, s);
            if confusions.iter().any(|c| !c.is_identity()) {
                let mut r = rng::stream(seed, s, Channel::Readout);
                for (m, c) in confusions.iter().enumerate() {
                    let bit = ((o >> m) & 1) as usize;
                    if r.random::<f64>() < c.flip(bit) {
                        o ^= 1 << m;
                    }
                }
            }
            o
        })
        .collect();
    Ok(Counts::from_outcomes(measured, outcomes))
}

fn apply_axis(probs: &mut [f64], bit: usize, m: [[f64; 2]; 2]) {
    for i in 0..probs.len() {
        if (i >> bit) & 1 == 0 {
            let j = i | (1 << bit);
            let (p0, p1) = (probs[i], probs[j]);
            probs[i] = m[0][0] * p0 + m[0][1] * p1;
            probs[j] = m[1][0] * p0 + m[1][1] * p1;
        }
    }
}

fn check_confusions(n_bits: usize, confusions: &[Confusion]) -> Result<(), NoiseError> {
    if confusions.len() != n_bits {
        return Err(NoiseError::ConfusionCount { confusions: confusions.len(), bits: n_bits });
    }
    Ok(())
}

/// The read distribution for a prepared one; `confusions[m]` acts on bit m.
pub fn apply_confusion(probs: &[f64], confusions: &[Confusion]) -> Result<Vec<f64>, NoiseError> {
    check_confusions(probs.len().trailing_zeros() as usize, confusions)?;
    let mut out = probs.to_vec();
    for (m, c) in confusions.iter().enumerate() {
        apply_axis(&mut out, m, c.forward());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigatedDistribution {
    pub probs: Vec<f64>,
    /// True when the raw inverse had negative entries that were clipped.
    pub clipped: bool,
}

/// Tensor-product inverse of the readout confusion. Negative entries are
/// clipped to zero and the rest renormalized; `clipped` says when that happened.
pub fn mitigate_distribution(observed: &[f64], confusions: &[Confusion]) -> Result<MitigatedDistribution, NoiseError> {
    check_confusions(observed.len().trailing_zeros() as usize, confusions)?;
    let mut p = observed.to_vec();
    for (m, c) in confusions.iter().enumerate() {
        apply_axis(&mut p, m, c.backward().ok_or(NoiseError::SingularConfusion(m))?);
    }
    let clipped = p.iter().any(|&x| x < -1e-12);
    if clipped {
        p.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|x| *x /= total);
    }
    Ok(MitigatedDistribution { probs: p, clipped })
}

pub fn mitigate_readout(counts: &Counts, confusions: &[Confusion]) -> Result<MitigatedDistribution, NoiseError> {
    mitigate_distribution(&counts.frequencies(), confusions)
}

#[derive(Debug, Clone)]
pub struct FoldedCircuit {
    pub circuit: Circuit,
    pub requested: f64,
    /// Noisy-gate count relative to the original: the abscissa used in the fit.
    pub realized: f64,
}

/// Unitary folding `C (C^dag C)^n` plus `S^dag S` for a suffix `S` that covers
/// the fractional remainder.
pub fn fold(circuit: &Circuit, scale: f64) -> Result<FoldedCircuit, NoiseError> {
    if !(scale >= 1.0) {
        return Err(NoiseError::ScaleBelowOne(scale));
    }
    let n = ((scale - 1.0) / 2.0 + 1e-9).floor() as usize;
    let total = noisy_gate_count(circuit);
    let rest = (scale - (1 + 2 * n) as f64).max(0.0);
    let k = ((rest * total as f64 / 2.0).round() as usize).min(total);
    let inverse = circuit.dagger();
    let mut out = circuit.clone();
    for _ in 0..n {
        out.append(&inverse)?;
        out.append(circuit)?;
    }
    if k > 0 {
        let ops = circuit.ops();
        let mut seen = 0;
        let mut from = ops.len();
        while seen < k {
            from -= 1;
            if is_physical(&ops[from]) {
                seen += 1;
            }
        }
        let mut suffix = Circuit::new(circuit.n_qubits());
        for op in &ops[from..] {
            suffix.push(op.clone())?;
        }
        out.append(&suffix.dagger())?;
        out.append(&suffix)?;
    }
    let realized = if total == 0 { scale } else { ((1 + 2 * n) * total + 2 * k) as f64 / total as f64 };
    Ok(FoldedCircuit { circuit: out, requested: scale, realized })
}

/// Least-squares polynomial coefficients (constant first) and the residual norm.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], order: usize) -> Result<(Vec<f64>, f64), NoiseError> {
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() <= order || xs.len() != ys.len() {
        return Err(NoiseError::DegenerateFit { order, distinct: distinct.len() });
    }
    let v = DMatrix::from_fn(xs.len(), order + 1, |i, j| xs[i].powi(j as i32));
    let y = DVector::from_column_slice(ys);
    let coef = v.clone().svd(true, true).solve(&y, 1e-14).map_err(|_| NoiseError::DegenerateFit { order, distinct: distinct.len() })?;
    let residual = (&v * &coef - &y).norm();
    Ok((coef.iter().copied().collect(), residual))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZnePoint {
    pub requested: f64,
    pub realized: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZneResult {
    pub value: f64,
    pub residual: f64,
    pub coefficients: Vec<f64>,
    pub points: Vec<ZnePoint>,
}

/// Runs `runner(scale) -> (realized scale, value)` at each scale and
/// extrapolates a least-squares polynomial of `order` to zero.
pub fn zne<F>(mut runner: F, scales: &[f64], order: usize) -> Result<ZneResult, NoiseError>
where
    F: FnMut(f64) -> Result<(f64, f64), NoiseError>,
{
    if scales.len() <= order {
        return Err(NoiseError::DegenerateFit { order, distinct: scales.len() });
    }
    let mut points = Vec::with_capacity(scales.len());
    for &s in scales {
        if !(s >= 1.0) {
            return Err(NoiseError::ScaleBelowOne(s));
        }
        let (realized, value) = runner(s)?;
        points.push(ZnePoint { requested: s, realized, value });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.realized).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
    let (coefficients, residual) = fit_polynomial(&xs, &ys, order)?;
    Ok(ZneResult { value: coefficients[0], residual, coefficients, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    pub readout: bool,
    /// 0 disables twirling.
    pub twirl_variants: usize,
    pub dd: DdSequence,
    pub zne_scales: Vec<f64>,
    pub zne_order: usize,
}

impl MitigationConfig {
    /// Nothing applied: one run at scale 1.
    pub fn none() -> Self {
        MitigationConfig { readout: false, twirl_variants: 0, dd: DdSequence::None, zne_scales: vec![1.0], zne_order: 0 }
    }

    /// Readout inversion, 100 twirls, XX decoupling, quadratic ZNE over 1..3.
    pub fn full() -> Self {
        MitigationConfig { readout: true, twirl_variants: 100, dd: DdSequence::Xx, zne_scales: vec![1.0, 1.5, 2.0, 2.5, 3.0], zne_order: 2 }
    }

    /// [`Self::full`], with decoupling only when the model has idle errors for it
    /// to refocus; otherwise its pulses would only add gate errors.
    pub fn for_model(model: &NoiseModel) -> Self {
        let mut c = Self::full();
        if !model.idle_enabled() {
            c.dd = DdSequence::None;
        }
        c
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.zne_scales.is_empty() {
            return Err(NoiseError::Config("no scale factors".into()));
        }
        if self.zne_scales.iter().any(|&s| !(s >= 1.0) || !s.is_finite()) {
            return Err(NoiseError::Config("scale factors must be finite and >= 1".into()));
        }
        if self.zne_scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NoiseError::Config("scale factors must be strictly increasing".into()));
        }
        if self.zne_order >= self.zne_scales.len() {
            return Err(NoiseError::Config(format!("order {} needs more than {} scale factors", self.zne_order, self.zne_scales.len())));
        }
        Ok(())
    }
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Expectation and standard error of one protocol circuit on the noisy device,
/// optionally with readout inversion.
fn noisy_estimate(pc: &ProtocolCircuit, circuits: &[Circuit], model: &NoiseModel, readout: bool, shots: u64, seed: u64) -> Result<(f64, f64), NoiseError> {
    let n = circuits.len() as u64;
    let mut all = vec![];
    for (v, c) in circuits.iter().enumerate() {
        let share = shots / n + u64::from((v as u64) < shots % n);
        if share == 0 {
            continue;
        }
        let counts = run_noisy(c, &pc.measured, model, share, child_seed(seed, v as u64))?;
        for (&o, &k) in &counts.counts {
            all.extend(std::iter::repeat_n(o, k as usize));
        }
    }
    let counts = Counts::from_outcomes(&pc.measured, all);
    if !readout {
        return Ok(pc.estimate_from_counts(&counts));
    }
    let fixed = mitigate_readout(&counts, &model.confusions(&pc.measured))?;
    let m = greens::parity_mean(&fixed.probs);
    // propagate the raw parity error through the (diagonal-in-parity) inverse
    let raw = pc.estimate_from_counts(&counts);
    let gain = parity_gain(&model.confusions(&pc.measured));
    Ok((pc.scale * m, raw.1 / gain))
}

/// Factor by which readout confusion shrinks a full-register parity signal.
fn parity_gain(confusions: &[Confusion]) -> f64 {
    confusions.iter().map(|c| 1.0 - c.flip(0) - c.flip(1)).product::<f64>().abs().max(1e-12)
}

/// One time point with no mitigation at all.
pub fn unmitigated_point(pc: &ProtocolCircuit, model: &NoiseModel, shots: u64, seed: u64) -> Result<(f64, f64), NoiseError> {
    noisy_estimate(pc, std::slice::from_ref(&pc.circuit), model, false, shots, seed)
}

/// One time point through the configured pipeline: fold, twirl, decouple,
/// run, invert readout, extrapolate.
pub fn mitigated_point(pc: &ProtocolCircuit, model: &NoiseModel, config: &MitigationConfig, shots: u64, seed: u64) -> Result<ZneResult, NoiseError> {
    config.validate()?;
    let mut idx = 0u64;
    let runner = |scale: f64| -> Result<(f64, f64), NoiseError> {
        idx += 1;
        let s = child_seed(seed, idx);
        let folded = fold(&pc.circuit, scale)?;
        let variants = if config.twirl_variants == 0 { vec![folded.circuit] } else { pauli_twirl(&folded.circuit, config.twirl_variants, s)? };
        let dressed = variants.iter().map(|c| dynamical_decoupling(c, model, config.dd)).collect::<Result<Vec<_>, _>>()?;
        let (value, _) = noisy_estimate(pc, &dressed, model, config.readout, shots, child_seed(s, 7))?;
        Ok((folded.realized, value))
    };
    if config.zne_scales.len() == 1 {
        let mut runner = runner;
        let (realized, value) = runner(config.zne_scales[0])?;
        return Ok(ZneResult {
            value,
            residual: 0.0,
            coefficients: vec![value],
            points: vec![ZnePoint { requested: config.zne_scales[0], realized, value }],
        });
    }
    zne(runner, &config.zne_scales, config.zne_order)
}

/// A noisy correlator series next to its references.
#[derive(Debug, Clone)]
pub struct NoisySeries {
    pub label: String,
    pub times: Vec<f64>,
    /// Closed-form value.
    pub analytic: Vec<f64>,
    /// Same circuits, noiseless and exact: the target mitigation can reach.
    pub noiseless: Vec<f64>,
    pub raw: Vec<f64>,
    pub raw_stderr: Vec<f64>,
    pub mitigated: Vec<ZneResult>,
    /// Independent runs averaged into `raw` and `mitigated`.
    pub repetitions: usize,
}

impl NoisySeries {
    /// Pointwise mean of independent runs of the same series. With two or more
    /// runs `raw_stderr` becomes the standard error of the mean across runs.
    pub fn average(runs: &[NoisySeries]) -> Result<NoisySeries, NoiseError> {
        let first = runs.first().ok_or_else(|| NoiseError::Config("nothing to average".into()))?;
        if runs.iter().any(|r| r.label != first.label || r.times != first.times || r.mitigated.iter().zip(&first.mitigated).any(|(a, b)| a.points.len() != b.points.len())) {
            return Err(NoiseError::Config("averaged runs must share label, grid and scales".into()));
        }
        let n = runs.len() as f64;
        let reps: usize = runs.iter().map(|r| r.repetitions).sum();
        let mean = |f: &dyn Fn(&NoisySeries) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let len = first.times.len();
        let raw: Vec<f64> = (0..len).map(|i| mean(&|r| r.raw[i])).collect();
        let raw_stderr = (0..len)
            .map(|i| {
                if runs.len() < 2 {
                    return first.raw_stderr[i];
                }
                let var = runs.iter().map(|r| (r.raw[i] - raw[i]).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            })
            .collect();
        let mitigated = (0..len)
            .map(|i| {
                let z0 = &first.mitigated[i];
                ZneResult {
                    value: mean(&|r| r.mitigated[i].value),
                    residual: mean(&|r| r.mitigated[i].residual),
                    coefficients: (0..z0.coefficients.len()).map(|c| mean(&|r| r.mitigated[i].coefficients[c])).collect(),
                    points: (0..z0.points.len())
                        .map(|j| ZnePoint { requested: z0.points[j].requested, realized: z0.points[j].realized, value: mean(&|r| r.mitigated[i].points[j].value) })
                        .collect(),
                }
            })
            .collect();
        Ok(NoisySeries { raw, raw_stderr, mitigated, repetitions: reps, ..first.clone() })
    }

    pub fn mitigated_values(&self) -> Vec<f64> {
        self.mitigated.iter().map(|z| z.value).collect()
    }

    /// Fraction of points where the mitigated value is strictly closer to `reference`.
    pub fn win_fraction(&self, reference: &[f64]) -> f64 {
        let wins = self
            .mitigated
            .iter()
            .zip(&self.raw)
            .zip(reference)
            .filter(|((m, r), x)| (m.value - *x).abs() < (*r - *x).abs())
            .count();
        wins as f64 / self.times.len() as f64
    }

    pub fn max_deviation(values: &[f64], reference: &[f64]) -> f64 {
        values.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, w: &mut impl std::io::Write, header: &[(String, String)]) -> Result<(), NoiseError> {
        writeln!(w, "# label = {}", self.label)?;
        for (k, v) in header {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "tau,analytic,noiseless,raw,raw_stderr,mitigated,zne_residual")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.17},{:.17},{:.17},{:.17},{:.17},{:.17},{:.17}",
                self.times[i], self.analytic[i], self.noiseless[i], self.raw[i], self.raw_stderr[i], self.mitigated[i].value, self.mitigated[i].residual
            )?;
        }
        Ok(())
    }
}

/// The dimer correlator suite by direct measurement on a noisy device, raw
/// and mitigated, reported as full anticommutators like the noiseless suite.
/// `which` selects entries of the suite by index.
#[allow(clippy::too_many_arguments)]
pub fn dimer_noisy_suite(
    t: f64,
    u: f64,
    plan: &TrotterPlan,
    phi: f64,
    model: &NoiseModel,
    config: &MitigationConfig,
    which: &[usize],
    shots: u64,
    seed: u64,
) -> Result<Vec<NoisySeries>, NoiseError> {
    let evo = Evolution::trotter(FermionHamiltonian::dimer(t, u), JwLayout::dimer(), plan);
    if model.n_qubits() != evo.width() {
        return Err(NoiseError::WidthMismatch { model: model.n_qubits(), circuit: evo.width() });
    }
    let ground = dimer_ground_circuit(t, u);
    let specs = dimer_suite_specs(plan, Kind::Retarded, Protocol::Direct)?;
    which
        .iter()
        .map(|&k| {
            let spec = specs.get(k).ok_or_else(|| NoiseError::Config(format!("no suite entry {k}")))?;
            let pcs = greens::direct_circuits(spec, phi, Kind::Retarded.lambda(), &ground, &evo)?;
            let seed_k = child_seed(seed, 2000 + k as u64);
            let rows = pcs
                .par_iter()
                .enumerate()
                .map(|(i, pc)| {
                    let s = child_seed(seed_k, i as u64);
                    let exact = pc.evaluate(0, 0)?.estimate;
                    let raw = unmitigated_point(pc, model, shots, child_seed(s, 1))?;
                    let mit = mitigated_point(pc, model, config, shots, child_seed(s, 2))?;
                    Ok((exact, raw, mit))
                })
                .collect::<Result<Vec<_>, NoiseError>>()?;
            let times: Vec<f64> = pcs.iter().map(|p| p.tau).collect();
            Ok(NoisySeries {
                label: crate::greens::DIMER_SUITE[k].0.to_string(),
                analytic: times.iter().map(|&tau| dimer_suite_analytic(t, u, tau)[k]).collect(),
                noiseless: rows.iter().map(|r| 2.0 * r.0).collect(),
                raw: rows.iter().map(|r| 2.0 * r.1 .0).collect(),
                raw_stderr: rows.iter().map(|r| 2.0 * r.1 .1).collect(),
                mitigated: rows
                    .into_iter()
                    .map(|r| {
                        let mut z = r.2;
                        z.value *= 2.0;
                        z.residual *= 2.0;
                        z.coefficients.iter_mut().for_each(|c| *c *= 2.0);
                        z.points.iter_mut().for_each(|p| p.value *= 2.0);
                        z
                    })
                    .collect(),
                times,
                repetitions: 1,
            })
        })
        .collect()
}

/// [`dimer_noisy_suite`] repeated `repetitions` times with independent seeds
/// (`child_seed(seed, 3000 + r)`) and averaged point by point.
#[allow(clippy::too_many_arguments)]
pub fn dimer_noisy_suite_repeated(
    t: f64,
    u: f64,
    plan: &TrotterPlan,
    phi: f64,
    model: &NoiseModel,
    config: &MitigationConfig,
    which: &[usize],
    shots: u64,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<NoisySeries>, NoiseError> {
    if repetitions == 0 {
        return Err(NoiseError::Config("repetitions must be at least 1".into()));
    }
    let runs = (0..repetitions)
        .map(|r| dimer_noisy_suite(t, u, plan, phi, model, config, which, shots, child_seed(seed, 3000 + r as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    (0..which.len()).map(|k| NoisySeries::average(&runs.iter().map(|run| run[k].clone()).collect::<Vec<_>>())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::pauli_rotation_circuit;
    use crate::pauli::PauliString;
    use crate::statevector::StateVector;
    use proptest::prelude::*;

    fn phase_aligned_distance(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
        (a - b).norm()
    }

    fn sample_circuit() -> Circuit {
        let mut c = Circuit::new(3);
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::cnot(0, 1)).unwrap();
        c.push(GateOp::rz(1, 0.4)).unwrap();
        c.push(GateOp::cz(1, 2)).unwrap();
        c.push(GateOp::sx(2)).unwrap();
        c.push(GateOp::cnot(2, 0)).unwrap();
        c.push(GateOp::phase(0, 0.3)).unwrap();
        c.append(&pauli_rotation_circuit(&"XYZ".parse::<PauliString>().unwrap(), 0.9).unwrap()).unwrap();
        c
    }

    #[test]
    fn bundled_model_loads() {
        let m = NoiseModel::device5();
        assert_eq!(m.n_qubits(), 5);
        assert_eq!(m.pair(1, 0).error, 1.62e-2);
        assert_eq!(m.pair(3, 4).duration, 2.84e-7);
        // uncoupled pairs fall back to the worst coupler
        assert_eq!(m.pair(1, 3).error, 1.62e-2);
        assert_eq!(m.qubit(4).readout.flip(0), 5.3e-3);
        assert_eq!(m.qubit(0).physical, Some(18));
        assert!(!m.idle_enabled());
        let back = NoiseModel::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn loader_rejects_bad_values() {
        let bad = "[[qubit]]\nindex = 0\ngate_error = 1.5\n";
        assert!(matches!(NoiseModel::from_toml_str(bad), Err(NoiseError::Probability { .. })));
        let gap = "[[qubit]]\nindex = 1\n";
        assert!(matches!(NoiseModel::from_toml_str(gap), Err(NoiseError::QubitIndex(1))));
        let pair = "[[qubit]]\nindex = 0\n[[pair]]\nqubits = [0, 0]\nerror = 0.1\nduration = 1e-7\n";
        assert!(matches!(NoiseModel::from_toml_str(pair), Err(NoiseError::BadPair(0, 0))));
        let dur = "[[qubit]]\nindex = 0\ngate_duration = -1.0\n";
        assert!(matches!(NoiseModel::from_toml_str(dur), Err(NoiseError::Duration { .. })));
        let idle = "[[qubit]]\nindex = 0\n[idle]\nenabled = true\n";
        assert!(matches!(NoiseModel::from_toml_str(idle), Err(NoiseError::MissingIdleRate(0))));
        assert!(matches!(NoiseModel::from_toml_str("oops = 1"), Err(NoiseError::Parse(_))));
    }

    #[test]
    fn zero_error_model_matches_noiseless_sampling() {
        let c = sample_circuit();
        let measured = [0, 2];
        let probs = c.run().unwrap().probabilities(&measured).unwrap();
        let want = Counts::sample(&measured, &probs, 5000, 17);
        let got = run_noisy(&c, &measured, &NoiseModel::ideal(3), 5000, 17).unwrap();
        assert_eq!(got, want);
        // durations alone change nothing either
        let timed = NoiseModel::device5().without_errors();
        let mut c5 = Circuit::new(5);
        c5.append(&c).unwrap();
        let probs5 = c5.run().unwrap().probabilities(&measured).unwrap();
        assert_eq!(run_noisy(&c5, &measured, &timed, 3000, 4).unwrap(), Counts::sample(&measured, &probs5, 3000, 4));
    }

    #[test]
    fn single_cnot_error_rate() {
        let p = 0.0162;
        let mut model = NoiseModel::ideal(2);
        model.set_pair(0, 1, PairCalibration { error: p, duration: 5.05e-7 }).unwrap();
        let mut c = Circuit::new(2);
        c.push(GateOp::cnot(0, 1)).unwrap();
        let shots = 100_000u64;
        let counts = run_noisy(&c, &[0, 1], &model, shots, 3).unwrap();
        let frac = 1.0 - counts.get(0) as f64 / shots as f64;
        let want = p * 12.0 / 15.0;
        let sigma = (want * (1.0 - want) / shots as f64).sqrt();
        assert!((frac - want).abs() < 4.0 * sigma, "{frac} vs {want}");
    }

    #[test]
    fn readout_flip_rate() {
        let mut model = NoiseModel::ideal(1);
        model.qubit_mut(0).readout = Confusion::symmetric(7.4e-3).unwrap();
        let c = Circuit::new(1);
        let shots = 200_000u64;
        let counts = run_noisy(&c, &[0], &model, shots, 5).unwrap();
        let f = counts.get(1) as f64 / shots as f64;
        let sigma = (7.4e-3 * (1.0 - 7.4e-3) / shots as f64).sqrt();
        assert!((f - 7.4e-3).abs() < 4.0 * sigma, "{f}");
    }

    #[test]
    fn run_noisy_is_deterministic_and_checks_width() {
        let c = sample_circuit();
        let mut m = NoiseModel::ideal(3);
        m.set_pair(0, 1, PairCalibration { error: 0.05, duration: 0.0 }).unwrap();
        m.qubit_mut(2).gate_error = 0.02;
        assert_eq!(run_noisy(&c, &[0, 1, 2], &m, 2000, 9).unwrap(), run_noisy(&c, &[0, 1, 2], &m, 2000, 9).unwrap());
        assert!(matches!(run_noisy(&c, &[0], &NoiseModel::ideal(4), 10, 1), Err(NoiseError::WidthMismatch { .. })));
        assert!(matches!(run_noisy(&c, &[0], &m, 0, 1), Err(NoiseError::ZeroShots)));
        let mut big = Circuit::new(3);
        big.push(GateOp::cnot(0, 1).controlled_by(2)).unwrap();
        assert!(matches!(run_noisy(&big, &[0], &m, 10, 1), Err(NoiseError::UnsupportedOp(_))));
    }

    /// Trajectory frequencies against the exact channel average, computed by
    /// enumerating every single-error branch of a short circuit.
    #[test]
    fn trajectories_match_enumerated_channel() {
        let mut c = Circuit::new(2);
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::cnot(0, 1)).unwrap();
        c.push(GateOp::sx(1)).unwrap();
        let mut m = NoiseModel::ideal(2);
        m.set_pair(0, 1, PairCalibration { error: 0.2, duration: 0.0 }).unwrap();
        let prog = Program::new(&c, &m).unwrap();
        let mut exact = vec![0.0; 4];
        for code in 0..16u8 {
            let (w, errors) = if code == 0 { (0.8, vec![]) } else { (0.2 / 15.0, vec![(1u32, code)]) };
            let pat = Pattern { errors, detuning: vec![0, 0] };
            let cp = Checkpoints::new(&prog);
            let probs = marginal(&prog.run(&pat, &cp), &[0, 1]);
            for (e, p) in exact.iter_mut().zip(probs) {
                *e += w * p;
            }
        }
        let shots = 100_000;
        let f = run_noisy(&c, &[0, 1], &m, shots, 21).unwrap().frequencies();
        for (a, b) in f.iter().zip(&exact) {
            assert!((a - b).abs() < 4.0 * (b * (1.0 - b) / shots as f64).sqrt() + 1e-9, "{f:?} vs {exact:?}");
        }
    }

    #[test]
    fn kernels_match_simulator() {
        let mut c = sample_circuit().widened(4);
        c.push(GateOp::cphase(3, 1, 0.7)).unwrap();
        c.push(GateOp::sxdg(3)).unwrap();
        c.push(GateOp::y(2)).unwrap();
        c.push(GateOp::h(1).controlled_by(3)).unwrap();
        c.push(GateOp::rz(0, -0.3).controlled_by(2)).unwrap();
        c.push(GateOp::unitary(vec![2, 0], crate::circuit::pauli_rotation_circuit(&"XY".parse::<PauliString>().unwrap(), 0.4).unwrap().unitary().unwrap())).unwrap();
        c.push(GateOp::delay(1, 1e-7)).unwrap();
        let prog = Program::new(&c, &NoiseModel::ideal(4)).unwrap();
        let mut a = vec![C::new(0.0, 0.0); 16];
        a[0] = C::new(1.0, 0.0);
        for k in &prog.kernels {
            k.apply(&mut a, None);
        }
        // kernels drop global phases
        let want = c.run().unwrap();
        let overlap: C = a.iter().zip(want.amplitudes()).map(|(x, y)| x.conj() * y).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
        // Pauli error codes act like the simulator's X/Y/Z
        for l in 1..4 {
            let mut b = a.clone();
            pauli(&mut b, 2, l);
            let mut s = StateVector::from_amplitudes(a.clone()).unwrap();
            s.apply_gate(&GateOp::new(letter_gate(l), vec![2])).unwrap();
            for (x, y) in b.iter().zip(s.amplitudes()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn readout_identity_and_exact_inverse() {
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        let id = [Confusion::identity(), Confusion::identity()];
        assert_eq!(mitigate_distribution(&probs, &id).unwrap().probs, probs);
        let conf = [Confusion::asymmetric(0.03, 0.08).unwrap(), Confusion::asymmetric(0.11, 0.02).unwrap()];
        let read = apply_confusion(&probs, &conf).unwrap();
        assert!((read.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // bit 0 prepared 0 reads 1 with 0.03: spot-check one entry by hand
        let want01 = 0.1 * 0.03 * 0.89 + 0.2 * 0.92 * 0.89 + 0.3 * 0.03 * 0.02 + 0.4 * 0.92 * 0.02;
        assert!((read[1] - want01).abs() < 1e-14);
        let back = mitigate_distribution(&read, &conf).unwrap();
        assert!(!back.clipped);
        for (a, b) in back.probs.iter().zip(&probs) {
            assert!((a - b).abs() < 1e-13);
        }
        let singular = [Confusion::symmetric(0.5).unwrap()];
        assert!(matches!(mitigate_distribution(&[0.5, 0.5], &singular), Err(NoiseError::SingularConfusion(0))));
        assert!(matches!(mitigate_distribution(&probs, &singular), Err(NoiseError::ConfusionCount { .. })));
    }

    #[test]
    fn readout_round_trip_on_samples() {
        let probs = vec![0.55, 0.05, 0.1, 0.3];
        let mut m = NoiseModel::ideal(2);
        m.qubit_mut(0).readout = Confusion::asymmetric(0.04, 0.09).unwrap();
        m.qubit_mut(1).readout = Confusion::asymmetric(0.07, 0.02).unwrap();
        // prepare the distribution with a state, then read it through the model
        let amps: Vec<C> = probs.iter().map(|p: &f64| C::new(p.sqrt(), 0.0)).collect();
        let state = StateVector::from_amplitudes(amps).unwrap();
        let mut c = Circuit::new(2);
        c.push(GateOp::unitary(vec![1, 0], householder_to(&state))).unwrap();
        let shots = 200_000;
        let counts = run_noisy(&c, &[0, 1], &m, shots, 8).unwrap();
        let fixed = mitigate_readout(&counts, &m.confusions(&[0, 1])).unwrap();
        for (a, b) in fixed.probs.iter().zip(&probs) {
            // inversion inflates the sampling error by at most ~1/(1-2p)^2
            assert!((a - b).abs() < 4.0 * 1.3 * (b * (1.0 - b) / shots as f64).sqrt(), "{:?}", fixed.probs);
        }
    }

    /// A unitary whose first column is `s` (targets listed high bit first).
    fn householder_to(s: &StateVector) -> DMatrix<C> {
        let d = s.amplitudes().len();
        let v = DVector::from_column_slice(s.amplitudes());
        let mut e0 = DVector::zeros(d);
        e0[0] = C::new(1.0, 0.0);
        let w = &v - &e0;
        let n = w.norm();
        if n < 1e-14 {
            return DMatrix::identity(d, d);
        }
        let w = w / C::new(n, 0.0);
        DMatrix::identity(d, d) - (&w * w.adjoint()) * C::new(2.0, 0.0)
    }

    #[test]
    fn twirl_variants_are_the_same_unitary() {
        let c = sample_circuit();
        let u = c.unitary().unwrap();
        let variants = pauli_twirl(&c, 100, 4).unwrap();
        assert_eq!(variants.len(), 100);
        for v in &variants {
            assert!(phase_aligned_distance(&v.unitary().unwrap(), &u) < 1e-12);
        }
        // not all variants are the plain circuit
        assert!(variants.iter().any(|v| v.len() > c.len()));
    }

    #[test]
    fn sandwich_tables_contain_identity() {
        for g in [Gate::Cnot, Gate::Cz] {
            let t = sandwich_table(&g);
            assert_eq!(t[0], (0, 0, false));
            let mut images: Vec<(usize, usize)> = t.iter().map(|e| (e.0, e.1)).collect();
            images.sort();
            images.dedup();
            assert_eq!(images.len(), 16, "conjugation is a bijection");
        }
    }

    #[test]
    fn schedule_and_padding() {
        let m = NoiseModel::device5();
        let mut c = Circuit::new(5);
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::h(1)).unwrap();
        c.push(GateOp::cnot(0, 1)).unwrap();
        c.push(GateOp::rz(2, 0.2)).unwrap();
        c.push(GateOp::cnot(1, 2)).unwrap();
        let s = schedule(&c, &m).unwrap();
        assert_eq!(s.start[2], 3.56e-8);
        assert!((s.total - (3.56e-8 + 5.05e-7 + 4.91e-7)).abs() < 1e-18);
        let padded = pad_idle(&c, &m).unwrap();
        // qubit 0 idles while 1 and 2 interact; qubit 2 only ever saw a virtual gate before
        let delays: Vec<&GateOp> = padded.ops().iter().filter(|o| o.is_delay()).collect();
        assert_eq!(delays.len(), 1);
        assert_eq!(delays[0].targets, vec![0]);
        assert!((delays[0].gate.angle().unwrap() - 4.91e-7).abs() < 1e-18);
        assert_eq!(schedule(&padded, &m).unwrap().total, s.total);
    }

    #[test]
    fn dd_without_windows_is_unchanged() {
        let m = NoiseModel::device5();
        let mut c = Circuit::new(5);
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::sx(0)).unwrap();
        assert_eq!(dynamical_decoupling(&c, &m, DdSequence::Xx).unwrap(), c);
        assert_eq!(dynamical_decoupling(&sample_circuit().widened(5), &m, DdSequence::None).unwrap(), sample_circuit().widened(5));
    }

    #[test]
    fn dd_inserts_pairs_and_keeps_unitary() {
        let m = NoiseModel::device5();
        let c = sample_circuit().widened(5);
        let d = dynamical_decoupling(&c, &m, DdSequence::Xx).unwrap();
        let added = d.ops().iter().filter(|o| o.gate == Gate::X).count() - c.ops().iter().filter(|o| o.gate == Gate::X).count();
        assert!(added > 0);
        assert_eq!(added % 2, 0);
        assert!(phase_aligned_distance(&d.unitary().unwrap(), &c.unitary().unwrap()) < 1e-12);
        // the dressed circuit keeps the original timing
        assert!((schedule(&d, &m).unwrap().total - schedule(&c, &m).unwrap().total).abs() < 1e-15);
    }

    #[test]
    fn dd_refocuses_quasi_static_detuning() {
        // Ramsey: H, wait, H. Ideal outcome 0 with certainty.
        let mut m = NoiseModel::ideal(1);
        {
            let q = m.qubit_mut(0);
            q.gate_duration = 3.56e-8;
            q.gate_error = 1.98e-4;
            q.t2 = Some(6.99e-5);
        }
        let m = m.with_idle(true).unwrap();
        let mut c = Circuit::new(1);
        c.push(GateOp::h(0)).unwrap();
        c.push(GateOp::delay(0, 5e-5)).unwrap();
        c.push(GateOp::h(0)).unwrap();
        let shots = 4000;
        let bare = run_noisy(&c, &[0], &m, shots, 2).unwrap().get(0) as f64 / shots as f64;
        let dd = dynamical_decoupling(&c, &m, DdSequence::Xx).unwrap();
        let dressed = run_noisy(&dd, &[0], &m, shots, 2).unwrap().get(0) as f64 / shots as f64;
        assert!(dressed >= bare, "{dressed} < {bare}");
        assert!(bare < 0.9 && dressed > 0.99, "{bare} {dressed}");
    }

    #[test]
    fn fold_counts_and_unitary() {
        let c = sample_circuit();
        let u = c.unitary().unwrap();
        let n = noisy_gate_count(&c) as f64;
        for s in [1.0, 1.5, 2.0, 2.5, 3.0, 4.2] {
            let f = fold(&c, s).unwrap();
            assert!((noisy_gate_count(&f.circuit) as f64 / n - f.realized).abs() < 1e-12);
            assert!((f.realized - s).abs() <= 1.0 / n + 1e-12, "{s} -> {}", f.realized);
            assert!(phase_aligned_distance(&f.circuit.unitary().unwrap(), &u) < 1e-11);
        }
        assert_eq!(fold(&c, 3.0).unwrap().circuit.len(), 3 * c.len());
        assert!(matches!(fold(&c, 0.5), Err(NoiseError::ScaleBelowOne(_))));
    }

    #[test]
    fn zne_recovers_polynomial() {
        let scales = [1.0, 1.5, 2.0, 2.5, 3.0];
        let r = zne(|s| Ok((s, 1.0 - 0.1 * s - 0.02 * s * s)), &scales, 2).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!(r.residual < 1e-10);
        let flat = zne(|s| Ok((s, 0.37)), &scales, 2).unwrap();
        assert!((flat.value - 0.37).abs() < 1e-12);
        assert!(matches!(zne(|s| Ok((s, 1.0)), &scales[..2], 2), Err(NoiseError::DegenerateFit { .. })));
        assert!(matches!(zne(|_| Ok((1.0, 1.0)), &scales, 2), Err(NoiseError::DegenerateFit { .. })));
    }

    #[test]
    fn mitigation_config_validation() {
        MitigationConfig::full().validate().unwrap();
        MitigationConfig::none().validate().unwrap();
        let mut c = MitigationConfig::full();
        c.zne_scales = vec![1.0, 0.5, 2.0];
        assert!(c.validate().is_err());
        c.zne_scales = vec![1.0, 2.0];
        assert!(c.validate().is_err());
        let toml_text = toml::to_string(&MitigationConfig::full()).unwrap();
        assert_eq!(toml::from_str::<MitigationConfig>(&toml_text).unwrap(), MitigationConfig::full());
        assert_eq!("XX".parse::<DdSequence>().unwrap(), DdSequence::Xx);
    }

    #[test]
    fn noiseless_pipeline_reproduces_exact_point() {
        let plan = TrotterPlan::new(0.314, 3).unwrap();
        let ideal = NoiseModel::device5().without_errors();
        let mut cfg = MitigationConfig::full();
        cfg.twirl_variants = 5;
        let s = dimer_noisy_suite(1.0, 4.0, &plan, PI / 2.0, &ideal, &cfg, &[0], 20_000, 3).unwrap();
        let s = &s[0];
        for i in 0..s.times.len() {
            // shot noise only; the fit of identical-mean points extrapolates the mean
            assert!((s.raw[i] - s.noiseless[i]).abs() < 4.0 * s.raw_stderr[i] + 1e-9);
            assert!((s.mitigated[i].value - s.noiseless[i]).abs() < 0.2, "{} vs {}", s.mitigated[i].value, s.noiseless[i]);
        }
        assert!((s.noiseless[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn repeated_suite_is_the_mean_of_its_runs() {
        let plan = TrotterPlan::new(0.314, 2).unwrap();
        let model = NoiseModel::device5();
        let mut cfg = MitigationConfig::for_model(&model);
        cfg.twirl_variants = 2;
        let avg = dimer_noisy_suite_repeated(1.0, 4.0, &plan, PI / 2.0, &model, &cfg, &[2], 256, 3, 9).unwrap();
        let runs: Vec<NoisySeries> = (0..3).map(|r| dimer_noisy_suite(1.0, 4.0, &plan, PI / 2.0, &model, &cfg, &[2], 256, child_seed(9, 3000 + r)).unwrap().remove(0)).collect();
        let a = &avg[0];
        assert_eq!(a.repetitions, 3);
        assert_eq!(a.label, "x3-y2");
        for i in 0..a.times.len() {
            let raw: Vec<f64> = runs.iter().map(|r| r.raw[i]).collect();
            let m = raw.iter().sum::<f64>() / 3.0;
            assert!((a.raw[i] - m).abs() < 1e-12);
            let sd = (raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 2.0).sqrt();
            assert!((a.raw_stderr[i] - sd / 3f64.sqrt()).abs() < 1e-12);
            let mit = runs.iter().map(|r| r.mitigated[i].value).sum::<f64>() / 3.0;
            assert!((a.mitigated[i].value - mit).abs() < 1e-12);
            // the mean of fits is the fit of the mean: least squares is linear
            let xs: Vec<f64> = a.mitigated[i].points.iter().map(|p| p.realized).collect();
            let ys: Vec<f64> = a.mitigated[i].points.iter().map(|p| p.value).collect();
            assert!((fit_polynomial(&xs, &ys, 2).unwrap().0[0] - a.mitigated[i].value).abs() < 1e-10);
        }
        assert!(dimer_noisy_suite_repeated(1.0, 4.0, &plan, PI / 2.0, &model, &cfg, &[2], 256, 0, 9).is_err());
        let mut other = runs[1].clone();
        other.label = "y2-y2".into();
        assert!(NoisySeries::average(&[runs[0].clone(), other]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn twirl_equivalence_random(seed in any::<u64>(), theta in -3.0f64..3.0) {
            let mut c = Circuit::new(3);
            c.push(GateOp::cz(0, 2)).unwrap();
            c.push(GateOp::rz(2, theta)).unwrap();
            c.push(GateOp::cnot(2, 1)).unwrap();
            c.push(GateOp::cnot(0, 1)).unwrap();
            let u = c.unitary().unwrap();
            for v in pauli_twirl(&c, 3, seed).unwrap() {
                prop_assert!(phase_aligned_distance(&v.unitary().unwrap(), &u) < 1e-12);
            }
        }

        #[test]
        fn readout_inverse_round_trip(p in proptest::collection::vec(0.0f64..1.0, 8), f in proptest::collection::vec(0.0f64..0.3, 6)) {
            let total: f64 = p.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = p.iter().map(|x| (x + 1e-9 / 8.0) / total).collect();
            let conf: Vec<Confusion> = f.chunks(2).map(|c| Confusion::asymmetric(c[0], c[1]).unwrap()).collect();
            let back = mitigate_distribution(&apply_confusion(&probs, &conf).unwrap(), &conf).unwrap();
            for (a, b) in back.probs.iter().zip(&probs) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
