//! Two-time Majorana correlators: Hadamard-test baselines and the direct
//! (linear-response) protocol with an auxiliary `d` fermion.
//!
//! Every protocol estimates the same normalisation: `Re <A(tau) B> = 1/2 <{A(tau), B}>`
//! for the retarded kind and `Im <A(tau) B> = -(i/2) <[A(tau), B]>` for Keldysh.
//! `A` is the probe, `B` the source, and `A(tau) = U^dag A U` with `U = exp(-i H tau)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{pauli_rotation_circuit, trotter_step, Circuit, CircuitError, TermOrder, TrotterPlan};
use crate::oracle::{build_matrix, dimer_analytic, dimer_majorana, DimerCorrelator, FermionHamiltonian, OracleError, SpectralData};
use crate::pauli::{jw_majorana_on_qubit, jw_string_remover, CliffordGate, Flavor, JwLayout, Letter, MajoranaIndex, PauliError, PauliString, Phase};
use crate::rng::child_seed;
use crate::statevector::{Counts, GateOp, SimError};
use crate::vha::{dimer_optimal_angles, vha_circuit, VhaParams};

type C = Complex64;

#[derive(Debug, Error)]
pub enum GreensError {
    #[error("time grid is empty")]
    EmptyGrid,
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("spec asks for protocol {got}, but {expected} was called")]
    ProtocolMismatch { expected: Protocol, got: Protocol },
    #[error("preparation circuit touches qubit {0}, which is reserved for the ancilla")]
    AncillaCollision(usize),
    #[error("{0} is not available under the local encoding: single Majorana operators are not representable there")]
    LocalSingleMajorana(Protocol),
    #[error("direct measurement under the local encoding is not simulated (qubit count)")]
    LocalNotSimulated,
    #[error("phi = {0} is a multiple of pi; the response vanishes")]
    PhiMultipleOfPi(f64),
    #[error("time {tau} is not a whole number of steps of {dtau}")]
    OffGrid { tau: f64, dtau: f64 },
    #[error("series do not share a time grid")]
    GridMismatch,
    #[error("block needs at least the {0} entry")]
    MissingEntry(&'static str),
    #[error("{0} does not reduce to a two-qubit parity")]
    NotReducible(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Anticommutator; ancilla phase `lambda = pi/2`.
    Retarded,
    /// Commutator; `lambda = 0`.
    Keldysh,
}

impl Kind {
    /// Accumulated `d`-fermion phase `eps_d * tau` for the direct protocol.
    pub fn lambda(self) -> f64 {
        match self {
            Kind::Retarded => FRAC_PI_2,
            Kind::Keldysh => 0.0,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Retarded => "retarded",
            Kind::Keldysh => "keldysh",
        })
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "retarded" => Ok(Kind::Retarded),
            "keldysh" => Ok(Kind::Keldysh),
            o => Err(format!("unknown correlator kind `{o}` (retarded, keldysh)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Hadamard,
    AdvancedHadamard,
    Direct,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Hadamard => "hadamard",
            Protocol::AdvancedHadamard => "advanced_hadamard",
            Protocol::Direct => "direct",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hadamard" => Ok(Protocol::Hadamard),
            "advanced_hadamard" => Ok(Protocol::AdvancedHadamard),
            "direct" => Ok(Protocol::Direct),
            o => Err(format!("unknown protocol `{o}` (hadamard, advanced_hadamard, direct)")),
        }
    }
}

/// Fermion-to-qubit encoding backing a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    JordanWigner,
    Local,
}

/// Strictly increasing times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, GreensError> {
        let first = *times.first().ok_or(GreensError::EmptyGrid)?;
        if first != 0.0 {
            return Err(GreensError::BadGrid(format!("must start at 0, starts at {first}")));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(GreensError::BadGrid("non-finite time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GreensError::BadGrid("not strictly increasing".into()));
        }
        Ok(TimeGrid(times))
    }

    /// `tau_k = k dtau` for `k = 0..=steps`.
    pub fn uniform(dtau: f64, steps: usize) -> Result<Self, GreensError> {
        if !(dtau.is_finite() && dtau > 0.0) {
            return Err(GreensError::BadGrid(format!("dtau must be positive, got {dtau}")));
        }
        Self::new((0..=steps).map(|k| k as f64 * dtau).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorSpec {
    pub probe: MajoranaIndex,
    pub source: MajoranaIndex,
    pub times: TimeGrid,
    pub kind: Kind,
    pub protocol: Protocol,
    pub encoding: Encoding,
}

impl CorrelatorSpec {
    pub fn new(probe: MajoranaIndex, source: MajoranaIndex, times: TimeGrid, kind: Kind, protocol: Protocol) -> Self {
        CorrelatorSpec { probe, source, times, kind, protocol, encoding: Encoding::JordanWigner }
    }

    pub fn with_encoding(mut self, encoding: Encoding) -> Self {
        self.encoding = encoding;
        self
    }

    fn expect(&self, protocol: Protocol) -> Result<(), GreensError> {
        if self.protocol != protocol {
            return Err(GreensError::ProtocolMismatch { expected: protocol, got: self.protocol });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvolutionMode {
    /// `round(tau / dtau)` first-order steps per time point.
    Trotter { dtau: f64, order: TermOrder },
    /// `exp(-i H tau)` from the spectral decomposition, as one dense gate.
    Exact,
}

/// System propagator factory. The layout is the bare system; the ancilla is
/// the first qubit past it.
#[derive(Debug, Clone)]
pub struct Evolution {
    hamiltonian: FermionHamiltonian,
    layout: JwLayout,
    mode: EvolutionMode,
    spectral: Option<SpectralData>,
}

impl Evolution {
    pub fn trotter(hamiltonian: FermionHamiltonian, layout: JwLayout, plan: &TrotterPlan) -> Self {
        let mode = EvolutionMode::Trotter { dtau: plan.dtau, order: plan.order };
        Evolution { hamiltonian, layout, mode, spectral: None }
    }

    pub fn exact(hamiltonian: FermionHamiltonian, layout: JwLayout) -> Result<Self, GreensError> {
        let spec = SpectralData::new(&build_matrix(&hamiltonian, &layout)?)?;
        Ok(Evolution { hamiltonian, layout, mode: EvolutionMode::Exact, spectral: Some(spec) })
    }

    pub fn mode(&self) -> EvolutionMode {
        self.mode
    }

    pub fn hamiltonian(&self) -> &FermionHamiltonian {
        &self.hamiltonian
    }

    pub fn layout(&self) -> &JwLayout {
        &self.layout
    }

    pub fn system_width(&self) -> usize {
        self.layout.width()
    }

    /// The ancilla / `d` qubit.
    pub fn ancilla(&self) -> usize {
        self.layout.width()
    }

    pub fn width(&self) -> usize {
        self.layout.width() + 1
    }

    /// `U(tau)` on the system qubits of a `width()`-qubit register.
    pub fn circuit(&self, tau: f64) -> Result<Circuit, GreensError> {
        let w = self.width();
        match self.mode {
            EvolutionMode::Trotter { dtau, order } => {
                let steps = (tau / dtau).round();
                if (steps * dtau - tau).abs() > 1e-9 * tau.abs().max(1.0) {
                    return Err(GreensError::OffGrid { tau, dtau });
                }
                let step = trotter_step(&self.hamiltonian, &self.layout, dtau, order)?;
                let mut c = Circuit::new(w);
                for _ in 0..steps as usize {
                    c.append(&step)?;
                }
                Ok(c)
            }
            EvolutionMode::Exact => {
                let spec = self.spectral.as_ref().expect("exact mode owns its spectrum");
                let mut c = Circuit::new(w);
                // targets[0] is the most significant bit of the matrix index
                let targets = (0..self.system_width()).rev().collect();
                c.push(GateOp::unitary(targets, spec.propagator(tau)))?;
                Ok(c)
            }
        }
    }

    /// Spectral-norm distance between this evolution's `U(tau)` and the exact
    /// propagator, after aligning the global phase. Zero in exact mode.
    pub fn propagator_error(&self, tau: f64) -> Result<f64, GreensError> {
        if self.mode == EvolutionMode::Exact {
            return Ok(0.0);
        }
        let sys = self.system_width();
        // the ancilla is untouched, so compare on the system alone
        let mut trot = Circuit::new(sys);
        for op in self.circuit(tau)?.ops() {
            trot.push(op.clone())?;
        }
        let approx = trot.unitary()?;
        let exact = SpectralData::new(&build_matrix(&self.hamiltonian, &self.layout)?)?.propagator(tau);
        let overlap = (exact.adjoint() * &approx).trace();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { C::new(1.0, 0.0) };
        let diff = approx - exact * phase;
        Ok(diff.singular_values().max())
    }
}

/// `C-P`: each letter conditioned on `control`, the string phase as a phase gate.
pub fn controlled_pauli(p: &PauliString, control: usize, width: usize) -> Result<Circuit, GreensError> {
    let mut c = Circuit::new(width);
    for q in p.support() {
        let op = match p.letter(q) {
            Letter::X => GateOp::x(q),
            Letter::Y => GateOp::y(q),
            Letter::Z => GateOp::z(q),
            Letter::I => unreachable!("support has no identities"),
        };
        c.push(op.controlled_by(control))?;
    }
    let k = p.phase().exponent();
    if k != 0 {
        c.push(GateOp::phase(control, k as f64 * FRAC_PI_2))?;
    }
    Ok(c)
}

/// Clifford mapping `p = +-(X|Y)_m Z...Z (X|Y)_n` onto `+-Z_m Z_n`.
/// Returns the circuit, `[m, n]` and the sign.
pub fn pair_parity_reducer(p: &PauliString) -> Result<(Circuit, [usize; 2], f64), GreensError> {
    let bad = || GreensError::NotReducible(p.to_string());
    let sup = p.support();
    let (m, n) = match (sup.first(), sup.last()) {
        (Some(&m), Some(&n)) if m < n => (m, n),
        _ => return Err(bad()),
    };
    let mut cl = jw_string_remover(m, n)?;
    for q in [m, n] {
        match p.letter(q) {
            Letter::X => cl.push(CliffordGate::H(q)),
            Letter::Y => cl.push(CliffordGate::SqrtX(q)),
            _ => return Err(bad()),
        }
    }
    let image = cl.propagate(p)?;
    let target = PauliString::from_letters(p.width(), &[(m, Letter::Z), (n, Letter::Z)])?;
    let sign = if image == target {
        1.0
    } else if image == target.clone().neg() {
        -1.0
    } else {
        return Err(bad());
    };
    Ok((Circuit::from_clifford(p.width(), &cl)?, [m, n], sign))
}

/// One executable circuit per time point; the estimate is `scale * <prod Z_measured>`.
#[derive(Debug, Clone)]
pub struct ProtocolCircuit {
    pub tau: f64,
    pub circuit: Circuit,
    pub measured: Vec<usize>,
    pub scale: f64,
}

impl ProtocolCircuit {
    /// From a distribution over the measured qubits (bit m = `measured[m]`).
    pub fn estimate_from_distribution(&self, probs: &[f64]) -> f64 {
        self.scale * parity_mean(probs)
    }

    /// Mean and standard error from a histogram.
    pub fn estimate_from_counts(&self, counts: &Counts) -> (f64, f64) {
        let m = parity_mean(&counts.frequencies());
        let var = (1.0 - m * m).max(0.0) / counts.shots as f64;
        (self.scale * m, self.scale.abs() * var.sqrt())
    }

    /// Exact (`shots == 0`) or sampled evaluation.
    pub fn evaluate(&self, shots: u64, seed: u64) -> Result<TimePoint, GreensError> {
        let state = self.circuit.run()?;
        let probs = state.probabilities(&self.measured)?;
        if shots == 0 {
            return Ok(TimePoint { tau: self.tau, estimate: self.estimate_from_distribution(&probs), stderr: 0.0, shots, counts: None, seed });
        }
        let counts = Counts::sample(&self.measured, &probs, shots, seed);
        let (estimate, stderr) = self.estimate_from_counts(&counts);
        Ok(TimePoint { tau: self.tau, estimate, stderr, shots, counts: Some(counts), seed })
    }
}

/// `sum_b p(b) (-1)^{popcount b}`
pub fn parity_mean(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(b, p)| if (b as u32).count_ones() % 2 == 0 { *p } else { -*p }).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePoint {
    pub tau: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub shots: u64,
    /// Raw histogram over the measured qubits; `None` in exact mode.
    pub counts: Option<Counts>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub label: String,
    pub protocol: Protocol,
    pub kind: Kind,
    pub phi: Option<f64>,
    pub lambda: Option<f64>,
    /// Multiplier already applied to estimates (2 for full anticommutators).
    pub normalization: f64,
    pub points: Vec<TimePoint>,
}

impl MeasurementRecord {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate).collect()
    }

    /// Multiply estimates and errors by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for p in &mut self.points {
            p.estimate *= factor;
            p.stderr *= factor.abs();
        }
        self.normalization *= factor;
        self
    }

    /// `# key = value` header, then `tau,estimate,stderr,shots,protocol,phi,lambda`.
    pub fn write_csv(&self, w: &mut impl Write, header: &[(String, String)]) -> Result<(), GreensError> {
        writeln!(w, "# label = {}", self.label)?;
        writeln!(w, "# kind = {}", self.kind)?;
        writeln!(w, "# normalization = {}", self.normalization)?;
        for (k, v) in header {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "tau,estimate,stderr,shots,protocol,phi,lambda")?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.17}")).unwrap_or_default();
        for p in &self.points {
            writeln!(w, "{:.17},{:.17},{:.17},{},{},{},{}", p.tau, p.estimate, p.stderr, p.shots, self.protocol, opt(self.phi), opt(self.lambda))?;
        }
        Ok(())
    }
}

fn check_ground(ground: &Circuit, evo: &Evolution) -> Result<Circuit, GreensError> {
    let sys = evo.system_width();
    if let Some(q) = ground.ops().iter().flat_map(|o| o.qubits()).find(|&q| q >= sys) {
        return Err(GreensError::AncillaCollision(q));
    }
    if ground.n_qubits() > evo.width() {
        return Err(GreensError::AncillaCollision(sys));
    }
    Ok(ground.clone().widened(evo.width()))
}

fn majoranas(spec: &CorrelatorSpec, evo: &Evolution) -> Result<(PauliString, PauliString), GreensError> {
    let lay = evo.layout().clone().with_extra_qubits(1);
    Ok((lay.majorana(spec.probe)?, lay.majorana(spec.source)?))
}

fn finish(spec: &CorrelatorSpec, label: &str, phi: Option<f64>, lambda: Option<f64>, circuits: Vec<ProtocolCircuit>, shots: u64, seed: u64) -> Result<MeasurementRecord, GreensError> {
    let points = circuits
        .par_iter()
        .enumerate()
        .map(|(k, pc)| pc.evaluate(shots, child_seed(seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasurementRecord { label: label.to_string(), protocol: spec.protocol, kind: spec.kind, phi, lambda, normalization: 1.0, points })
}

fn spec_label(spec: &CorrelatorSpec) -> String {
    let f = |m: &MajoranaIndex| {
        let fl = match m.flavor {
            Flavor::X => 'x',
            Flavor::Y => 'y',
        };
        format!("{fl}[{},{:?}]", m.site, m.spin)
    };
    format!("{}-{}", f(&spec.probe), f(&spec.source))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HadamardVariant {
    /// Controlled `U` and `U^dag` around the probe insertion.
    #[default]
    ControlledEvolution,
    /// Uncontrolled `U`, `U^dag`; exact only when they cancel on the idle branch.
    UncontrolledEvolution,
}

/// Hadamard-test circuits, one per time point.
pub fn hadamard_circuits(spec: &CorrelatorSpec, ground: &Circuit, evo: &Evolution, variant: HadamardVariant) -> Result<Vec<ProtocolCircuit>, GreensError> {
    if spec.encoding == Encoding::Local {
        return Err(GreensError::LocalSingleMajorana(Protocol::Hadamard));
    }
    let (a, b) = majoranas(spec, evo)?;
    let (w, anc) = (evo.width(), evo.ancilla());
    let prep = check_ground(ground, evo)?;
    let c_src = controlled_pauli(&b, anc, w)?;
    let c_probe = controlled_pauli(&a, anc, w)?;
    spec.times
        .times()
        .iter()
        .map(|&tau| {
            let u = evo.circuit(tau)?;
            let (fwd, back) = match variant {
                HadamardVariant::ControlledEvolution => (u.controlled(anc)?, u.dagger().controlled(anc)?),
                HadamardVariant::UncontrolledEvolution => (u.clone(), u.dagger()),
            };
            let mut c = prep.clone();
            c.barrier("interferometer");
            c.push(GateOp::h(anc))?;
            c.append(&c_src)?;
            c.append(&fwd)?;
            c.append(&c_probe)?;
            c.append(&back)?;
            close_interferometer(&mut c, anc, spec.kind)?;
            Ok(ProtocolCircuit { tau, circuit: c, measured: vec![anc], scale: 1.0 })
        })
        .collect()
}

fn close_interferometer(c: &mut Circuit, anc: usize, kind: Kind) -> Result<(), GreensError> {
    if kind == Kind::Keldysh {
        c.push(GateOp::sdg(anc))?;
    }
    c.push(GateOp::h(anc))?;
    Ok(())
}

pub fn hadamard_test(spec: &CorrelatorSpec, ground: &Circuit, evo: &Evolution, shots: u64, seed: u64) -> Result<MeasurementRecord, GreensError> {
    hadamard_test_with(spec, ground, evo, HadamardVariant::default(), shots, seed)
}

pub fn hadamard_test_with(spec: &CorrelatorSpec, ground: &Circuit, evo: &Evolution, variant: HadamardVariant, shots: u64, seed: u64) -> Result<MeasurementRecord, GreensError> {
    spec.expect(Protocol::Hadamard)?;
    let circuits = hadamard_circuits(spec, ground, evo, variant)?;
    finish(spec, &spec_label(spec), None, None, circuits, shots, seed)
}

/// One forward evolution; the probe is anti-controlled so the two branches
/// carry `A U |psi>` and `U B |psi>`.
pub fn advanced_hadamard_circuits(spec: &CorrelatorSpec, ground: &Circuit, evo: &Evolution) -> Result<Vec<ProtocolCircuit>, GreensError> {
    if spec.encoding == Encoding::Local {
        return Err(GreensError::LocalSingleMajorana(Protocol::AdvancedHadamard));
    }
    let (a, b) = majoranas(spec, evo)?;
    let (w, anc) = (evo.width(), evo.ancilla());
    let prep = check_ground(ground, evo)?;
    let c_src = controlled_pauli(&b, anc, w)?;
    let c_probe = controlled_pauli(&a, anc, w)?;
    spec.times
        .times()
        .iter()
        .map(|&tau| {
            let mut c = prep.clone();
            c.barrier("interferometer");
            c.push(GateOp::h(anc))?;
            c.append(&c_src)?;
            c.append(&evo.circuit(tau)?)?;
            c.push(GateOp::x(anc))?;
            c.append(&c_probe)?;
            c.push(GateOp::x(anc))?;
            close_interferometer(&mut c, anc, spec.kind)?;
            Ok(ProtocolCircuit { tau, circuit: c, measured: vec![anc], scale: 1.0 })
        })
        .collect()
}

pub fn advanced_hadamard_test(spec: &CorrelatorSpec, ground: &Circuit, evo: &Evolution, shots: u64, seed: u64) -> Result<MeasurementRecord, GreensError> {
    spec.expect(Protocol::AdvancedHadamard)?;
    let circuits = advanced_hadamard_circuits(spec, ground, evo)?;
    finish(spec, &spec_label(spec), None, None, circuits, shots, seed)
}

/// Direct-protocol circuits at an explicit ancilla phase `lambda`.
///
/// `d` starts occupied; the source couples in through `exp(phi/2 B x_d)`; the
/// system evolves while `d` picks up `exp(-i lambda n_d)`; then `i A x_d` is
/// reduced to a two-qubit parity. Dividing by `sin phi` leaves a result that
/// does not depend on `phi`.
pub fn direct_circuits(spec: &CorrelatorSpec, phi: f64, lambda: f64, ground: &Circuit, evo: &Evolution) -> Result<Vec<ProtocolCircuit>, GreensError> {
    if spec.encoding == Encoding::Local {
        return Err(GreensError::LocalNotSimulated);
    }
    let s = phi.sin();
    if !phi.is_finite() || s.abs() < 1e-9 {
        return Err(GreensError::PhiMultipleOfPi(phi));
    }
    let (a, b) = majoranas(spec, evo)?;
    let (w, d) = (evo.width(), evo.ancilla());
    let xd = jw_majorana_on_qubit(w, d, Flavor::X)?;
    let coupling = b.multiply(&xd)?.times_phase(Phase::I);
    let observable = a.multiply(&xd)?.times_phase(Phase::I);
    let (reducer, pair, sign) = pair_parity_reducer(&observable)?;

    let mut head = check_ground(ground, evo)?;
    head.barrier("perturb");
    head.push(GateOp::x(d))?;
    head.append(&pauli_rotation_circuit(&coupling, phi)?)?;
    spec.times
        .times()
        .iter()
        .map(|&tau| {
            let mut c = head.clone();
            c.barrier("evolve");
            c.append(&evo.circuit(tau)?)?;
            if lambda != 0.0 {
                c.push(GateOp::phase(d, -lambda))?;
            }
            c.barrier("measure");
            c.append(&reducer)?;
            Ok(ProtocolCircuit { tau, circuit: c, measured: pair.to_vec(), scale: sign / s })
        })
        .collect()
}

/// The ancilla phase is a fixed total `lambda` per run, so the retarded
/// condition holds at every grid time.
pub fn direct_measurement(spec: &CorrelatorSpec, phi: f64, ground: &Circuit, evo: &Evolution, shots: u64, seed: u64) -> Result<MeasurementRecord, GreensError> {
    spec.expect(Protocol::Direct)?;
    let lambda = spec.kind.lambda();
    let circuits = direct_circuits(spec, phi, lambda, ground, evo)?;
    finish(spec, &spec_label(spec), Some(phi), Some(lambda), circuits, shots, seed)
}

/// Measured entries of one Majorana block `g_ij`: rows probe flavor of mode i,
/// columns source flavor of mode j.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajoranaBlock<'a> {
    pub xx: Option<&'a MeasurementRecord>,
    pub xy: Option<&'a MeasurementRecord>,
    pub yx: Option<&'a MeasurementRecord>,
    pub yy: Option<&'a MeasurementRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenSeries {
    pub times: Vec<f64>,
    /// `[[<x_i(tau) x_j>, <x_i(tau) y_j>], [<y_i(tau) x_j>, <y_i(tau) y_j>]]`
    pub majorana: Vec<Matrix2<C>>,
    /// `[[<c_i(tau) c_j^dag>, <c_i(tau) c_j>], [<c_i^dag(tau) c_j^dag>, <c_i^dag(tau) c_j>]]`
    pub fermion: Vec<Matrix2<C>>,
}

/// `(1/sqrt 2) [[1, 1], [i, -i]]`
pub fn majorana_to_fermion() -> Matrix2<C> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Matrix2::new(C::new(r, 0.0), C::new(r, 0.0), C::new(0.0, r), C::new(0.0, -r))
}

/// `G = 1/2 M^dag g M`.
pub fn fermion_block(g: &Matrix2<C>) -> Matrix2<C> {
    let m = majorana_to_fermion();
    m.adjoint() * g * m * C::new(0.5, 0.0)
}

/// Builds `g = R + i K` entrywise from retarded (`R`) and Keldysh (`K`) records
/// and converts to fermions. Missing entries are filled with the
/// particle-hole relations of the half-filled dimer: `yy = xx`, `yx = -xy`.
pub fn assemble_complex_green(retarded: &MajoranaBlock<'_>, keldysh: &MajoranaBlock<'_>) -> Result<GreenSeries, GreensError> {
    let xx = pair(retarded.xx, keldysh.xx)?.ok_or(GreensError::MissingEntry("xx"))?;
    let xy = pair(retarded.xy, keldysh.xy)?.ok_or(GreensError::MissingEntry("xy"))?;
    let yx = pair(retarded.yx, keldysh.yx)?;
    let yy = pair(retarded.yy, keldysh.yy)?;
    let times = xx.0.clone();
    for other in [Some(&xy), yx.as_ref(), yy.as_ref()].into_iter().flatten() {
        if !same_grid(&other.0, &times) {
            return Err(GreensError::GridMismatch);
        }
    }
    let mut majorana = Vec::with_capacity(times.len());
    let mut fermion = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let gxx = xx.1[k];
        let gxy = xy.1[k];
        let gyx = yx.as_ref().map_or(-gxy, |s| s.1[k]);
        let gyy = yy.as_ref().map_or(gxx, |s| s.1[k]);
        let g = Matrix2::new(gxx, gxy, gyx, gyy);
        fermion.push(fermion_block(&g));
        majorana.push(g);
    }
    Ok(GreenSeries { times, majorana, fermion })
}

type Series = (Vec<f64>, Vec<C>);

fn pair(r: Option<&MeasurementRecord>, k: Option<&MeasurementRecord>) -> Result<Option<Series>, GreensError> {
    match (r, k) {
        (None, None) => Ok(None),
        (Some(_), None) => Err(GreensError::MissingEntry("keldysh partner")),
        (None, Some(_)) => Err(GreensError::MissingEntry("retarded partner")),
        (Some(r), Some(k)) => {
            let t = r.times();
            if !same_grid(&t, &k.times()) {
                return Err(GreensError::GridMismatch);
            }
            let vals = r.points.iter().zip(&k.points).map(|(a, b)| C::new(a.estimate / r.normalization, b.estimate / k.normalization)).collect();
            Ok(Some((t, vals)))
        }
    }
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

/// The three correlators of the results figure: probe, source and the
/// closed form they map onto by spin and site symmetry.
pub const DIMER_SUITE: [(&str, (usize, Flavor), (usize, Flavor), DimerCorrelator); 3] = [
    ("y2-y2", (2, Flavor::Y), (2, Flavor::Y), DimerCorrelator::Xx0),
    ("y3-y3", (3, Flavor::Y), (3, Flavor::Y), DimerCorrelator::Xx1),
    ("x3-y2", (3, Flavor::X), (2, Flavor::Y), DimerCorrelator::Xy01),
];

/// `<{A(tau), B}>` predicted by the closed forms: `2 Re` of the ground-state correlator.
pub fn dimer_suite_analytic(t: f64, u: f64, tau: f64) -> [f64; 3] {
    DIMER_SUITE.map(|(_, _, _, which)| 2.0 * dimer_analytic(which, t, u, tau).re)
}

/// Closed-form counterpart of a suite record: `2 Re` (retarded) or `2 Im` (Keldysh).
pub fn dimer_suite_reference(kind: Kind, t: f64, u: f64, tau: f64) -> [f64; 3] {
    DIMER_SUITE.map(|(_, _, _, which)| {
        let z = dimer_analytic(which, t, u, tau);
        2.0 * if kind == Kind::Retarded { z.re } else { z.im }
    })
}

/// VHA-optimal preparation of the dimer ground state (4 qubits).
pub fn dimer_ground_circuit(t: f64, u: f64) -> Circuit {
    let (a, b) = dimer_optimal_angles(t, u);
    vha_circuit(&VhaParams::single(a, b).expect("optimal angles are in range"), 4)
}

pub fn dimer_suite_specs(plan: &TrotterPlan, kind: Kind, protocol: Protocol) -> Result<Vec<CorrelatorSpec>, GreensError> {
    let grid = TimeGrid::uniform(plan.dtau, plan.steps)?;
    Ok(DIMER_SUITE
        .iter()
        .map(|&(_, (pl, pf), (sl, sf), _)| CorrelatorSpec::new(dimer_majorana(pl, pf), dimer_majorana(sl, sf), grid.clone(), kind, protocol))
        .collect())
}

/// The y2-y2, y3-y3 and x3-y2 retarded series by direct measurement, reported
/// as full anticommutators (so y2-y2 starts at 2).
pub fn dimer_suite(t: f64, u: f64, plan: &TrotterPlan, phi: f64, shots: u64, seed: u64) -> Result<Vec<MeasurementRecord>, GreensError> {
    let evo = Evolution::trotter(FermionHamiltonian::dimer(t, u), JwLayout::dimer(), plan);
    dimer_suite_with(&evo, t, u, plan, phi, shots, seed)
}

/// [`dimer_suite`] with a caller-supplied evolution (e.g. exact).
pub fn dimer_suite_with(evo: &Evolution, t: f64, u: f64, plan: &TrotterPlan, phi: f64, shots: u64, seed: u64) -> Result<Vec<MeasurementRecord>, GreensError> {
    dimer_suite_run(evo, t, u, plan, Kind::Retarded, Protocol::Direct, phi, shots, seed)
}

/// The suite for any kind and protocol, scaled like [`dimer_suite`]. `phi`
/// only matters for the direct protocol.
#[allow(clippy::too_many_arguments)]
pub fn dimer_suite_run(evo: &Evolution, t: f64, u: f64, plan: &TrotterPlan, kind: Kind, protocol: Protocol, phi: f64, shots: u64, seed: u64) -> Result<Vec<MeasurementRecord>, GreensError> {
    let ground = dimer_ground_circuit(t, u);
    dimer_suite_specs(plan, kind, protocol)?
        .iter()
        .zip(DIMER_SUITE.iter())
        .enumerate()
        .map(|(k, (spec, (name, ..)))| {
            let s = child_seed(seed, 1000 + k as u64);
            let mut rec = match protocol {
                Protocol::Direct => direct_measurement(spec, phi, &ground, evo, shots, s)?,
                Protocol::Hadamard => hadamard_test(spec, &ground, evo, shots, s)?,
                Protocol::AdvancedHadamard => advanced_hadamard_test(spec, &ground, evo, shots, s)?,
            };
            rec.label = name.to_string();
            Ok(rec.scaled(2.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{pauli_matrix, LehmannPair};
    use crate::pauli::Spin;
    use crate::statevector::StateVector;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    const T: f64 = 1.0;
    const U: f64 = 4.0;

    fn dimer_exact() -> Evolution {
        Evolution::exact(FermionHamiltonian::dimer(T, U), JwLayout::dimer()).unwrap()
    }

    fn dimer_trotter(dtau: f64) -> Evolution {
        Evolution::trotter(FermionHamiltonian::dimer(T, U), JwLayout::dimer(), &TrotterPlan::new(dtau, 1).unwrap())
    }

    fn spec(probe: (usize, Flavor), source: (usize, Flavor), grid: TimeGrid, kind: Kind, protocol: Protocol) -> CorrelatorSpec {
        CorrelatorSpec::new(dimer_majorana(probe.0, probe.1), dimer_majorana(source.0, source.1), grid, kind, protocol)
    }

    fn lehmann(probe: (usize, Flavor), source: (usize, Flavor)) -> LehmannPair {
        let lay = JwLayout::dimer();
        let spec = SpectralData::new(&build_matrix(&FermionHamiltonian::dimer(T, U), &lay).unwrap()).unwrap();
        let a = lay.majorana(dimer_majorana(probe.0, probe.1)).unwrap();
        let b = lay.majorana(dimer_majorana(source.0, source.1)).unwrap();
        let psi = dimer_ground_circuit(T, U).run().unwrap();
        LehmannPair::new(&a, &b, &spec, &psi).unwrap()
    }

    /// `<psi| V^-k A V^k B |psi>` with `V` the dense Trotter step.
    fn trotter_oracle(probe: (usize, Flavor), source: (usize, Flavor), dtau: f64, steps: usize) -> C {
        let lay = JwLayout::dimer();
        let v = trotter_step(&FermionHamiltonian::dimer(T, U), &lay, dtau, TermOrder::default()).unwrap().unitary().unwrap();
        let mut uk = DMatrix::<C>::identity(16, 16);
        for _ in 0..steps {
            uk = &v * uk;
        }
        let a = pauli_matrix(&lay.majorana(dimer_majorana(probe.0, probe.1)).unwrap()).unwrap();
        let b = pauli_matrix(&lay.majorana(dimer_majorana(source.0, source.1)).unwrap()).unwrap();
        let psi = DVector::from_vec(dimer_ground_circuit(T, U).run().unwrap().amplitudes().to_vec());
        (psi.adjoint() * uk.adjoint() * a * uk * b * &psi)[(0, 0)]
    }

    const PAIRS: [((usize, Flavor), (usize, Flavor)); 4] =
        [((0, Flavor::X), (0, Flavor::X)), ((0, Flavor::X), (1, Flavor::Y)), ((3, Flavor::X), (2, Flavor::Y)), ((3, Flavor::Y), (3, Flavor::Y))];

    #[test]
    fn trotter_deviation_within_propagator_bound() {
        let plan = TrotterPlan::new(0.314, 25).unwrap();
        let evo = dimer_trotter(plan.dtau);
        assert_eq!(dimer_exact().propagator_error(1.0).unwrap(), 0.0);
        let recs = dimer_suite_with(&evo, T, U, &plan, PI / 4.0, 0, 3).unwrap();
        let mut worst = 0.0f64;
        for (i, &tau) in recs[0].times().iter().enumerate() {
            let bound = 4.0 * evo.propagator_error(tau).unwrap();
            let exact = dimer_suite_analytic(T, U, tau);
            for (k, rec) in recs.iter().enumerate() {
                let dev = (rec.points[i].estimate - exact[k]).abs();
                assert!(dev <= bound + 1e-9, "{} tau={tau}: {dev} > {bound}", rec.label);
                worst = worst.max(dev);
            }
        }
        assert!(worst > 1e-4, "trotter error should be visible");
        // halving the step shrinks the bound at the final time
        let fine = dimer_trotter(plan.dtau / 2.0);
        assert!(fine.propagator_error(7.85).unwrap() < evo.propagator_error(7.85).unwrap());
    }

    #[test]
    fn time_grid_validation() {
        assert!(matches!(TimeGrid::new(vec![]), Err(GreensError::EmptyGrid)));
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        let g = TimeGrid::uniform(0.314, 25).unwrap();
        assert_eq!(g.len(), 26);
        assert_abs_diff_eq!(g.times()[25], 7.85, epsilon = 1e-12);
    }

    #[test]
    fn controlled_pauli_matches_block_form() {
        let p: PauliString = "-iXZY".parse().unwrap();
        let c = controlled_pauli(&p, 3, 4).unwrap().unitary().unwrap();
        let pm = p.to_dense();
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!((c[(i, j)] - if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) }).norm(), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!((c[(i + 8, j + 8)] - pm[(i, j)]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reducer_maps_bilinears_to_parities() {
        let w = 5;
        for q in 0..4 {
            for fl in [Flavor::X, Flavor::Y] {
                let p = jw_majorana_on_qubit(w, q, fl).unwrap().multiply(&jw_majorana_on_qubit(w, 4, Flavor::X).unwrap()).unwrap().times_phase(Phase::I);
                let (c, pair, sign) = pair_parity_reducer(&p).unwrap();
                assert_eq!(pair, [q, 4]);
                let u = c.unitary().unwrap();
                let zz = PauliString::from_letters(w, &[(q, Letter::Z), (4, Letter::Z)]).unwrap().to_dense();
                let lhs = &u * p.to_dense() * u.adjoint();
                assert_abs_diff_eq!((lhs - zz * C::new(sign, 0.0)).norm(), 0.0, epsilon = 1e-10);
            }
        }
        assert!(pair_parity_reducer(&"XIZ".parse().unwrap()).is_err());
    }

    #[test]
    fn tau_zero_identical_majoranas_give_one() {
        let grid = TimeGrid::new(vec![0.0]).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        let h = hadamard_test(&spec((0, Flavor::X), (0, Flavor::X), grid.clone(), Kind::Retarded, Protocol::Hadamard), &g, &evo, 0, 1).unwrap();
        let a = advanced_hadamard_test(&spec((0, Flavor::X), (0, Flavor::X), grid.clone(), Kind::Retarded, Protocol::AdvancedHadamard), &g, &evo, 0, 1).unwrap();
        let d = direct_measurement(&spec((0, Flavor::X), (0, Flavor::X), grid, Kind::Retarded, Protocol::Direct), FRAC_PI_2, &g, &evo, 0, 1).unwrap();
        for r in [h, a, d] {
            assert_abs_diff_eq!(r.points[0].estimate, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn direct_exact_is_phi_independent_and_matches_lehmann() {
        let grid = TimeGrid::uniform(0.37, 12).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        for (probe, source) in PAIRS {
            let lp = lehmann(probe, source);
            for kind in [Kind::Retarded, Kind::Keldysh] {
                let s = spec(probe, source, grid.clone(), kind, Protocol::Direct);
                for phi in [0.3, 0.8, FRAC_PI_2, 2.5] {
                    let r = direct_measurement(&s, phi, &g, &evo, 0, 0).unwrap();
                    for p in &r.points {
                        let z = lp.at(p.tau);
                        let want = if kind == Kind::Retarded { z.re } else { z.im };
                        assert_abs_diff_eq!(p.estimate, want, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn hadamard_variants_match_lehmann() {
        let grid = TimeGrid::uniform(0.5, 8).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        for (probe, source) in PAIRS {
            let lp = lehmann(probe, source);
            for kind in [Kind::Retarded, Kind::Keldysh] {
                let s = spec(probe, source, grid.clone(), kind, Protocol::Hadamard);
                let sa = spec(probe, source, grid.clone(), kind, Protocol::AdvancedHadamard);
                let recs = [
                    hadamard_test(&s, &g, &evo, 0, 0).unwrap(),
                    hadamard_test_with(&s, &g, &evo, HadamardVariant::UncontrolledEvolution, 0, 0).unwrap(),
                    advanced_hadamard_test(&sa, &g, &evo, 0, 0).unwrap(),
                ];
                for r in &recs {
                    for p in &r.points {
                        let z = lp.at(p.tau);
                        let want = if kind == Kind::Retarded { z.re } else { z.im };
                        assert_abs_diff_eq!(p.estimate, want, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn protocols_agree_on_trotterized_propagator() {
        let dtau = 0.314;
        let grid = TimeGrid::uniform(dtau, 10).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_trotter(dtau);
        for (probe, source) in PAIRS {
            let h = hadamard_test(&spec(probe, source, grid.clone(), Kind::Retarded, Protocol::Hadamard), &g, &evo, 0, 0).unwrap();
            let d = direct_measurement(&spec(probe, source, grid.clone(), Kind::Retarded, Protocol::Direct), FRAC_PI_2, &g, &evo, 0, 0).unwrap();
            for (k, (a, b)) in h.points.iter().zip(&d.points).enumerate() {
                let want = trotter_oracle(probe, source, dtau, k).re;
                assert_abs_diff_eq!(a.estimate, want, epsilon = 1e-10);
                assert_abs_diff_eq!(b.estimate, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn errors_are_reported() {
        let grid = TimeGrid::uniform(0.1, 2).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        let s = spec((0, Flavor::X), (0, Flavor::X), grid.clone(), Kind::Retarded, Protocol::Direct);
        assert!(matches!(hadamard_test(&s, &g, &evo, 0, 0), Err(GreensError::ProtocolMismatch { .. })));
        assert!(matches!(direct_measurement(&s, PI, &g, &evo, 0, 0), Err(GreensError::PhiMultipleOfPi(_))));
        assert!(matches!(direct_measurement(&s, 0.0, &g, &evo, 0, 0), Err(GreensError::PhiMultipleOfPi(_))));
        let mut bad = Circuit::new(5);
        bad.push(GateOp::x(4)).unwrap();
        assert!(matches!(direct_measurement(&s, 1.0, &bad, &evo, 0, 0), Err(GreensError::AncillaCollision(4))));
        let local = spec((0, Flavor::X), (0, Flavor::X), grid.clone(), Kind::Retarded, Protocol::AdvancedHadamard).with_encoding(Encoding::Local);
        assert!(matches!(advanced_hadamard_test(&local, &g, &evo, 0, 0), Err(GreensError::LocalSingleMajorana(_))));
        let off = spec((0, Flavor::X), (0, Flavor::X), TimeGrid::new(vec![0.0, 0.15]).unwrap(), Kind::Retarded, Protocol::Direct);
        assert!(matches!(direct_measurement(&off, 1.0, &g, &dimer_trotter(0.1), 0, 0), Err(GreensError::OffGrid { .. })));
    }

    #[test]
    fn shot_mode_is_seeded_and_within_band() {
        let grid = TimeGrid::uniform(0.5, 6).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        let s = spec((0, Flavor::X), (0, Flavor::X), grid, Kind::Retarded, Protocol::Direct);
        let a = direct_measurement(&s, FRAC_PI_2, &g, &evo, 4096, 11).unwrap();
        let b = direct_measurement(&s, FRAC_PI_2, &g, &evo, 4096, 11).unwrap();
        assert_eq!(a, b);
        let lp = lehmann((0, Flavor::X), (0, Flavor::X));
        for p in &a.points {
            assert!(p.stderr >= 0.0);
            assert_eq!(p.counts.as_ref().unwrap().shots, 4096);
            assert!((p.estimate - lp.at(p.tau).re).abs() <= 4.0 * p.stderr + 1e-12, "{p:?}");
        }
    }

    #[test]
    fn m_transform_is_unitary_and_tau_zero_block() {
        let m = majorana_to_fermion();
        assert_abs_diff_eq!((m.adjoint() * m - Matrix2::identity()).norm(), 0.0, epsilon = 1e-15);
        // <x x> = <y y> = 1, <x y> = -<y x> = i (2n - 1) at tau = 0 -> G00 + G11 = 1
        for n in [0.0, 0.3, 1.0] {
            let xy = C::new(0.0, 2.0 * n - 1.0);
            let g = Matrix2::new(C::new(1.0, 0.0), xy, -xy, C::new(1.0, 0.0));
            let f = fermion_block(&g);
            assert_abs_diff_eq!((f[(0, 0)] + f[(1, 1)] - C::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(f[(1, 1)].re, n, epsilon = 1e-15);
        }
    }

    #[test]
    fn assembled_green_matches_lehmann_fermion_correlators() {
        let grid = TimeGrid::uniform(0.4, 10).unwrap();
        let g = dimer_ground_circuit(T, U);
        let evo = dimer_exact();
        let run = |probe, source, kind| direct_measurement(&spec(probe, source, grid.clone(), kind, Protocol::Direct), 0.8, &g, &evo, 0, 0).unwrap();
        // mode c-up (label 0) with itself, built from xx and xy only
        let (rxx, kxx) = (run((0, Flavor::X), (0, Flavor::X), Kind::Retarded), run((0, Flavor::X), (0, Flavor::X), Kind::Keldysh));
        let (rxy, kxy) = (run((0, Flavor::X), (0, Flavor::Y), Kind::Retarded), run((0, Flavor::X), (0, Flavor::Y), Kind::Keldysh));
        let r = MajoranaBlock { xx: Some(&rxx), xy: Some(&rxy), ..Default::default() };
        let k = MajoranaBlock { xx: Some(&kxx), xy: Some(&kxy), ..Default::default() };
        let series = assemble_complex_green(&r, &k).unwrap();

        let lay = JwLayout::dimer();
        let spec_h = SpectralData::new(&build_matrix(&FermionHamiltonian::dimer(T, U), &lay).unwrap()).unwrap();
        let x = pauli_matrix(&lay.majorana(MajoranaIndex::physical(1, Spin::Up, Flavor::X)).unwrap()).unwrap();
        let y = pauli_matrix(&lay.majorana(MajoranaIndex::physical(1, Spin::Up, Flavor::Y)).unwrap()).unwrap();
        let c = (&x - &y * C::new(0.0, 1.0)) * C::new(0.5, 0.0);
        let cd = c.adjoint();
        let psi: StateVector = g.run().unwrap();
        let v = DVector::from_vec(psi.amplitudes().to_vec());
        for (k, &tau) in series.times.iter().enumerate() {
            let u = spec_h.propagator(tau);
            let heis = |o: &DMatrix<C>| u.adjoint() * o * &u;
            let ev = |o: DMatrix<C>| (v.adjoint() * o * &v)[(0, 0)];
            let want = [[ev(heis(&c) * &cd), ev(heis(&c) * &c)], [ev(heis(&cd) * &cd), ev(heis(&cd) * &c)]];
            let got = series.fermion[k];
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!((got[(i, j)] - want[i][j]).norm(), 0.0, epsilon = 1e-10);
                }
            }
        }
        // grid mismatch
        let other = run((0, Flavor::X), (0, Flavor::Y), Kind::Keldysh);
        let mut shifted = other.clone();
        shifted.points.pop();
        let k2 = MajoranaBlock { xx: Some(&kxx), xy: Some(&shifted), ..Default::default() };
        assert!(matches!(assemble_complex_green(&r, &k2), Err(GreensError::GridMismatch)));
    }

    #[test]
    fn dimer_suite_starts_at_trivial_values() {
        let plan = TrotterPlan::new(0.314, 3).unwrap();
        let recs = dimer_suite(T, U, &plan, FRAC_PI_2, 0, 5).unwrap();
        assert_eq!(recs.len(), 3);
        assert_abs_diff_eq!(recs[0].points[0].estimate, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(recs[1].points[0].estimate, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(recs[2].points[0].estimate, 0.0, epsilon = 1e-12);
        let a = dimer_suite_analytic(T, U, 0.0);
        assert_abs_diff_eq!(a[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dimer_suite_exact_matches_closed_forms() {
        let plan = TrotterPlan::new(0.314, 25).unwrap();
        let recs = dimer_suite_with(&dimer_exact(), T, U, &plan, FRAC_PI_2, 0, 0).unwrap();
        for (j, r) in recs.iter().enumerate() {
            for p in &r.points {
                assert_abs_diff_eq!(p.estimate, dimer_suite_analytic(T, U, p.tau)[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn suite_runner_covers_kinds_and_protocols() {
        let plan = TrotterPlan::new(0.5, 6).unwrap();
        for kind in [Kind::Retarded, Kind::Keldysh] {
            for protocol in [Protocol::Direct, Protocol::Hadamard, Protocol::AdvancedHadamard] {
                let recs = dimer_suite_run(&dimer_exact(), T, U, &plan, kind, protocol, 0.8, 0, 0).unwrap();
                for (j, r) in recs.iter().enumerate() {
                    assert_eq!(r.label, DIMER_SUITE[j].0);
                    for p in &r.points {
                        assert_abs_diff_eq!(p.estimate, dimer_suite_reference(kind, T, U, p.tau)[j], epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::uniform(0.5, 1).unwrap();
        let r = direct_measurement(&spec((0, Flavor::X), (0, Flavor::X), grid, Kind::Retarded, Protocol::Direct), 1.0, &dimer_ground_circuit(T, U), &dimer_exact(), 0, 0).unwrap();
        let mut buf = vec![];
        r.write_csv(&mut buf, &[("seed".into(), "0".into())]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[3], "# seed = 0");
        assert_eq!(lines[4], "tau,estimate,stderr,shots,protocol,phi,lambda");
        assert!(lines[5].starts_with("0.00000000000000000,1.0000"));
        assert!(lines[5].ends_with(",0,direct,1.00000000000000000,1.57079632679489656"));
    }
}
