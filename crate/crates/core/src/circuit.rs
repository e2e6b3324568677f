//! Gate sequences for Hubbard terms, Trotter evolution and measurement bases.
//!
//! Rotation builders take the full Trotter angle; the halving inside
//! `RZ(theta) = diag(e^{-i theta/2}, e^{i theta/2})` happens here and nowhere else.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::oracle::{FermionHamiltonian, FermionTerm};
use crate::pauli::{jw_string_remover, CliffordCircuit, CliffordGate, JwLayout, Letter, PauliError, PauliString, Spin};
use crate::statevector::{Gate, GateOp, SimError, StateVector};

type C = Complex64;

pub const MAX_UNITARY_QUBITS: usize = 12;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("qubit {0} used twice in one gate")]
    DuplicateQubit(usize),
    #[error("cannot append a {right}-qubit circuit to a {left}-qubit one")]
    WidthMismatch { left: usize, right: usize },
    #[error("hopping needs two distinct sites, got {0} twice")]
    SameSite(usize),
    #[error("Pauli string {0} is not Hermitian")]
    NonHermitian(String),
    #[error("invalid Trotter plan: {0}")]
    InvalidPlan(String),
    #[error("{0} qubits is too large for a dense unitary")]
    TooLarge(usize),
    #[error("layout is not the dimer layout")]
    NotDimer,
    #[error("invalid measurement kind `{0}`")]
    InvalidKind(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub label: String,
    /// Index of the first op of the stage.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
    barriers: Vec<Barrier>,
    global_phase: f64,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, ops: vec![], barriers: vec![], global_phase: 0.0 }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn barriers(&self) -> &[Barrier] {
        &self.barriers
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn add_global_phase(&mut self, phi: f64) {
        self.global_phase += phi;
    }

    pub fn push(&mut self, op: GateOp) -> Result<(), CircuitError> {
        let mut seen = 0u128;
        for q in op.qubits() {
            if q >= self.n_qubits {
                return Err(CircuitError::QubitOutOfRange { qubit: q, n: self.n_qubits });
            }
            if seen & (1 << q) != 0 {
                return Err(CircuitError::DuplicateQubit(q));
            }
            seen |= 1 << q;
        }
        self.ops.push(op);
        Ok(())
    }

    fn add(&mut self, op: GateOp) {
        debug_assert!(op.qubits().all(|q| q < self.n_qubits));
        self.ops.push(op);
    }

    /// Marks the start of a named stage at the current end.
    pub fn barrier(&mut self, label: &str) {
        self.barriers.push(Barrier { label: label.to_string(), position: self.ops.len() });
    }

    /// Appends `other` (which may be narrower); its barriers are shifted along.
    pub fn append(&mut self, other: &Circuit) -> Result<(), CircuitError> {
        if other.n_qubits > self.n_qubits {
            return Err(CircuitError::WidthMismatch { left: self.n_qubits, right: other.n_qubits });
        }
        let offset = self.ops.len();
        self.barriers.extend(other.barriers.iter().map(|b| Barrier { label: b.label.clone(), position: b.position + offset }));
        self.ops.extend(other.ops.iter().cloned());
        self.global_phase += other.global_phase;
        Ok(())
    }

    pub fn then(mut self, other: &Circuit) -> Result<Circuit, CircuitError> {
        self.append(other)?;
        Ok(self)
    }

    pub fn widened(mut self, n_qubits: usize) -> Circuit {
        self.n_qubits = self.n_qubits.max(n_qubits);
        self
    }

    /// Inverse circuit; stage labels are dropped.
    pub fn dagger(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            ops: self.ops.iter().rev().map(GateOp::dagger).collect(),
            barriers: vec![],
            global_phase: -self.global_phase,
        }
    }

    /// Every op conditioned on `control`; the global phase becomes a phase gate on it.
    pub fn controlled(&self, control: usize) -> Result<Circuit, CircuitError> {
        if control >= self.n_qubits {
            return Err(CircuitError::QubitOutOfRange { qubit: control, n: self.n_qubits });
        }
        let mut out = Circuit { n_qubits: self.n_qubits, ops: vec![], barriers: self.barriers.clone(), global_phase: 0.0 };
        for op in &self.ops {
            if op.qubits().any(|q| q == control) {
                return Err(CircuitError::DuplicateQubit(control));
            }
            if op.is_delay() {
                out.ops.push(op.clone());
            } else {
                out.ops.push(op.clone().controlled_by(control));
            }
        }
        if self.global_phase != 0.0 {
            out.ops.push(GateOp::phase(control, self.global_phase));
        }
        Ok(out)
    }

    pub fn cnot_count(&self) -> usize {
        self.ops.iter().filter(|o| o.gate == Gate::Cnot && o.controls.is_empty()).count()
    }

    /// Ops touching two or more qubits (controls included).
    pub fn two_qubit_count(&self) -> usize {
        self.ops.iter().filter(|o| o.n_qubits() >= 2).count()
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<(), CircuitError> {
        if state.n_qubits() != self.n_qubits {
            return Err(CircuitError::WidthMismatch { left: state.n_qubits(), right: self.n_qubits });
        }
        state.apply_all(&self.ops)?;
        state.apply_global_phase(self.global_phase);
        Ok(())
    }

    /// The state reached from `|0...0>`.
    pub fn run(&self) -> Result<StateVector, CircuitError> {
        let mut s = StateVector::zero(self.n_qubits);
        self.apply(&mut s)?;
        Ok(s)
    }

    /// Dense unitary, global phase included.
    pub fn unitary(&self) -> Result<DMatrix<C>, CircuitError> {
        if self.n_qubits > MAX_UNITARY_QUBITS {
            return Err(CircuitError::TooLarge(self.n_qubits));
        }
        let d = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(d, d);
        for col in 0..d {
            let mut s = StateVector::basis(self.n_qubits, col);
            self.apply(&mut s)?;
            for (row, a) in s.amplitudes().iter().enumerate() {
                m[(row, col)] = *a;
            }
        }
        Ok(m)
    }

    pub fn from_clifford(n_qubits: usize, c: &CliffordCircuit) -> Result<Circuit, CircuitError> {
        let mut out = Circuit::new(n_qubits);
        for g in &c.gates {
            out.push(GateOp::from(*g))?;
        }
        Ok(out)
    }

    /// Symbolic form; fails on non-Clifford or controlled ops. Global phase is dropped.
    pub fn to_clifford(&self) -> Result<CliffordCircuit, CircuitError> {
        let mut out = CliffordCircuit::new();
        for op in &self.ops {
            if !op.controls.is_empty() {
                return Err(PauliError::UnsupportedGate(op.to_string()).into());
            }
            if op.is_delay() {
                continue;
            }
            let name = match op.gate {
                Gate::H => "H",
                Gate::X => "X",
                Gate::Y => "Y",
                Gate::Z => "Z",
                Gate::S => "S",
                Gate::Sdg => "SDG",
                Gate::SqrtX => "SX",
                Gate::SqrtXdg => "SXDG",
                Gate::Cnot => "CNOT",
                Gate::Cz => "CZ",
                _ => return Err(PauliError::UnsupportedGate(op.to_string()).into()),
            };
            out.push(CliffordGate::from_name(name, &op.targets)?);
        }
        Ok(out)
    }

    /// `(label, ops)` per stage; ops before the first barrier come under "".
    pub fn stages(&self) -> Vec<(&str, &[GateOp])> {
        let mut out = vec![];
        let mut start = 0;
        let mut label = "";
        for b in &self.barriers {
            if b.position > start || (b.position == start && start > 0) {
                out.push((label, &self.ops[start..b.position]));
            }
            start = b.position;
            label = &b.label;
        }
        out.push((label, &self.ops[start..]));
        out
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QUBITS {}", self.n_qubits)?;
        if self.global_phase != 0.0 {
            writeln!(f, "GPHASE({:.12})", self.global_phase)?;
        }
        let mut bi = 0;
        for (k, op) in self.ops.iter().enumerate() {
            while bi < self.barriers.len() && self.barriers[bi].position == k {
                writeln!(f, "BARRIER {}", self.barriers[bi].label)?;
                bi += 1;
            }
            writeln!(f, "{op}")?;
        }
        for b in &self.barriers[bi..] {
            writeln!(f, "BARRIER {}", b.label)?;
        }
        Ok(())
    }
}

/// `exp(-i theta/2 P)` for a Hermitian string: basis change, CNOT ladder, one RZ.
pub fn pauli_rotation_circuit(p: &PauliString, theta: f64) -> Result<Circuit, CircuitError> {
    if !p.is_hermitian() {
        return Err(CircuitError::NonHermitian(p.to_string()));
    }
    let sign = if p.phase().exponent() == 0 { 1.0 } else { -1.0 };
    let mut c = Circuit::new(p.width());
    let support = p.support();
    if support.is_empty() {
        c.add_global_phase(-sign * theta / 2.0);
        return Ok(c);
    }
    for &q in &support {
        match p.letter(q) {
            Letter::X => c.add(GateOp::h(q)),
            Letter::Y => c.add(GateOp::sx(q)),
            _ => {}
        }
    }
    for w in support.windows(2) {
        c.add(GateOp::cnot(w[0], w[1]));
    }
    c.add(GateOp::rz(*support.last().expect("non-empty"), sign * theta));
    for w in support.windows(2).rev() {
        c.add(GateOp::cnot(w[0], w[1]));
    }
    for &q in &support {
        match p.letter(q) {
            Letter::X => c.add(GateOp::h(q)),
            Letter::Y => c.add(GateOp::sxdg(q)),
            _ => {}
        }
    }
    Ok(c)
}

fn fan(c: &mut Circuit, m: usize, n: usize) -> Result<(), CircuitError> {
    for g in jw_string_remover(m, n)?.gates {
        c.add(GateOp::from(g));
    }
    Ok(())
}

/// `exp(-i theta (c_i^dag c_j + c_j^dag c_i))` for one spin.
pub fn hopping_step(layout: &JwLayout, i: usize, j: usize, spin: Spin, theta: f64) -> Result<Circuit, CircuitError> {
    if i == j {
        return Err(CircuitError::SameSite(i));
    }
    let (qi, qj) = (layout.qubit(i, spin)?, layout.qubit(j, spin)?);
    let (m, n) = (qi.min(qj), qi.max(qj));
    let mut c = Circuit::new(layout.width());
    // the string remover maps X_m X_n Z_JW to X_m X_n (and likewise YY)
    fan(&mut c, m, n)?;
    c.add(GateOp::h(m));
    c.add(GateOp::h(n));
    c.add(GateOp::cnot(m, n));
    c.add(GateOp::rz(n, theta));
    c.add(GateOp::cnot(m, n));
    c.add(GateOp::h(m));
    c.add(GateOp::h(n));
    c.add(GateOp::sx(m));
    c.add(GateOp::sx(n));
    c.add(GateOp::cnot(m, n));
    c.add(GateOp::rz(n, theta));
    c.add(GateOp::cnot(m, n));
    c.add(GateOp::sxdg(m));
    c.add(GateOp::sxdg(n));
    fan(&mut c, m, n)?;
    Ok(c)
}

/// `exp(-i theta n_up n_down)` on one site.
pub fn repulsion_step(layout: &JwLayout, site: usize, theta: f64) -> Result<Circuit, CircuitError> {
    let (a, b) = (layout.qubit(site, Spin::Up)?, layout.qubit(site, Spin::Down)?);
    let mut c = Circuit::new(layout.width());
    // n n = (1 - Z_a - Z_b + Z_a Z_b) / 4
    c.add(GateOp::rz(a, -theta / 2.0));
    c.add(GateOp::rz(b, -theta / 2.0));
    c.add(GateOp::cnot(a, b));
    c.add(GateOp::rz(b, theta / 2.0));
    c.add(GateOp::cnot(a, b));
    c.add_global_phase(-theta / 4.0);
    Ok(c)
}

/// `exp(-i theta n)` for one spin orbital.
pub fn number_step(layout: &JwLayout, site: usize, spin: Spin, theta: f64) -> Result<Circuit, CircuitError> {
    let q = layout.qubit(site, spin)?;
    let mut c = Circuit::new(layout.width());
    c.add(GateOp::phase(q, -theta));
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionForm {
    CnotRz,
    ControlledPhase,
}

/// `exp(-i theta H_U)` with `H_U = (1/2)(n_c^2 - 2 n_c) = (Z_1 Z_3 - 1)/4` on the dimer
/// qubits (c-up = 1, c-down = 3). Both forms carry their exact global phase.
pub fn dimer_interaction_step(width: usize, theta: f64, form: InteractionForm) -> Circuit {
    assert!(width >= 4, "dimer needs four qubits");
    let mut c = Circuit::new(width);
    match form {
        InteractionForm::CnotRz => {
            c.add(GateOp::cnot(1, 3));
            c.add(GateOp::rz(3, theta / 2.0));
            c.add(GateOp::cnot(1, 3));
            c.add_global_phase(theta / 4.0);
        }
        InteractionForm::ControlledPhase => {
            c.add(GateOp::rz(1, theta / 2.0));
            c.add(GateOp::rz(3, theta / 2.0));
            c.add(GateOp::cphase(1, 3, -theta));
            c.add_global_phase(theta / 2.0);
        }
    }
    c
}

/// `exp(-i theta H_0)` with `H_0 = -sum_s (c_s^dag b_s + h.c.)`; two CNOTs per spin.
pub fn dimer_hopping_step(width: usize, theta: f64) -> Circuit {
    assert!(width >= 4, "dimer needs four qubits");
    let mut c = Circuit::new(width);
    // exp(-i phi (XX + YY)/2): SX basis change, then CNOT turns XX + ZZ into X_m + Z_n
    let phi = -theta;
    for (m, n) in [(0, 1), (2, 3)] {
        c.add(GateOp::sx(m));
        c.add(GateOp::sx(n));
        c.add(GateOp::cnot(m, n));
        c.add(GateOp::h(m));
        c.add(GateOp::rz(m, phi));
        c.add(GateOp::h(m));
        c.add(GateOp::rz(n, phi));
        c.add(GateOp::cnot(m, n));
        c.add(GateOp::sxdg(m));
        c.add(GateOp::sxdg(n));
    }
    c
}

/// One ansatz layer `e^{i beta H_0} e^{-i alpha H_U}`: the interaction acts first.
pub fn dimer_layer(width: usize, alpha: f64, beta: f64) -> Circuit {
    let mut c = dimer_interaction_step(width, alpha, InteractionForm::CnotRz);
    c.append(&dimer_hopping_step(width, -beta)).expect("same width");
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TermOrder {
    #[default]
    HoppingFirst,
    InteractionFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrotterPlan {
    pub dtau: f64,
    pub steps: usize,
    pub order: TermOrder,
}

impl TrotterPlan {
    pub fn new(dtau: f64, steps: usize) -> Result<Self, CircuitError> {
        if !(dtau.is_finite() && dtau > 0.0) {
            return Err(CircuitError::InvalidPlan(format!("dtau must be positive, got {dtau}")));
        }
        if steps == 0 {
            return Err(CircuitError::InvalidPlan("steps must be at least 1".into()));
        }
        Ok(TrotterPlan { dtau, steps, order: TermOrder::default() })
    }

    pub fn total_time(&self) -> f64 {
        self.dtau * self.steps as f64
    }

    pub fn with_steps(self, steps: usize) -> Self {
        TrotterPlan { steps, ..self }
    }
}

/// A single first-order step. The dimer reuses the ansatz layer with
/// `alpha = U dtau`, `beta = -t dtau`; other clusters apply hoppings sorted by
/// (spin, bond) and then the remaining terms, or the reverse for `InteractionFirst`.
pub fn trotter_step(h: &FermionHamiltonian, layout: &JwLayout, dtau: f64, order: TermOrder) -> Result<Circuit, CircuitError> {
    if let Some(p) = h.dimer_params() {
        if layout.is_dimer() {
            return Ok(dimer_layer(layout.width(), p.u * dtau, -p.t * dtau));
        }
    }
    let mut hops: Vec<(usize, usize, &FermionTerm)> = vec![];
    let mut rest = vec![];
    for (k, term) in h.terms().iter().enumerate() {
        match term {
            FermionTerm::Hopping { spin, .. } => hops.push((spin.index(), k, term)),
            _ => rest.push(term),
        }
    }
    hops.sort_by_key(|&(s, k, _)| (s, k));
    let hops: Vec<&FermionTerm> = hops.into_iter().map(|(_, _, t)| t).collect();
    let seq: Vec<&FermionTerm> = match order {
        TermOrder::HoppingFirst => hops.into_iter().chain(rest).collect(),
        TermOrder::InteractionFirst => rest.into_iter().chain(hops).collect(),
    };
    let mut c = Circuit::new(layout.width());
    for term in seq {
        let piece = match *term {
            FermionTerm::Hopping { i, j, spin, t } => hopping_step(layout, i, j, spin, -t * dtau)?,
            FermionTerm::Repulsion { site, u } => repulsion_step(layout, site, u * dtau)?,
            FermionTerm::Number { site, spin, mu } => number_step(layout, site, spin, -mu * dtau)?,
            FermionTerm::Constant(e) => {
                let mut g = Circuit::new(layout.width());
                g.add_global_phase(-e * dtau);
                g
            }
        };
        c.append(&piece)?;
    }
    Ok(c)
}

/// `plan.steps` repetitions of [`trotter_step`].
pub fn trotter_evolution(h: &FermionHamiltonian, layout: &JwLayout, plan: &TrotterPlan) -> Result<Circuit, CircuitError> {
    let step = trotter_step(h, layout, plan.dtau, plan.order)?;
    let mut c = Circuit::new(layout.width());
    for _ in 0..plan.steps {
        c.append(&step)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    /// `(X_m X_n + Y_m Y_n)/2` on neighbours -> `|01><01| - |10><10|`
    HorizontalHop,
    /// `i y_m x_n` -> `Z_m Z_n`
    YxPair,
    /// `-i x_m y_n` -> `Z_m Z_n`
    XyPair,
}

impl std::str::FromStr for MeasurementKind {
    type Err = CircuitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "horizontal_hop" => Ok(MeasurementKind::HorizontalHop),
            "yx_pair" => Ok(MeasurementKind::YxPair),
            "xy_pair" => Ok(MeasurementKind::XyPair),
            other => Err(CircuitError::InvalidKind(other.to_string())),
        }
    }
}

/// Pre-measurement unitary: after it, the target observable is diagonal on qubits m, n.
/// For `HorizontalHop` the pair must be adjacent (no string) and m is read as the
/// first bit of `|01>`.
pub fn measurement_basis_circuit(width: usize, kind: MeasurementKind, m: usize, n: usize) -> Result<Circuit, CircuitError> {
    if m >= n {
        return Err(PauliError::InvalidRange { m, n }.into());
    }
    if n >= width {
        return Err(CircuitError::QubitOutOfRange { qubit: n, n: width });
    }
    let mut c = Circuit::new(width);
    match kind {
        MeasurementKind::HorizontalHop => {
            fan(&mut c, m, n)?;
            c.add(GateOp::cnot(m, n));
            c.add(GateOp::h(m));
            c.add(GateOp::cnot(m, n));
        }
        MeasurementKind::YxPair => {
            fan(&mut c, m, n)?;
            c.add(GateOp::h(m));
            c.add(GateOp::h(n));
        }
        MeasurementKind::XyPair => {
            fan(&mut c, m, n)?;
            c.add(GateOp::sx(m));
            c.add(GateOp::sx(n));
        }
    }
    Ok(c)
}
