use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::pauli::CliffordGate;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Elementary gates. Two-qubit matrices index their basis as `2 * bit(targets[0]) + bit(targets[1])`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    /// X_{pi/2} = (1/sqrt 2) [[1, -i], [-i, 1]]
    SqrtX,
    SqrtXdg,
    /// diag(e^{-i theta/2}, e^{i theta/2})
    Rz(f64),
    /// diag(1, e^{i theta})
    Phase(f64),
    /// targets = [control, target]
    Cnot,
    Cz,
    /// diag(1, 1, 1, e^{i theta})
    CPhase(f64),
    /// Dense unitary on `k` targets, `targets[0]` the most significant bit.
    Unitary(Arc<DMatrix<C>>),
    /// Idle for the given number of seconds; identity on the state.
    Delay(f64),
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::Cnot | Gate::Cz | Gate::CPhase(_) => 2,
            Gate::Unitary(m) => m.nrows().trailing_zeros() as usize,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H => "H",
            Gate::X => "X",
            Gate::Y => "Y",
            Gate::Z => "Z",
            Gate::S => "S",
            Gate::Sdg => "SDG",
            Gate::SqrtX => "SX",
            Gate::SqrtXdg => "SXDG",
            Gate::Rz(_) => "RZ",
            Gate::Phase(_) => "P",
            Gate::Cnot => "CNOT",
            Gate::Cz => "CZ",
            Gate::CPhase(_) => "CP",
            Gate::Unitary(_) => "U",
            Gate::Delay(_) => "DELAY",
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rz(a) | Gate::Phase(a) | Gate::CPhase(a) | Gate::Delay(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Gate::Z | Gate::S | Gate::Sdg | Gate::Rz(_) | Gate::Phase(_) | Gate::Cz | Gate::CPhase(_) | Gate::Delay(_))
    }

    /// Implemented in software on hardware (frame change): no error, no duration.
    pub fn is_virtual(&self) -> bool {
        matches!(self, Gate::Z | Gate::S | Gate::Sdg | Gate::Rz(_) | Gate::Phase(_))
    }

    pub fn dagger(&self) -> Gate {
        match self {
            Gate::S => Gate::Sdg,
            Gate::Sdg => Gate::S,
            Gate::SqrtX => Gate::SqrtXdg,
            Gate::SqrtXdg => Gate::SqrtX,
            Gate::Rz(a) => Gate::Rz(-a),
            Gate::Phase(a) => Gate::Phase(-a),
            Gate::CPhase(a) => Gate::CPhase(-a),
            Gate::Unitary(m) => Gate::Unitary(Arc::new(m.adjoint())),
            g => g.clone(),
        }
    }

    pub fn matrix(&self) -> DMatrix<C> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m2 = |a: [C; 4]| DMatrix::from_row_slice(2, 2, &a);
        match *self {
            Gate::H => m2([c(h, 0.), c(h, 0.), c(h, 0.), c(-h, 0.)]),
            Gate::X => m2([c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            Gate::Y => m2([c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            Gate::Z => m2([c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
            Gate::S => m2([c(1., 0.), c(0., 0.), c(0., 0.), c(0., 1.)]),
            Gate::Sdg => m2([c(1., 0.), c(0., 0.), c(0., 0.), c(0., -1.)]),
            Gate::SqrtX => m2([c(h, 0.), c(0., -h), c(0., -h), c(h, 0.)]),
            Gate::SqrtXdg => m2([c(h, 0.), c(0., h), c(0., h), c(h, 0.)]),
            Gate::Rz(t) => m2([C::from_polar(1.0, -t / 2.0), c(0., 0.), c(0., 0.), C::from_polar(1.0, t / 2.0)]),
            Gate::Phase(t) => m2([c(1., 0.), c(0., 0.), c(0., 0.), C::from_polar(1.0, t)]),
            Gate::Delay(_) => DMatrix::identity(2, 2),
            Gate::Cnot => {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = c(1., 0.);
                m[(1, 1)] = c(1., 0.);
                m[(2, 3)] = c(1., 0.);
                m[(3, 2)] = c(1., 0.);
                m
            }
            Gate::Cz => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1., 0.), c(1., 0.), c(1., 0.), c(-1., 0.)])),
            Gate::CPhase(t) => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(1., 0.),
                c(1., 0.),
                c(1., 0.),
                C::from_polar(1.0, t),
            ])),
            Gate::Unitary(ref m) => (**m).clone(),
        }
    }

    /// Non-allocating 2x2 form for one-qubit gates.
    pub(crate) fn mat2(&self) -> Option<[[C; 2]; 2]> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0., 0.);
        Some(match self {
            Gate::H => [[c(h, 0.), c(h, 0.)], [c(h, 0.), c(-h, 0.)]],
            Gate::X => [[z, c(1., 0.)], [c(1., 0.), z]],
            Gate::Y => [[z, c(0., -1.)], [c(0., 1.), z]],
            Gate::SqrtX => [[c(h, 0.), c(0., -h)], [c(0., -h), c(h, 0.)]],
            Gate::SqrtXdg => [[c(h, 0.), c(0., h)], [c(0., h), c(h, 0.)]],
            Gate::Unitary(m) if m.nrows() == 2 => [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            _ => return None,
        })
    }

    /// Diagonal entries for one-qubit diagonal gates.
    pub(crate) fn diag1(&self) -> Option<[C; 2]> {
        match *self {
            Gate::Z => Some([c(1., 0.), c(-1., 0.)]),
            Gate::S => Some([c(1., 0.), c(0., 1.)]),
            Gate::Sdg => Some([c(1., 0.), c(0., -1.)]),
            Gate::Rz(t) => Some([C::from_polar(1.0, -t / 2.0), C::from_polar(1.0, t / 2.0)]),
            Gate::Phase(t) => Some([c(1., 0.), C::from_polar(1.0, t)]),
            _ => None,
        }
    }
}

/// A gate applied to `targets`, conditioned on all `controls` being |1>.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub gate: Gate,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
}

impl GateOp {
    pub fn new(gate: Gate, targets: Vec<usize>) -> Self {
        GateOp { gate, targets, controls: vec![] }
    }

    pub fn h(q: usize) -> Self {
        Self::new(Gate::H, vec![q])
    }
    pub fn x(q: usize) -> Self {
        Self::new(Gate::X, vec![q])
    }
    pub fn y(q: usize) -> Self {
        Self::new(Gate::Y, vec![q])
    }
    pub fn z(q: usize) -> Self {
        Self::new(Gate::Z, vec![q])
    }
    pub fn s(q: usize) -> Self {
        Self::new(Gate::S, vec![q])
    }
    pub fn sdg(q: usize) -> Self {
        Self::new(Gate::Sdg, vec![q])
    }
    pub fn sx(q: usize) -> Self {
        Self::new(Gate::SqrtX, vec![q])
    }
    pub fn sxdg(q: usize) -> Self {
        Self::new(Gate::SqrtXdg, vec![q])
    }
    pub fn rz(q: usize, theta: f64) -> Self {
        Self::new(Gate::Rz(theta), vec![q])
    }
    pub fn phase(q: usize, theta: f64) -> Self {
        Self::new(Gate::Phase(theta), vec![q])
    }
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(Gate::Cnot, vec![control, target])
    }
    pub fn cz(a: usize, b: usize) -> Self {
        Self::new(Gate::Cz, vec![a, b])
    }
    pub fn cphase(a: usize, b: usize, theta: f64) -> Self {
        Self::new(Gate::CPhase(theta), vec![a, b])
    }
    pub fn unitary(targets: Vec<usize>, m: DMatrix<C>) -> Self {
        Self::new(Gate::Unitary(Arc::new(m)), targets)
    }
    pub fn delay(q: usize, seconds: f64) -> Self {
        Self::new(Gate::Delay(seconds), vec![q])
    }

    pub fn controlled_by(mut self, control: usize) -> Self {
        self.controls.push(control);
        self
    }

    pub fn dagger(&self) -> Self {
        GateOp { gate: self.gate.dagger(), targets: self.targets.clone(), controls: self.controls.clone() }
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls.iter().chain(&self.targets).copied()
    }

    pub fn n_qubits(&self) -> usize {
        self.controls.len() + self.targets.len()
    }

    pub fn is_delay(&self) -> bool {
        matches!(self.gate, Gate::Delay(_))
    }
}

impl From<CliffordGate> for GateOp {
    fn from(g: CliffordGate) -> Self {
        match g {
            CliffordGate::H(q) => GateOp::h(q),
            CliffordGate::S(q) => GateOp::s(q),
            CliffordGate::Sdg(q) => GateOp::sdg(q),
            CliffordGate::SqrtX(q) => GateOp::sx(q),
            CliffordGate::SqrtXdg(q) => GateOp::sxdg(q),
            CliffordGate::X(q) => GateOp::x(q),
            CliffordGate::Y(q) => GateOp::y(q),
            CliffordGate::Z(q) => GateOp::z(q),
            CliffordGate::Cnot(a, b) => GateOp::cnot(a, b),
            CliffordGate::Cz(a, b) => GateOp::cz(a, b),
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in &self.controls {
            write!(f, "C-")?;
        }
        write!(f, "{}", self.gate.name())?;
        if let Some(a) = self.gate.angle() {
            write!(f, "({a:.12})")?;
        }
        for q in self.qubits() {
            write!(f, " q{q}")?;
        }
        Ok(())
    }
}
