//! Phase-tracked Pauli strings, Jordan-Wigner Majoranas and symbolic
//! Clifford conjugation.
//!
//! Letters are stored as two bitmasks (`x`, `z`); the pair `(1, 1)` is the
//! true `Y` letter. The operator represented is `i^phase` times the tensor
//! product of the letters. Qubit 0 is the rightmost tensor factor.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("qubit {qubit} out of range for width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("Jordan-Wigner encodes physical modes only")]
    AuxiliaryRegister,
    #[error("site {site} out of range 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("string remover needs m < n, got ({m}, {n})")]
    InvalidRange { m: usize, n: usize },
    #[error("unsupported gate `{0}`")]
    UnsupportedGate(String),
    #[error("cannot parse Pauli string `{0}`")]
    Parse(String),
}

/// Power of `i`: the group {+1, +i, -1, -i}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Letter::I => [[l, o], [o, l]],
            Letter::X => [[o, l], [l, o]],
            Letter::Y => [[o, -i], [i, o]],
            Letter::Z => [[l, o], [o, -l]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    width: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: Phase,
}

fn words(width: usize) -> usize {
    width.div_ceil(64).max(1)
}

impl PauliString {
    pub fn identity(width: usize) -> Self {
        let n = words(width);
        PauliString { width, x: vec![0; n], z: vec![0; n], phase: Phase::ONE }
    }

    /// One letter on `qubit`, identity elsewhere.
    pub fn single(width: usize, qubit: usize, letter: Letter) -> Result<Self, PauliError> {
        let mut p = Self::identity(width);
        p.set(qubit, letter)?;
        Ok(p)
    }

    pub fn from_letters(width: usize, letters: &[(usize, Letter)]) -> Result<Self, PauliError> {
        let mut p = Self::identity(width);
        for &(q, l) in letters {
            p.set(q, l)?;
        }
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn times_phase(mut self, phase: Phase) -> Self {
        self.phase = self.phase * phase;
        self
    }

    pub fn neg(self) -> Self {
        self.times_phase(Phase::MINUS_ONE)
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        let (w, b) = (qubit / 64, qubit % 64);
        Letter::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn set(&mut self, qubit: usize, letter: Letter) -> Result<(), PauliError> {
        if qubit >= self.width {
            return Err(PauliError::QubitOutOfRange { qubit, width: self.width });
        }
        let (w, b) = (qubit / 64, qubit % 64);
        let (xb, zb) = letter.bits();
        self.x[w] = (self.x[w] & !(1 << b)) | ((xb as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((zb as u64) << b);
        Ok(())
    }

    pub fn is_identity_letters(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.width).filter(|&q| self.letter(q) != Letter::I).collect()
    }

    fn y_count(&self) -> u32 {
        self.x.iter().zip(&self.z).map(|(a, b)| (a & b).count_ones()).sum()
    }

    /// A string is Hermitian iff its overall phase is real (letters are Hermitian).
    pub fn is_hermitian(&self) -> bool {
        self.phase.is_real()
    }

    pub fn multiply(&self, other: &PauliString) -> Result<PauliString, PauliError> {
        if self.width != other.width {
            return Err(PauliError::WidthMismatch { left: self.width, right: other.width });
        }
        // Y = i X Z, so letters = i^{nY} X^x Z^z; moving Z^{z1} past X^{x2} costs (-1)^{|z1 & x2|}.
        let x: Vec<u64> = self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect();
        let z: Vec<u64> = self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect();
        let cross: u32 = self.z.iter().zip(&other.x).map(|(a, b)| (a & b).count_ones()).sum();
        let ny3: u32 = x.iter().zip(&z).map(|(a, b)| (a & b).count_ones()).sum();
        let k = self.phase.0 as i64
            + other.phase.0 as i64
            + self.y_count() as i64
            + other.y_count() as i64
            + 2 * cross as i64
            - ny3 as i64;
        Ok(PauliString { width: self.width, x, z, phase: Phase::from_exponent(k) })
    }

    pub fn commutes(&self, other: &PauliString) -> Result<bool, PauliError> {
        if self.width != other.width {
            return Err(PauliError::WidthMismatch { left: self.width, right: other.width });
        }
        let a: u32 = self.x.iter().zip(&other.z).map(|(a, b)| (a & b).count_ones()).sum();
        let b: u32 = self.z.iter().zip(&other.x).map(|(a, b)| (a & b).count_ones()).sum();
        Ok((a + b) % 2 == 0)
    }

    /// Action on a computational basis state: `P|i> = i^k |j>`, returned as `(k, j)`.
    /// Only meaningful for widths up to 64.
    pub fn apply_to_basis(&self, index: u64) -> (u8, u64) {
        let (x, z) = (self.x[0], self.z[0]);
        let sign = (index & z).count_ones() * 2;
        let k = (self.phase.0 as u32 + self.y_count() + sign) % 4;
        (k as u8, index ^ x)
    }

    pub fn x_mask(&self) -> u64 {
        self.x[0]
    }

    pub fn z_mask(&self) -> u64 {
        self.z[0]
    }

    /// Dense matrix in the computational basis (bit q of the row index is qubit q).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        assert!(self.width <= 14, "dense Pauli matrices limited to 14 qubits");
        let dim = 1usize << self.width;
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim as u64 {
            let (k, row) = self.apply_to_basis(col);
            m[(row as usize, col as usize)] = Phase(k).to_complex();
        }
        m
    }

    pub fn letters_string(&self) -> String {
        (0..self.width).rev().map(|q| self.letter(q).as_char()).collect()
    }
}

impl Mul for &PauliString {
    type Output = PauliString;
    fn mul(self, rhs: &PauliString) -> PauliString {
        self.multiply(rhs).expect("Pauli widths must match")
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = ["+", "+i", "-", "-i"][self.phase.0 as usize];
        write!(f, "{prefix}{}", self.letters_string())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (neg, rest) = match t.as_bytes().first() {
            Some(b'+') => (false, &t[1..]),
            Some(b'-') => (true, &t[1..]),
            _ => (false, t),
        };
        let (imag, body) = match rest.strip_prefix('i') {
            Some(b) => (true, b),
            None => (false, rest),
        };
        if body.is_empty() {
            return Err(PauliError::Parse(s.to_string()));
        }
        let width = body.chars().count();
        let mut p = PauliString::identity(width);
        for (k, c) in body.chars().enumerate() {
            let l = match c {
                'I' => Letter::I,
                'X' => Letter::X,
                'Y' => Letter::Y,
                'Z' => Letter::Z,
                _ => return Err(PauliError::Parse(s.to_string())),
            };
            p.set(width - 1 - k, l)?;
        }
        let k = 2 * neg as i64 + imag as i64;
        Ok(p.with_phase(Phase::from_exponent(k)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flavor {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Register {
    Physical,
    Auxiliary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MajoranaIndex {
    pub site: usize,
    pub spin: Spin,
    pub flavor: Flavor,
    pub register: Register,
}

impl MajoranaIndex {
    pub fn physical(site: usize, spin: Spin, flavor: Flavor) -> Self {
        MajoranaIndex { site, spin, flavor, register: Register::Physical }
    }

    pub fn auxiliary(site: usize, spin: Spin, flavor: Flavor) -> Self {
        MajoranaIndex { site, spin, flavor, register: Register::Auxiliary }
    }
}

/// Placement of spin orbitals on qubits for the Jordan-Wigner encoding.
/// Sites are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JwLayout {
    n_sites: usize,
    width: usize,
    qubits: Vec<[usize; 2]>,
}

impl JwLayout {
    /// Site-major ordering, up before down: qubit = 2 (site - 1) + spin.
    pub fn site_major(n_sites: usize) -> Self {
        let qubits = (0..n_sites).map(|s| [2 * s, 2 * s + 1]).collect();
        JwLayout { n_sites, width: 2 * n_sites, qubits }
    }

    /// The dimer: site 1 is the Hubbard site `c`, site 2 the bath site `b`.
    /// Qubits: b-up 0, c-up 1, b-down 2, c-down 3.
    pub fn dimer() -> Self {
        JwLayout { n_sites: 2, width: 4, qubits: vec![[1, 3], [0, 2]] }
    }

    /// Extra spinless modes appended after the orbitals (e.g. an ancilla fermion).
    pub fn with_extra_qubits(mut self, extra: usize) -> Self {
        self.width += extra;
        self
    }

    /// True when the orbitals sit in the dimer order (extra qubits allowed).
    pub fn is_dimer(&self) -> bool {
        self.qubits == [[1, 3], [0, 2]]
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn qubit(&self, site: usize, spin: Spin) -> Result<usize, PauliError> {
        if site == 0 || site > self.n_sites {
            return Err(PauliError::SiteOutOfRange { site, n_sites: self.n_sites });
        }
        Ok(self.qubits[site - 1][spin.index()])
    }

    pub fn majorana(&self, m: MajoranaIndex) -> Result<PauliString, PauliError> {
        if m.register == Register::Auxiliary {
            return Err(PauliError::AuxiliaryRegister);
        }
        let q = self.qubit(m.site, m.spin)?;
        jw_majorana_on_qubit(self.width, q, m.flavor)
    }
}

/// `x_q = X_q Z_{<q}`, `y_q = -Y_q Z_{<q}`.
pub fn jw_majorana_on_qubit(width: usize, qubit: usize, flavor: Flavor) -> Result<PauliString, PauliError> {
    let mut p = PauliString::identity(width);
    for k in 0..qubit {
        p.set(k, Letter::Z)?;
    }
    match flavor {
        Flavor::X => p.set(qubit, Letter::X)?,
        Flavor::Y => {
            p.set(qubit, Letter::Y)?;
            p = p.neg();
        }
    }
    Ok(p)
}

pub fn jw_majorana(m: MajoranaIndex, n_sites: usize) -> Result<PauliString, PauliError> {
    JwLayout::site_major(n_sites).majorana(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    Sdg(usize),
    /// X_{pi/2} = (1/sqrt 2) [[1, -i], [-i, 1]]
    SqrtX(usize),
    SqrtXdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cnot(usize, usize),
    Cz(usize, usize),
}

impl CliffordGate {
    pub fn from_name(name: &str, qubits: &[usize]) -> Result<Self, PauliError> {
        let g = match (name.to_ascii_uppercase().as_str(), qubits) {
            ("H", &[q]) => CliffordGate::H(q),
            ("S", &[q]) => CliffordGate::S(q),
            ("SDG", &[q]) => CliffordGate::Sdg(q),
            ("SX" | "XHALF", &[q]) => CliffordGate::SqrtX(q),
            ("SXDG" | "XHALFDG", &[q]) => CliffordGate::SqrtXdg(q),
            ("X", &[q]) => CliffordGate::X(q),
            ("Y", &[q]) => CliffordGate::Y(q),
            ("Z", &[q]) => CliffordGate::Z(q),
            ("CNOT" | "CX", &[c, t]) => CliffordGate::Cnot(c, t),
            ("CZ", &[a, b]) => CliffordGate::Cz(a, b),
            _ => return Err(PauliError::UnsupportedGate(name.to_string())),
        };
        Ok(g)
    }

    pub fn qubits(&self) -> Vec<usize> {
        use CliffordGate::*;
        match *self {
            H(q) | S(q) | Sdg(q) | SqrtX(q) | SqrtXdg(q) | X(q) | Y(q) | Z(q) => vec![q],
            Cnot(a, b) | Cz(a, b) => vec![a, b],
        }
    }

    pub fn inverse(self) -> Self {
        use CliffordGate::*;
        match self {
            S(q) => Sdg(q),
            Sdg(q) => S(q),
            SqrtX(q) => SqrtXdg(q),
            SqrtXdg(q) => SqrtX(q),
            g => g,
        }
    }

    /// Images of `X_q` and `Z_q` under `g^dagger (.) g` for a qubit `q` the gate acts on.
    fn images(self, q: usize, width: usize) -> (PauliString, PauliString) {
        use CliffordGate::*;
        use Letter as L;
        let s = |lets: &[(usize, Letter)]| PauliString::from_letters(width, lets).expect("qubit checked");
        let (xi, zi) = match self {
            H(_) => (s(&[(q, L::Z)]), s(&[(q, L::X)])),
            S(_) => (s(&[(q, L::Y)]).neg(), s(&[(q, L::Z)])),
            Sdg(_) => (s(&[(q, L::Y)]), s(&[(q, L::Z)])),
            SqrtX(_) => (s(&[(q, L::X)]), s(&[(q, L::Y)])),
            SqrtXdg(_) => (s(&[(q, L::X)]), s(&[(q, L::Y)]).neg()),
            X(_) => (s(&[(q, L::X)]), s(&[(q, L::Z)]).neg()),
            Y(_) => (s(&[(q, L::X)]).neg(), s(&[(q, L::Z)]).neg()),
            Z(_) => (s(&[(q, L::X)]).neg(), s(&[(q, L::Z)])),
            Cnot(c, t) if q == c => (s(&[(c, L::X), (t, L::X)]), s(&[(c, L::Z)])),
            Cnot(c, t) => (s(&[(t, L::X)]), s(&[(c, L::Z), (t, L::Z)])),
            Cz(a, b) => {
                let o = if q == a { b } else { a };
                (s(&[(q, L::X), (o, L::Z)]), s(&[(q, L::Z)]))
            }
        };
        (xi, zi)
    }

    /// `g^dagger p g`.
    pub fn conjugate(self, p: &PauliString) -> Result<PauliString, PauliError> {
        let width = p.width();
        let qs = self.qubits();
        for &q in &qs {
            if q >= width {
                return Err(PauliError::QubitOutOfRange { qubit: q, width });
            }
        }
        let mut rest = p.clone();
        let mut image = PauliString::identity(width);
        for &q in &qs {
            let l = p.letter(q);
            rest.set(q, Letter::I)?;
            let li = match l {
                Letter::I => continue,
                Letter::X => self.images(q, width).0,
                Letter::Z => self.images(q, width).1,
                Letter::Y => {
                    let (xi, zi) = self.images(q, width);
                    (&xi * &zi).times_phase(Phase::I)
                }
            };
            image = &image * &li;
        }
        rest.multiply(&image)
    }
}

impl fmt::Display for CliffordGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CliffordGate::*;
        match *self {
            H(q) => write!(f, "H q{q}"),
            S(q) => write!(f, "S q{q}"),
            Sdg(q) => write!(f, "SDG q{q}"),
            SqrtX(q) => write!(f, "SX q{q}"),
            SqrtXdg(q) => write!(f, "SXDG q{q}"),
            X(q) => write!(f, "X q{q}"),
            Y(q) => write!(f, "Y q{q}"),
            Z(q) => write!(f, "Z q{q}"),
            Cnot(c, t) => write!(f, "CNOT q{c} q{t}"),
            Cz(a, b) => write!(f, "CZ q{a} q{b}"),
        }
    }
}

/// Gates in time order: the first gate acts first on a state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CliffordCircuit {
    pub gates: Vec<CliffordGate>,
}

impl CliffordCircuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, g: CliffordGate) {
        self.gates.push(g);
    }

    pub fn extend(&mut self, other: &CliffordCircuit) {
        self.gates.extend_from_slice(&other.gates);
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, CliffordGate::Cnot(..))).count()
    }

    pub fn two_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.qubits().len() == 2).count()
    }

    pub fn inverse(&self) -> CliffordCircuit {
        CliffordCircuit { gates: self.gates.iter().rev().map(|g| g.inverse()).collect() }
    }

    /// `c^dagger p c`, where `c` is the circuit's unitary.
    pub fn conjugate(&self, p: &PauliString) -> Result<PauliString, PauliError> {
        let mut out = p.clone();
        for g in self.gates.iter().rev() {
            out = g.conjugate(&out)?;
        }
        Ok(out)
    }

    /// `c p c^dagger`: how a measured observable transforms when the circuit runs first.
    pub fn propagate(&self, p: &PauliString) -> Result<PauliString, PauliError> {
        self.inverse().conjugate(p)
    }
}

pub fn clifford_conjugate(c: &CliffordCircuit, p: &PauliString) -> Result<PauliString, PauliError> {
    c.conjugate(p)
}

/// `S_mn`: a fan of CZ gates between every qubit strictly inside `(m, n)` and `n`.
/// Conjugation removes the string: `S^dagger (A_m B_n) S = A_m B_n Z_(m,n)` for `A, B` in {X, Y}.
pub fn jw_string_remover(m: usize, n: usize) -> Result<CliffordCircuit, PauliError> {
    if m >= n {
        return Err(PauliError::InvalidRange { m, n });
    }
    Ok(CliffordCircuit { gates: (m + 1..n).map(|k| CliffordGate::Cz(k, n)).collect() })
}
