//! Dense state-vector simulation.
//!
//! Basis index bit `q` is the value of qubit `q`. Kernels switch to rayon above
//! [`PARALLEL_THRESHOLD`] qubits; each amplitude is still updated by the same
//! arithmetic, so parallel and sequential results agree bit for bit.

mod gate;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::pauli::PauliString;
use crate::rng::{self, Channel};

pub use gate::{Gate, GateOp};

type C = Complex64;

pub const MAX_QUBITS: usize = 30;
pub const PARALLEL_THRESHOLD: usize = 14;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("qubit {0} used twice in one gate")]
    DuplicateTarget(usize),
    #[error("gate {gate} expects {expected} targets, got {got}")]
    Arity { gate: &'static str, expected: usize, got: usize },
    #[error("Pauli string {0} is not Hermitian")]
    NonHermitian(String),
    #[error("width mismatch: state has {state} qubits, operator {op}")]
    WidthMismatch { state: usize, op: usize },
    #[error("amplitude count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("state norm {0} differs from one")]
    NotNormalized(f64),
    #[error("empty qubit list")]
    EmptyQubitList,
    #[error("shot count must be at least one")]
    ZeroShots,
    #[error("{0} qubits exceeds the simulator limit")]
    TooManyQubits(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C>,
}

fn insert_zero_bit(i: usize, bit: usize) -> usize {
    let low = i & ((1 << bit) - 1);
    ((i >> bit) << (bit + 1)) | low
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Self {
        assert!(n <= MAX_QUBITS, "too many qubits");
        let mut amps = vec![C::new(0.0, 0.0); 1 << n];
        amps[index] = C::new(1.0, 0.0);
        StateVector { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<C>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(SimError::NotPowerOfTwo(len));
        }
        let n = len.trailing_zeros() as usize;
        if n > MAX_QUBITS {
            return Err(SimError::TooManyQubits(n));
        }
        let s = StateVector { n, amps };
        let norm = s.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> C {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Tensor product `self (x) other` with `other` on the low qubits.
    pub fn tensor(&self, low: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.amps.len() * low.amps.len());
        for a in &self.amps {
            for b in &low.amps {
                amps.push(a * b);
            }
        }
        StateVector { n: self.n + low.n, amps }
    }

    fn par(&self) -> bool {
        self.n >= PARALLEL_THRESHOLD
    }

    fn check(&self, op: &GateOp) -> Result<(), SimError> {
        let expected = op.gate.arity();
        if op.targets.len() != expected {
            return Err(SimError::Arity { gate: op.gate.name(), expected, got: op.targets.len() });
        }
        let mut seen = 0u64;
        for q in op.qubits() {
            if q >= self.n {
                return Err(SimError::QubitOutOfRange { qubit: q, n: self.n });
            }
            if seen & (1 << q) != 0 {
                return Err(SimError::DuplicateTarget(q));
            }
            seen |= 1 << q;
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, op: &GateOp) -> Result<(), SimError> {
        self.check(op)?;
        let cmask: usize = op.controls.iter().map(|&q| 1usize << q).sum();
        match &op.gate {
            Gate::Delay(_) => {}
            g if g.diag1().is_some() => {
                let d = g.diag1().expect("diagonal");
                self.diag1(op.targets[0], d, cmask);
            }
            Gate::Cz => self.diag_both(op.targets[0], op.targets[1], C::new(-1.0, 0.0), cmask),
            Gate::CPhase(t) => self.diag_both(op.targets[0], op.targets[1], C::from_polar(1.0, *t), cmask),
            Gate::Cnot => {
                let m = Gate::X.mat2().expect("one-qubit");
                self.one_qubit(op.targets[1], m, cmask | (1 << op.targets[0]));
            }
            Gate::Unitary(m) if m.nrows() > 2 => self.dense(&op.targets, m, cmask),
            g => {
                let m = g.mat2().expect("every remaining gate is one-qubit");
                self.one_qubit(op.targets[0], m, cmask);
            }
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, ops: impl IntoIterator<Item = &'a GateOp>) -> Result<(), SimError> {
        for op in ops {
            self.apply_gate(op)?;
        }
        Ok(())
    }

    fn diag1(&mut self, t: usize, d: [C; 2], cmask: usize) {
        let f = |i: usize, a: &mut C| {
            if i & cmask == cmask {
                *a *= d[(i >> t) & 1];
            }
        };
        if self.par() {
            self.amps.par_iter_mut().enumerate().for_each(|(i, a)| f(i, a));
        } else {
            self.amps.iter_mut().enumerate().for_each(|(i, a)| f(i, a));
        }
    }

    fn diag_both(&mut self, a: usize, b: usize, phase: C, cmask: usize) {
        let mask = cmask | (1 << a) | (1 << b);
        let f = |i: usize, x: &mut C| {
            if i & mask == mask {
                *x *= phase;
            }
        };
        if self.par() {
            self.amps.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        } else {
            self.amps.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        }
    }

    fn one_qubit(&mut self, t: usize, m: [[C; 2]; 2], cmask: usize) {
        let half = 1usize << t;
        let kernel = |base: usize, lo: &mut [C], hi: &mut [C]| {
            for (j, (a0, a1)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                if (base + j) & cmask != cmask {
                    continue;
                }
                let (x0, x1) = (*a0, *a1);
                *a0 = m[0][0] * x0 + m[0][1] * x1;
                *a1 = m[1][0] * x0 + m[1][1] * x1;
            }
        };
        let chunk = half << 1;
        if self.par() {
            self.amps.par_chunks_mut(chunk).enumerate().for_each(|(k, ch)| {
                let (lo, hi) = ch.split_at_mut(half);
                kernel(k * chunk, lo, hi);
            });
        } else {
            self.amps.chunks_mut(chunk).enumerate().for_each(|(k, ch)| {
                let (lo, hi) = ch.split_at_mut(half);
                kernel(k * chunk, lo, hi);
            });
        }
    }

    fn dense(&mut self, targets: &[usize], m: &nalgebra::DMatrix<C>, cmask: usize) {
        let k = targets.len();
        let dim = 1usize << k;
        let mut sorted: Vec<usize> = targets.to_vec();
        sorted.sort_unstable();
        // offset of local basis state `l` (targets[0] most significant)
        let offsets: Vec<usize> = (0..dim)
            .map(|l| (0..k).filter(|&p| (l >> (k - 1 - p)) & 1 == 1).map(|p| 1usize << targets[p]).sum())
            .collect();
        let mut buf = vec![C::new(0.0, 0.0); dim];
        for b in 0..(self.amps.len() >> k) {
            let mut base = b;
            for &q in &sorted {
                base = insert_zero_bit(base, q);
            }
            if base & cmask != cmask {
                continue;
            }
            for (l, &o) in offsets.iter().enumerate() {
                buf[l] = self.amps[base + o];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = C::new(0.0, 0.0);
                for (l, v) in buf.iter().enumerate() {
                    acc += m[(r, l)] * v;
                }
                self.amps[base + o] = acc;
            }
        }
    }

    fn check_pauli(&self, p: &PauliString) -> Result<(), SimError> {
        if p.width() != self.n {
            return Err(SimError::WidthMismatch { state: self.n, op: p.width() });
        }
        if !p.is_hermitian() {
            return Err(SimError::NonHermitian(p.to_string()));
        }
        Ok(())
    }

    /// `exp(-i theta/2 P)` applied as `cos(theta/2) - i sin(theta/2) P`.
    pub fn apply_pauli_rotation(&mut self, p: &PauliString, theta: f64) -> Result<(), SimError> {
        self.check_pauli(p)?;
        let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let ipow = |k: u8| crate::pauli::Phase::from_exponent(k as i64).to_complex();
        let misn = C::new(0.0, -sn);
        let x = p.x_mask() as usize;
        if x == 0 {
            let f = |i: usize, a: &mut C| {
                let (k, _) = p.apply_to_basis(i as u64);
                *a *= cs + misn * ipow(k);
            };
            if self.par() {
                self.amps.par_iter_mut().enumerate().for_each(|(i, a)| f(i, a));
            } else {
                self.amps.iter_mut().enumerate().for_each(|(i, a)| f(i, a));
            }
            return Ok(());
        }
        let pivot = usize::BITS as usize - 1 - x.leading_zeros() as usize;
        let half = 1usize << pivot;
        let chunk = half << 1;
        let kernel = |base: usize, lo: &mut [C], hi: &mut [C]| {
            for j in 0..half {
                let i = base + j;
                let partner = i ^ x;
                let jp = partner - base - half;
                let (ki, _) = p.apply_to_basis(i as u64);
                let (kp, _) = p.apply_to_basis(partner as u64);
                let (a, b) = (lo[j], hi[jp]);
                lo[j] = cs * a + misn * ipow(kp) * b;
                hi[jp] = cs * b + misn * ipow(ki) * a;
            }
        };
        if self.par() {
            self.amps.par_chunks_mut(chunk).enumerate().for_each(|(k, ch)| {
                let (lo, hi) = ch.split_at_mut(half);
                kernel(k * chunk, lo, hi);
            });
        } else {
            self.amps.chunks_mut(chunk).enumerate().for_each(|(k, ch)| {
                let (lo, hi) = ch.split_at_mut(half);
                kernel(k * chunk, lo, hi);
            });
        }
        Ok(())
    }

    /// Multiply every amplitude by `e^{i phi}`.
    pub fn apply_global_phase(&mut self, phi: f64) {
        if phi != 0.0 {
            let f = C::from_polar(1.0, phi);
            self.amps.iter_mut().for_each(|a| *a *= f);
        }
    }

    /// `s <- P s` for any phase of `P` (always unitary).
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<(), SimError> {
        if p.width() != self.n {
            return Err(SimError::WidthMismatch { state: self.n, op: p.width() });
        }
        let mut out = vec![C::new(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let (k, j) = p.apply_to_basis(i as u64);
            out[j as usize] = crate::pauli::Phase::from_exponent(k as i64).to_complex() * a;
        }
        self.amps = out;
        Ok(())
    }

    /// `<s|P|s>` for Hermitian `P`.
    pub fn expectation_pauli(&self, p: &PauliString) -> Result<f64, SimError> {
        self.check_pauli(p)?;
        let term = |i: usize| {
            let (k, j) = p.apply_to_basis(i as u64);
            self.amps[j as usize].conj() * crate::pauli::Phase::from_exponent(k as i64).to_complex() * self.amps[i]
        };
        let v: C = if self.par() {
            (0..self.amps.len()).into_par_iter().map(term).sum()
        } else {
            (0..self.amps.len()).map(term).sum()
        };
        debug_assert!(v.im.abs() < 1e-10, "imaginary expectation residue {}", v.im);
        Ok(v.re)
    }

    /// Marginal Born probabilities; outcome bit `m` is the value of `qubits[m]`.
    pub fn probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, SimError> {
        if qubits.is_empty() {
            return Err(SimError::EmptyQubitList);
        }
        for &q in qubits {
            if q >= self.n {
                return Err(SimError::QubitOutOfRange { qubit: q, n: self.n });
            }
        }
        let mut out = vec![0.0; 1 << qubits.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let key: usize = qubits.iter().enumerate().map(|(m, &q)| ((i >> q) & 1) << m).sum();
            out[key] += a.norm_sqr();
        }
        Ok(out)
    }

    pub fn sample_counts(&self, qubits: &[usize], shots: u64, seed: u64) -> Result<Counts, SimError> {
        if shots == 0 {
            return Err(SimError::ZeroShots);
        }
        let probs = self.probabilities(qubits)?;
        Ok(Counts::sample(qubits, &probs, shots, seed))
    }

    /// Little-endian dump: `n` as u64, then `2^n` pairs of f64 (re, im).
    pub fn write_le(&self, w: &mut impl Write) -> Result<(), SimError> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_le(r: &mut impl Read) -> Result<Self, SimError> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n > MAX_QUBITS {
            return Err(SimError::TooManyQubits(n));
        }
        let mut amps = Vec::with_capacity(1 << n);
        for _ in 0..(1usize << n) {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            amps.push(C::new(re, f64::from_le_bytes(b8)));
        }
        Self::from_amplitudes(amps)
    }
}

pub fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// The outcome of shot `shot`: one inverse-CDF draw from that shot's measure stream.
pub fn draw_outcome(cdf: &[f64], seed: u64, shot: u64) -> u64 {
    let total = *cdf.last().expect("non-empty distribution");
    let u: f64 = rng::stream(seed, shot, Channel::Measure).random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
}

/// Outcome histogram. Outcome bit `m` holds the value of `qubits[m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub qubits: Vec<usize>,
    pub shots: u64,
    pub counts: BTreeMap<u64, u64>,
}

impl Counts {
    /// One inverse-CDF draw per shot from that shot's own stream.
    pub fn sample(qubits: &[usize], probs: &[f64], shots: u64, seed: u64) -> Counts {
        let cdf = cumulative(probs);
        let outcomes: Vec<u64> = (0..shots).into_par_iter().map(|shot| draw_outcome(&cdf, seed, shot)).collect();
        Self::from_outcomes(qubits, outcomes)
    }

    pub fn from_outcomes(qubits: &[usize], outcomes: impl IntoIterator<Item = u64>) -> Counts {
        let mut counts = BTreeMap::new();
        let mut shots = 0;
        for o in outcomes {
            *counts.entry(o).or_insert(0) += 1;
            shots += 1;
        }
        Counts { qubits: qubits.to_vec(), shots, counts }
    }

    pub fn get(&self, outcome: u64) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; 1 << self.qubits.len()];
        for (&o, &c) in &self.counts {
            f[o as usize] = c as f64 / self.shots as f64;
        }
        f
    }

    /// Bitstring with `qubits[0]` as the rightmost character.
    pub fn bitstring(&self, outcome: u64) -> String {
        (0..self.qubits.len()).rev().map(|m| if (outcome >> m) & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn to_bitstrings(&self) -> BTreeMap<String, u64> {
        self.counts.iter().map(|(&o, &c)| (self.bitstring(o), c)).collect()
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_bitstrings().into_iter().map(|(b, c)| format!("{b}:{c}")).collect();
        write!(f, "{}", parts.join(" "))
    }
}
