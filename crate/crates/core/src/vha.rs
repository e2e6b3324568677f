//! Variational Hamiltonian ansatz for the dimer: state preparation, energy
//! measurement schedules, landscape sweeps and a compass-search optimizer.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{dimer_layer, measurement_basis_circuit, Circuit, CircuitError, MeasurementKind};
use crate::oracle::{FermionHamiltonian, FermionTerm};
use crate::pauli::{JwLayout, Spin};
use crate::rng::child_seed;
use crate::statevector::{Counts, GateOp, SimError, StateVector};

#[derive(Debug, Error)]
pub enum VhaError {
    #[error("at least one layer is required")]
    NoLayers,
    #[error("empty grid")]
    EmptyGrid,
    #[error("angle {0} outside (-2 pi, 2 pi]")]
    AngleRange(f64),
    #[error("budget must allow at least one evaluation")]
    ZeroBudget,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Angle pairs `(alpha_k, beta_k)`, one per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VhaParams {
    layers: Vec<(f64, f64)>,
}

impl VhaParams {
    pub fn new(layers: Vec<(f64, f64)>) -> Result<Self, VhaError> {
        if layers.is_empty() {
            return Err(VhaError::NoLayers);
        }
        for &(a, b) in &layers {
            for v in [a, b] {
                if !(v > -2.0 * PI && v <= 2.0 * PI) {
                    return Err(VhaError::AngleRange(v));
                }
            }
        }
        Ok(VhaParams { layers })
    }

    pub fn single(alpha: f64, beta: f64) -> Result<Self, VhaError> {
        Self::new(vec![(alpha, beta)])
    }

    pub fn layers(&self) -> &[(f64, f64)] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    fn from_flat(v: &[f64]) -> Self {
        VhaParams { layers: v.chunks(2).map(|c| (c[0], c[1])).collect() }
    }
}

/// Maps `|0000>` to `f_dn^dag f_up^dag |0>` with `f = (c + b)/sqrt 2` (dimer layout).
pub fn slater_prep_circuit(width: usize) -> Circuit {
    assert!(width >= 4, "dimer needs four qubits");
    let mut c = Circuit::new(width);
    for (b, cq) in [(0, 1), (2, 3)] {
        c.push(GateOp::h(b)).expect("in range");
        c.push(GateOp::cnot(b, cq)).expect("in range");
        c.push(GateOp::x(b)).expect("in range");
    }
    // the down creation operators pass one up electron: overall sign -1
    c.add_global_phase(PI);
    c
}

/// Slater preparation followed by the ansatz layers.
pub fn vha_circuit(params: &VhaParams, width: usize) -> Circuit {
    let mut c = Circuit::new(width);
    c.barrier("prep");
    c.append(&slater_prep_circuit(width)).expect("same width");
    c.barrier("ansatz");
    for &(a, b) in params.layers() {
        c.append(&dimer_layer(width, a, b)).expect("same width");
    }
    c
}

/// Closed-form p = 1 dimer energy.
pub fn energy_closed_form(t: f64, u: f64, alpha: f64, beta: f64) -> f64 {
    -2.0 * t * (alpha / 2.0).cos() - (u / 4.0) * (1.0 - (alpha / 2.0).sin() * (4.0 * beta).sin())
}

/// Minimiser of [`energy_closed_form`]: `tan(alpha/2) = -U/(8t)`, `sin 4beta = 1`.
pub fn dimer_optimal_angles(t: f64, u: f64) -> (f64, f64) {
    (-2.0 * (u / (8.0 * t)).atan(), std::f64::consts::FRAC_PI_8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Shots per measurement setting (0 = exact).
    pub shots: u64,
    pub hopping: f64,
    /// Repulsion, chemical potential and constants.
    pub interaction: f64,
}

/// One measurement setting: a basis change, the qubits read out and the
/// per-outcome value split into (hopping, interaction).
struct Setting {
    basis: Circuit,
    qubits: Vec<usize>,
    value: Box<dyn Fn(u64) -> (f64, f64) + Send + Sync>,
}

fn bit(outcome: u64, k: usize) -> f64 {
    ((outcome >> k) & 1) as f64
}

fn settings(h: &FermionHamiltonian, layout: &JwLayout) -> Result<Vec<Setting>, VhaError> {
    let w = layout.width();
    let mut diag: Vec<FermionTerm> = vec![];
    let mut out = vec![];
    for term in h.terms() {
        match *term {
            FermionTerm::Hopping { i, j, spin, t } => {
                let (qi, qj) = (layout.qubit(i, spin).map_err(CircuitError::from)?, layout.qubit(j, spin).map_err(CircuitError::from)?);
                let (m, n) = (qi.min(qj), qi.max(qj));
                if n == m + 1 {
                    // +1 on (q_m, q_n) = (0, 1), -1 on (1, 0)
                    out.push(Setting {
                        basis: measurement_basis_circuit(w, MeasurementKind::HorizontalHop, m, n)?,
                        qubits: vec![m, n],
                        value: Box::new(move |o| (-t * (bit(o, 1) - bit(o, 0)), 0.0)),
                    });
                } else {
                    // c_m^dag c_n + h.c. = (1/2) <i y_m x_n> + (1/2) <-i x_m y_n>, each a Z_m Z_n parity
                    for kind in [MeasurementKind::YxPair, MeasurementKind::XyPair] {
                        out.push(Setting {
                            basis: measurement_basis_circuit(w, kind, m, n)?,
                            qubits: vec![m, n],
                            value: Box::new(move |o| {
                                let parity = 1.0 - 2.0 * ((bit(o, 0) + bit(o, 1)) % 2.0);
                                (-t * 0.5 * parity, 0.0)
                            }),
                        });
                    }
                }
            }
            other => diag.push(other),
        }
    }
    if !diag.is_empty() {
        let mut resolved = vec![];
        for term in diag {
            resolved.push(match term {
                FermionTerm::Repulsion { site, u } => (
                    0,
                    layout.qubit(site, Spin::Up).map_err(CircuitError::from)?,
                    layout.qubit(site, Spin::Down).map_err(CircuitError::from)?,
                    u,
                ),
                FermionTerm::Number { site, spin, mu } => (1, layout.qubit(site, spin).map_err(CircuitError::from)?, 0, mu),
                FermionTerm::Constant(c) => (2, 0, 0, c),
                FermionTerm::Hopping { .. } => unreachable!(),
            });
        }
        out.push(Setting {
            basis: Circuit::new(w),
            qubits: (0..w).collect(),
            value: Box::new(move |o| {
                let mut e = 0.0;
                for &(kind, a, b, coef) in &resolved {
                    e += match kind {
                        0 => coef * bit(o, a) * bit(o, b),
                        1 => -coef * bit(o, a),
                        _ => coef,
                    };
                }
                (0.0, e)
            }),
        });
    }
    Ok(out)
}

/// Energy of the circuit's output state, measured setting by setting.
/// `shots = 0` uses the exact Born distribution.
pub fn measure_energy(circuit: &Circuit, h: &FermionHamiltonian, layout: &JwLayout, shots: u64, seed: u64) -> Result<EnergyEstimate, VhaError> {
    let state = circuit.run()?;
    measure_energy_of_state(&state, h, layout, shots, seed)
}

pub fn measure_energy_of_state(state: &StateVector, h: &FermionHamiltonian, layout: &JwLayout, shots: u64, seed: u64) -> Result<EnergyEstimate, VhaError> {
    let (mut hop, mut int, mut var) = (0.0, 0.0, 0.0);
    for (k, s) in settings(h, layout)?.iter().enumerate() {
        let mut psi = state.clone();
        s.basis.apply(&mut psi)?;
        let probs = psi.probabilities(&s.qubits)?;
        let dist: Vec<f64> = if shots == 0 {
            probs
        } else {
            Counts::sample(&s.qubits, &probs, shots, child_seed(seed, k as u64)).frequencies()
        };
        let (mut m_h, mut m_i, mut m2) = (0.0, 0.0, 0.0);
        for (o, p) in dist.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let (a, b) = (s.value)(o as u64);
            m_h += p * a;
            m_i += p * b;
            m2 += p * (a + b) * (a + b);
        }
        hop += m_h;
        int += m_i;
        if shots > 0 {
            var += ((m2 - (m_h + m_i).powi(2)).max(0.0)) / shots as f64;
        }
    }
    Ok(EnergyEstimate { value: hop + int, stderr: var.sqrt(), shots, hopping: hop, interaction: int })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub alpha: f64,
    pub beta: f64,
    pub energy: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub points: Vec<LandscapePoint>,
    pub argmin: LandscapePoint,
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Canonical representative among degenerate minima: alpha <= 0, 0 <= beta <= pi/4.
fn canonical(a: f64, b: f64) -> bool {
    a <= 1e-12 && (-1e-12..=FRAC_PI_4 + 1e-12).contains(&b)
}

fn pick_min<T: Copy>(items: &[T], energy: impl Fn(&T) -> f64, angles: impl Fn(&T) -> (f64, f64)) -> T {
    let best = items.iter().map(&energy).fold(f64::INFINITY, f64::min);
    let ties: Vec<&T> = items.iter().filter(|x| energy(x) <= best + 1e-9).collect();
    **ties.iter().find(|x| {
        let (a, b) = angles(x);
        canonical(a, b)
    })
    .unwrap_or(&ties[0])
}

/// Energy over an alpha x beta grid (row-major in alpha). Points run in parallel and
/// are merged in grid order.
pub fn landscape_sweep(t: f64, u: f64, alphas: &[f64], betas: &[f64], shots: u64, seed: u64) -> Result<Landscape, VhaError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(VhaError::EmptyGrid);
    }
    let h = FermionHamiltonian::dimer(t, u);
    let layout = JwLayout::dimer();
    let grid: Vec<(usize, f64, f64)> = alphas.iter().flat_map(|&a| betas.iter().map(move |&b| (a, b))).enumerate().map(|(k, (a, b))| (k, a, b)).collect();
    let points = grid
        .par_iter()
        .map(|&(k, a, b)| {
            let c = vha_circuit(&VhaParams { layers: vec![(a, b)] }, layout.width());
            let e = measure_energy(&c, &h, &layout, shots, child_seed(seed, k as u64))?;
            Ok(LandscapePoint { alpha: a, beta: b, energy: e.value, stderr: e.stderr })
        })
        .collect::<Result<Vec<_>, VhaError>>()?;
    let argmin = pick_min(&points, |p| p.energy, |p| (p.alpha, p.beta));
    Ok(Landscape { points, argmin })
}

impl Landscape {
    pub fn write_csv(&self, w: &mut impl Write, header: &[(String, String)]) -> Result<(), VhaError> {
        for (k, v) in header {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "alpha,beta,energy,stderr")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", p.alpha, p.beta, p.energy, p.stderr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub params: VhaParams,
    pub energy: f64,
    /// Best energy after each evaluation; never increases.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Coarse grid (single layer only) and then compass search with step halving.
/// Returns the best point seen when the budget runs out.
pub fn optimize(initial: &VhaParams, budget: usize, objective: impl Fn(&VhaParams) -> f64) -> Result<OptimizeResult, VhaError> {
    if budget == 0 {
        return Err(VhaError::ZeroBudget);
    }
    let mut trace: Vec<f64> = vec![];
    let eval = |x: &[f64], trace: &mut Vec<f64>| -> f64 {
        let e = objective(&VhaParams::from_flat(x));
        let running = trace.last().map_or(e, |&b: &f64| b.min(e));
        trace.push(running);
        e
    };
    let mut best = initial.flat();
    let mut best_e = eval(&best, &mut trace);
    if initial.depth() == 1 {
        let mut cands = vec![];
        'grid: for a in linspace(-PI, PI, 21) {
            for b in linspace(-PI / 2.0, PI / 2.0, 21) {
                if trace.len() >= budget {
                    break 'grid;
                }
                cands.push((a, b, eval(&[a, b], &mut trace)));
            }
        }
        if !cands.is_empty() {
            let (a, b, e) = pick_min(&cands, |c| c.2, |c| (c.0, c.1));
            if e < best_e {
                best = vec![a, b];
                best_e = e;
            }
        }
    }
    let mut step = 0.25;
    while step > 1e-10 && trace.len() < budget {
        let mut improved = false;
        for k in 0..best.len() {
            for dir in [1.0, -1.0] {
                if trace.len() >= budget {
                    break;
                }
                let mut x = best.clone();
                x[k] += dir * step;
                let e = eval(&x, &mut trace);
                if e < best_e {
                    best_e = e;
                    best = x;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    let evaluations = trace.len();
    Ok(OptimizeResult { params: VhaParams::from_flat(&best), energy: best_e, trace, evaluations })
}

/// Exact-mode objective for the dimer.
pub fn dimer_objective(t: f64, u: f64) -> impl Fn(&VhaParams) -> f64 {
    let h = FermionHamiltonian::dimer(t, u);
    let layout = JwLayout::dimer();
    move |p: &VhaParams| {
        let c = vha_circuit(p, layout.width());
        measure_energy(&c, &h, &layout, 0, 0).expect("dimer circuit is valid").value
    }
}
