//! Exact diagonalization, Lehmann correlators and the dimer closed forms.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::pauli::{Flavor, JwLayout, MajoranaIndex, PauliError, PauliString, Phase, Spin};
use crate::statevector::StateVector;

type C = Complex64;

pub const MAX_ORACLE_QUBITS: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} qubits is too large for dense diagonalization")]
    TooLarge(usize),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hopping needs two distinct sites, got {0} twice")]
    SelfHopping(usize),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One term of a Hubbard-type Hamiltonian. Sites are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FermionTerm {
    /// `-t (c_i^dag c_j + c_j^dag c_i)` for one spin
    Hopping { i: usize, j: usize, spin: Spin, t: f64 },
    /// `U n_up n_down`
    Repulsion { site: usize, u: f64 },
    /// `-mu n`
    Number { site: usize, spin: Spin, mu: f64 },
    Constant(f64),
}

impl FermionTerm {
    pub fn is_hopping(&self) -> bool {
        matches!(self, FermionTerm::Hopping { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams {
    pub t: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermionHamiltonian {
    n_sites: usize,
    terms: Vec<FermionTerm>,
    dimer: Option<DimerParams>,
}

impl FermionHamiltonian {
    pub fn new(n_sites: usize) -> Self {
        FermionHamiltonian { n_sites, terms: vec![], dimer: None }
    }

    pub fn push(&mut self, term: FermionTerm) -> Result<(), OracleError> {
        let check = |s: usize| {
            if s == 0 || s > self.n_sites {
                Err(PauliError::SiteOutOfRange { site: s, n_sites: self.n_sites })
            } else {
                Ok(())
            }
        };
        match term {
            FermionTerm::Hopping { i, j, .. } => {
                check(i)?;
                check(j)?;
                if i == j {
                    return Err(OracleError::SelfHopping(i));
                }
            }
            FermionTerm::Repulsion { site, .. } | FermionTerm::Number { site, .. } => check(site)?,
            FermionTerm::Constant(_) => {}
        }
        self.terms.push(term);
        Ok(())
    }

    /// Hubbard site `c` (site 1) coupled to bath site `b` (site 2) at half filling:
    /// `H = -t sum_s (c_s^dag b_s + h.c.) + (U/2)(n_c^2 - 2 n_c)`.
    pub fn dimer(t: f64, u: f64) -> Self {
        let mut h = FermionHamiltonian::new(2);
        for spin in [Spin::Up, Spin::Down] {
            h.terms.push(FermionTerm::Hopping { i: 1, j: 2, spin, t });
        }
        h.terms.push(FermionTerm::Repulsion { site: 1, u });
        for spin in [Spin::Up, Spin::Down] {
            h.terms.push(FermionTerm::Number { site: 1, spin, mu: u / 2.0 });
        }
        h.dimer = Some(DimerParams { t, u });
        h
    }

    /// Uniform Hubbard model on the given bonds (both spins per bond).
    pub fn hubbard(n_sites: usize, bonds: &[(usize, usize)], t: f64, u: f64, mu: f64) -> Result<Self, OracleError> {
        let mut h = FermionHamiltonian::new(n_sites);
        for spin in [Spin::Up, Spin::Down] {
            for &(i, j) in bonds {
                h.push(FermionTerm::Hopping { i, j, spin, t })?;
            }
        }
        for site in 1..=n_sites {
            if u != 0.0 {
                h.push(FermionTerm::Repulsion { site, u })?;
            }
            if mu != 0.0 {
                for spin in [Spin::Up, Spin::Down] {
                    h.push(FermionTerm::Number { site, spin, mu })?;
                }
            }
        }
        Ok(h)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn terms(&self) -> &[FermionTerm] {
        &self.terms
    }

    pub fn dimer_params(&self) -> Option<DimerParams> {
        self.dimer
    }

    /// Kinetic part only.
    pub fn hopping_part(&self) -> FermionHamiltonian {
        FermionHamiltonian {
            n_sites: self.n_sites,
            terms: self.terms.iter().filter(|t| t.is_hopping()).copied().collect(),
            dimer: None,
        }
    }

    /// Everything but hopping.
    pub fn interaction_part(&self) -> FermionHamiltonian {
        FermionHamiltonian {
            n_sites: self.n_sites,
            terms: self.terms.iter().filter(|t| !t.is_hopping()).copied().collect(),
            dimer: None,
        }
    }

    /// Weighted Hermitian Pauli strings (phase +1), identical strings merged,
    /// built from products of Jordan-Wigner Majoranas.
    pub fn pauli_terms(&self, layout: &JwLayout) -> Result<Vec<(f64, PauliString)>, OracleError> {
        let w = layout.width();
        let maj = |site, spin, flavor| layout.majorana(MajoranaIndex::physical(site, spin, flavor));
        // i * a * b
        let ibil = |a: PauliString, b: PauliString| -> Result<PauliString, PauliError> { Ok(a.multiply(&b)?.times_phase(Phase::I)) };
        let mut acc: Vec<(C, PauliString)> = vec![];
        for term in &self.terms {
            match *term {
                FermionTerm::Hopping { i, j, spin, t } => {
                    // c_i^dag c_j + h.c. = (1/2) (i y_i x_j) + (1/2) (-i x_i y_j)
                    let a = ibil(maj(i, spin, Flavor::Y)?, maj(j, spin, Flavor::X)?)?;
                    let b = ibil(maj(i, spin, Flavor::X)?, maj(j, spin, Flavor::Y)?)?.neg();
                    acc.push((C::from(-t / 2.0), a));
                    acc.push((C::from(-t / 2.0), b));
                }
                FermionTerm::Number { site, spin, mu } => {
                    // n = (1 - i x y) / 2
                    let p = ibil(maj(site, spin, Flavor::X)?, maj(site, spin, Flavor::Y)?)?;
                    acc.push((C::from(-mu / 2.0), PauliString::identity(w)));
                    acc.push((C::from(mu / 2.0), p));
                }
                FermionTerm::Repulsion { site, u } => {
                    let pu = ibil(maj(site, Spin::Up, Flavor::X)?, maj(site, Spin::Up, Flavor::Y)?)?;
                    let pd = ibil(maj(site, Spin::Down, Flavor::X)?, maj(site, Spin::Down, Flavor::Y)?)?;
                    let both = pu.multiply(&pd)?;
                    acc.push((C::from(u / 4.0), PauliString::identity(w)));
                    acc.push((C::from(-u / 4.0), pu));
                    acc.push((C::from(-u / 4.0), pd));
                    acc.push((C::from(u / 4.0), both));
                }
                FermionTerm::Constant(c) => acc.push((C::from(c), PauliString::identity(w))),
            }
        }
        let mut merged: BTreeMap<(u64, u64), (C, PauliString)> = BTreeMap::new();
        for (coef, p) in acc {
            let c = coef * p.phase().to_complex();
            let bare = p.with_phase(Phase::ONE);
            merged.entry((bare.x_mask(), bare.z_mask())).and_modify(|e| e.0 += c).or_insert((c, bare));
        }
        Ok(merged
            .into_values()
            .filter(|(c, _)| c.norm() > 1e-14)
            .map(|(c, p)| {
                debug_assert!(c.im.abs() < 1e-12);
                (c.re, p)
            })
            .collect())
    }
}

fn check_width(width: usize) -> Result<(), OracleError> {
    if width > MAX_ORACLE_QUBITS {
        Err(OracleError::TooLarge(width))
    } else {
        Ok(())
    }
}

/// Dense matrix of a Pauli string (any width up to the oracle limit).
pub fn pauli_matrix(p: &PauliString) -> Result<DMatrix<C>, OracleError> {
    check_width(p.width())?;
    let d = 1usize << p.width();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let (k, j) = p.apply_to_basis(i as u64);
        m[(j as usize, i)] = Phase::from_exponent(k as i64).to_complex();
    }
    Ok(m)
}

/// Dense Hamiltonian under the given layout.
pub fn build_matrix(h: &FermionHamiltonian, layout: &JwLayout) -> Result<DMatrix<C>, OracleError> {
    let w = layout.width();
    check_width(w)?;
    let d = 1usize << w;
    let mut m = DMatrix::zeros(d, d);
    for (coef, p) in h.pauli_terms(layout)? {
        for i in 0..d {
            let (k, j) = p.apply_to_basis(i as u64);
            m[(j as usize, i)] += Phase::from_exponent(k as i64).to_complex() * coef;
        }
    }
    Ok(m)
}

pub fn hermiticity_defect(m: &DMatrix<C>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<C>,
    pub ground_index: usize,
}

impl SpectralData {
    pub fn new(m: &DMatrix<C>) -> Result<Self, OracleError> {
        if m.nrows() != m.ncols() {
            return Err(OracleError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let defect = hermiticity_defect(m);
        if defect > 1e-10 {
            return Err(OracleError::NotHermitian(defect));
        }
        let eig = m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..m.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let d = m.nrows();
        let mut vecs = DMatrix::zeros(d, d);
        let mut vals = Vec::with_capacity(d);
        for (col, &k) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(k).into_owned();
            // first non-negligible component real positive
            if let Some(p) = v.iter().find(|a| a.norm() > 1e-9).copied() {
                let ph = p.conj() / p.norm();
                v *= ph;
            }
            vecs.set_column(col, &v);
            vals.push(eig.eigenvalues[k]);
        }
        Ok(SpectralData { eigenvalues: vals, eigenvectors: vecs, ground_index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[self.ground_index]
    }

    pub fn ground_state(&self) -> StateVector {
        column_state(&self.eigenvectors, self.ground_index)
    }

    /// Max residual `|H v - E v|` over all pairs.
    pub fn max_residual(&self, m: &DMatrix<C>) -> f64 {
        (0..self.dim())
            .map(|k| {
                let v = self.eigenvectors.column(k);
                (m * v - v * C::from(self.eigenvalues[k])).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `exp(-i H tau)` applied to a state.
    pub fn evolve(&self, psi: &StateVector, tau: f64) -> Result<StateVector, OracleError> {
        let v = self.to_eigenbasis(psi)?;
        let phased = DVector::from_iterator(self.dim(), v.iter().zip(&self.eigenvalues).map(|(a, e)| a * C::from_polar(1.0, -e * tau)));
        let out = &self.eigenvectors * phased;
        Ok(StateVector::from_amplitudes(out.iter().copied().collect()).expect("unitary evolution keeps norm"))
    }

    /// Dense `exp(-i H tau)`.
    pub fn propagator(&self, tau: f64) -> DMatrix<C> {
        let d = self.dim();
        let phases = DVector::from_iterator(d, self.eigenvalues.iter().map(|e| C::from_polar(1.0, -e * tau)));
        let scaled = DMatrix::from_fn(d, d, |i, j| self.eigenvectors[(i, j)] * phases[j]);
        scaled * self.eigenvectors.adjoint()
    }

    fn to_eigenbasis(&self, psi: &StateVector) -> Result<DVector<C>, OracleError> {
        if psi.amplitudes().len() != self.dim() {
            return Err(OracleError::DimensionMismatch { expected: self.dim(), got: psi.amplitudes().len() });
        }
        Ok(self.eigenvectors.adjoint() * DVector::from_column_slice(psi.amplitudes()))
    }
}

fn column_state(m: &DMatrix<C>, k: usize) -> StateVector {
    let col: Vec<C> = m.column(k).iter().copied().collect();
    let n = col.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(col.into_iter().map(|a| a / n).collect()).expect("eigenvector has power-of-two length")
}

/// Lowest eigenpair of a Hermitian matrix.
pub fn ground_state(m: &DMatrix<C>) -> Result<(f64, StateVector), OracleError> {
    let s = SpectralData::new(m)?;
    Ok((s.ground_energy(), s.ground_state()))
}

/// Precomputed spectral sums for `<psi| A(tau) B |psi>` with `A(tau) = e^{iH tau} A e^{-iH tau}`.
#[derive(Debug, Clone)]
pub struct LehmannPair {
    energies: Vec<f64>,
    bra: DVector<C>,
    a: DMatrix<C>,
    b_ket: DVector<C>,
}

impl LehmannPair {
    pub fn new(a: &PauliString, b: &PauliString, spec: &SpectralData, psi: &StateVector) -> Result<Self, OracleError> {
        let d = spec.dim();
        for p in [a, b] {
            if 1usize << p.width() != d {
                return Err(OracleError::DimensionMismatch { expected: d, got: 1 << p.width() });
            }
        }
        let bra = spec.to_eigenbasis(psi)?;
        let mut bpsi = psi.clone();
        bpsi.apply_pauli(b).expect("width checked");
        let b_ket = spec.to_eigenbasis(&bpsi)?;
        let v = &spec.eigenvectors;
        let av = DMatrix::from_fn(d, d, |_, _| C::from(0.0));
        let mut av = av;
        for m in 0..d {
            for i in 0..d {
                let amp = v[(i, m)];
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                let (k, j) = a.apply_to_basis(i as u64);
                av[(j as usize, m)] += Phase::from_exponent(k as i64).to_complex() * amp;
            }
        }
        let a_e = v.adjoint() * av;
        Ok(LehmannPair { energies: spec.eigenvalues.clone(), bra, a: a_e, b_ket })
    }

    pub fn at(&self, tau: f64) -> C {
        let d = self.energies.len();
        let right: Vec<C> = (0..d).map(|m| self.b_ket[m] * C::from_polar(1.0, -self.energies[m] * tau)).collect();
        let mut sum = C::from(0.0);
        for n in 0..d {
            let left = self.bra[n].conj() * C::from_polar(1.0, self.energies[n] * tau);
            if left.norm_sqr() == 0.0 {
                continue;
            }
            let row: C = (0..d).map(|m| self.a[(n, m)] * right[m]).sum();
            sum += left * row;
        }
        sum
    }
}

/// `<Psi*| A(tau) B |Psi*>` in the ground state of `spec`.
pub fn lehmann_correlator(a: &PauliString, b: &PauliString, spec: &SpectralData, tau: f64) -> Result<C, OracleError> {
    Ok(LehmannPair::new(a, b, spec, &spec.ground_state())?.at(tau))
}

/// Majorana labels of the dimer correlators: 0 = c-up, 1 = b-up, 2 = c-down, 3 = b-down.
pub fn dimer_majorana(label: usize, flavor: Flavor) -> MajoranaIndex {
    assert!(label < 4, "dimer Majorana label {label} out of range");
    let site = label % 2 + 1;
    let spin = if label < 2 { Spin::Up } else { Spin::Down };
    MajoranaIndex::physical(site, spin, flavor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimerCorrelator {
    /// `<x0(tau) x0>`
    Xx0,
    /// `<x1(tau) x1>`
    Xx1,
    /// `<x0(tau) y1>`
    Xy01,
}

pub fn dimer_scales(t: f64, u: f64) -> (f64, f64) {
    ((u * u + 16.0 * t * t).sqrt(), (u * u + 64.0 * t * t).sqrt())
}

/// Closed-form dimer correlators in the half-filled ground state.
pub fn dimer_analytic(which: DimerCorrelator, t: f64, u: f64, tau: f64) -> C {
    let (u1, u2) = dimer_scales(t, u);
    let pre = C::from_polar(1.0, -tau * u2 / 4.0);
    let (cs, sn) = ((tau * u1 / 4.0).cos(), (tau * u1 / 4.0).sin());
    let i = C::i();
    match which {
        DimerCorrelator::Xx0 => pre * (cs - i * ((u * u - 32.0 * t * t) / (u1 * u2)) * sn),
        DimerCorrelator::Xx1 => pre * (cs + i * ((u * u + 32.0 * t * t) / (u1 * u2)) * sn),
        DimerCorrelator::Xy01 => pre * 4.0 * (i * (2.0 * t / u2) * cs - (t / u1) * sn),
    }
}

pub fn dimer_ground_energy(t: f64, u: f64) -> f64 {
    -(u + (u * u + 64.0 * t * t).sqrt()) / 4.0
}

/// `(<H0>, <HU>)` in the dimer ground state.
pub fn dimer_sector_energies(t: f64, u: f64) -> (f64, f64) {
    let r = (u * u + 64.0 * t * t).sqrt();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    (-16.0 * t * t / r, -(u / 4.0) * (1.0 + u / r))
}

/// `tau, Re, Im` rows with a header naming the series.
pub fn write_correlator_csv(w: &mut impl Write, name: &str, rows: &[(f64, C)]) -> Result<(), OracleError> {
    writeln!(w, "# correlator = {name}")?;
    writeln!(w, "tau,re,im")?;
    for (tau, v) in rows {
        writeln!(w, "{tau},{},{}", v.re, v.im)?;
    }
    Ok(())
}
