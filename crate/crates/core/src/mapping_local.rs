//! Locality-preserving encoding on a square lattice: physical fermions `c`
//! interleaved with auxiliary fermions `a`, each mode carried by two qubits.
//!
//! An `L x L` physical cluster lives inside `(L+1)^2` unit cells; the
//! extended lattice has side `n = 2L + 2`. Cell `(cx, cy)` holds
//!
//! ```text
//!   c_up (2cx, 2cy)      a_up (2cx+1, 2cy)
//!   a_dn (2cx, 2cy+1)    c_dn (2cx+1, 2cy+1)
//! ```
//!
//! Qubit of site `(sx, sy)` in register `k` (1 or 2) is `(k-1) n^2 + sy n + sx`.
//!
//! Every nearest-neighbour bilinear `i g_s g_t` on the extended lattice maps by
//! one geometric rule (`t = s + x` or `t = s + y`); longer bilinears are
//! products along a path with `x`-type Majoranas inserted (they square to one).
//! Verification is symbolic only.

use std::fmt::Write as _;

use thiserror::Error;

use crate::pauli::{CliffordCircuit, CliffordGate, Flavor, Letter, MajoranaIndex, PauliError, PauliString, Phase, Register, Spin};

#[derive(Debug, Error)]
pub enum LocalError {
    #[error("cluster side must be at least 1")]
    ZeroSide,
    #[error("cell ({cx}, {cy}) outside the {extent}x{extent} {what} cells")]
    OutsideCluster { cx: i64, cy: i64, extent: usize, what: &'static str },
    #[error("majorana site index {0} is not a cell of this layout")]
    BadCellIndex(usize),
    #[error("bilinear {0} is not an elementary same-cell link")]
    NotElementary(String),
    #[error("bilinear joins two Majoranas of the same mode")]
    SameMode,
    #[error("sites ({0}, {1}) and ({2}, {3}) are not neighbours")]
    NotAdjacent(usize, usize, usize, usize),
    #[error("path needs a >= 1 and b >= 1, got a = {a}, b = {b}")]
    DegeneratePath { a: i64, b: i64 },
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub cx: usize,
    pub cy: usize,
}

impl Cell {
    pub fn new(cx: usize, cy: usize) -> Self {
        Cell { cx, cy }
    }
}

/// A site of the extended lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub x: usize,
    pub y: usize,
}

/// The two qubits of every mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QubitRegister {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeLayout {
    l: usize,
}

impl LatticeLayout {
    pub fn new(l: usize) -> Result<Self, LocalError> {
        if l == 0 {
            return Err(LocalError::ZeroSide);
        }
        Ok(LatticeLayout { l })
    }

    /// Physical cluster side `L`.
    pub fn physical_side(&self) -> usize {
        self.l
    }

    /// Unit cells per side, `L + 1`.
    pub fn cells_per_side(&self) -> usize {
        self.l + 1
    }

    /// Extended lattice side `2L + 2`.
    pub fn side(&self) -> usize {
        2 * self.l + 2
    }

    pub fn width(&self) -> usize {
        2 * self.side() * self.side()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let m = self.cells_per_side();
        (0..m).flat_map(move |cy| (0..m).map(move |cx| Cell::new(cx, cy)))
    }

    pub fn is_physical(&self, c: Cell) -> bool {
        c.cx < self.l && c.cy < self.l
    }

    /// Row-major cell number, used as `MajoranaIndex::site`.
    pub fn cell_index(&self, c: Cell) -> usize {
        c.cy * self.cells_per_side() + c.cx
    }

    pub fn cell_at(&self, index: usize) -> Result<Cell, LocalError> {
        let m = self.cells_per_side();
        if index >= m * m {
            return Err(LocalError::BadCellIndex(index));
        }
        Ok(Cell::new(index % m, index / m))
    }

    fn check_cell(&self, cx: i64, cy: i64, physical: bool) -> Result<Cell, LocalError> {
        let (extent, what) = if physical { (self.l, "physical") } else { (self.cells_per_side(), "extended") };
        if cx < 0 || cy < 0 || cx as usize >= extent || cy as usize >= extent {
            return Err(LocalError::OutsideCluster { cx, cy, extent, what });
        }
        Ok(Cell::new(cx as usize, cy as usize))
    }

    pub fn site(&self, c: Cell, spin: Spin, register: Register) -> Site {
        let (dx, dy) = match (register, spin) {
            (Register::Physical, Spin::Up) => (0, 0),
            (Register::Auxiliary, Spin::Up) => (1, 0),
            (Register::Auxiliary, Spin::Down) => (0, 1),
            (Register::Physical, Spin::Down) => (1, 1),
        };
        Site { x: 2 * c.cx + dx, y: 2 * c.cy + dy }
    }

    /// Inverse of [`LatticeLayout::site`].
    pub fn mode_at(&self, s: Site) -> (Cell, Spin, Register) {
        let c = Cell::new(s.x / 2, s.y / 2);
        let (spin, reg) = match (s.x % 2, s.y % 2) {
            (0, 0) => (Spin::Up, Register::Physical),
            (1, 0) => (Spin::Up, Register::Auxiliary),
            (0, _) => (Spin::Down, Register::Auxiliary),
            _ => (Spin::Down, Register::Physical),
        };
        (c, spin, reg)
    }

    pub fn qubit(&self, s: Site, reg: QubitRegister) -> usize {
        let n = self.side();
        let base = match reg {
            QubitRegister::First => 0,
            QubitRegister::Second => n * n,
        };
        base + s.y * n + s.x
    }

    pub fn majorana(&self, c: Cell, spin: Spin, register: Register, flavor: Flavor) -> MajoranaIndex {
        MajoranaIndex { site: self.cell_index(c), spin, flavor, register }
    }

    pub fn majorana_site(&self, m: MajoranaIndex) -> Result<Site, LocalError> {
        Ok(self.site(self.cell_at(m.site)?, m.spin, m.register))
    }

    /// Cell -> qubit table, one line per mode.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let n = self.side();
        writeln!(out, "# local layout: L = {}, extended side = {n}, cells = {}, qubits = {}", self.l, self.cells_per_side().pow(2), self.width()).unwrap();
        writeln!(out, "cell_x,cell_y,physical_cell,mode,site_x,site_y,q1,q2").unwrap();
        for c in self.cells() {
            for (name, spin, reg) in [("c_up", Spin::Up, Register::Physical), ("a_up", Spin::Up, Register::Auxiliary), ("a_dn", Spin::Down, Register::Auxiliary), ("c_dn", Spin::Down, Register::Physical)] {
                let s = self.site(c, spin, reg);
                writeln!(
                    out,
                    "{},{},{},{name},{},{},{},{}",
                    c.cx,
                    c.cy,
                    self.is_physical(c),
                    s.x,
                    s.y,
                    self.qubit(s, QubitRegister::First),
                    self.qubit(s, QubitRegister::Second)
                )
                .unwrap();
            }
        }
        out
    }
}

/// `i g_a g_b` for two Majoranas of distinct modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BilinearOp {
    pub first: MajoranaIndex,
    pub second: MajoranaIndex,
}

impl BilinearOp {
    pub fn new(first: MajoranaIndex, second: MajoranaIndex) -> Result<Self, LocalError> {
        if (first.site, first.spin, first.register) == (second.site, second.spin, second.register) {
            return Err(LocalError::SameMode);
        }
        Ok(BilinearOp { first, second })
    }

    /// Majorana bilinears anticommute iff they share exactly one Majorana.
    pub fn anticommutes(&self, other: &BilinearOp) -> bool {
        let shared = [self.first, self.second].iter().filter(|m| **m == other.first || **m == other.second).count();
        shared == 1
    }
}

fn letter(f: Flavor) -> Letter {
    match f {
        Flavor::X => Letter::X,
        Flavor::Y => Letter::Y,
    }
}

fn swap_xy(f: Flavor) -> Letter {
    match f {
        Flavor::X => Letter::Y,
        Flavor::Y => Letter::X,
    }
}

/// Image of `i g_s g_t` for neighbouring sites.
///
/// `t = s + x`: `i{xx, xy, yx, yy} -> {-XY, -XX, YY, YX}` on register 1, times `Z_t` on register 2.
/// `t = s + y`: `i{xx, xy, yx, yy} -> -{YY, YX, XY, XX}` on register 1, times `Y_s X_t` on register 2.
/// The reversed direction flips the sign.
pub fn map_link(layout: &LatticeLayout, s: Site, fs: Flavor, t: Site, ft: Flavor) -> Result<PauliString, LocalError> {
    use QubitRegister::{First, Second};
    let w = layout.width();
    let q = |site, r| layout.qubit(site, r);
    if t.y == s.y && t.x == s.x + 1 {
        let p = PauliString::from_letters(w, &[(q(s, First), letter(fs)), (q(t, First), swap_xy(ft)), (q(t, Second), Letter::Z)])?;
        return Ok(if fs == Flavor::X { p.neg() } else { p });
    }
    if t.x == s.x && t.y == s.y + 1 {
        let p = PauliString::from_letters(w, &[(q(s, First), swap_xy(fs)), (q(t, First), swap_xy(ft)), (q(s, Second), Letter::Y), (q(t, Second), Letter::X)])?;
        return Ok(p.neg());
    }
    if (s.y == t.y && s.x == t.x + 1) || (s.x == t.x && s.y == t.y + 1) {
        return Ok(map_link(layout, t, ft, s, fs)?.neg());
    }
    Err(LocalError::NotAdjacent(s.x, s.y, t.x, t.y))
}

/// `i g_0 g_k` along a lattice path, with `x` Majoranas on the inner sites:
/// `i g_0 g_k = i (-i)^k prod_j (i g_j g_{j+1})`.
pub fn map_chain(layout: &LatticeLayout, path: &[Site], f0: Flavor, fk: Flavor) -> Result<PauliString, LocalError> {
    let k = path.len().checked_sub(1).filter(|&k| k >= 1).ok_or(LocalError::SameMode)?;
    let mut acc = PauliString::identity(layout.width()).with_phase(Phase::from_exponent(1 + 3 * k as i64));
    for j in 0..k {
        let fa = if j == 0 { f0 } else { Flavor::X };
        let fb = if j + 1 == k { fk } else { Flavor::X };
        acc = acc.multiply(&map_link(layout, path[j], fa, path[j + 1], fb)?)?;
    }
    Ok(acc)
}

/// Table lookup for a same-cell physical/auxiliary pair.
pub fn map_elementary_bilinear(b: &BilinearOp, layout: &LatticeLayout) -> Result<PauliString, LocalError> {
    let not = || LocalError::NotElementary(format!("{:?}", b));
    if b.first.site != b.second.site || b.first.register == b.second.register {
        return Err(not());
    }
    let (s, t) = (layout.majorana_site(b.first)?, layout.majorana_site(b.second)?);
    map_link(layout, s, b.first.flavor, t, b.second.flavor).map_err(|e| match e {
        LocalError::NotAdjacent(..) => not(),
        other => other,
    })
}

/// Bilinear between the ends of `path`, mapped by [`map_chain`].
pub fn map_bilinear_along(b: &BilinearOp, layout: &LatticeLayout, path: &[Site]) -> Result<PauliString, LocalError> {
    let (s, t) = (layout.majorana_site(b.first)?, layout.majorana_site(b.second)?);
    if path.first() != Some(&s) || path.last() != Some(&t) {
        return Err(LocalError::NotAdjacent(s.x, s.y, t.x, t.y));
    }
    map_chain(layout, path, b.first.flavor, b.second.flavor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// The two summands of `T = c_r^dag c_{r+e} + h.c. = (1/2)(S_1 + S_2)` with
/// `S_1 = i y_r x_{r+e}`, `S_2 = -i x_r y_{r+e}`: fermionic and mapped forms.
#[derive(Debug, Clone, PartialEq)]
pub struct HoppingImage {
    pub bilinears: [BilinearOp; 2],
    /// Sign in front of each bilinear.
    pub signs: [f64; 2],
    pub summands: [PauliString; 2],
    pub path: [Site; 3],
}

/// Route through the intermediate auxiliary mode:
/// up/x via `a_up(r)`, down/x via `a_dn(r+x)`, up/y via `a_dn(r)`, down/y via `a_up(r+y)`.
pub fn hopping_path(layout: &LatticeLayout, r: Cell, spin: Spin, dir: Direction) -> Result<[Site; 3], LocalError> {
    let (dx, dy) = match dir {
        Direction::X => (1, 0),
        Direction::Y => (0, 1),
    };
    let r = layout.check_cell(r.cx as i64, r.cy as i64, true)?;
    let r2 = layout.check_cell(r.cx as i64 + dx, r.cy as i64 + dy, true)?;
    let mid = match (spin, dir) {
        (Spin::Up, Direction::X) => layout.site(r, Spin::Up, Register::Auxiliary),
        (Spin::Down, Direction::X) => layout.site(r2, Spin::Down, Register::Auxiliary),
        (Spin::Up, Direction::Y) => layout.site(r, Spin::Down, Register::Auxiliary),
        (Spin::Down, Direction::Y) => layout.site(r2, Spin::Up, Register::Auxiliary),
    };
    Ok([layout.site(r, spin, Register::Physical), mid, layout.site(r2, spin, Register::Physical)])
}

fn map_hopping(r: Cell, spin: Spin, dir: Direction, layout: &LatticeLayout) -> Result<HoppingImage, LocalError> {
    let path = hopping_path(layout, r, spin, dir)?;
    let (c0, _, _) = layout.mode_at(path[0]);
    let (c2, _, _) = layout.mode_at(path[2]);
    let m = |c, f| layout.majorana(c, spin, Register::Physical, f);
    let b1 = BilinearOp::new(m(c0, Flavor::Y), m(c2, Flavor::X))?;
    let b2 = BilinearOp::new(m(c0, Flavor::X), m(c2, Flavor::Y))?;
    let s1 = map_chain(layout, &path, Flavor::Y, Flavor::X)?;
    let s2 = map_chain(layout, &path, Flavor::X, Flavor::Y)?.neg();
    Ok(HoppingImage { bilinears: [b1, b2], signs: [1.0, -1.0], summands: [s1, s2], path })
}

pub fn map_hopping_x(r: Cell, spin: Spin, layout: &LatticeLayout) -> Result<HoppingImage, LocalError> {
    map_hopping(r, spin, Direction::X, layout)
}

pub fn map_hopping_y(r: Cell, spin: Spin, layout: &LatticeLayout) -> Result<HoppingImage, LocalError> {
    map_hopping(r, spin, Direction::Y, layout)
}

/// Source bilinear `i y_up(r) xbar_dn(r)`, local to one cell.
pub fn source_bilinear(r: Cell, layout: &LatticeLayout) -> Result<BilinearOp, LocalError> {
    let r = layout.check_cell(r.cx as i64, r.cy as i64, false)?;
    BilinearOp::new(layout.majorana(r, Spin::Up, Register::Physical, Flavor::Y), layout.majorana(r, Spin::Down, Register::Auxiliary, Flavor::X))
}

pub fn map_source(r: Cell, layout: &LatticeLayout) -> Result<PauliString, LocalError> {
    map_elementary_bilinear(&source_bilinear(r, layout)?, layout)
}

/// `i x_dn(r) xbar_dn(r')` with `r' = r + a x - b y`, routed right along the
/// down row of `r` to the corner `a_dn(r + a x)`, then along the column of
/// that corner to `a_dn(r')`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementString {
    pub bilinear: BilinearOp,
    pub pauli: PauliString,
    pub a: usize,
    pub b: usize,
    pub corner: Site,
    pub path: Vec<Site>,
}

fn offsets(r: Cell, r_prime: Cell) -> Result<(usize, usize), LocalError> {
    let a = r_prime.cx as i64 - r.cx as i64;
    let b = r.cy as i64 - r_prime.cy as i64;
    if a < 1 || b < 1 {
        return Err(LocalError::DegeneratePath { a, b });
    }
    Ok((a as usize, b as usize))
}

pub fn build_measurement_string(r: Cell, r_prime: Cell, layout: &LatticeLayout) -> Result<MeasurementString, LocalError> {
    let r = layout.check_cell(r.cx as i64, r.cy as i64, false)?;
    let r_prime = layout.check_cell(r_prime.cx as i64, r_prime.cy as i64, false)?;
    let (a, b) = offsets(r, r_prime)?;
    let start = layout.site(r, Spin::Down, Register::Physical);
    let corner = layout.site(Cell::new(r.cx + a, r.cy), Spin::Down, Register::Auxiliary);
    let end = layout.site(r_prime, Spin::Down, Register::Auxiliary);
    let mut path: Vec<Site> = (start.x..=corner.x).map(|x| Site { x, y: start.y }).collect();
    path.extend((end.y..corner.y).rev().map(|y| Site { x: corner.x, y }));
    let bilinear = BilinearOp::new(layout.majorana(r, Spin::Down, Register::Physical, Flavor::X), layout.majorana(r_prime, Spin::Down, Register::Auxiliary, Flavor::X))?;
    let pauli = map_chain(layout, &path, Flavor::X, Flavor::X)?;
    Ok(MeasurementString { bilinear, pauli, a, b, corner, path })
}

/// Clifford `S` with `S P S^dag = sign * Zbar1(r') Zbar2(r')`, where `P` is the
/// measurement string. Gates: `H` on `q1(r)` and `X_{pi/2}` on the corner's
/// `q2` (giving the Z-string form), CNOTs folding the horizontal string onto
/// the corner, CNOTs folding the vertical string onto `q2(r')`, then
/// `X_{pi/2}` on both qubits of `r'`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementReducer {
    pub circuit: CliffordCircuit,
    /// `[q1(r'), q2(r')]`
    pub pair: [usize; 2],
    pub sign: f64,
    /// Weight of the string before reduction, `4a + 2b - 1`.
    pub string_weight: usize,
}

pub fn build_measurement_reducer(r: Cell, r_prime: Cell, layout: &LatticeLayout) -> Result<MeasurementReducer, LocalError> {
    use QubitRegister::{First, Second};
    let ms = build_measurement_string(r, r_prime, layout)?;
    let p = &ms.pauli;
    let end = *ms.path.last().expect("path has two or more sites");
    let pair = [layout.qubit(end, First), layout.qubit(end, Second)];
    let start = layout.qubit(ms.path[0], First);
    let corner2 = layout.qubit(ms.corner, Second);

    let mut c = CliffordCircuit::new();
    c.push(CliffordGate::H(start));
    c.push(CliffordGate::SqrtX(corner2));
    // qubits along the horizontal leg (both registers, up to but excluding the corner's q2)
    let corner_idx = ms.path.iter().position(|s| *s == ms.corner).expect("corner on path");
    let mut horizontal = vec![];
    for s in &ms.path[..=corner_idx] {
        for reg in [First, Second] {
            let q = layout.qubit(*s, reg);
            if q != corner2 && p.letter(q) != Letter::I {
                horizontal.push(q);
            }
        }
    }
    for &q in &horizontal {
        c.push(CliffordGate::Cnot(q, corner2));
    }
    let vertical: Vec<usize> = ms.path[corner_idx..].iter().map(|s| layout.qubit(*s, Second)).filter(|&q| q != pair[1] && p.letter(q) != Letter::I).collect();
    for &q in &vertical {
        c.push(CliffordGate::Cnot(q, pair[1]));
    }
    c.push(CliffordGate::SqrtX(pair[0]));
    c.push(CliffordGate::SqrtX(pair[1]));

    let image = c.propagate(p)?;
    let zz = PauliString::from_letters(layout.width(), &[(pair[0], Letter::Z), (pair[1], Letter::Z)])?;
    let sign = if image == zz {
        1.0
    } else if image == zz.clone().neg() {
        -1.0
    } else {
        return Err(LocalError::NotElementary(format!("reduction left {image}")));
    };
    Ok(MeasurementReducer { circuit: c, pair, sign, string_weight: p.weight() })
}

/// Every bilinear family used by the protocol on this layout, with its image:
/// elementary links of every cell, hopping summands inside the physical
/// cluster, sources and measurement strings.
pub fn mapped_bilinears(layout: &LatticeLayout) -> Result<Vec<(BilinearOp, PauliString)>, LocalError> {
    let mut out = vec![];
    for c in layout.cells() {
        let idx = layout.cell_index(c);
        for (s1, s2) in [(Spin::Up, Spin::Up), (Spin::Up, Spin::Down), (Spin::Down, Spin::Down), (Spin::Down, Spin::Up)] {
            for f1 in [Flavor::X, Flavor::Y] {
                for f2 in [Flavor::X, Flavor::Y] {
                    let b = BilinearOp::new(MajoranaIndex::physical(idx, s1, f1), MajoranaIndex::auxiliary(idx, s2, f2))?;
                    out.push((b, map_elementary_bilinear(&b, layout)?));
                }
            }
        }
        out.push((source_bilinear(c, layout)?, map_source(c, layout)?));
        if layout.is_physical(c) {
            for dir in [Direction::X, Direction::Y] {
                for spin in [Spin::Up, Spin::Down] {
                    if let Ok(h) = map_hopping(c, spin, dir, layout) {
                        for k in 0..2 {
                            let p = if h.signs[k] < 0.0 { h.summands[k].clone().neg() } else { h.summands[k].clone() };
                            out.push((h.bilinears[k], p));
                        }
                    }
                }
            }
        }
    }
    for r in layout.cells() {
        for rp in layout.cells() {
            if let Ok(ms) = build_measurement_string(r, rp, layout) {
                out.push((ms.bilinear, ms.pauli));
            }
        }
    }
    Ok(out)
}

/// Jordan-Wigner reference on the extended lattice: mode order is the
/// row-major site order, one qubit per mode.
pub fn jw_reference(b: &BilinearOp, layout: &LatticeLayout) -> Result<PauliString, LocalError> {
    let n = layout.side();
    let w = n * n;
    let jw = |m: MajoranaIndex| -> Result<PauliString, LocalError> {
        let s = layout.majorana_site(m)?;
        let q = s.y * n + s.x;
        let mut p = PauliString::identity(w);
        for k in 0..q {
            p.set(k, Letter::Z)?;
        }
        p.set(q, letter(m.flavor))?;
        Ok(p)
    };
    Ok(jw(b.first)?.multiply(&jw(b.second)?)?.times_phase(Phase::I))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgebraReport {
    pub operators: usize,
    pub pairs: usize,
    pub mismatches: usize,
    pub non_hermitian: usize,
}

/// Exhaustive pairwise comparison of commutation: local images vs the JW
/// reference vs the Majorana counting rule.
pub fn check_algebra(layout: &LatticeLayout) -> Result<AlgebraReport, LocalError> {
    let ops = mapped_bilinears(layout)?;
    let refs: Vec<PauliString> = ops.iter().map(|(b, _)| jw_reference(b, layout)).collect::<Result<_, _>>()?;
    let non_hermitian = ops.iter().filter(|(_, p)| !p.is_hermitian()).count();
    let mut mismatches = 0;
    let mut pairs = 0;
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            pairs += 1;
            let local = ops[i].1.commutes(&ops[j].1)?;
            let reference = refs[i].commutes(&refs[j])?;
            let counted = !ops[i].0.anticommutes(&ops[j].0);
            if local != reference || reference != counted {
                mismatches += 1;
            }
        }
    }
    Ok(AlgebraReport { operators: ops.len(), pairs, mismatches, non_hermitian })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lay(l: usize) -> LatticeLayout {
        LatticeLayout::new(l).unwrap()
    }

    fn lit(layout: &LatticeLayout, items: &[(Site, QubitRegister, Letter)], neg: bool) -> PauliString {
        let v: Vec<(usize, Letter)> = items.iter().map(|&(s, r, l)| (layout.qubit(s, r), l)).collect();
        let p = PauliString::from_letters(layout.width(), &v).unwrap();
        if neg {
            p.neg()
        } else {
            p
        }
    }

    use QubitRegister::{First as Q1, Second as Q2};

    #[test]
    fn layout_is_a_bijection() {
        let l = lay(2);
        assert_eq!(l.side(), 6);
        assert_eq!(l.width(), 72);
        let mut seen = std::collections::HashSet::new();
        for c in l.cells() {
            for spin in [Spin::Up, Spin::Down] {
                for reg in [Register::Physical, Register::Auxiliary] {
                    let s = l.site(c, spin, reg);
                    assert_eq!(l.mode_at(s), (c, spin, reg));
                    assert!(seen.insert(l.qubit(s, Q1)));
                    assert!(seen.insert(l.qubit(s, Q2)));
                }
            }
        }
        assert_eq!(seen.len(), 72);
        assert!(LatticeLayout::new(0).is_err());
    }

    #[test]
    fn dump_golden_minimal() {
        let d = lay(1).dump();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "# local layout: L = 1, extended side = 4, cells = 4, qubits = 32");
        assert_eq!(lines[2], "0,0,true,c_up,0,0,0,16");
        assert_eq!(lines[3], "0,0,true,a_up,1,0,1,17");
        assert_eq!(lines[4], "0,0,true,a_dn,0,1,4,20");
        assert_eq!(lines[5], "0,0,true,c_dn,1,1,5,21");
        assert_eq!(lines[6], "1,0,false,c_up,2,0,2,18");
        assert_eq!(lines.len(), 2 + 16);
    }

    #[test]
    fn tabulated_examples() {
        let l = lay(1);
        let r = Cell::new(0, 0);
        let cu = l.site(r, Spin::Up, Register::Physical);
        let au = l.site(r, Spin::Up, Register::Auxiliary);
        let ad = l.site(r, Spin::Down, Register::Auxiliary);
        // i y_up xbar_up -> Y Ybar (x) Zbar2
        let b = BilinearOp::new(l.majorana(r, Spin::Up, Register::Physical, Flavor::Y), l.majorana(r, Spin::Up, Register::Auxiliary, Flavor::X)).unwrap();
        assert_eq!(map_elementary_bilinear(&b, &l).unwrap(), lit(&l, &[(cu, Q1, Letter::Y), (au, Q1, Letter::Y), (au, Q2, Letter::Z)], false));
        // source: -X Ybar (x) Y Xbar
        assert_eq!(map_source(r, &l).unwrap(), lit(&l, &[(cu, Q1, Letter::X), (ad, Q1, Letter::Y), (cu, Q2, Letter::Y), (ad, Q2, Letter::X)], true));
        // not elementary: c_up with c_dn
        let bad = BilinearOp::new(l.majorana(r, Spin::Up, Register::Physical, Flavor::X), l.majorana(r, Spin::Down, Register::Physical, Flavor::X)).unwrap();
        assert!(matches!(map_elementary_bilinear(&bad, &l), Err(LocalError::NotElementary(_))));
        assert!(BilinearOp::new(b.first, MajoranaIndex { flavor: Flavor::X, ..b.first }).is_err());
    }

    #[test]
    fn elementary_images_are_involutions() {
        let l = lay(1);
        for (_, p) in mapped_bilinears(&l).unwrap() {
            assert!(p.is_hermitian());
            assert!(p.multiply(&p).unwrap().is_identity_letters());
            assert_eq!(p.multiply(&p).unwrap().phase(), Phase::ONE);
        }
    }

    #[test]
    fn hopping_x_up_letters() {
        let l = lay(2);
        let r = Cell::new(0, 1);
        let h = map_hopping_x(r, Spin::Up, &l).unwrap();
        let [c0, a, c1] = h.path;
        let tail = [(a, Q2, Letter::Z), (c1, Q2, Letter::Z)];
        let xzx = lit(&l, &[&[(c0, Q1, Letter::X), (a, Q1, Letter::Z), (c1, Q1, Letter::X)][..], &tail].concat(), false);
        let yzy = lit(&l, &[&[(c0, Q1, Letter::Y), (a, Q1, Letter::Z), (c1, Q1, Letter::Y)][..], &tail].concat(), false);
        assert_eq!(h.summands[0], yzy);
        assert_eq!(h.summands[1], xzx);
        assert!(h.summands[0].commutes(&h.summands[1]).unwrap());
        for s in &h.summands {
            assert_eq!(s.weight(), 5);
        }
        assert!(map_hopping_x(Cell::new(1, 0), Spin::Up, &l).is_err());
    }

    #[test]
    fn hopping_y_letters_and_spin_substitution() {
        let l = lay(2);
        let r = Cell::new(1, 0);
        let up = map_hopping_y(r, Spin::Up, &l).unwrap();
        let ry = Cell::new(1, 1);
        let (cu, cuy) = (l.site(r, Spin::Up, Register::Physical), l.site(ry, Spin::Up, Register::Physical));
        let ad = l.site(r, Spin::Down, Register::Auxiliary);
        let tail = [(cu, Q2, Letter::Y), (ad, Q2, Letter::Z), (cuy, Q2, Letter::X)];
        assert_eq!(up.summands[0], lit(&l, &[&[(cu, Q1, Letter::X), (cuy, Q1, Letter::Y)][..], &tail].concat(), false));
        assert_eq!(up.summands[1], lit(&l, &[&[(cu, Q1, Letter::Y), (cuy, Q1, Letter::X)][..], &tail].concat(), true));

        let dn = map_hopping_y(r, Spin::Down, &l).unwrap();
        let (cd, cdy) = (l.site(r, Spin::Down, Register::Physical), l.site(ry, Spin::Down, Register::Physical));
        let auy = l.site(ry, Spin::Up, Register::Auxiliary);
        let tail = [(cd, Q2, Letter::Y), (auy, Q2, Letter::Z), (cdy, Q2, Letter::X)];
        assert_eq!(dn.summands[0], lit(&l, &[&[(cd, Q1, Letter::X), (cdy, Q1, Letter::Y)][..], &tail].concat(), false));
        assert_eq!(dn.summands[1], lit(&l, &[&[(cd, Q1, Letter::Y), (cdy, Q1, Letter::X)][..], &tail].concat(), true));
        for s in up.summands.iter().chain(&dn.summands) {
            assert!(s.is_hermitian());
            assert!(s.weight() <= 5);
        }
    }

    #[test]
    fn measurement_string_hand_expansion_a1_b1() {
        let l = lay(1);
        let (r, rp) = (Cell::new(0, 1), Cell::new(1, 0));
        let ms = build_measurement_string(r, rp, &l).unwrap();
        let cd = l.site(r, Spin::Down, Register::Physical);
        let corner = l.site(Cell::new(1, 1), Spin::Down, Register::Auxiliary);
        let cu_corner = l.site(Cell::new(1, 1), Spin::Up, Register::Physical);
        let end = l.site(rp, Spin::Down, Register::Auxiliary);
        assert_eq!(ms.corner, corner);
        // X(r) . [no horizontal string] . Ybar2(corner) . Z2(c_up corner) . Ybar1 Ybar2(r'), sign +
        let want = lit(&l, &[(cd, Q1, Letter::X), (corner, Q2, Letter::Y), (cu_corner, Q2, Letter::Z), (end, Q1, Letter::Y), (end, Q2, Letter::Y)], false);
        assert_eq!(ms.pauli, want);
        assert!(ms.pauli.is_hermitian());
    }

    #[test]
    fn measurement_string_splits_at_corner() {
        let l = lay(3);
        for (a, b) in [(1, 1), (2, 1), (1, 2), (2, 3), (3, 3)] {
            let r = Cell::new(0, 3);
            let rp = Cell::new(a, 3 - b);
            let ms = build_measurement_string(r, rp, &l).unwrap();
            let k = ms.path.iter().position(|s| *s == ms.corner).unwrap();
            let h = map_chain(&l, &ms.path[..=k], Flavor::X, Flavor::X).unwrap();
            let mut back = ms.path[k..].to_vec();
            back.reverse();
            let v = map_chain(&l, &back, Flavor::X, Flavor::X).unwrap();
            // i x xbar' = i (i x xc)(i xbar' xc)
            assert_eq!(ms.pauli, h.multiply(&v).unwrap().times_phase(Phase::I));
            assert_eq!(ms.pauli.weight(), 4 * a + 2 * b - 1);
            // horizontal leg: -X Z_JW^(x) Ybar1 Zbar2; the full string carries + for every b
            assert_eq!(h.phase(), Phase::MINUS_ONE);
            assert_eq!(ms.pauli.phase(), Phase::ONE);
        }
        assert!(matches!(build_measurement_string(Cell::new(0, 1), Cell::new(0, 0), &l), Err(LocalError::DegeneratePath { .. })));
        assert!(matches!(build_measurement_string(Cell::new(0, 1), Cell::new(1, 1), &l), Err(LocalError::DegeneratePath { .. })));
        assert!(build_measurement_string(Cell::new(0, 1), Cell::new(5, 0), &l).is_err());
    }

    #[test]
    fn reducer_conjugation_and_locality() {
        let l = lay(3);
        for a in 1..=3 {
            for b in 1..=3 {
                let (r, rp) = (Cell::new(0, 3), Cell::new(a, 3 - b));
                let ms = build_measurement_string(r, rp, &l).unwrap();
                let red = build_measurement_reducer(r, rp, &l).unwrap();
                let zz = PauliString::from_letters(l.width(), &[(red.pair[0], Letter::Z), (red.pair[1], Letter::Z)]).unwrap();
                let zz = if red.sign < 0.0 { zz.neg() } else { zz };
                assert_eq!(red.circuit.conjugate(&zz).unwrap(), ms.pauli);
                let support: std::collections::BTreeSet<usize> = ms.pauli.support().into_iter().collect();
                for g in &red.circuit.gates {
                    assert!(g.qubits().iter().all(|q| support.contains(q)));
                }
                assert_eq!(red.string_weight, 4 * a + 2 * b - 1);
                // one CNOT per removed letter: the minimum for any two-qubit-gate reducer
                assert_eq!(red.circuit.cnot_count(), 4 * a + 2 * b - 3);
                assert_eq!(red.circuit.two_qubit_count(), red.string_weight - 2);
            }
        }
    }

    #[test]
    fn algebra_matches_jw_reference_exhaustively() {
        for side in [1, 2] {
            let rep = check_algebra(&lay(side)).unwrap();
            assert_eq!(rep.mismatches, 0, "{rep:?}");
            assert_eq!(rep.non_hermitian, 0);
            assert!(rep.operators > 40);
        }
    }
}
