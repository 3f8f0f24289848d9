//! Spin Hamiltonian of an NV electron spin (S = 1) coupled to one ¹³C nucleus (I = 1/2).
//!
//! The product basis is ordered electron-first:
//! `|m_S, m_I⟩` with `m_S ∈ (+1, 0, -1)` and `m_I ∈ (+1/2, -1/2)`, giving index
//! `2 * e + n`. Energies are in MHz, fields in mT.
//!
//! The four working levels follow the usual two-qubit naming: the electron qubit
//! is `0` for `m_S = 0` and `1` for the selected `m_S = ±1` branch, the nuclear
//! qubit is `0` for `m_I = +1/2` and `1` for `m_I = -1/2`.
//!
//! | level | ket    | m_S    | m_I  |
//! |-------|--------|--------|------|
//! | 1     | `|10⟩` | branch | +1/2 |
//! | 2     | `|11⟩` | branch | -1/2 |
//! | 3     | `|00⟩` | 0      | +1/2 |
//! | 4     | `|01⟩` | 0      | -1/2 |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, Operator, C64, I, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const LABEL_THRESHOLD: f64 = 0.6;

pub type Tensor3 = [[f64; 3]; 3];

/// Cartesian spin operators `(Sx, Sy, Sz)` in the `m = s, s-1, …, -s` basis.
pub fn build_spin_operators(s: f64) -> Result<[Operator; 3]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    if s == 0.5 {
        let sx = Operator::from_rows(2, &[ZERO, ONE * 0.5, ONE * 0.5, ZERO])?;
        let sy = Operator::from_rows(2, &[ZERO, -I * 0.5, I * 0.5, ZERO])?;
        let sz = Operator::from_real_diagonal(&[0.5, -0.5]);
        Ok([sx, sy, sz])
    } else if s == 1.0 {
        let a = ONE * h;
        let b = I * h;
        let sx = Operator::from_rows(3, &[ZERO, a, ZERO, a, ZERO, a, ZERO, a, ZERO])?;
        let sy = Operator::from_rows(3, &[ZERO, -b, ZERO, b, ZERO, -b, ZERO, b, ZERO])?;
        let sz = Operator::from_real_diagonal(&[1.0, 0.0, -1.0]);
        Ok([sx, sy, sz])
    } else {
        Err(Error::UnsupportedSpin(s))
    }
}

/// Electron and nuclear spin operators lifted to the 6-dimensional product space.
#[derive(Clone, Debug)]
pub struct ProductOperators {
    pub s: [Operator; 3],
    pub i: [Operator; 3],
}

impl ProductOperators {
    pub fn new() -> Self {
        let s1 = build_spin_operators(1.0).expect("spin 1 supported");
        let s12 = build_spin_operators(0.5).expect("spin 1/2 supported");
        let id2 = Operator::identity(2);
        let id3 = Operator::identity(3);
        let s = [s1[0].kron(&id2), s1[1].kron(&id2), s1[2].kron(&id2)];
        let i = [id3.kron(&s12[0]), id3.kron(&s12[1]), id3.kron(&s12[2])];
        Self { s, i }
    }
}

impl Default for ProductOperators {
    fn default() -> Self {
        Self::new()
    }
}

/// Physical constants of the coupled electron–nuclear spin Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    /// Electron g-factor.
    pub g_e: f64,
    /// Nuclear g-factor.
    pub g_n: f64,
    /// Bohr magneton, MHz/mT.
    pub beta_e: f64,
    /// Nuclear magneton, MHz/mT.
    pub beta_n: f64,
    /// Fine-structure tensor, MHz.
    pub d_tensor: Tensor3,
    /// Hyperfine tensor, MHz.
    pub a_tensor: Tensor3,
    /// Magnetic field, mT.
    pub field: [f64; 3],
}

/// Literature NV ground-state zero-field splitting in MHz. Not a fitted value.
pub const NV_ZERO_FIELD_SPLITTING: f64 = 2870.0;
pub const C13_FIRST_SHELL_HYPERFINE: f64 = 130.0;

impl SpinSystemParams {
    /// NV/¹³C defaults at zero field: axial `D`, isotropic `A = 130 MHz`.
    pub fn nv_c13() -> Self {
        Self {
            g_e: 2.0028,
            g_n: 1.4048,
            beta_e: 13.996_245,
            beta_n: 0.007_622_593_2,
            d_tensor: axial_tensor(NV_ZERO_FIELD_SPLITTING, 0.0),
            a_tensor: hyperfine_tensor(C13_FIRST_SHELL_HYPERFINE, 0.0),
            field: [0.0; 3],
        }
    }

    pub fn with_field(mut self, field: [f64; 3]) -> Self {
        self.field = field;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("g_e", self.g_e),
            ("g_n", self.g_n),
            ("beta_e", self.beta_e),
            ("beta_n", self.beta_n),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.beta_e <= 0.0 {
            return Err(invalid("beta_e", "must be positive"));
        }
        if self.beta_n <= 0.0 {
            return Err(invalid("beta_n", "must be positive"));
        }
        if self.field.iter().any(|b| !b.is_finite()) {
            return Err(invalid("field", "must be finite"));
        }
        check_symmetric("D", &self.d_tensor)?;
        check_symmetric("A", &self.a_tensor)?;
        Ok(())
    }

    /// Axial zero-field splitting `D_zz - (D_xx + D_yy)/2`.
    pub fn zero_field_splitting(&self) -> f64 {
        let d = &self.d_tensor;
        d[2][2] - 0.5 * (d[0][0] + d[1][1])
    }
}

/// Traceless axial tensor `D (Sz² - S²/3) + E (Sx² - Sy²)` written as a 3x3 matrix.
pub fn axial_tensor(d: f64, e: f64) -> Tensor3 {
    [
        [-d / 3.0 + e, 0.0, 0.0],
        [0.0, -d / 3.0 - e, 0.0],
        [0.0, 0.0, 2.0 * d / 3.0],
    ]
}

/// Hyperfine tensor with isotropic part `a_iso` and axial anisotropy `a_aniso` along z.
pub fn hyperfine_tensor(a_iso: f64, a_aniso: f64) -> Tensor3 {
    [
        [a_iso - a_aniso, 0.0, 0.0],
        [0.0, a_iso - a_aniso, 0.0],
        [0.0, 0.0, a_iso + 2.0 * a_aniso],
    ]
}

fn check_symmetric(name: &'static str, t: &Tensor3) -> Result<()> {
    let mut scale: f64 = 0.0;
    for row in t {
        for v in row {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: if name == "D" { "d_tensor" } else { "a_tensor" },
                    reason: "entries must be finite".into(),
                });
            }
            scale = scale.max(v.abs());
        }
    }
    let mut dev: f64 = 0.0;
    for (r, row) in t.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            dev = dev.max((v - t[c][r]).abs());
        }
    }
    if dev > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric {
            name,
            deviation: dev,
        });
    }
    Ok(())
}

/// `H = g_e β_e S·B + S·D·S + S·A·I − g_n β_n I·B` on the 6-dimensional product space.
pub fn build_hamiltonian(params: &SpinSystemParams) -> Result<Operator> {
    params.validate()?;
    let ops = ProductOperators::new();
    let mut h = Operator::zeros(6);
    let ez = params.g_e * params.beta_e;
    let nz = params.g_n * params.beta_n;
    for k in 0..3 {
        let b = params.field[k];
        if b != 0.0 {
            h = h.add(&ops.s[k].scale(ez * b));
            h = h.sub(&ops.i[k].scale(nz * b));
        }
    }
    for r in 0..3 {
        for c in 0..3 {
            let d = params.d_tensor[r][c];
            if d != 0.0 {
                h = h.add(&ops.s[r].mul(&ops.s[c]).scale(d));
            }
            let a = params.a_tensor[r][c];
            if a != 0.0 {
                h = h.add(&ops.s[r].mul(&ops.i[c]).scale(a));
            }
        }
    }
    // Exact Hermitian part; the products above are Hermitian up to rounding.
    let h = h.hermitian_part();
    h.ensure_hermitian(HERMITIAN_TOL)?;
    Ok(h)
}

/// Which `m_S = ±1` sublevel forms the working levels 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MsBranch {
    #[default]
    Minus,
    Plus,
}

impl MsBranch {
    pub fn ms(self) -> i8 {
        match self {
            MsBranch::Minus => -1,
            MsBranch::Plus => 1,
        }
    }
}

/// Working level as numbered in the level scheme (1–4).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L1, Level::L2, Level::L3, Level::L4];

    /// Row/column of this level in working-subspace matrices.
    pub fn index(self) -> usize {
        match self {
            Level::L1 => 0,
            Level::L2 => 1,
            Level::L3 => 2,
            Level::L4 => 3,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        Level::ALL.get(n.checked_sub(1)?).copied()
    }

    /// `true` for levels in the `m_S = ±1` manifold.
    pub fn electron_excited(self) -> bool {
        matches!(self, Level::L1 | Level::L2)
    }

    /// `true` for `m_I = -1/2`.
    pub fn nuclear_down(self) -> bool {
        matches!(self, Level::L2 | Level::L4)
    }

    pub fn ket(self) -> &'static str {
        match self {
            Level::L1 => "|10>",
            Level::L2 => "|11>",
            Level::L3 => "|00>",
            Level::L4 => "|01>",
        }
    }

    /// Product-basis index for the given branch.
    pub fn basis_index(self, branch: MsBranch) -> usize {
        let e = if self.electron_excited() {
            match branch {
                MsBranch::Plus => 0,
                MsBranch::Minus => 2,
            }
        } else {
            1
        };
        2 * e + usize::from(self.nuclear_down())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// `(m_S, m_I)` of a product-basis index.
pub fn basis_quantum_numbers(index: usize) -> (i8, f64) {
    let ms = 1 - (index / 2) as i8;
    let mi = if index % 2 == 0 { 0.5 } else { -0.5 };
    (ms, mi)
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues, MHz.
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub states: CMatrix,
}

impl Spectrum {
    pub fn reconstruct(&self) -> Operator {
        let n = self.energies.len();
        let mut d = CMatrix::zeros(n, n);
        for (k, e) in self.energies.iter().enumerate() {
            d[(k, k)] = C64::new(*e, 0.0);
        }
        Operator::new(&self.states * d * self.states.adjoint()).expect("square")
    }

    pub fn orthonormality_error(&self) -> f64 {
        let n = self.energies.len();
        let g = self.states.adjoint() * &self.states;
        let id = CMatrix::identity(n, n);
        (g - id).iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Diagonalizes a Hermitian operator.
pub fn diagonalize(h: &Operator) -> Result<Spectrum> {
    h.ensure_hermitian(1e-9 * h.max_abs().max(1.0))?;
    let (energies, states) = h.eigh();
    Ok(Spectrum { energies, states })
}

/// Dominant product-basis character of one eigenstate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Character {
    pub basis_index: usize,
    pub ms: i8,
    pub mi: f64,
    pub weight: f64,
}

/// Eigenlevels of the 6-level Hamiltonian with the four working levels identified.
#[derive(Clone, Debug)]
pub struct EnergyLevels {
    pub spectrum: Spectrum,
    pub characters: Vec<Character>,
    /// Eigenstate index for levels 1–4.
    pub labels: [usize; 4],
    pub branch: MsBranch,
}

impl EnergyLevels {
    pub fn energies(&self) -> &[f64] {
        &self.spectrum.energies
    }

    pub fn energy(&self, level: Level) -> f64 {
        self.spectrum.energies[self.labels[level.index()]]
    }

    /// Energies of levels 1–4 in working order.
    pub fn working_energies(&self) -> [f64; 4] {
        Level::ALL.map(|l| self.energy(l))
    }

    /// Isometry (6x4) whose columns are the eigenstates of levels 1–4.
    pub fn working_isometry(&self) -> CMatrix {
        let mut m = CMatrix::zeros(6, 4);
        for l in Level::ALL {
            m.set_column(l.index(), &self.spectrum.states.column(self.labels[l.index()]));
        }
        m
    }

    /// Splitting `E(4) - E(3)` inside the `m_S = 0` manifold.
    pub fn nuclear_splitting(&self) -> f64 {
        self.energy(Level::L4) - self.energy(Level::L3)
    }
}

/// Diagonalizes `h` and assigns levels 1–4 by dominant `(m_S, m_I)` character.
///
/// Degenerate eigenspaces are rotated to diagonalize `10·Sz + Iz` so that the
/// labeling is unique. Any eigenstate whose dominant weight is below
/// [`LABEL_THRESHOLD`] is a hard error.
pub fn eigenlevels(h: &Operator, branch: MsBranch) -> Result<EnergyLevels> {
    if h.dim() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            actual: h.dim(),
        });
    }
    let mut spectrum = diagonalize(h)?;
    resolve_degeneracies(&mut spectrum);

    let mut characters = Vec::with_capacity(6);
    for k in 0..6 {
        let col = spectrum.states.column(k);
        let (idx, weight) = col
            .iter()
            .enumerate()
            .map(|(b, z)| (b, z.norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if weight < LABEL_THRESHOLD {
            return Err(Error::AmbiguousLabel {
                index: k,
                weight,
                threshold: LABEL_THRESHOLD,
            });
        }
        let (ms, mi) = basis_quantum_numbers(idx);
        characters.push(Character {
            basis_index: idx,
            ms,
            mi,
            weight,
        });
    }

    let mut labels = [usize::MAX; 4];
    for level in Level::ALL {
        let target = level.basis_index(branch);
        let found = characters.iter().position(|c| c.basis_index == target);
        match found {
            Some(k) => labels[level.index()] = k,
            None => return Err(Error::MissingLabel(level_name(level))),
        }
    }
    Ok(EnergyLevels {
        spectrum,
        characters,
        labels,
        branch,
    })
}

fn level_name(level: Level) -> &'static str {
    match level {
        Level::L1 => "level 1",
        Level::L2 => "level 2",
        Level::L3 => "level 3",
        Level::L4 => "level 4",
    }
}

fn resolve_degeneracies(spectrum: &mut Spectrum) {
    let n = spectrum.energies.len();
    let scale = spectrum
        .energies
        .iter()
        .fold(1.0_f64, |m, e| m.max(e.abs()));
    let tol = 1e-9 * scale;
    let ops = ProductOperators::new();
    let probe = ops.s[2].scale(10.0).add(&ops.i[2]);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && spectrum.energies[end] - spectrum.energies[end - 1] < tol {
            end += 1;
        }
        if end - start > 1 {
            let block = spectrum.states.columns(start, end - start).into_owned();
            let projected = block.adjoint() * probe.matrix() * &block;
            let sub = Operator::new(projected).expect("square").hermitian_part();
            let (_, rot) = sub.eigh();
            let rotated = block * rot;
            let mean = spectrum.energies[start..end].iter().sum::<f64>() / (end - start) as f64;
            for (j, col) in (start..end).enumerate() {
                spectrum.states.set_column(col, &rotated.column(j));
                spectrum.energies[col] = mean;
            }
        }
        start = end;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transition {
    A,
    B,
    C,
    D,
}

impl Transition {
    pub const ALL: [Transition; 4] = [Transition::A, Transition::B, Transition::C, Transition::D];

    /// Ordered level pair `(from, to)`.
    pub fn levels(self) -> (Level, Level) {
        match self {
            Transition::A => (Level::L3, Level::L1),
            Transition::B => (Level::L4, Level::L2),
            Transition::C => (Level::L1, Level::L2),
            Transition::D => (Level::L3, Level::L4),
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            Transition::A | Transition::B => Channel::Mw,
            Transition::C | Transition::D => Channel::Rf,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transition::A => "A",
            Transition::B => "B",
            Transition::C => "C",
            Transition::D => "D",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" => Some(Transition::A),
            "B" => Some(Transition::B),
            "C" => Some(Transition::C),
            "D" => Some(Transition::D),
            _ => None,
        }
    }

    /// Transition connecting two levels, in either order.
    pub fn between(a: Level, b: Level) -> Option<Self> {
        Transition::ALL.into_iter().find(|t| {
            let (f, to) = t.levels();
            (f == a && to == b) || (f == b && to == a)
        })
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Mw,
    Rf,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Mw => "mw",
            Channel::Rf => "rf",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionEntry {
    pub transition: Transition,
    pub from: Level,
    pub to: Level,
    /// `|E(to) - E(from)|`, MHz.
    pub frequency: f64,
    /// `E(to) - E(from)`, MHz.
    pub signed_frequency: f64,
    pub channel: Channel,
    /// Dominant `(Δm_S, Δm_I)` of the transition.
    pub selection: (i8, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTable {
    pub entries: [TransitionEntry; 4],
}

impl TransitionTable {
    pub fn get(&self, t: Transition) -> &TransitionEntry {
        &self.entries[t as usize]
    }

    pub fn frequency(&self, t: Transition) -> f64 {
        self.get(t).frequency
    }

    /// Transition whose frequency is nearest to `carrier`.
    pub fn nearest(&self, carrier: f64) -> (Transition, f64) {
        self.entries
            .iter()
            .map(|e| (e.transition, carrier - e.frequency))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("four entries")
    }

    /// Signed closure `f(A) + f(C) - f(B) - f(D)` around the level cycle 3→1→2 vs 3→4→2.
    pub fn closure_error(&self) -> f64 {
        self.get(Transition::A).signed_frequency + self.get(Transition::C).signed_frequency
            - self.get(Transition::B).signed_frequency
            - self.get(Transition::D).signed_frequency
    }
}

/// Transitions A–D from labeled levels.
pub fn transition_table(levels: &EnergyLevels) -> Result<TransitionTable> {
    if levels.labels.iter().any(|&l| l >= levels.characters.len()) {
        return Err(Error::MissingLabel("working level"));
    }
    let entries = Transition::ALL.map(|t| {
        let (from, to) = t.levels();
        let cf = levels.characters[levels.labels[from.index()]];
        let ct = levels.characters[levels.labels[to.index()]];
        let signed = levels.energy(to) - levels.energy(from);
        TransitionEntry {
            transition: t,
            from,
            to,
            frequency: signed.abs(),
            signed_frequency: signed,
            channel: t.channel(),
            selection: (ct.ms - cf.ms, ct.mi - cf.mi),
        }
    });
    Ok(TransitionTable { entries })
}

/// Field along the symmetry axis giving a target `|E(4) - E(3)|` splitting.
///
/// The field points so that the selected `m_S` branch is the upper Zeeman
/// component. Solved by bisection on the full Hamiltonian; the search is
/// bounded below the `m_S = 0` / branch level anticrossing.
pub fn calibrate_field(
    params: &SpinSystemParams,
    target_splitting: f64,
    branch: MsBranch,
) -> Result<SpinSystemParams> {
    if !(target_splitting.is_finite() && target_splitting >= 0.0) {
        return Err(invalid("target_splitting", "must be finite and non-negative"));
    }
    let sign = f64::from(branch.ms());
    let ez = params.g_e * params.beta_e;
    let zfs = params.zero_field_splitting().abs();
    let upper = if zfs > 0.0 { 0.9 * zfs / ez } else { 1000.0 };
    let splitting = |b: f64| -> Result<f64> {
        let p = params.clone().with_field([0.0, 0.0, sign * b]);
        let h = build_hamiltonian(&p)?;
        Ok(eigenlevels(&h, branch)?.nuclear_splitting().abs())
    };
    if target_splitting == 0.0 {
        return Ok(params.clone().with_field([0.0; 3]));
    }
    let f_hi = splitting(upper)?;
    if f_hi < target_splitting {
        return Err(Error::Calibration(format!(
            "target splitting {target_splitting} MHz not reachable below {upper:.3} mT (max {f_hi:.4} MHz)"
        )));
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if splitting(mid)? < target_splitting {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * upper {
            break;
        }
    }
    Ok(params.clone().with_field([0.0, 0.0, sign * 0.5 * (lo + hi)]))
}
