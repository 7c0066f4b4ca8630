//! Pauli algebra in symplectic bit form and real linear combinations of Paulis.
//!
//! Qubit `k` is bit `k` of the `x`/`z` masks. A set `(x, z)` pair denotes `Y`
//! (not `XZ`), so every phase-free string is Hermitian.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::GateDef;

/// Widest register representable by the bit masks.
pub const MAX_PAULI_QUBITS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PauliError {
    #[error("Pauli strings are limited to {MAX_PAULI_QUBITS} qubits, got {0}")]
    TooWide(usize),
    #[error("invalid Pauli string `{0}`")]
    Parse(String),
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
}

/// Single-qubit Pauli.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const XYZ: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(i: u8) -> Self {
        match i & 3 {
            0 => Self::I,
            1 => Self::X,
            2 => Self::Y,
            _ => Self::Z,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::I => 0,
            Self::X => 1,
            Self::Y => 2,
            Self::Z => 3,
        }
    }

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Self::I,
            (true, false) => Self::X,
            (true, true) => Self::Y,
            (false, true) => Self::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Self::I => (false, false),
            Self::X => (true, false),
            Self::Y => (true, true),
            Self::Z => (false, true),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Self::I => 'I',
            Self::X => 'X',
            Self::Y => 'Y',
            Self::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Self::I),
            'X' => Some(Self::X),
            'Y' => Some(Self::Y),
            'Z' => Some(Self::Z),
            _ => None,
        }
    }

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Self::I => [[o, z], [z, o]],
            Self::X => [[z, o], [o, z]],
            Self::Y => [[z, -i], [i, z]],
            Self::Z => [[o, z], [z, -o]],
        }
    }
}

/// Phase-free key of a Pauli string: the `(x, z)` masks.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliKey {
    pub x: u64,
    pub z: u64,
}

impl PauliKey {
    pub const IDENTITY: PauliKey = PauliKey { x: 0, z: 0 };

    pub fn single(qubit: usize, p: Pauli) -> Self {
        let (x, z) = p.bits();
        Self {
            x: (x as u64) << qubit,
            z: (z as u64) << qubit,
        }
    }

    pub fn support_mask(self) -> u64 {
        self.x | self.z
    }

    pub fn weight(self) -> usize {
        self.support_mask().count_ones() as usize
    }

    pub fn get(self, qubit: usize) -> Pauli {
        Pauli::from_bits((self.x >> qubit) & 1 == 1, (self.z >> qubit) & 1 == 1)
    }

    pub fn set(&mut self, qubit: usize, p: Pauli) {
        let (x, z) = p.bits();
        let bit = 1u64 << qubit;
        self.x = (self.x & !bit) | if x { bit } else { 0 };
        self.z = (self.z & !bit) | if z { bit } else { 0 };
    }

    /// Exponent `e` (mod 4) with `self · other = i^e · (self ⊕ other)`.
    pub fn product_phase(self, other: PauliKey) -> u8 {
        let (x1, z1, x2, z2) = (self.x, self.z, other.x, other.z);
        let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
        let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
        let pos = (px & qy) | (py & qz) | (pz & qx);
        let neg = (px & qz) | (pz & qy) | (py & qx);
        (pos.count_ones() as i64 - neg.count_ones() as i64).rem_euclid(4) as u8
    }

    pub fn commutes_with(self, other: PauliKey) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// Base-4 local index over `qubits` (first qubit most significant), the
    /// convention of [`GateDef::heisenberg_image`].
    pub fn local_index(self, qubits: &[usize]) -> usize {
        qubits
            .iter()
            .fold(0usize, |acc, &q| acc * 4 + self.get(q).index() as usize)
    }

    /// Replace the Paulis on `qubits` by the local Pauli with base-4 index `p`.
    pub fn with_local(mut self, qubits: &[usize], mut p: usize) -> Self {
        for &q in qubits.iter().rev() {
            self.set(q, Pauli::from_index((p & 3) as u8));
            p >>= 2;
        }
        self
    }
}

/// An `n`-qubit Pauli operator `i^phase · σ(x, z)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    key: PauliKey,
    phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Result<Self, PauliError> {
        if n > MAX_PAULI_QUBITS {
            return Err(PauliError::TooWide(n));
        }
        Ok(Self {
            n,
            key: PauliKey::IDENTITY,
            phase: 0,
        })
    }

    pub fn single(n: usize, qubit: usize, p: Pauli) -> Result<Self, PauliError> {
        let mut s = Self::identity(n)?;
        if qubit >= n {
            return Err(PauliError::QubitOutOfRange { qubit, n });
        }
        s.key = PauliKey::single(qubit, p);
        Ok(s)
    }

    pub fn from_key(n: usize, key: PauliKey, phase: u8) -> Result<Self, PauliError> {
        let s = Self::identity(n)?;
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        if key.support_mask() & !mask != 0 {
            return Err(PauliError::QubitOutOfRange {
                qubit: 63 - key.support_mask().leading_zeros() as usize,
                n,
            });
        }
        Ok(Self {
            key,
            phase: phase & 3,
            ..s
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn key(&self) -> PauliKey {
        self.key
    }

    /// Power of `i` in front of the Hermitian string.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase.is_multiple_of(2)
    }

    /// `+1.0` or `-1.0` for Hermitian strings.
    pub fn sign(&self) -> Option<f64> {
        match self.phase {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        self.key.get(qubit)
    }

    pub fn weight(&self) -> usize {
        self.key.weight()
    }

    pub fn support(&self) -> Vec<usize> {
        mask_to_qubits(self.key.support_mask())
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.key.commutes_with(other.key)
    }

    pub fn mul(&self, other: &PauliString) -> Result<PauliString, PauliError> {
        if self.n != other.n {
            return Err(PauliError::WidthMismatch(self.n, other.n));
        }
        let phase = (self.phase + other.phase + self.key.product_phase(other.key)) % 4;
        Ok(PauliString {
            n: self.n,
            key: PauliKey {
                x: self.key.x ^ other.key.x,
                z: self.key.z ^ other.key.z,
            },
            phase,
        })
    }

    pub fn negate(&self) -> PauliString {
        PauliString {
            phase: (self.phase + 2) % 4,
            ..*self
        }
    }

    /// Conjugate by a Clifford gate: `G† P G` when `heisenberg`, else `G P G†`.
    /// Returns `None` when the gate does not map this Pauli to a single Pauli.
    pub fn conjugate_clifford(
        &self,
        gate: &GateDef,
        qubits: &[usize],
        heisenberg: bool,
    ) -> Option<PauliString> {
        let local = self.key.local_index(qubits);
        let image = if heisenberg {
            gate.heisenberg_image(local)
        } else {
            gate.schrodinger_image(local)
        };
        match image {
            [(q, c)] if (c.abs() - 1.0).abs() < 1e-9 => {
                let flip = if *c < 0.0 { 2 } else { 0 };
                Some(PauliString {
                    n: self.n,
                    key: self.key.with_local(qubits, *q as usize),
                    phase: (self.phase + flip) % 4,
                })
            }
            _ => None,
        }
    }

    /// Amplitude action `P|b⟩ = amp · |b ⊕ x⟩` (little-endian basis index).
    pub fn apply_to_basis(&self, b: usize) -> (usize, C64) {
        let b = b as u64;
        let y_count = (self.key.x & self.key.z).count_ones();
        let sign_count = (b & self.key.z).count_ones();
        let exponent = (self.phase as u32 + y_count + 2 * sign_count) % 4;
        ((b ^ self.key.x) as usize, i_pow(exponent))
    }
}

pub(crate) fn i_pow(e: u32) -> C64 {
    match e % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

pub(crate) fn mask_to_qubits(mut mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        let q = mask.trailing_zeros() as usize;
        out.push(q);
        mask &= mask - 1;
    }
    out
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        write!(f, "{prefix}")?;
        for q in 0..self.n {
            write!(f, "{}", self.get(q).symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    /// `"+XIZ"`, `"-iYY"`, `"ZZ"`; character `k` acts on qubit `k`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (phase, body) = if let Some(r) = t.strip_prefix("+i") {
            (1, r)
        } else if let Some(r) = t.strip_prefix("-i") {
            (3, r)
        } else if let Some(r) = t.strip_prefix('+') {
            (0, r)
        } else if let Some(r) = t.strip_prefix('-') {
            (2, r)
        } else {
            (0, t)
        };
        let mut key = PauliKey::IDENTITY;
        let mut n = 0;
        for (q, c) in body.chars().enumerate() {
            let p = Pauli::from_symbol(c).ok_or_else(|| PauliError::Parse(s.to_string()))?;
            if q >= MAX_PAULI_QUBITS {
                return Err(PauliError::TooWide(q + 1));
            }
            key.set(q, p);
            n = q + 1;
        }
        if n == 0 {
            return Err(PauliError::Parse(s.to_string()));
        }
        PauliString::from_key(n, key, phase)
    }
}

/// Real linear combination of phase-free Pauli strings, kept sorted by key.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSum {
    n: usize,
    terms: Vec<(PauliKey, f64)>,
}

/// Coefficients at or below this magnitude are dropped on normalization.
pub const COEFF_DROP: f64 = 1e-13;

impl ObservableSum {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn from_pauli(p: &PauliString) -> Option<Self> {
        let sign = p.sign()?;
        Some(Self {
            n: p.n(),
            terms: vec![(p.key(), sign)],
        })
    }

    pub fn single(n: usize, key: PauliKey, coeff: f64) -> Self {
        Self::from_terms(n, vec![(key, coeff)])
    }

    pub fn from_terms(n: usize, terms: Vec<(PauliKey, f64)>) -> Self {
        let mut s = Self { n, terms };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        merge_terms(&mut self.terms);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(PauliKey, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, key: PauliKey) -> f64 {
        self.terms
            .binary_search_by(|(k, _)| k.cmp(&key))
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn support_mask(&self) -> u64 {
        self.terms.iter().fold(0, |m, (k, _)| m | k.support_mask())
    }

    pub fn support(&self) -> Vec<usize> {
        mask_to_qubits(self.support_mask())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_terms(
            self.n,
            self.terms.iter().map(|&(k, c)| (k, c * factor)).collect(),
        )
    }

    pub fn add(&self, other: &ObservableSum) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::from_terms(self.n.max(other.n), terms)
    }

    pub fn sub(&self, other: &ObservableSum) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `sqrt(Σ c²)`, the normalized Hilbert–Schmidt norm; a lower bound on `‖·‖_∞`.
    pub fn frobenius(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt()
    }

    /// `Σ |c|`; an upper bound on `‖·‖_∞`.
    pub fn l1(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.abs()).sum()
    }

    /// Conjugate by one gate: `G† O G` when `heisenberg`, else `G O G†`.
    pub fn conjugate_gate(&self, gate: &GateDef, qubits: &[usize], heisenberg: bool) -> Self {
        let mut out = Vec::with_capacity(self.terms.len());
        conjugate_terms(&self.terms, gate, qubits, heisenberg, &mut out);
        Self { n: self.n, terms: out }
    }

    /// Relabel qubit `q` to `map(q)` in every term. `map` must be injective on the support.
    pub fn relabel(&self, n: usize, map: impl Fn(usize) -> usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|&(k, c)| {
                let mut out = PauliKey::IDENTITY;
                for q in mask_to_qubits(k.support_mask()) {
                    out.set(map(q), k.get(q));
                }
                (out, c)
            })
            .collect();
        Self::from_terms(n, terms)
    }

    /// Keep only terms whose coefficient magnitude exceeds `tau`.
    pub fn threshold(&self, tau: f64) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().copied().filter(|(_, c)| c.abs() > tau).collect(),
        }
    }
}

impl fmt::Display for ObservableSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (k, c)) in self.terms.iter().enumerate() {
            if idx > 0 {
                write!(f, " ")?;
            }
            let p = PauliString::from_key(self.n, *k, 0).map_err(|_| fmt::Error)?;
            write!(f, "{c:+.6}*{}", &p.to_string()[1..])?;
        }
        Ok(())
    }
}

/// Sort by key, sum duplicates, drop negligible coefficients.
pub(crate) fn merge_terms(terms: &mut Vec<(PauliKey, f64)>) {
    if terms.len() > 1 {
        terms.sort_unstable_by_key(|t| t.0);
        let mut w = 0;
        for r in 1..terms.len() {
            if terms[r].0 == terms[w].0 {
                terms[w].1 += terms[r].1;
            } else {
                w += 1;
                terms[w] = terms[r];
            }
        }
        terms.truncate(w + 1);
    }
    terms.retain(|(_, c)| c.abs() > COEFF_DROP);
}

/// Conjugate a term list by one gate into `out` (cleared first), normalized.
pub(crate) fn conjugate_terms(
    terms: &[(PauliKey, f64)],
    gate: &GateDef,
    qubits: &[usize],
    heisenberg: bool,
    out: &mut Vec<(PauliKey, f64)>,
) {
    out.clear();
    let gate_mask = qubits.iter().fold(0u64, |m, &q| m | (1 << q));
    for &(k, c) in terms {
        if k.support_mask() & gate_mask == 0 {
            out.push((k, c));
            continue;
        }
        let local = k.local_index(qubits);
        let image = if heisenberg {
            gate.heisenberg_image(local)
        } else {
            gate.schrodinger_image(local)
        };
        for &(q, w) in image {
            out.push((k.with_local(qubits, q as usize), c * w));
        }
    }
    merge_terms(out);
}
