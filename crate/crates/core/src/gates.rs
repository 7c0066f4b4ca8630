//! Finite gate sets: matrices, Clifford flags, and precomputed Pauli transfer tables.
//!
//! Local index convention for a gate acting on `[q0, q1]`: the gate's own
//! matrix treats `q0` as the most significant bit, so `cx 0 1` is the textbook
//! CNOT with control 0. Full-register amplitudes use little-endian indexing
//! (qubit `k` is bit `k`), see [`crate::sim`].

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::pauli::Pauli;

/// Tolerance on `‖G†G − I‖_max` accepted for gate matrices.
pub const GATE_UNITARY_TOL: f64 = 1e-12;

const PTM_DROP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateSetError {
    #[error("unknown gate set `{0}`")]
    UnknownGateSet(String),
    #[error("duplicate mnemonic `{0}` in gate set")]
    DuplicateMnemonic(String),
    #[error("gate `{0}` must have arity 1 or 2")]
    BadArity(String),
    #[error("gate `{mnemonic}` matrix has {got} entries, expected {expected}")]
    BadMatrixSize {
        mnemonic: String,
        got: usize,
        expected: usize,
    },
    #[error("gate `{mnemonic}` is not unitary (defect {defect:.3e})")]
    NotUnitary { mnemonic: String, defect: f64 },
    #[error("gate `{0}` is flagged Clifford but does not map Paulis to Paulis")]
    NotClifford(String),
}

/// Index of a gate within its [`GateSet`].
pub type GateId = usize;

/// One entry of a gate set.
#[derive(Clone)]
pub struct GateDef {
    pub mnemonic: String,
    pub arity: usize,
    /// Row-major `2^arity × 2^arity` matrix.
    pub matrix: Vec<C64>,
    pub clifford: bool,
    /// `heis[p]` lists `(q, c)` with `G† P_p G = Σ c Q_q`.
    heis: Vec<Vec<(u8, f64)>>,
    /// `schr[p]` lists `(q, c)` with `G P_p G† = Σ c Q_q`.
    schr: Vec<Vec<(u8, f64)>>,
}

impl fmt::Debug for GateDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GateDef")
            .field("mnemonic", &self.mnemonic)
            .field("arity", &self.arity)
            .field("clifford", &self.clifford)
            .finish()
    }
}

impl GateDef {
    pub fn new(
        mnemonic: &str,
        arity: usize,
        matrix: Vec<C64>,
        clifford: bool,
    ) -> Result<Self, GateSetError> {
        let mnemonic = mnemonic.to_ascii_lowercase();
        if !(1..=2).contains(&arity) {
            return Err(GateSetError::BadArity(mnemonic));
        }
        let dim = 1usize << arity;
        if matrix.len() != dim * dim {
            return Err(GateSetError::BadMatrixSize {
                mnemonic,
                got: matrix.len(),
                expected: dim * dim,
            });
        }
        let defect = unitarity_defect(&matrix, dim);
        if defect > GATE_UNITARY_TOL {
            return Err(GateSetError::NotUnitary { mnemonic, defect });
        }
        let adjoint = adjoint(&matrix, dim);
        let heis = transfer_table(&adjoint, &matrix, arity);
        let schr = transfer_table(&matrix, &adjoint, arity);
        if clifford
            && heis
                .iter()
                .any(|row| row.len() != 1 || (row[0].1.abs() - 1.0).abs() > 1e-9)
        {
            return Err(GateSetError::NotClifford(mnemonic));
        }
        Ok(Self {
            mnemonic,
            arity,
            matrix,
            clifford,
            heis,
            schr,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    /// Heisenberg image `G† P G` of the local Pauli with index `p`
    /// (base-4 digits, first gate qubit most significant, `0=I 1=X 2=Y 3=Z`).
    pub fn heisenberg_image(&self, p: usize) -> &[(u8, f64)] {
        &self.heis[p]
    }

    /// Schrödinger image `G P G†` of the local Pauli with index `p`.
    pub fn schrodinger_image(&self, p: usize) -> &[(u8, f64)] {
        &self.schr[p]
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[row * self.dim() + col]
    }
}

fn adjoint(m: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            out[c * dim + r] = m[r * dim + c].conj();
        }
    }
    out
}

fn matmul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for k in 0..dim {
            let x = a[r * dim + k];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..dim {
                out[r * dim + c] += x * b[k * dim + c];
            }
        }
    }
    out
}

fn unitarity_defect(m: &[C64], dim: usize) -> f64 {
    let prod = matmul(&adjoint(m, dim), m, dim);
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in 0..dim {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[r * dim + c] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Dense matrix of the local Pauli with base-4 index `p` on `arity` qubits.
pub(crate) fn local_pauli_matrix(p: usize, arity: usize) -> Vec<C64> {
    let mut m = vec![C64::new(1.0, 0.0)];
    let mut dim = 1;
    for k in (0..arity).rev() {
        let digit = (p >> (2 * k)) & 3;
        let single = Pauli::from_index(digit as u8).matrix();
        let mut next = vec![C64::new(0.0, 0.0); dim * 2 * dim * 2];
        for r in 0..dim {
            for c in 0..dim {
                for a in 0..2 {
                    for b in 0..2 {
                        next[(r * 2 + a) * (2 * dim) + (c * 2 + b)] = m[r * dim + c] * single[a][b];
                    }
                }
            }
        }
        m = next;
        dim *= 2;
    }
    m
}

/// Round to the nearest of `±1, ±1/√2, ±1/2` when within float noise.
fn snap(c: f64) -> f64 {
    for v in [1.0, FRAC_1_SQRT_2, 0.5] {
        if (c.abs() - v).abs() < 1e-12 {
            return v.copysign(c);
        }
    }
    c
}

/// Pauli-basis expansion of `left · P · right` for every local Pauli `P`.
fn transfer_table(left: &[C64], right: &[C64], arity: usize) -> Vec<Vec<(u8, f64)>> {
    let dim = 1usize << arity;
    let count = 1usize << (2 * arity);
    let basis: Vec<Vec<C64>> = (0..count).map(|q| local_pauli_matrix(q, arity)).collect();
    (0..count)
        .map(|p| {
            let conj = matmul(&matmul(left, &basis[p], dim), right, dim);
            let mut row = Vec::new();
            for (q, qm) in basis.iter().enumerate() {
                // Tr(Q M) / dim; Paulis are Hermitian so Tr(Q M) = Σ conj(Q_rc) M_rc.
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..dim * dim {
                    acc += qm[i].conj() * conj[i];
                }
                let c = snap(acc.re / dim as f64);
                if c.abs() > PTM_DROP {
                    row.push((q as u8, c));
                }
            }
            row
        })
        .collect()
}

/// A named, finite, immutable collection of one- and two-qubit gates.
#[derive(Debug)]
pub struct GateSet {
    name: String,
    gates: Vec<GateDef>,
    index: HashMap<String, GateId>,
    inverse: Vec<Option<GateId>>,
}

impl GateSet {
    pub fn new(name: &str, gates: Vec<GateDef>) -> Result<Self, GateSetError> {
        Self::with_aliases(name, gates, &[])
    }

    fn with_aliases(
        name: &str,
        gates: Vec<GateDef>,
        aliases: &[(&str, &str)],
    ) -> Result<Self, GateSetError> {
        let mut index = HashMap::new();
        for (id, g) in gates.iter().enumerate() {
            if index.insert(g.mnemonic.clone(), id).is_some() {
                return Err(GateSetError::DuplicateMnemonic(g.mnemonic.clone()));
            }
        }
        for (alias, target) in aliases {
            if let Some(&id) = index.get(*target) {
                index.entry(alias.to_string()).or_insert(id);
            }
        }
        let inverse = gates
            .iter()
            .map(|g| {
                gates
                    .iter()
                    .position(|h| h.arity == g.arity && is_inverse_up_to_phase(g, h))
            })
            .collect();
        Ok(Self {
            name: name.to_ascii_lowercase(),
            gates,
            index,
            inverse,
        })
    }

    /// Resolve a built-in gate set by name: `clifford+t`, `clifford`, and
    /// either of those with a `+swap` suffix.
    pub fn builtin(name: &str) -> Result<Arc<Self>, GateSetError> {
        let lower = name.to_ascii_lowercase();
        let (base, swap) = match lower.strip_suffix("+swap") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let set = match base {
            "clifford+t" => Self::clifford_t_gates(true),
            "clifford" => Self::clifford_t_gates(false),
            _ => return Err(GateSetError::UnknownGateSet(name.to_string())),
        }?;
        if swap {
            Ok(Arc::new(set.with_swap()))
        } else {
            Ok(Arc::new(set))
        }
    }

    /// The default `clifford+t` gate set.
    pub fn clifford_t() -> Arc<Self> {
        Self::builtin("clifford+t").expect("built-in gate set")
    }

    fn clifford_t_gates(with_t: bool) -> Result<Self, GateSetError> {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let w = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let mut gates = vec![
            GateDef::new("h", 1, vec![h, h, h, -h], true)?,
            GateDef::new("s", 1, vec![o, z, z, i], true)?,
            GateDef::new("sdg", 1, vec![o, z, z, -i], true)?,
            GateDef::new("x", 1, vec![z, o, o, z], true)?,
            GateDef::new("y", 1, vec![z, -i, i, z], true)?,
            GateDef::new("z", 1, vec![o, z, z, -o], true)?,
        ];
        if with_t {
            gates.push(GateDef::new("t", 1, vec![o, z, z, w], false)?);
            gates.push(GateDef::new("tdg", 1, vec![o, z, z, w.conj()], false)?);
        }
        #[rustfmt::skip]
        let cx = vec![
            o, z, z, z,
            z, o, z, z,
            z, z, z, o,
            z, z, o, z,
        ];
        gates.push(GateDef::new("cx", 2, cx, true)?);
        let name = if with_t { "clifford+t" } else { "clifford" };
        Self::with_aliases(name, gates, &[("cnot", "cx")])
    }

    /// This gate set extended by `swap` (used for sewn circuits).
    pub fn with_swap(&self) -> Self {
        if self.index.contains_key("swap") {
            return self.clone_set(&self.name);
        }
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        #[rustfmt::skip]
        let swap = vec![
            o, z, z, z,
            z, z, o, z,
            z, o, z, z,
            z, z, z, o,
        ];
        let mut gates = self.gates.clone();
        gates.push(GateDef::new("swap", 2, swap, true).expect("swap is unitary"));
        Self::with_aliases(&format!("{}+swap", self.name), gates, &[("cnot", "cx")])
            .expect("swap mnemonic is fresh")
    }

    fn clone_set(&self, name: &str) -> Self {
        Self {
            name: name.to_string(),
            gates: self.gates.clone(),
            index: self.index.clone(),
            inverse: self.inverse.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate(&self, id: GateId) -> &GateDef {
        &self.gates[id]
    }

    pub fn gates(&self) -> &[GateDef] {
        &self.gates
    }

    pub fn lookup(&self, mnemonic: &str) -> Option<GateId> {
        self.index.get(&mnemonic.to_ascii_lowercase()).copied()
    }

    /// Gate whose matrix is the adjoint of `id` up to a global phase.
    pub fn inverse_of(&self, id: GateId) -> Option<GateId> {
        self.inverse[id]
    }

    pub fn is_clifford(&self, id: GateId) -> bool {
        self.gates[id].clifford
    }

    /// Gate ids in set order, optionally restricted to Clifford gates.
    pub fn search_gates(&self, clifford_only: bool) -> Vec<GateId> {
        (0..self.gates.len())
            .filter(|&g| !clifford_only || self.gates[g].clifford)
            .collect()
    }
}

impl PartialEq for GateSet {
    /// Sets are equal when their names and mnemonic lists agree.
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.gates.len() == other.gates.len()
            && self
                .gates
                .iter()
                .zip(&other.gates)
                .all(|(a, b)| a.mnemonic == b.mnemonic)
    }
}

fn is_inverse_up_to_phase(g: &GateDef, h: &GateDef) -> bool {
    let dim = g.dim();
    let prod = matmul(&g.matrix, &h.matrix, dim);
    let phase = prod[0];
    if (phase.norm() - 1.0).abs() > 1e-9 {
        return false;
    }
    (0..dim).all(|r| {
        (0..dim).all(|c| {
            let target = if r == c { phase } else { C64::new(0.0, 0.0) };
            (prod[r * dim + c] - target).norm() < 1e-9
        })
    })
}
