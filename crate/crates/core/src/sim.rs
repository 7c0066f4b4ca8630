//! Dense simulation: statevectors, unitaries, density matrices, and the
//! Pauli-basis Heisenberg picture.
//!
//! Register amplitudes are little-endian: qubit `k` is bit `k` of the index.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::circuit::{Circuit, Direction, Gate, Program, ProgramStep};
use crate::gates::{GateDef, GateSet};
use crate::pauli::{
    conjugate_terms, mask_to_qubits, ObservableSum, PauliKey, PauliString, MAX_PAULI_QUBITS,
};

/// Default width limit for dense objects and non-Clifford Pauli expansion.
pub const DEFAULT_WIDTH_CAP: usize = 12;

/// Unitarity tolerance for [`UnitaryMatrix`] inputs.
pub const UNITARY_TOL: f64 = 1e-10;

pub type Matrix = DMatrix<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("width {width} exceeds the dense cap of {cap} qubits")]
    WidthOverCap { width: usize, cap: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("partial trace needs at least one kept qubit")]
    EmptyKeep,
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn check_width(width: usize, cap: usize) -> Result<(), SimError> {
    if width > cap {
        Err(SimError::WidthOverCap { width, cap })
    } else {
        Ok(())
    }
}

/// Apply a gate in place to a little-endian amplitude slice.
pub fn apply_gate_to_slice(amps: &mut [C64], def: &GateDef, qubits: &[usize]) {
    let m = &def.matrix;
    match *qubits {
        [q] => {
            let bit = 1usize << q;
            let (m00, m01, m10, m11) = (m[0], m[1], m[2], m[3]);
            for i in 0..amps.len() {
                if i & bit == 0 {
                    let (a0, a1) = (amps[i], amps[i | bit]);
                    amps[i] = m00 * a0 + m01 * a1;
                    amps[i | bit] = m10 * a0 + m11 * a1;
                }
            }
        }
        [q0, q1] => {
            let (b0, b1) = (1usize << q0, 1usize << q1);
            let mask = b0 | b1;
            for i in 0..amps.len() {
                if i & mask != 0 {
                    continue;
                }
                let idx = [i, i | b1, i | b0, i | b0 | b1];
                let a = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
                for r in 0..4 {
                    let row = &m[4 * r..4 * r + 4];
                    amps[idx[r]] = row[0] * a[0] + row[1] * a[1] + row[2] * a[2] + row[3] * a[3];
                }
            }
        }
        _ => unreachable!("gates act on one or two qubits"),
    }
}

fn apply_layers(amps: &mut [C64], gs: &GateSet, layers: &[Vec<Gate>]) {
    for layer in layers {
        for g in layer {
            apply_gate_to_slice(amps, gs.gate(g.kind), g.qubits());
        }
    }
}

/// Pure state on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Self { n, amps }
    }

    pub fn zero(n: usize) -> Self {
        Self::basis(n, 0)
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, SimError> {
        if !amps.len().is_power_of_two() {
            return Err(SimError::DimMismatch(amps.len(), amps.len().next_power_of_two()));
        }
        Ok(Self {
            n: amps.len().trailing_zeros() as usize,
            amps,
        })
    }

    /// Tensor product of single-qubit states; `qubits[k]` is qubit `k`.
    pub fn product(qubits: &[[C64; 2]]) -> Self {
        let mut amps = vec![ONE];
        for (k, q) in qubits.iter().enumerate() {
            let mut next = vec![ZERO; amps.len() * 2];
            for (i, a) in amps.iter().enumerate() {
                next[i] = a * q[0];
                next[i | (1 << k)] = a * q[1];
            }
            amps = next;
        }
        Self {
            n: qubits.len(),
            amps,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn apply_gate(&mut self, def: &GateDef, qubits: &[usize]) {
        apply_gate_to_slice(&mut self.amps, def, qubits);
    }

    pub fn apply_circuit(&mut self, c: &Circuit) {
        apply_layers(&mut self.amps, c.gate_set(), c.layers());
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨ψ|P|ψ⟩` for a Hermitian Pauli string.
    pub fn expectation(&self, p: &PauliString) -> f64 {
        let mut acc = ZERO;
        for (b, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (t, amp) = p.apply_to_basis(b);
            acc += self.amps[t].conj() * amp * a;
        }
        acc.re
    }

    /// Reduced state on `keep` (output qubit `k` is `keep[k]`).
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix, SimError> {
        let (keep_pos, traced_pos) = split_positions(self.n, keep)?;
        let dk = 1usize << keep.len();
        let dt = 1usize << traced_pos.len();
        let mut rows = vec![ZERO; dk * dt];
        for r in 0..dk {
            let base = scatter(r, &keep_pos);
            for t in 0..dt {
                rows[r * dt + t] = self.amps[base | scatter(t, &traced_pos)];
            }
        }
        let mut m = Matrix::zeros(dk, dk);
        for r in 0..dk {
            for c in r..dk {
                let v: C64 = (0..dt)
                    .map(|t| rows[r * dt + t] * rows[c * dt + t].conj())
                    .sum();
                m[(r, c)] = v;
                m[(c, r)] = v.conj();
            }
        }
        Ok(DensityMatrix { n: keep.len(), m })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityMatrix {
            n: self.n,
            m: &v * v.adjoint(),
        }
    }
}

fn split_positions(n: usize, keep: &[usize]) -> Result<(Vec<usize>, Vec<usize>), SimError> {
    if keep.is_empty() {
        return Err(SimError::EmptyKeep);
    }
    let mut seen = vec![false; n];
    for &q in keep {
        if q >= n || seen[q] {
            return Err(SimError::QubitOutOfRange { qubit: q, n });
        }
        seen[q] = true;
    }
    let traced = (0..n).filter(|&q| !seen[q]).collect();
    Ok((keep.to_vec(), traced))
}

/// Spread the bits of `value` onto the positions `pos` (bit `k` to `pos[k]`).
fn scatter(value: usize, pos: &[usize]) -> usize {
    pos.iter()
        .enumerate()
        .fold(0, |acc, (k, &p)| acc | (((value >> k) & 1) << p))
}

/// Dense unitary on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    n: usize,
    m: Matrix,
}

impl UnitaryMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            m: Matrix::identity(1 << n, 1 << n),
        }
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, SimError> {
        let dim = m.nrows();
        if dim != m.ncols() || !dim.is_power_of_two() {
            return Err(SimError::DimMismatch(m.nrows(), m.ncols()));
        }
        let defect = unitarity_defect(&m);
        if defect > UNITARY_TOL {
            return Err(SimError::NotUnitary(defect));
        }
        Ok(Self {
            n: dim.trailing_zeros() as usize,
            m,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            n: self.n,
            m: self.m.adjoint(),
        }
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn mul(&self, other: &UnitaryMatrix) -> Self {
        Self {
            n: self.n,
            m: &self.m * &other.m,
        }
    }

    /// `low ⊗ high` with `low` on qubits `0..low.n` and `high` above it.
    pub fn tensor(low: &UnitaryMatrix, high: &UnitaryMatrix) -> Self {
        let n = low.n + high.n;
        let dl = low.dim();
        let dim = 1usize << n;
        let m = Matrix::from_fn(dim, dim, |r, c| {
            low.m[(r % dl, c % dl)] * high.m[(r / dl, c / dl)]
        });
        Self { n, m }
    }

    /// The register swap `Π_i SWAP(i, n+i)` on `2n` qubits.
    pub fn register_swap(n: usize) -> Self {
        let dim = 1usize << (2 * n);
        let low = (1usize << n) - 1;
        let mut m = Matrix::zeros(dim, dim);
        for b in 0..dim {
            let swapped = ((b & low) << n) | (b >> n);
            m[(swapped, b)] = ONE;
        }
        Self { n: 2 * n, m }
    }

    pub fn max_abs_diff(&self, other: &UnitaryMatrix) -> f64 {
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let v = nalgebra::DVector::from_column_slice(&psi.amps);
        let out = &self.m * v;
        StateVector {
            n: self.n,
            amps: out.as_slice().to_vec(),
        }
    }
}

/// `‖M†M − I‖_max`.
pub fn unitarity_defect(m: &Matrix) -> f64 {
    let p = m.adjoint() * m;
    let dim = p.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            let target = if r == c { ONE } else { ZERO };
            worst = worst.max((p[(r, c)] - target).norm());
        }
    }
    worst
}

/// Dense unitary of `c` with layer 0 applied first, within [`DEFAULT_WIDTH_CAP`].
pub fn unitary_of(c: &Circuit) -> Result<UnitaryMatrix, SimError> {
    unitary_of_capped(c, DEFAULT_WIDTH_CAP)
}

pub fn unitary_of_capped(c: &Circuit, cap: usize) -> Result<UnitaryMatrix, SimError> {
    check_width(c.n_qubits(), cap)?;
    let mut u = UnitaryMatrix::identity(c.n_qubits());
    let dim = u.dim();
    for col in 0..dim {
        let slice = &mut u.m.as_mut_slice()[col * dim..(col + 1) * dim];
        apply_layers(slice, c.gate_set(), c.layers());
    }
    Ok(u)
}

/// Heisenberg image `U† P U` of a Hermitian Pauli string.
///
/// Clifford circuits use single-Pauli propagation with no width limit beyond
/// the 64-qubit mask. Otherwise every Pauli term is carried exactly; the
/// backward lightcone of `supp(P)` must fit in [`DEFAULT_WIDTH_CAP`].
pub fn heisenberg(c: &Circuit, p: &PauliString) -> Result<ObservableSum, SimError> {
    heisenberg_capped(c, p, DEFAULT_WIDTH_CAP)
}

pub fn heisenberg_capped(
    c: &Circuit,
    p: &PauliString,
    cap: usize,
) -> Result<ObservableSum, SimError> {
    check_width(c.n_qubits(), MAX_PAULI_QUBITS)?;
    if p.n() != c.n_qubits() {
        return Err(SimError::DimMismatch(p.n(), c.n_qubits()));
    }
    if c.is_clifford() {
        let mut cur = *p;
        for layer in c.layers().iter().rev() {
            for g in layer {
                cur = cur
                    .conjugate_clifford(c.gate_set().gate(g.kind), g.qubits(), true)
                    .expect("Clifford gate maps Paulis to Paulis");
            }
        }
        let sign = cur.sign().expect("Hermitian input stays Hermitian");
        return Ok(ObservableSum::single(c.n_qubits(), cur.key(), sign));
    }
    let o = ObservableSum::from_pauli(p).expect("Hermitian Pauli string");
    heisenberg_observable_capped(c, &o, cap)
}

/// `U† O U` for a Pauli-basis observable, carrying all terms exactly.
pub fn heisenberg_observable(c: &Circuit, o: &ObservableSum) -> Result<ObservableSum, SimError> {
    heisenberg_observable_capped(c, o, DEFAULT_WIDTH_CAP)
}

fn heisenberg_observable_capped(
    c: &Circuit,
    o: &ObservableSum,
    cap: usize,
) -> Result<ObservableSum, SimError> {
    let start: BTreeSet<usize> = o.support().into_iter().collect();
    let cone = c.lightcone(&start, Direction::Backward);
    check_width(cone.len(), cap)?;
    let mut terms = o.terms().to_vec();
    let mut scratch = Vec::new();
    for layer in c.layers().iter().rev() {
        for g in layer {
            conjugate_terms(&terms, c.gate_set().gate(g.kind), g.qubits(), true, &mut scratch);
            std::mem::swap(&mut terms, &mut scratch);
        }
    }
    Ok(ObservableSum::from_terms(c.n_qubits(), terms))
}

/// Dense matrix of a Pauli key on local qubits (`qubits[k]` is local bit `k`).
pub fn pauli_key_matrix(key: PauliKey, qubits: &[usize]) -> Matrix {
    let k = qubits.len();
    let mut local = PauliKey::IDENTITY;
    for (pos, &q) in qubits.iter().enumerate() {
        local.set(pos, key.get(q));
    }
    let p = PauliString::from_key(k.max(1), local, 0).expect("local width fits the mask");
    let dim = 1usize << k;
    let mut m = Matrix::zeros(dim, dim);
    for b in 0..dim {
        let (t, amp) = p.apply_to_basis(b);
        m[(t, b)] = amp;
    }
    m
}

/// Dense matrix of `o` restricted to `qubits`, which must cover its support.
pub fn dense_observable(o: &ObservableSum, qubits: &[usize]) -> Matrix {
    let dim = 1usize << qubits.len();
    let mut m = Matrix::zeros(dim, dim);
    for &(key, c) in o.terms() {
        m += pauli_key_matrix(key, qubits) * C64::new(c, 0.0);
    }
    m
}

/// Real Pauli coefficients `Tr(P M)/2^n` of a Hermitian matrix on `n` qubits.
pub fn pauli_decompose(m: &Matrix, n: usize) -> ObservableSum {
    let qubits: Vec<usize> = (0..n).collect();
    let dim = 1usize << n;
    let mut terms = Vec::new();
    for x in 0..dim as u64 {
        for z in 0..dim as u64 {
            let key = PauliKey { x, z };
            let p = pauli_key_matrix(key, &qubits);
            let tr: C64 = (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .map(|(r, c)| p[(r, c)] * m[(c, r)])
                .sum();
            terms.push((key, tr.re / dim as f64));
        }
    }
    ObservableSum::from_terms(n, terms)
}

/// Spectral norm of `o`, densified on its support.
pub fn inf_norm(o: &ObservableSum) -> Result<f64, SimError> {
    inf_norm_capped(o, DEFAULT_WIDTH_CAP)
}

pub fn inf_norm_capped(o: &ObservableSum, cap: usize) -> Result<f64, SimError> {
    let support = mask_to_qubits(o.support_mask());
    check_width(support.len(), cap)?;
    if o.is_zero() {
        return Ok(0.0);
    }
    let m = dense_observable(o, &support);
    Ok(hermitian_eigenvalues(&m)
        .iter()
        .fold(0.0, |a: f64, l| a.max(l.abs())))
}

fn hermitian_eigenvalues(m: &Matrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().copied().collect()
}

/// Mixed state on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    m: Matrix,
}

impl DensityMatrix {
    pub fn from_matrix(m: Matrix) -> Result<Self, SimError> {
        let dim = m.nrows();
        if dim != m.ncols() || !dim.is_power_of_two() {
            return Err(SimError::DimMismatch(m.nrows(), m.ncols()));
        }
        Ok(Self {
            n: dim.trailing_zeros() as usize,
            m,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn purity(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.m)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// `⟨φ|ρ|φ⟩`.
    pub fn fidelity_with_pure(&self, phi: &StateVector) -> f64 {
        let v = nalgebra::DVector::from_column_slice(phi.amplitudes());
        (v.adjoint() * &self.m * &v)[(0, 0)].re
    }

    /// `ρ ↦ G ρ G†`.
    pub fn apply_gate(&mut self, def: &GateDef, qubits: &[usize]) {
        let dim = self.m.nrows();
        for col in 0..dim {
            apply_gate_to_slice(&mut self.m.as_mut_slice()[col * dim..(col + 1) * dim], def, qubits);
        }
        self.m.adjoint_mut();
        for col in 0..dim {
            apply_gate_to_slice(&mut self.m.as_mut_slice()[col * dim..(col + 1) * dim], def, qubits);
        }
        self.m.adjoint_mut();
    }

    pub fn apply_circuit(&mut self, c: &Circuit) {
        for layer in c.layers() {
            for g in layer {
                self.apply_gate(c.gate_set().gate(g.kind), g.qubits());
            }
        }
    }

    /// Trace out `qubits` and re-prepare them in `|0⟩`.
    pub fn reset(&mut self, qubits: &[usize]) {
        let dim = self.m.nrows();
        let mask = qubits.iter().fold(0usize, |m, &q| m | (1 << q));
        let patterns = 1usize << qubits.len();
        let mut out = Matrix::zeros(dim, dim);
        for r in (0..dim).filter(|r| r & mask == 0) {
            for c in (0..dim).filter(|c| c & mask == 0) {
                out[(r, c)] = (0..patterns)
                    .map(|p| {
                        let b = scatter(p, qubits);
                        self.m[(r | b, c | b)]
                    })
                    .sum();
            }
        }
        self.m = out;
    }

    pub fn apply_program(&mut self, p: &Program) {
        for step in &p.steps {
            match step {
                ProgramStep::Layer(layer) => {
                    for g in layer {
                        self.apply_gate(p.gate_set.gate(g.kind), g.qubits());
                    }
                }
                ProgramStep::Reset(qs) => self.reset(qs),
            }
        }
    }

    /// Reduced state on `keep` (output qubit `k` is `keep[k]`).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix, SimError> {
        let (keep_pos, traced_pos) = split_positions(self.n, keep)?;
        let dk = 1usize << keep.len();
        let dt = 1usize << traced_pos.len();
        let mut m = Matrix::zeros(dk, dk);
        for r in 0..dk {
            let rb = scatter(r, &keep_pos);
            for c in 0..dk {
                let cb = scatter(c, &keep_pos);
                m[(r, c)] = (0..dt)
                    .map(|t| {
                        let tb = scatter(t, &traced_pos);
                        self.m[(rb | tb, cb | tb)]
                    })
                    .sum();
            }
        }
        Ok(DensityMatrix { n: keep.len(), m })
    }
}

/// `½‖a − b‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64, SimError> {
    if a.m.nrows() != b.m.nrows() {
        return Err(SimError::DimMismatch(a.m.nrows(), b.m.nrows()));
    }
    let diff = &a.m - &b.m;
    let sum: f64 = hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum();
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Trace distance between pure states, `√(1 − |⟨a|b⟩|²)`.
pub fn pure_trace_distance(a: &StateVector, b: &StateVector) -> f64 {
    (1.0 - a.inner(b).norm_sqr()).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_circuit;
    use crate::gates::GateSet;
    use crate::pauli::Pauli;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn circ(text: &str) -> Circuit {
        parse_circuit(text, &GateSet::clifford_t()).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Kronecker product of gate matrices per layer, built independently of
    /// the in-place kernel: the full operator of one gate is assembled entry by
    /// entry from the local matrix.
    fn dense_gate(n: usize, def: &GateDef, qubits: &[usize]) -> Matrix {
        let dim = 1usize << n;
        let local = |b: usize| -> usize {
            qubits.iter().fold(0, |acc, &q| (acc << 1) | ((b >> q) & 1))
        };
        let mask = qubits.iter().fold(0usize, |m, &q| m | (1 << q));
        Matrix::from_fn(dim, dim, |r, cc| {
            if r & !mask != cc & !mask {
                ZERO
            } else {
                def.entry(local(r), local(cc))
            }
        })
    }

    fn dense_unitary(c: &Circuit) -> Matrix {
        let dim = 1usize << c.n_qubits();
        let mut u = Matrix::identity(dim, dim);
        for layer in c.layers() {
            for g in layer {
                u = dense_gate(c.n_qubits(), c.gate_set().gate(g.kind), g.qubits()) * u;
            }
        }
        u
    }

    #[test]
    fn unitary_examples() {
        let id = unitary_of(&circ("qubits 1")).unwrap();
        assert_eq!(id.matrix(), &Matrix::identity(2, 2));
        let h = unitary_of(&circ("qubits 1\nh 0")).unwrap();
        let r = FRAC_1_SQRT_2;
        let expect = Matrix::from_row_slice(2, 2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)]);
        assert_abs_diff_eq!((h.matrix() - expect).norm(), 0.0, epsilon = 1e-15);
        let hh = unitary_of(&circ("qubits 1\nh 0\nh 0")).unwrap();
        assert!(hh.max_abs_diff(&UnitaryMatrix::identity(1)) < 1e-12);
    }

    #[test]
    fn cx_is_textbook() {
        let u = unitary_of(&circ("qubits 2\ncx 0 1")).unwrap();
        // |q1 q0⟩ = |01⟩ (index 1, control set) maps to index 3.
        assert_eq!(u.matrix()[(3, 1)], ONE);
        assert_eq!(u.matrix()[(1, 1)], ZERO);
        assert_eq!(u.matrix()[(2, 2)], ONE);
        assert!(unitary_of_capped(&circ("qubits 2"), 1).is_err());
    }

    #[test]
    fn heisenberg_examples() {
        let z: PauliString = "Z".parse().unwrap();
        let o = heisenberg(&circ("qubits 1\nh 0"), &z).unwrap();
        assert_eq!(o, ObservableSum::single(1, PauliKey::single(0, Pauli::X), 1.0));
        let iz: PauliString = "IZ".parse().unwrap();
        let o = heisenberg(&circ("qubits 2\ncx 0 1"), &iz).unwrap();
        assert_eq!(o.terms(), &[("ZZ".parse::<PauliString>().unwrap().key(), 1.0)]);
        let x: PauliString = "X".parse().unwrap();
        let o = heisenberg(&circ("qubits 1\nt 0"), &x).unwrap();
        // Oracle: decompose T† X T densely.
        let u = unitary_of(&circ("qubits 1\nt 0")).unwrap();
        let dense = u.matrix().adjoint() * pauli_key_matrix(x.key(), &[0]) * u.matrix();
        let oracle = pauli_decompose(&dense, 1);
        assert_eq!(o.terms().len(), 2);
        for (&(k1, c1), &(k2, c2)) in o.terms().iter().zip(oracle.terms()) {
            assert_eq!(k1, k2);
            assert_abs_diff_eq!(c1, c2, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(o.coefficient(PauliKey::single(0, Pauli::X)), FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(o.coefficient(PauliKey::single(0, Pauli::Y)), -FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_examples() {
        let rho = StateVector::product(&[[c(0.6, 0.0), c(0.0, 0.8)]]).to_density();
        let joint = StateVector::product(&[[c(0.6, 0.0), c(0.0, 0.8)], [ONE, ZERO]]).to_density();
        let red = joint.partial_trace(&[0]).unwrap();
        assert_abs_diff_eq!((red.matrix() - rho.matrix()).norm(), 0.0, epsilon = 1e-12);

        let r = FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![c(r, 0.0), ZERO, ZERO, c(r, 0.0)]).unwrap();
        let red = bell.to_density().partial_trace(&[1]).unwrap();
        let half = Matrix::identity(2, 2) * c(0.5, 0.0);
        assert_abs_diff_eq!((red.matrix() - &half).norm(), 0.0, epsilon = 1e-12);

        // GHZ3 keeping qubits {0, 2}: oracle by direct index contraction.
        let mut amps = vec![ZERO; 8];
        amps[0] = c(r, 0.0);
        amps[7] = c(r, 0.0);
        let ghz = StateVector::from_amplitudes(amps).unwrap();
        let red = ghz.to_density().partial_trace(&[0, 2]).unwrap();
        let mut expect = Matrix::zeros(4, 4);
        expect[(0, 0)] = c(0.5, 0.0);
        expect[(3, 3)] = c(0.5, 0.0);
        assert_abs_diff_eq!((red.matrix() - &expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((ghz.reduced(&[0, 2]).unwrap().matrix() - &expect).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(ghz.to_density().partial_trace(&[]), Err(SimError::EmptyKeep));
    }

    #[test]
    fn inf_norm_examples() {
        let x = PauliKey::single(0, Pauli::X);
        let y = PauliKey::single(0, Pauli::Y);
        assert_abs_diff_eq!(inf_norm(&ObservableSum::single(3, x, 1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(inf_norm(&ObservableSum::zero(3)).unwrap(), 0.0);
        let o = ObservableSum::from_terms(1, vec![(x, FRAC_1_SQRT_2), (y, FRAC_1_SQRT_2)]);
        assert_abs_diff_eq!(inf_norm(&o).unwrap(), 1.0, epsilon = 1e-12);
        let wide = ObservableSum::single(13, PauliKey { x: (1 << 13) - 1, z: 0 }, 1.0);
        assert!(matches!(inf_norm(&wide), Err(SimError::WidthOverCap { .. })));
    }

    #[test]
    fn trace_distance_examples() {
        let zero = StateVector::basis(1, 0).to_density();
        let one = StateVector::basis(1, 1).to_density();
        let r = FRAC_1_SQRT_2;
        let plus = StateVector::product(&[[c(r, 0.0), c(r, 0.0)]]).to_density();
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &plus).unwrap(), FRAC_1_SQRT_2, epsilon = 1e-12);
        let two = StateVector::zero(2).to_density();
        assert!(trace_distance(&zero, &two).is_err());
    }

    #[test]
    fn reset_prepares_zero() {
        let r = FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![c(r, 0.0), ZERO, ZERO, c(r, 0.0)]).unwrap();
        let mut rho = bell.to_density();
        rho.reset(&[1]);
        let red = rho.partial_trace(&[1]).unwrap();
        assert_abs_diff_eq!(red.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        let kept = rho.partial_trace(&[0]).unwrap();
        assert_abs_diff_eq!(kept.purity(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn register_swap_and_tensor() {
        let x = unitary_of(&circ("qubits 1\nx 0")).unwrap();
        let id = UnitaryMatrix::identity(1);
        let xi = UnitaryMatrix::tensor(&x, &id);
        let s = UnitaryMatrix::register_swap(1);
        let ix = UnitaryMatrix::tensor(&id, &x);
        assert!(s.mul(&xi).mul(&s).max_abs_diff(&ix) < 1e-15);
        assert!(xi.max_abs_diff(&unitary_of(&circ("qubits 2\nx 0")).unwrap()) < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kernel_matches_kron(seed in any::<u64>(), n in 1usize..5, depth in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Circuit::random(&mut rng, n, depth, &GateSet::clifford_t(), false);
            let u = unitary_of(&c).unwrap();
            prop_assert!((u.matrix() - dense_unitary(&c)).norm() < 1e-12);
            prop_assert!(unitarity_defect(u.matrix()) < 1e-10);
        }

        #[test]
        fn composition_is_matrix_product(seed in any::<u64>(), n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Circuit::random(&mut rng, n, 3, &GateSet::clifford_t(), false);
            let b = Circuit::random(&mut rng, n, 3, &GateSet::clifford_t(), false);
            let ab = unitary_of(&a.compose(&b).unwrap()).unwrap();
            let prod = unitary_of(&b).unwrap().mul(&unitary_of(&a).unwrap());
            prop_assert!(ab.max_abs_diff(&prod) < 1e-12);
            if a.depth() >= 2 {
                let (l, r) = a.cut(crate::circuit::CutRatio::HALF).unwrap();
                let whole = unitary_of(&l.compose(&r).unwrap()).unwrap();
                prop_assert!(whole.max_abs_diff(&unitary_of(&a).unwrap()) < 1e-12);
            }
        }

        #[test]
        fn clifford_path_matches_dense(seed in any::<u64>(), n in 1usize..7, depth in 0usize..9, px in any::<u64>(), pz in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Circuit::random(&mut rng, n, depth, &GateSet::clifford_t(), true);
            let mask = (1u64 << n) - 1;
            let p = PauliString::from_key(n, PauliKey { x: px & mask, z: pz & mask }, 0).unwrap();
            let fast = heisenberg(&c, &p).unwrap();
            let u = unitary_of(&c).unwrap();
            let qubits: Vec<usize> = (0..n).collect();
            let dense = u.matrix().adjoint() * pauli_key_matrix(p.key(), &qubits) * u.matrix();
            let oracle = pauli_decompose(&dense, n);
            prop_assert_eq!(fast.terms().len(), 1);
            prop_assert_eq!(oracle.terms().len(), 1);
            prop_assert_eq!(fast.terms()[0].0, oracle.terms()[0].0);
            prop_assert!((fast.terms()[0].1 - oracle.terms()[0].1).abs() < 1e-12);
        }

        #[test]
        fn heisenberg_preserves_norm(seed in any::<u64>(), n in 1usize..5, q in 0usize..4, p in 1u8..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Circuit::random(&mut rng, n, 3, &GateSet::clifford_t(), false);
            let ps = PauliString::single(n, q % n, Pauli::from_index(p)).unwrap();
            let o = heisenberg(&c, &ps).unwrap();
            prop_assert!((inf_norm(&o).unwrap() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn reduced_states_are_states(seed in any::<u64>(), n in 2usize..5, keep_mask in 1u32..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Circuit::random(&mut rng, n, 3, &GateSet::clifford_t(), false);
            let mut psi = StateVector::zero(n);
            psi.apply_circuit(&c);
            let keep: Vec<usize> = (0..n).filter(|q| keep_mask >> q & 1 == 1).collect();
            prop_assume!(!keep.is_empty());
            let red = psi.to_density().partial_trace(&keep).unwrap();
            prop_assert!((red.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(red.min_eigenvalue() > -1e-10);
            let fast = psi.reduced(&keep).unwrap();
            prop_assert!((fast.matrix() - red.matrix()).norm() < 1e-12);
        }
    }
}
