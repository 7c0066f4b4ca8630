//! Layered circuit IR, cuts, windows, and lightcones.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{GateId, GateSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("circuit must have at least one qubit")]
    NoQubits,
    #[error("gate `{mnemonic}` expects {expected} qubit(s), got {got}")]
    ArityMismatch {
        mnemonic: String,
        expected: usize,
        got: usize,
    },
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("gate repeats qubit {0}")]
    RepeatedQubit(usize),
    #[error("qubit {qubit} appears twice in layer {layer}")]
    DuplicateQubitInLayer { qubit: usize, layer: usize },
    #[error("circuit of depth {0} cannot be cut (needs depth >= 2)")]
    NotCuttable(usize),
    #[error("cut ratio {0}/{1} is not in (0, 1)")]
    BadRatio(u64, u64),
    #[error("window [{t_i}, {t_f}) invalid for depth {depth}")]
    BadWindow { t_i: usize, t_f: usize, depth: usize },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("gate set mismatch: `{0}` vs `{1}`")]
    GateSetMismatch(String, String),
    #[error("gate `{0}` has no inverse in the gate set")]
    NoInverse(String),
}

/// One gate application: a gate id and its ordered qubits.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gate {
    pub kind: GateId,
    qubits: [usize; 2],
    arity: u8,
}

impl Gate {
    pub fn one(kind: GateId, q: usize) -> Self {
        Self {
            kind,
            qubits: [q, usize::MAX],
            arity: 1,
        }
    }

    pub fn two(kind: GateId, q0: usize, q1: usize) -> Self {
        Self {
            kind,
            qubits: [q0, q1],
            arity: 2,
        }
    }

    pub fn new(kind: GateId, qubits: &[usize]) -> Self {
        match qubits {
            [q] => Self::one(kind, *q),
            [a, b] => Self::two(kind, *a, *b),
            _ => panic!("gates act on one or two qubits"),
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.arity as usize]
    }

    pub fn mask(&self) -> u128 {
        self.qubits().iter().fold(0u128, |m, &q| m | (1u128 << q))
    }

    pub fn touches(&self, q: usize) -> bool {
        self.qubits().contains(&q)
    }

    /// Same gate with qubits renamed by `map`.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut g = *self;
        for k in 0..self.arity as usize {
            g.qubits[k] = map(self.qubits[k]);
        }
        g
    }
}

pub type Layer = Vec<Gate>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// A layered circuit over a finite gate set. Immutable once built.
#[derive(Clone)]
pub struct Circuit {
    n_qubits: usize,
    gate_set: Arc<GateSet>,
    layers: Vec<Layer>,
}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Circuit(n={}, depth={}, set={})", self.n_qubits, self.depth(), self.gate_set.name())
    }
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.n_qubits == other.n_qubits
            && self.gate_set.name() == other.gate_set.name()
            && self.layers == other.layers
    }
}

impl Circuit {
    /// Identity circuit (no layers).
    pub fn identity(n_qubits: usize, gate_set: Arc<GateSet>) -> Self {
        Self {
            n_qubits,
            gate_set,
            layers: Vec::new(),
        }
    }

    pub fn new(
        n_qubits: usize,
        gate_set: Arc<GateSet>,
        layers: Vec<Layer>,
    ) -> Result<Self, CircuitError> {
        if n_qubits == 0 {
            return Err(CircuitError::NoQubits);
        }
        let mut c = Self::identity(n_qubits, gate_set);
        for layer in layers {
            c.push_layer(layer)?;
        }
        Ok(c)
    }

    pub(crate) fn check_gate(&self, gate: &Gate) -> Result<(), CircuitError> {
        let def = self.gate_set.gate(gate.kind);
        if def.arity != gate.qubits().len() {
            return Err(CircuitError::ArityMismatch {
                mnemonic: def.mnemonic.clone(),
                expected: def.arity,
                got: gate.qubits().len(),
            });
        }
        for &q in gate.qubits() {
            if q >= self.n_qubits {
                return Err(CircuitError::QubitOutOfRange {
                    qubit: q,
                    n: self.n_qubits,
                });
            }
        }
        if let [a, b] = gate.qubits() {
            if a == b {
                return Err(CircuitError::RepeatedQubit(*a));
            }
        }
        Ok(())
    }

    /// Append a layer, validating gates and pairwise-disjoint supports.
    pub fn push_layer(&mut self, layer: Layer) -> Result<(), CircuitError> {
        let mut used = vec![false; self.n_qubits];
        for g in &layer {
            self.check_gate(g)?;
            for &q in g.qubits() {
                if std::mem::replace(&mut used[q], true) {
                    return Err(CircuitError::DuplicateQubitInLayer {
                        qubit: q,
                        layer: self.layers.len(),
                    });
                }
            }
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gate_set(&self) -> &Arc<GateSet> {
        &self.gate_set
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.layers.iter().flatten()
    }

    pub fn is_clifford(&self) -> bool {
        self.gates().all(|g| self.gate_set.is_clifford(g.kind))
    }

    pub fn mnemonic(&self, gate: &Gate) -> &str {
        &self.gate_set.gate(gate.kind).mnemonic
    }

    fn with_layers(&self, layers: Vec<Layer>) -> Self {
        Self {
            n_qubits: self.n_qubits,
            gate_set: self.gate_set.clone(),
            layers,
        }
    }

    /// `self` followed in time by `next`.
    pub fn compose(&self, next: &Circuit) -> Result<Circuit, CircuitError> {
        if self.n_qubits != next.n_qubits {
            return Err(CircuitError::WidthMismatch(self.n_qubits, next.n_qubits));
        }
        if self.gate_set.name() != next.gate_set.name() {
            return Err(CircuitError::GateSetMismatch(
                self.gate_set.name().to_string(),
                next.gate_set.name().to_string(),
            ));
        }
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Ok(self.with_layers(layers))
    }

    /// Layers `[start, end)` as a circuit of the same width.
    pub fn slice(&self, start: usize, end: usize) -> Circuit {
        self.with_layers(self.layers[start..end].to_vec())
    }

    /// Split into the first `⌈θ·depth⌉` layers and the rest; the left part is
    /// clamped to `depth − 1` so both halves are non-empty.
    pub fn cut(&self, theta: CutRatio) -> Result<(Circuit, Circuit), CircuitError> {
        let d = self.depth();
        if d < 2 {
            return Err(CircuitError::NotCuttable(d));
        }
        let left = theta.left_len(d);
        Ok((self.slice(0, left), self.slice(left, d)))
    }

    /// `[0, t_i)`, `[t_i, t_f)`, `[t_f, depth)`.
    pub fn window(&self, t_i: usize, t_f: usize) -> Result<(Circuit, Circuit, Circuit), CircuitError> {
        let d = self.depth();
        if t_i >= t_f || t_f > d {
            return Err(CircuitError::BadWindow { t_i, t_f, depth: d });
        }
        Ok((self.slice(0, t_i), self.slice(t_i, t_f), self.slice(t_f, d)))
    }

    /// Qubits causally connected to `qubits` through the gates. `Backward`
    /// collects every qubit that can influence `qubits` at the output (the
    /// support of `U† P U` for `P` on `qubits`); `Forward` the qubits that the
    /// inputs on `qubits` can reach.
    pub fn lightcone(&self, qubits: &BTreeSet<usize>, direction: Direction) -> BTreeSet<usize> {
        let mut cone = vec![false; self.n_qubits];
        for &q in qubits {
            if q < self.n_qubits {
                cone[q] = true;
            }
        }
        let mut visit = |layer: &Layer| {
            for g in layer {
                if g.qubits().iter().any(|&q| cone[q]) {
                    for &q in g.qubits() {
                        cone[q] = true;
                    }
                }
            }
        };
        match direction {
            Direction::Backward => self.layers.iter().rev().for_each(&mut visit),
            Direction::Forward => self.layers.iter().for_each(&mut visit),
        }
        let mut out: BTreeSet<usize> = (0..self.n_qubits).filter(|&q| cone[q]).collect();
        out.extend(qubits.iter().copied());
        out
    }

    /// The gates inside the backward causal cone of `qubits`, everything else
    /// dropped. Conjugating an observable supported on `qubits` by this circuit
    /// gives the same result as by `self`.
    pub fn backward_cone_circuit(&self, qubits: &BTreeSet<usize>) -> Circuit {
        let mut cone = vec![false; self.n_qubits];
        for &q in qubits {
            cone[q] = true;
        }
        let mut layers: Vec<Layer> = Vec::with_capacity(self.depth());
        for layer in self.layers.iter().rev() {
            let mut kept = Vec::new();
            for g in layer {
                if g.qubits().iter().any(|&q| cone[q]) {
                    for &q in g.qubits() {
                        cone[q] = true;
                    }
                    kept.push(*g);
                }
            }
            layers.push(kept);
        }
        layers.reverse();
        self.with_layers(layers)
    }

    /// Restrict to `qubits` (sorted), renaming them `0..k`. Every gate must lie
    /// inside `qubits`; gates that do not are an error.
    pub fn restrict(&self, qubits: &[usize]) -> Result<Circuit, CircuitError> {
        let mut map = vec![usize::MAX; self.n_qubits];
        for (local, &q) in qubits.iter().enumerate() {
            map[q] = local;
        }
        let mut layers = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.len());
            for g in layer {
                for &q in g.qubits() {
                    if map[q] == usize::MAX {
                        return Err(CircuitError::QubitOutOfRange {
                            qubit: q,
                            n: qubits.len(),
                        });
                    }
                }
                out.push(g.relabel(|q| map[q]));
            }
            layers.push(out);
        }
        Circuit::new(qubits.len(), self.gate_set.clone(), layers)
    }

    /// Embed into a wider register with qubit `q` renamed `map(q)` and a
    /// (possibly different) gate set that contains every gate used here.
    pub fn embed(
        &self,
        n_qubits: usize,
        gate_set: Arc<GateSet>,
        map: impl Fn(usize) -> usize,
    ) -> Result<Circuit, CircuitError> {
        let mut layers = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.len());
            for g in layer {
                let mnemonic = self.mnemonic(g);
                let kind = gate_set.lookup(mnemonic).ok_or_else(|| {
                    CircuitError::GateSetMismatch(
                        self.gate_set.name().to_string(),
                        gate_set.name().to_string(),
                    )
                })?;
                out.push(Gate {
                    kind,
                    ..g.relabel(&map)
                });
            }
            layers.push(out);
        }
        Circuit::new(n_qubits, gate_set, layers)
    }

    /// The adjoint circuit: layers reversed, each gate replaced by its inverse.
    pub fn inverse(&self) -> Result<Circuit, CircuitError> {
        let mut layers = Vec::with_capacity(self.depth());
        for layer in self.layers.iter().rev() {
            let mut out = Vec::with_capacity(layer.len());
            for g in layer {
                let inv = self
                    .gate_set
                    .inverse_of(g.kind)
                    .ok_or_else(|| CircuitError::NoInverse(self.mnemonic(g).to_string()))?;
                out.push(Gate { kind: inv, ..*g });
            }
            layers.push(out);
        }
        Ok(self.with_layers(layers))
    }

    /// Random layered circuit: each layer visits the qubits in random order and
    /// places a random gate from the set (Clifford gates only if requested),
    /// leaving a qubit idle with probability 1/5 for one-qubit draws.
    pub fn random(
        rng: &mut impl Rng,
        n: usize,
        depth: usize,
        gate_set: &Arc<GateSet>,
        clifford_only: bool,
    ) -> Circuit {
        let ids = gate_set.search_gates(clifford_only);
        let mut c = Circuit::identity(n, gate_set.clone());
        for _ in 0..depth {
            let mut free: Vec<usize> = (0..n).collect();
            let mut layer = Vec::new();
            while !free.is_empty() {
                let g = ids[rng.gen_range(0..ids.len())];
                let a = free.swap_remove(rng.gen_range(0..free.len()));
                if gate_set.gate(g).arity == 2 {
                    if free.is_empty() {
                        continue;
                    }
                    let b = free.swap_remove(rng.gen_range(0..free.len()));
                    layer.push(Gate::two(g, a, b));
                } else if rng.gen_bool(0.8) {
                    layer.push(Gate::one(g, a));
                }
            }
            c.push_layer(layer).expect("disjoint by construction");
        }
        c
    }

    /// Repack gates as-soon-as-possible; never increases depth.
    pub fn compacted(&self) -> Circuit {
        let mut ready = vec![0usize; self.n_qubits];
        let mut layers: Vec<Layer> = Vec::new();
        for g in self.gates() {
            let t = g.qubits().iter().map(|&q| ready[q]).max().unwrap_or(0);
            if layers.len() <= t {
                layers.resize_with(t + 1, Vec::new);
            }
            layers[t].push(*g);
            for &q in g.qubits() {
                ready[q] = t + 1;
            }
        }
        self.with_layers(layers)
    }
}

/// A rational cut ratio `num/den` in `(0, 1)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRatio {
    pub num: u64,
    pub den: u64,
}

impl CutRatio {
    pub const HALF: CutRatio = CutRatio { num: 1, den: 2 };

    pub fn new(num: u64, den: u64) -> Result<Self, CircuitError> {
        if den == 0 || num == 0 || num >= den {
            return Err(CircuitError::BadRatio(num, den));
        }
        Ok(Self { num, den })
    }

    /// Parse `"1/3"` or a decimal such as `"0.25"`.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some((a, b)) = s.split_once('/') {
            return Self::new(a.trim().parse().ok()?, b.trim().parse().ok()?).ok();
        }
        let t = s.trim();
        let digits = t.split_once('.').map(|(_, f)| f.len()).unwrap_or(0) as u32;
        let den = 10u64.checked_pow(digits)?;
        let num = (t.parse::<f64>().ok()? * den as f64).round() as u64;
        let g = gcd(num, den);
        Self::new(num / g.max(1), den / g.max(1)).ok()
    }

    /// `⌈θ·d⌉` clamped to `[1, d − 1]`.
    pub fn left_len(self, d: usize) -> usize {
        let raw = (self.num as u128 * d as u128).div_ceil(self.den as u128) as usize;
        raw.clamp(1, d.saturating_sub(1).max(1))
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for CutRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Address of a sub-circuit in the recursive cut tree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinaryLabel(String);

impl BinaryLabel {
    pub fn root() -> Self {
        Self(String::new())
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.chars().all(|c| c == '0' || c == '1').then(|| Self(s.to_string()))
    }

    pub fn child(&self, bit: bool) -> Self {
        let mut s = self.0.clone();
        s.push(if bit { '1' } else { '0' });
        Self(s)
    }

    pub fn extend(&self, suffix: &str) -> Self {
        debug_assert!(suffix.chars().all(|c| c == '0' || c == '1'));
        Self(format!("{}{}", self.0, suffix))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_prefix_of(&self, other: &BinaryLabel) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Nominal sub-circuit depth `⌈2^{−|l|}·d⌉` under half cuts.
    pub fn nominal_depth(&self, d: usize) -> usize {
        if self.len() >= usize::BITS as usize {
            return 1.min(d);
        }
        d.div_ceil(1usize << self.len())
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "ε")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// One time step of a [`Program`].
#[derive(Clone, Debug, PartialEq)]
pub enum ProgramStep {
    Layer(Layer),
    /// Trace out the listed qubits and re-prepare them in `|0⟩`.
    Reset(Vec<usize>),
}

/// A circuit interleaved with qubit resets; the output form of compression.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub n_qubits: usize,
    pub gate_set: Arc<GateSet>,
    pub steps: Vec<ProgramStep>,
}

impl Program {
    pub fn from_circuit(c: &Circuit) -> Self {
        Self {
            n_qubits: c.n_qubits(),
            gate_set: c.gate_set().clone(),
            steps: c.layers().iter().cloned().map(ProgramStep::Layer).collect(),
        }
    }

    /// Each layer and each reset counts as one time step.
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn reset_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, ProgramStep::Reset(_)))
            .count()
    }

    /// The underlying circuit when the program contains no resets.
    pub fn as_circuit(&self) -> Option<Circuit> {
        let mut layers = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            match s {
                ProgramStep::Layer(l) => layers.push(l.clone()),
                ProgramStep::Reset(_) => return None,
            }
        }
        Circuit::new(self.n_qubits, self.gate_set.clone(), layers).ok()
    }
}
