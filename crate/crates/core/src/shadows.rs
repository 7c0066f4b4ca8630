//! Randomized-measurement datasets and the Pauli-coefficient estimator.
//!
//! A sample pairs a random product stabilizer input with a random per-qubit
//! Pauli-basis measurement of the circuit output. Inverting the single-qubit
//! measurement channel on both sides gives unbiased estimates of the Pauli
//! coefficients `Tr(O Q)/2^n` of `O = U† P_i U`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;
use crate::gates::GateSet;
use crate::pauli::{ObservableSum, Pauli, PauliKey};
use crate::sim::{StateVector, DEFAULT_WIDTH_CAP};

/// Widest register whose `6^n` inputs are enumerated in exact mode.
pub const EXACT_ENUMERATION_MAX: usize = 8;

/// Inputs drawn in exact mode when the register is too wide to enumerate.
pub const EXACT_SAMPLED_INPUTS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("width {width} exceeds the simulation cap of {cap} qubits")]
    WidthOverCap { width: usize, cap: usize },
    #[error("Pauli support {support} exceeds k_max = {k_max}")]
    SupportTooLarge { support: usize, k_max: usize },
    #[error("estimator enumeration needs {needed} steps, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("payload count {got} does not match {expected} samples")]
    PayloadMismatch { got: usize, expected: usize },
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One of the six single-qubit stabilizer states.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum StabilizerAxis {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl StabilizerAxis {
    pub const ALL: [StabilizerAxis; 6] = [
        StabilizerAxis::Zero,
        StabilizerAxis::One,
        StabilizerAxis::Plus,
        StabilizerAxis::Minus,
        StabilizerAxis::PlusI,
        StabilizerAxis::MinusI,
    ];

    pub fn code(self) -> char {
        match self {
            StabilizerAxis::Zero => '0',
            StabilizerAxis::One => '1',
            StabilizerAxis::Plus => '+',
            StabilizerAxis::Minus => '-',
            StabilizerAxis::PlusI => 'r',
            StabilizerAxis::MinusI => 'l',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == c)
    }

    /// The Pauli this state is an eigenstate of.
    pub fn axis(self) -> Pauli {
        match self {
            StabilizerAxis::Zero | StabilizerAxis::One => Pauli::Z,
            StabilizerAxis::Plus | StabilizerAxis::Minus => Pauli::X,
            StabilizerAxis::PlusI | StabilizerAxis::MinusI => Pauli::Y,
        }
    }

    /// Eigenvalue `±1` for [`Self::axis`].
    pub fn sign(self) -> i8 {
        match self {
            StabilizerAxis::Zero | StabilizerAxis::Plus | StabilizerAxis::PlusI => 1,
            _ => -1,
        }
    }

    /// Eigenstate of `p` with eigenvalue `(-1)^bit`.
    pub fn eigenstate(p: Pauli, bit: bool) -> Self {
        match (p, bit) {
            (Pauli::X, false) => StabilizerAxis::Plus,
            (Pauli::X, true) => StabilizerAxis::Minus,
            (Pauli::Y, false) => StabilizerAxis::PlusI,
            (Pauli::Y, true) => StabilizerAxis::MinusI,
            (_, false) => StabilizerAxis::Zero,
            (_, true) => StabilizerAxis::One,
        }
    }

    /// `⟨ψ|P|ψ⟩ ∈ {−1, 0, 1}`; identity gives 1.
    pub fn expectation(self, p: Pauli) -> i8 {
        if p == Pauli::I {
            1
        } else if p == self.axis() {
            self.sign()
        } else {
            0
        }
    }

    pub fn amplitudes(self) -> [C64; 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re, im| C64::new(re, im);
        match self {
            StabilizerAxis::Zero => [c(1.0, 0.0), c(0.0, 0.0)],
            StabilizerAxis::One => [c(0.0, 0.0), c(1.0, 0.0)],
            StabilizerAxis::Plus => [c(r, 0.0), c(r, 0.0)],
            StabilizerAxis::Minus => [c(r, 0.0), c(-r, 0.0)],
            StabilizerAxis::PlusI => [c(r, 0.0), c(0.0, r)],
            StabilizerAxis::MinusI => [c(r, 0.0), c(0.0, -r)],
        }
    }
}

/// Product state of the given axes; `axes[k]` is qubit `k`.
pub fn product_state(axes: &[StabilizerAxis]) -> StateVector {
    let qs: Vec<[C64; 2]> = axes.iter().map(|a| a.amplitudes()).collect();
    StateVector::product(&qs)
}

/// Input index `idx` in the base-6 enumeration of `n`-qubit product inputs
/// (qubit 0 is the least significant digit).
pub fn enumerated_input(n: usize, mut idx: usize) -> Vec<StabilizerAxis> {
    (0..n)
        .map(|_| {
            let a = StabilizerAxis::ALL[idx % 6];
            idx /= 6;
            a
        })
        .collect()
}

/// Seed for a named sub-task: FNV-1a of `label` folded into `seed`, then one
/// splitmix64 round. Independent of scheduling, so parallel runs reproduce
/// sequential ones.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadowMode {
    Sampled,
    Exact,
}

impl fmt::Display for ShadowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShadowMode::Sampled => "sampled",
            ShadowMode::Exact => "exact",
        })
    }
}

impl FromStr for ShadowMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sampled" => Ok(ShadowMode::Sampled),
            "exact" => Ok(ShadowMode::Exact),
            _ => Err(format!("unknown mode `{s}` (expected exact|sampled)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Measurement {
    /// Per-qubit measurement basis and the observed eigenstate.
    Sampled {
        basis: Vec<Pauli>,
        outcome: Vec<StabilizerAxis>,
    },
    /// `⟨ψ|U† P_i U|ψ⟩` for qubit-major `i` and `P ∈ {X, Y, Z}`.
    Exact { payloads: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowSample {
    pub input: Vec<StabilizerAxis>,
    pub measurement: Measurement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowDataset {
    pub n: usize,
    pub samples: Vec<ShadowSample>,
    pub seed: u64,
    pub mode: ShadowMode,
}

fn check_width(n: usize) -> Result<(), ShadowError> {
    if n > DEFAULT_WIDTH_CAP {
        return Err(ShadowError::WidthOverCap {
            width: n,
            cap: DEFAULT_WIDTH_CAP,
        });
    }
    Ok(())
}

/// Sample `N` (input, measurement) pairs with Born-rule outcomes.
pub fn generate_dataset(c: &Circuit, n_samples: usize, seed: u64) -> Result<ShadowDataset, ShadowError> {
    let n = c.n_qubits();
    check_width(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = BasisRotations::new();
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let input: Vec<StabilizerAxis> = (0..n).map(|_| StabilizerAxis::ALL[rng.gen_range(0..6)]).collect();
        let basis: Vec<Pauli> = (0..n).map(|_| Pauli::XYZ[rng.gen_range(0..3)]).collect();
        let mut psi = product_state(&input);
        psi.apply_circuit(c);
        for (q, &b) in basis.iter().enumerate() {
            rot.rotate_to_z(&mut psi, q, b);
        }
        let u: f64 = rng.gen();
        let index = sample_index(psi.amplitudes(), u);
        let outcome = basis
            .iter()
            .enumerate()
            .map(|(q, &b)| StabilizerAxis::eigenstate(b, index >> q & 1 == 1))
            .collect();
        samples.push(ShadowSample {
            input,
            measurement: Measurement::Sampled { basis, outcome },
        });
    }
    Ok(ShadowDataset {
        n,
        samples,
        seed,
        mode: ShadowMode::Sampled,
    })
}

/// Exact payloads for every product stabilizer input when `n ≤ 8`; above
/// that, for [`EXACT_SAMPLED_INPUTS`] seeded random inputs.
pub fn generate_exact_dataset(c: &Circuit, seed: u64) -> Result<ShadowDataset, ShadowError> {
    let n = c.n_qubits();
    check_width(n)?;
    let inputs: Vec<Vec<StabilizerAxis>> = if n <= EXACT_ENUMERATION_MAX {
        (0..6usize.pow(n as u32)).map(|i| enumerated_input(n, i)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..EXACT_SAMPLED_INPUTS)
            .map(|_| (0..n).map(|_| StabilizerAxis::ALL[rng.gen_range(0..6)]).collect())
            .collect()
    };
    let samples = inputs
        .into_iter()
        .map(|input| {
            let mut psi = product_state(&input);
            psi.apply_circuit(c);
            ShadowSample {
                input,
                measurement: Measurement::Exact {
                    payloads: single_qubit_expectations(&psi),
                },
            }
        })
        .collect();
    Ok(ShadowDataset {
        n,
        samples,
        seed,
        mode: ShadowMode::Exact,
    })
}

/// `⟨X_i⟩, ⟨Y_i⟩, ⟨Z_i⟩` for every qubit, qubit-major.
fn single_qubit_expectations(psi: &StateVector) -> Vec<f64> {
    let n = psi.n_qubits();
    let amps = psi.amplitudes();
    let mut out = vec![0.0; 3 * n];
    for q in 0..n {
        let bit = 1usize << q;
        let (mut off, mut z) = (C64::new(0.0, 0.0), 0.0);
        for (i, a) in amps.iter().enumerate() {
            if i & bit == 0 {
                let b = amps[i | bit];
                off += a.conj() * b;
                z += a.norm_sqr() - b.norm_sqr();
            }
        }
        // With off = Σ a*·b: ⟨X⟩ = 2 Re off, ⟨Y⟩ = 2 Im off.
        out[3 * q] = 2.0 * off.re;
        out[3 * q + 1] = 2.0 * off.im;
        out[3 * q + 2] = z;
    }
    out
}

fn sample_index(amps: &[C64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Gates rotating the X or Y eigenbasis onto the computational basis, with
/// `|+⟩, |+i⟩ ↦ |0⟩`.
struct BasisRotations {
    set: std::sync::Arc<GateSet>,
    h: usize,
    sdg: usize,
}

impl BasisRotations {
    fn new() -> Self {
        let set = GateSet::clifford_t();
        let h = set.lookup("h").expect("h");
        let sdg = set.lookup("sdg").expect("sdg");
        Self { set, h, sdg }
    }

    fn rotate_to_z(&self, psi: &mut StateVector, q: usize, basis: Pauli) {
        match basis {
            Pauli::X => psi.apply_gate(self.set.gate(self.h), &[q]),
            Pauli::Y => {
                psi.apply_gate(self.set.gate(self.sdg), &[q]);
                psi.apply_gate(self.set.gate(self.h), &[q]);
            }
            _ => {}
        }
    }
}

/// `v = 3⟨φ_i|P|φ_i⟩` for a sampled outcome, or `⟨ψ|U†P_iU|ψ⟩` in exact mode.
pub fn pauli_payload(sample: &ShadowSample, i: usize, p: Pauli) -> f64 {
    match &sample.measurement {
        Measurement::Sampled { outcome, .. } => 3.0 * f64::from(outcome[i].expectation(p)),
        Measurement::Exact { payloads } => payloads[3 * i + p.index() as usize - 1],
    }
}

/// Payloads of every sample for target `(i, P)`.
pub fn payloads(ds: &ShadowDataset, i: usize, p: Pauli) -> Vec<f64> {
    ds.samples.iter().map(|s| pauli_payload(s, i, p)).collect()
}

/// `α̂_Q = mean_l v_l · Π_{j ∈ supp Q} 3⟨ψ_{l,j}|Q_j|ψ_{l,j}⟩`.
pub fn estimate_coefficient(
    ds: &ShadowDataset,
    payloads: &[f64],
    q: PauliKey,
    k_max: usize,
) -> Result<f64, ShadowError> {
    if payloads.len() != ds.samples.len() {
        return Err(ShadowError::PayloadMismatch {
            got: payloads.len(),
            expected: ds.samples.len(),
        });
    }
    if q.weight() > k_max {
        return Err(ShadowError::SupportTooLarge {
            support: q.weight(),
            k_max,
        });
    }
    let support = crate::pauli::mask_to_qubits(q.support_mask());
    let mut acc = 0.0;
    for (s, &v) in ds.samples.iter().zip(payloads) {
        if v == 0.0 {
            continue;
        }
        let mut w = v;
        for &j in &support {
            w *= 3.0 * f64::from(s.input[j].expectation(q.get(j)));
            if w == 0.0 {
                break;
            }
        }
        acc += w;
    }
    Ok(acc / ds.samples.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub k_max: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Coefficient cutoff; `None` means `ε/4` in sampled mode and
    /// [`EXACT_TAU`] in exact mode.
    pub tau: Option<f64>,
    /// Exponent constant `c` in the sample-size rule `2^{c·k}·ln(n/δ)/ε²`.
    pub sample_constant: f64,
    /// Upper bound on `samples × supports` visited by [`learn_observable`].
    pub budget: u128,
}

/// Cutoff used in exact mode, where estimates carry only float noise.
pub const EXACT_TAU: f64 = 1e-9;

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k_max: 4,
            epsilon: 0.05,
            delta: 0.1,
            tau: None,
            sample_constant: 1.0,
            budget: 2_000_000_000,
        }
    }
}

impl LearnConfig {
    pub fn tau_for(&self, mode: ShadowMode) -> f64 {
        self.tau.unwrap_or(match mode {
            ShadowMode::Sampled => self.epsilon / 4.0,
            ShadowMode::Exact => EXACT_TAU,
        })
    }

    /// `⌈2^{c·k_max}·ln(n/δ)/ε²⌉`, with `n` clamped below at 2.
    pub fn min_samples(&self, n: usize) -> usize {
        let n = n.max(2) as f64;
        let v = 2f64.powf(self.sample_constant * self.k_max as f64) * (n / self.delta).ln()
            / (self.epsilon * self.epsilon);
        v.ceil() as usize
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// Estimate every coefficient with support inside `candidate_qubits` and
/// weight at most `k_max`, keeping those above the cutoff.
///
/// For each sample and each support `S`, only the Pauli matching the input
/// axes on `S` has a nonzero weight, so one pass over subsets per sample
/// accumulates all estimates.
pub fn learn_observable(
    ds: &ShadowDataset,
    payloads: &[f64],
    cfg: &LearnConfig,
    candidate_qubits: &[usize],
) -> Result<ObservableSum, ShadowError> {
    if payloads.len() != ds.samples.len() {
        return Err(ShadowError::PayloadMismatch {
            got: payloads.len(),
            expected: ds.samples.len(),
        });
    }
    let m = candidate_qubits.len();
    let k_max = cfg.k_max.min(m);
    let subsets: u128 = (0..=k_max).map(|k| binomial(m, k)).sum();
    let needed = subsets * ds.samples.len() as u128;
    if needed > cfg.budget {
        return Err(ShadowError::BudgetExceeded {
            needed,
            budget: cfg.budget,
        });
    }
    let mut sums: HashMap<PauliKey, f64> = HashMap::new();
    let mut stack: Vec<(usize, PauliKey, f64)> = Vec::new();
    for (s, &v) in ds.samples.iter().zip(payloads) {
        if v == 0.0 {
            continue;
        }
        // Depth-first over subsets in increasing candidate order.
        stack.clear();
        stack.push((0, PauliKey::IDENTITY, v));
        while let Some((start, key, w)) = stack.pop() {
            *sums.entry(key).or_insert(0.0) += w;
            if key.weight() == k_max {
                continue;
            }
            for pos in (start..m).rev() {
                let q = candidate_qubits[pos];
                let a = s.input[q];
                let mut next = key;
                next.set(q, a.axis());
                stack.push((pos + 1, next, w * 3.0 * f64::from(a.sign())));
            }
        }
    }
    let inv = 1.0 / ds.samples.len().max(1) as f64;
    let tau = cfg.tau_for(ds.mode);
    let terms = sums
        .into_iter()
        .map(|(k, c)| (k, c * inv))
        .filter(|(_, c)| c.abs() > tau)
        .collect();
    Ok(ObservableSum::from_terms(ds.n, terms))
}

impl ShadowDataset {
    /// Text form: a header line, then one line per sample.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "shadow v1 n={} N={} seed={} mode={}\n",
            self.n,
            self.samples.len(),
            self.seed,
            self.mode
        );
        for s in &self.samples {
            out.extend(s.input.iter().map(|a| a.code()));
            match &s.measurement {
                Measurement::Sampled { basis, outcome } => {
                    out.push(' ');
                    out.extend(basis.iter().map(|p| p.symbol()));
                    out.push(' ');
                    out.extend(outcome.iter().map(|a| a.code()));
                }
                Measurement::Exact { payloads } => {
                    out.push_str(" =");
                    for v in payloads {
                        let _ = write!(out, " {v:?}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ShadowError> {
        let perr = |line: usize, message: &str| ShadowError::Parse {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let mut words = header.split_whitespace();
        if words.next() != Some("shadow") || words.next() != Some("v1") {
            return Err(perr(1, "expected `shadow v1`"));
        }
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| perr(1, "expected key=value"))?;
            fields.insert(k, v);
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| perr(1, &format!("missing `{k}`")));
        let n: usize = field("n")?.parse().map_err(|_| perr(1, "bad n"))?;
        let count: usize = field("N")?.parse().map_err(|_| perr(1, "bad N"))?;
        let seed: u64 = field("seed")?.parse().map_err(|_| perr(1, "bad seed"))?;
        let mode: ShadowMode = field("mode")?.parse().map_err(|e: String| perr(1, &e))?;

        let mut samples = Vec::with_capacity(count);
        for (idx, line) in lines {
            let ln = idx + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let codes = |s: &str| -> Result<Vec<StabilizerAxis>, ShadowError> {
                let v: Option<Vec<_>> = s.chars().map(StabilizerAxis::from_code).collect();
                v.filter(|v| v.len() == n).ok_or_else(|| perr(ln, "bad stabilizer codes"))
            };
            let input = codes(parts.first().copied().unwrap_or(""))?;
            let measurement = match mode {
                ShadowMode::Sampled => {
                    let [_, basis, outcome] = parts.as_slice() else {
                        return Err(perr(ln, "expected `<input> <basis> <outcome>`"));
                    };
                    let basis: Option<Vec<Pauli>> = basis
                        .chars()
                        .map(|c| Pauli::from_symbol(c).filter(|p| *p != Pauli::I))
                        .collect();
                    let basis = basis.filter(|b| b.len() == n).ok_or_else(|| perr(ln, "bad basis"))?;
                    let outcome = codes(outcome)?;
                    if basis.iter().zip(&outcome).any(|(b, o)| o.axis() != *b) {
                        return Err(perr(ln, "outcome axis differs from basis"));
                    }
                    Measurement::Sampled { basis, outcome }
                }
                ShadowMode::Exact => {
                    if parts.get(1) != Some(&"=") || parts.len() != 2 + 3 * n {
                        return Err(perr(ln, "expected `<input> = <3n payloads>`"));
                    }
                    let payloads: Result<Vec<f64>, _> = parts[2..].iter().map(|v| v.parse()).collect();
                    Measurement::Exact {
                        payloads: payloads.map_err(|_| perr(ln, "bad payload"))?,
                    }
                }
            };
            samples.push(ShadowSample { input, measurement });
        }
        if samples.len() != count {
            return Err(perr(1, "sample count differs from N"));
        }
        Ok(Self {
            n,
            samples,
            seed,
            mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_circuit;
    use crate::pauli::PauliString;
    use crate::sim::{pauli_decompose, pauli_key_matrix, unitary_of};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn circ(text: &str) -> Circuit {
        parse_circuit(text, &GateSet::clifford_t()).unwrap()
    }

    fn key(s: &str) -> PauliKey {
        s.parse::<PauliString>().unwrap().key()
    }

    /// Coefficients of `U† P_i U` from dense matrices.
    fn dense_target(c: &Circuit, i: usize, p: Pauli) -> ObservableSum {
        let n = c.n_qubits();
        let u = unitary_of(c).unwrap();
        let qubits: Vec<usize> = (0..n).collect();
        let m = u.matrix().adjoint() * pauli_key_matrix(PauliKey::single(i, p), &qubits) * u.matrix();
        pauli_decompose(&m, n)
    }

    #[test]
    fn axis_expectations() {
        for a in StabilizerAxis::ALL {
            let psi = product_state(&[a]);
            for p in Pauli::XYZ {
                let ps = PauliString::single(1, 0, p).unwrap();
                assert!((psi.expectation(&ps) - f64::from(a.expectation(p))).abs() < 1e-12);
            }
            assert_eq!(StabilizerAxis::from_code(a.code()), Some(a));
        }
    }

    #[test]
    fn identity_circuit_measures_input() {
        let c = circ("qubits 1");
        let ds = generate_dataset(&c, 500, 3).unwrap();
        for s in &ds.samples {
            let Measurement::Sampled { basis, outcome } = &s.measurement else { unreachable!() };
            if s.input[0] == StabilizerAxis::Zero && basis[0] == Pauli::Z {
                assert_eq!(outcome[0], StabilizerAxis::Zero);
            }
            if basis[0] == s.input[0].axis() {
                assert_eq!(outcome[0], s.input[0]);
            }
        }
    }

    #[test]
    fn hadamard_z_outcomes_are_balanced() {
        let c = circ("qubits 1\nh 0");
        let ds = generate_dataset(&c, 30_000, 11).unwrap();
        let (mut hits, mut zeros) = (0usize, 0usize);
        for s in &ds.samples {
            let Measurement::Sampled { basis, outcome } = &s.measurement else { unreachable!() };
            if s.input[0] == StabilizerAxis::Zero && basis[0] == Pauli::Z {
                hits += 1;
                zeros += usize::from(outcome[0] == StabilizerAxis::Zero);
            }
        }
        let f = zeros as f64 / hits as f64;
        let sigma = (0.25 / hits as f64).sqrt();
        assert!(hits > 500);
        assert!((f - 0.5).abs() < 3.0 * sigma, "frequency {f} over {hits}");
    }

    #[test]
    fn datasets_are_deterministic() {
        let c = circ("qubits 2\nh 0\ncx 0 1\nt 1");
        let a = generate_dataset(&c, 200, 9).unwrap().to_text();
        let b = generate_dataset(&c, 200, 9).unwrap().to_text();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&c, 200, 10).unwrap().to_text());
    }

    #[test]
    fn payload_examples() {
        let s = |code: char| ShadowSample {
            input: vec![StabilizerAxis::Zero],
            measurement: Measurement::Sampled {
                basis: vec![StabilizerAxis::from_code(code).unwrap().axis()],
                outcome: vec![StabilizerAxis::from_code(code).unwrap()],
            },
        };
        assert_eq!(pauli_payload(&s('0'), 0, Pauli::Z), 3.0);
        assert_eq!(pauli_payload(&s('+'), 0, Pauli::Z), 0.0);
        assert_eq!(pauli_payload(&s('l'), 0, Pauli::Y), -3.0);
        // Exact payload for H with P = Z is ⟨ψ|X|ψ⟩ on every input.
        let ds = generate_exact_dataset(&circ("qubits 1\nh 0"), 0).unwrap();
        assert_eq!(ds.samples.len(), 6);
        for s in &ds.samples {
            let v = pauli_payload(s, 0, Pauli::Z);
            assert!((v - f64::from(s.input[0].expectation(Pauli::X))).abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_examples() {
        let ds = generate_exact_dataset(&circ("qubits 1"), 0).unwrap();
        let v = payloads(&ds, 0, Pauli::Z);
        assert!((estimate_coefficient(&ds, &v, key("Z"), 4).unwrap() - 1.0).abs() < 1e-12);
        assert!(estimate_coefficient(&ds, &v, key("X"), 4).unwrap().abs() < 1e-12);
        let ds = generate_exact_dataset(&circ("qubits 1\nh 0"), 0).unwrap();
        let v = payloads(&ds, 0, Pauli::Z);
        assert!((estimate_coefficient(&ds, &v, key("X"), 4).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            estimate_coefficient(&ds, &v, key("X"), 0),
            Err(ShadowError::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn learn_examples() {
        let cfg = LearnConfig::default();
        let c = circ("qubits 2\ncx 0 1");
        let ds = generate_exact_dataset(&c, 0).unwrap();
        let o = learn_observable(&ds, &payloads(&ds, 1, Pauli::Z), &cfg, &[0, 1]).unwrap();
        assert_eq!(o.terms().len(), 1);
        assert_eq!(o.terms()[0].0, key("ZZ"));
        assert!((o.terms()[0].1 - 1.0).abs() < 1e-12);

        let ds = generate_exact_dataset(&circ("qubits 2"), 0).unwrap();
        let o = learn_observable(&ds, &payloads(&ds, 0, Pauli::X), &cfg, &[0]).unwrap();
        assert_eq!(o.terms().len(), 1);
        assert_eq!(o.terms()[0].0, key("XI"));

        // T† X T from the dense oracle.
        let c = circ("qubits 1\nt 0");
        let ds = generate_exact_dataset(&c, 0).unwrap();
        let o = learn_observable(&ds, &payloads(&ds, 0, Pauli::X), &cfg, &[0]).unwrap();
        let oracle = dense_target(&c, 0, Pauli::X);
        assert_eq!(o.terms().len(), 2);
        for (&(k1, c1), &(k2, c2)) in o.terms().iter().zip(oracle.terms()) {
            assert_eq!(k1, k2);
            assert!((c1 - c2).abs() < 1e-12);
        }
        assert!((o.coefficient(key("X")) - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let c = Circuit::random(&mut rng, 2, 1 + trial % 3, &GateSet::clifford_t(), false);
            let ds = generate_exact_dataset(&c, 0).unwrap();
            for i in 0..2 {
                for p in Pauli::XYZ {
                    let truth = dense_target(&c, i, p);
                    let v = payloads(&ds, i, p);
                    for x in 0..4u64 {
                        for z in 0..4u64 {
                            let q = PauliKey { x, z };
                            let est = estimate_coefficient(&ds, &v, q, 2).unwrap();
                            assert!((est - truth.coefficient(q)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_estimates_concentrate() {
        let fixtures = [
            circ("qubits 2\nh 0\ncx 0 1"),
            circ("qubits 2\nt 0\ncx 0 1\nh 1"),
            circ("qubits 3\nh 0\ncx 0 1\ncx 1 2"),
        ];
        let n_samples = 4000;
        let (mut total, mut ok) = (0usize, 0usize);
        for (f, c) in fixtures.iter().enumerate() {
            let truth = dense_target(c, 0, Pauli::Z);
            for seed in 0..5u64 {
                let ds = generate_dataset(c, n_samples, 1000 * f as u64 + seed).unwrap();
                let v = payloads(&ds, 0, Pauli::Z);
                let n = c.n_qubits() as u32;
                for x in 0..1u64 << n {
                    for z in 0..1u64 << n {
                        let q = PauliKey { x, z };
                        if q.weight() > 2 {
                            continue;
                        }
                        let est = estimate_coefficient(&ds, &v, q, 2).unwrap();
                        let bound = 5.0 * 3f64.powi(q.weight() as i32 + 1) / (n_samples as f64).sqrt();
                        total += 1;
                        ok += usize::from((est - truth.coefficient(q)).abs() <= bound);
                    }
                }
            }
        }
        assert!(ok as f64 >= 0.99 * total as f64, "{ok}/{total}");
    }

    #[test]
    fn learned_support_inside_lightcone() {
        use crate::circuit::Direction;
        use std::collections::BTreeSet;
        let c = circ("qubits 4\nh 0\ncx 0 1\ncx 2 3\ncx 1 2");
        let ds = generate_dataset(&c, 3000, 1).unwrap();
        for i in 0..4 {
            let cone = c.lightcone(&BTreeSet::from([i]), Direction::Backward);
            let cand: Vec<usize> = cone.iter().copied().collect();
            for p in Pauli::XYZ {
                let v = payloads(&ds, i, p);
                assert!(v.iter().all(|x| [-3.0, 0.0, 3.0].contains(x)));
                let o = learn_observable(&ds, &v, &LearnConfig::default(), &cand).unwrap();
                assert!(o.support().iter().all(|q| cone.contains(q)));
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let c = circ("qubits 2\nh 0\ncx 0 1\nt 1");
        for ds in [generate_dataset(&c, 50, 2).unwrap(), generate_exact_dataset(&c, 0).unwrap()] {
            let text = ds.to_text();
            let back = ShadowDataset::from_text(&text).unwrap();
            assert_eq!(back, ds);
            assert_eq!(back.to_text(), text);
        }
        assert!(ShadowDataset::from_text("shadow v2 n=1").is_err());
        assert!(ShadowDataset::from_text("shadow v1 n=1 N=1 seed=0 mode=sampled\n0 X 0\n").is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let c = circ("qubits 3");
        let ds = generate_exact_dataset(&c, 0).unwrap();
        let cfg = LearnConfig {
            budget: 10,
            ..LearnConfig::default()
        };
        let v = payloads(&ds, 0, Pauli::Z);
        assert!(matches!(
            learn_observable(&ds, &v, &cfg, &[0, 1, 2]),
            Err(ShadowError::BudgetExceeded { .. })
        ));
        assert!(LearnConfig::default().min_samples(4) > 0);
    }
}
