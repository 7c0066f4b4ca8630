//! Verification of a learned channel against a target circuit, and channel
//! distances.
//!
//! The average distance is the mean output trace distance over product
//! stabilizer inputs. The unitarity defect is `1 − min purity` over the same
//! inputs. A verdict compares both against a pass bound and the distance
//! against a fail bound; anything in between is inconclusive.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Program, ProgramStep};
use crate::lil::SewnCircuit;
use crate::shadows::{derive_seed, enumerated_input, product_state, ShadowMode, StabilizerAxis};
use crate::sim::{trace_distance, DensityMatrix, SimError, StateVector, UnitaryMatrix, DEFAULT_WIDTH_CAP};

/// Exact mode enumerates all `6ⁿ` inputs up to this width.
pub const EXACT_ENUMERATION_MAX: usize = 6;
/// Seeded inputs used by exact mode above [`EXACT_ENUMERATION_MAX`].
pub const EXACT_PROBE_INPUTS: usize = 4096;
/// Constant `C` in the default sampled-mode size `⌈C·n²·ln(n/δ)/ε²⌉`.
pub const VERIFY_SAMPLE_CONSTANT: f64 = 0.05;
/// Outputs with purity above `1 − PURE_TOL` are compared as pure states.
const PURE_TOL: f64 = 1e-12;
/// Branch limit of the statevector mixture used for programs with resets.
const MAX_BRANCHES: usize = 64;
const BRANCH_WEIGHT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("channel widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("sampled verification needs at least {required} inputs, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("matrix dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Output of a channel on a pure input.
#[derive(Clone, Debug)]
pub enum ChannelOutput {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl ChannelOutput {
    pub fn purity(&self) -> f64 {
        match self {
            ChannelOutput::Pure(_) => 1.0,
            ChannelOutput::Mixed(rho) => rho.purity(),
        }
    }

    /// The state vector when the output is pure up to [`PURE_TOL`].
    fn as_pure(&self) -> Option<StateVector> {
        match self {
            ChannelOutput::Pure(psi) => Some(psi.clone()),
            ChannelOutput::Mixed(rho) if rho.purity() > 1.0 - PURE_TOL => {
                // A rank-one ρ = |χ⟩⟨χ| has χ ∝ any nonzero column.
                let m = rho.matrix();
                let k = (0..m.nrows())
                    .max_by(|&a, &b| m[(a, a)].re.total_cmp(&m[(b, b)].re))
                    .expect("nonempty");
                let scale = 1.0 / m[(k, k)].re.sqrt();
                let amps = (0..m.nrows()).map(|r| m[(r, k)] * scale).collect();
                StateVector::from_amplitudes(amps).ok()
            }
            ChannelOutput::Mixed(_) => None,
        }
    }

    fn to_density(&self) -> DensityMatrix {
        match self {
            ChannelOutput::Pure(psi) => psi.to_density(),
            ChannelOutput::Mixed(rho) => rho.clone(),
        }
    }

    /// Trace distance between two outputs.
    pub fn distance(&self, other: &ChannelOutput) -> Result<f64, SimError> {
        match (self.as_pure(), other.as_pure()) {
            (Some(a), Some(b)) => Ok(aligned_pure_distance(&a, &b)),
            _ => trace_distance(&self.to_density(), &other.to_density()),
        }
    }
}

/// `√(1 − |⟨a|b⟩|²)` evaluated through `d² = ‖a − e^{iφ}b‖²` with the phase
/// aligned, so identical states give a distance at rounding level rather than
/// its square root.
fn aligned_pure_distance(a: &StateVector, b: &StateVector) -> f64 {
    let ov = b.inner(a);
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
    let d2: f64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - phase * y).norm_sqr())
        .sum();
    let one_minus_c2 = (d2 / 2.0) * (2.0 - d2 / 2.0);
    one_minus_c2.clamp(0.0, 1.0).sqrt()
}

/// A quantum channel on `n` qubits that can be probed with pure inputs.
pub trait Channel: Sync {
    fn n_qubits(&self) -> usize;
    fn apply_pure(&self, psi: &StateVector) -> Result<ChannelOutput, SimError>;
    /// Channels known to be unitary skip the purity probe.
    fn is_unitary(&self) -> bool {
        false
    }
}

impl Channel for Circuit {
    fn n_qubits(&self) -> usize {
        Circuit::n_qubits(self)
    }

    fn apply_pure(&self, psi: &StateVector) -> Result<ChannelOutput, SimError> {
        let mut out = psi.clone();
        out.apply_circuit(self);
        Ok(ChannelOutput::Pure(out))
    }

    fn is_unitary(&self) -> bool {
        true
    }
}

impl Channel for UnitaryMatrix {
    fn n_qubits(&self) -> usize {
        UnitaryMatrix::n_qubits(self)
    }

    fn apply_pure(&self, psi: &StateVector) -> Result<ChannelOutput, SimError> {
        Ok(ChannelOutput::Pure(self.apply(psi)))
    }

    fn is_unitary(&self) -> bool {
        true
    }
}

impl Channel for SewnCircuit {
    fn n_qubits(&self) -> usize {
        self.n
    }

    fn apply_pure(&self, psi: &StateVector) -> Result<ChannelOutput, SimError> {
        Ok(ChannelOutput::Mixed(self.output_pure(psi)?))
    }
}

/// A program on `system + ancilla` qubits read as a channel on `system`
/// qubits: the input enters on qubits `0..system` with the rest in `|0⟩`, and
/// the output is read on `output_offset..output_offset + system`.
#[derive(Clone, Debug)]
pub struct ProgramChannel {
    pub program: Program,
    pub system: usize,
    pub output_offset: usize,
}

impl ProgramChannel {
    pub fn new(program: Program, system: usize) -> Self {
        Self::with_output(program, system, 0)
    }

    pub fn with_output(program: Program, system: usize, output_offset: usize) -> Self {
        Self {
            program,
            system,
            output_offset,
        }
    }

    fn output_qubits(&self) -> Vec<usize> {
        (self.output_offset..self.output_offset + self.system).collect()
    }

    fn apply_dense(&self, psi: &StateVector) -> Result<ChannelOutput, SimError> {
        let mut rho = pad(psi, self.program.n_qubits).to_density();
        rho.apply_program(&self.program);
        Ok(ChannelOutput::Mixed(rho.partial_trace(&self.output_qubits())?))
    }
}

fn pad(psi: &StateVector, width: usize) -> StateVector {
    let mut amps = psi.amplitudes().to_vec();
    amps.resize(1 << width, C64::new(0.0, 0.0));
    StateVector::from_amplitudes(amps).expect("power-of-two length")
}

/// Project `amps` onto each computational pattern of `qubits` and move it to
/// `|0…0⟩` on those qubits.
fn reset_branches(amps: &[C64], qubits: &[usize]) -> Vec<(f64, Vec<C64>)> {
    let mask = qubits.iter().fold(0usize, |m, &q| m | 1 << q);
    let mut out = Vec::new();
    for pattern in 0..1usize << qubits.len() {
        let bits = qubits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &q)| acc | (pattern >> k & 1) << q);
        let mut v = vec![C64::new(0.0, 0.0); amps.len()];
        let mut w = 0.0;
        for (i, a) in amps.iter().enumerate() {
            if i & mask == bits {
                v[i & !mask] = *a;
                w += a.norm_sqr();
            }
        }
        if w > BRANCH_WEIGHT_TOL {
            let s = 1.0 / w.sqrt();
            v.iter_mut().for_each(|a| *a *= s);
            out.push((w, v));
        }
    }
    out
}

impl Channel for ProgramChannel {
    fn n_qubits(&self) -> usize {
        self.system
    }

    fn apply_pure(&self, psi: &StateVector) -> Result<ChannelOutput, SimError> {
        if psi.n_qubits() != self.system {
            return Err(SimError::DimMismatch(psi.n_qubits(), self.system));
        }
        let width = self.program.n_qubits;
        let gs = &self.program.gate_set;
        let mut branches: Vec<(f64, StateVector)> = vec![(1.0, pad(psi, width))];
        for step in &self.program.steps {
            match step {
                ProgramStep::Layer(layer) => {
                    for (_, b) in branches.iter_mut() {
                        for g in layer {
                            b.apply_gate(gs.gate(g.kind), g.qubits());
                        }
                    }
                }
                ProgramStep::Reset(qs) => {
                    let mut next = Vec::new();
                    for (w, b) in &branches {
                        for (p, amps) in reset_branches(b.amplitudes(), qs) {
                            next.push((w * p, StateVector::from_amplitudes(amps)?));
                        }
                    }
                    if next.len() > MAX_BRANCHES && width <= DEFAULT_WIDTH_CAP {
                        return self.apply_dense(psi);
                    }
                    branches = next;
                }
            }
        }
        if width == self.system && branches.len() == 1 {
            return Ok(ChannelOutput::Pure(branches.pop().expect("one branch").1));
        }
        let keep = self.output_qubits();
        let mut acc: Option<DensityMatrix> = None;
        for (w, b) in &branches {
            let r = b.reduced(&keep)?;
            let m = r.matrix() * C64::new(*w, 0.0);
            acc = Some(match acc {
                None => DensityMatrix::from_matrix(m)?,
                Some(a) => DensityMatrix::from_matrix(a.matrix() + m)?,
            });
        }
        Ok(ChannelOutput::Mixed(acc.expect("at least one branch")))
    }
}

/// Which pass bound a verdict uses.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Thresholds {
    /// `ε/(12n)`.
    #[serde(rename = "theorem10")]
    PerQubit,
    /// `ε/12`.
    #[serde(rename = "algorithm1")]
    Flat,
}

impl fmt::Display for Thresholds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Thresholds::PerQubit => "theorem10",
            Thresholds::Flat => "algorithm1",
        })
    }
}

impl FromStr for Thresholds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theorem10" => Ok(Thresholds::PerQubit),
            "algorithm1" => Ok(Thresholds::Flat),
            _ => Err(format!("unknown thresholds `{s}` (expected theorem10|algorithm1)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Inputs in sampled mode; `None` uses [`VerifyConfig::min_samples`].
    pub samples: Option<usize>,
    pub mode: ShadowMode,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub sample_constant: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.1,
            samples: None,
            mode: ShadowMode::Exact,
            thresholds: Thresholds::PerQubit,
            seed: 0,
            sample_constant: VERIFY_SAMPLE_CONSTANT,
        }
    }
}

impl VerifyConfig {
    pub fn pass_bound(&self, n: usize) -> f64 {
        match self.thresholds {
            Thresholds::PerQubit => self.epsilon / (12.0 * n.max(1) as f64),
            Thresholds::Flat => self.epsilon / 12.0,
        }
    }

    pub fn fail_bound(&self) -> f64 {
        self.epsilon
    }

    /// `⌈C·n²·ln(n/δ)/ε²⌉`, with `n` clamped below at 2.
    pub fn min_samples(&self, n: usize) -> usize {
        let nf = n.max(2) as f64;
        (self.sample_constant * nf * nf * (nf / self.delta).ln() / (self.epsilon * self.epsilon)).ceil() as usize
    }

    pub fn sample_count(&self, n: usize) -> Result<usize, VerifyError> {
        let required = self.min_samples(n);
        match self.samples {
            None => Ok(required),
            Some(got) if got >= required => Ok(got),
            Some(got) => Err(VerifyError::TooFewSamples { required, got }),
        }
    }
}

/// Probe inputs for `n` qubits under `cfg`.
pub fn probe_inputs(n: usize, cfg: &VerifyConfig) -> Result<Vec<Vec<StabilizerAxis>>, VerifyError> {
    let seeded = |count: usize, label: &str| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, label));
        (0..count)
            .map(|_| (0..n).map(|_| StabilizerAxis::ALL[rng.gen_range(0..6)]).collect())
            .collect()
    };
    Ok(match cfg.mode {
        ShadowMode::Exact if n <= EXACT_ENUMERATION_MAX => {
            (0..6usize.pow(n as u32)).map(|i| enumerated_input(n, i)).collect()
        }
        ShadowMode::Exact => seeded(EXACT_PROBE_INPUTS, "verify-exact"),
        ShadowMode::Sampled => seeded(cfg.sample_count(n)?, "verify-sampled"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub mean: f64,
    /// Standard error of the mean; zero for a full enumeration.
    pub std_err: f64,
    pub max: f64,
    pub inputs: usize,
    /// `1 − min purity` of the first channel's outputs.
    pub defect_e: f64,
    /// `1 − min purity` of the second channel's outputs.
    pub defect_c: f64,
}

/// Average output trace distance of `e` and `c` over the probe inputs, with
/// the purity defects of both channels on the same inputs.
pub fn d_ave(e: &dyn Channel, c: &dyn Channel, cfg: &VerifyConfig) -> Result<DistanceEstimate, VerifyError> {
    let n = e.n_qubits();
    if n != c.n_qubits() {
        return Err(VerifyError::WidthMismatch(n, c.n_qubits()));
    }
    let inputs = probe_inputs(n, cfg)?;
    let per_input: Vec<(f64, f64, f64)> = inputs
        .par_iter()
        .map(|axes| {
            let psi = product_state(axes);
            let a = e.apply_pure(&psi)?;
            let b = c.apply_pure(&psi)?;
            Ok((a.distance(&b)?, a.purity(), b.purity()))
        })
        .collect::<Result<_, SimError>>()?;
    let k = per_input.len().max(1) as f64;
    let mean = per_input.iter().map(|r| r.0).sum::<f64>() / k;
    let std_err = if cfg.mode == ShadowMode::Sampled && per_input.len() > 1 {
        let var = per_input.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let defect = |f: fn(&(f64, f64, f64)) -> f64, unitary: bool| {
        if unitary {
            0.0
        } else {
            per_input.iter().map(|r| (1.0 - f(r)).max(0.0)).fold(0.0, f64::max)
        }
    };
    Ok(DistanceEstimate {
        mean,
        std_err,
        max: per_input.iter().map(|r| r.0).fold(0.0, f64::max),
        inputs: per_input.len(),
        defect_e: defect(|r| r.1, e.is_unitary()),
        defect_c: defect(|r| r.2, c.is_unitary()),
    })
}

/// `1 − min` output purity over the probe inputs; zero for unitary channels.
pub fn unitarity_check(ch: &dyn Channel, cfg: &VerifyConfig) -> Result<f64, VerifyError> {
    if ch.is_unitary() {
        return Ok(0.0);
    }
    let inputs = probe_inputs(ch.n_qubits(), cfg)?;
    let purities: Vec<f64> = inputs
        .par_iter()
        .map(|axes| ch.apply_pure(&product_state(axes)).map(|o| o.purity()))
        .collect::<Result<_, _>>()?;
    Ok(purities.into_iter().map(|p| (1.0 - p).max(0.0)).fold(0.0, f64::max))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictStatus::Pass => "PASS",
            VerdictStatus::Fail => "FAIL",
            VerdictStatus::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence {
    pub mode: ShadowMode,
    pub inputs: usize,
    pub std_err: f64,
    pub max_distance: f64,
    pub pass_bound: f64,
    pub fail_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub d_ave_estimate: f64,
    pub unitarity_defect: f64,
    pub evidence: Evidence,
}

/// PASS iff both values are within `pass`; FAIL iff the distance exceeds
/// `fail`; INCONCLUSIVE otherwise.
pub fn classify(d_ave: f64, defect: f64, pass: f64, fail: f64) -> VerdictStatus {
    if d_ave <= pass && defect <= pass {
        VerdictStatus::Pass
    } else if d_ave > fail {
        VerdictStatus::Fail
    } else {
        VerdictStatus::Inconclusive
    }
}

/// Compare a learned channel `e` with the target `c`.
pub fn verify(e: &dyn Channel, c: &dyn Channel, cfg: &VerifyConfig) -> Result<Verdict, VerifyError> {
    let est = d_ave(e, c, cfg)?;
    let pass = cfg.pass_bound(c.n_qubits());
    let fail = cfg.fail_bound();
    let defect = est.defect_e.max(est.defect_c);
    Ok(Verdict {
        status: classify(est.mean, defect, pass, fail),
        d_ave_estimate: est.mean,
        unitarity_defect: defect,
        evidence: Evidence {
            mode: cfg.mode,
            inputs: est.inputs,
            std_err: est.std_err,
            max_distance: est.max,
            pass_bound: pass,
            fail_bound: fail,
        },
    })
}

/// Eigenvalues of a unitary `W`.
///
/// `A = (W + W†)/2` and `B = (W − W†)/2i` are commuting Hermitian matrices, so
/// the eigenvectors of `A + cB` diagonalize `W` whenever `c` separates the
/// eigenvalues. A few irrational `c` are tried; the shifted-QR Schur form is
/// not used because it stalls on permutation-like unitaries.
fn unitary_eigenvalues(w: &crate::sim::Matrix) -> Vec<C64> {
    let wd = w.adjoint();
    let a = (w + &wd) * C64::new(0.5, 0.0);
    let b = (w - &wd) * C64::new(0.0, -0.5);
    let dim = w.nrows();
    let mut best: Option<(f64, Vec<C64>)> = None;
    for c in [0.618_033_988_749_895, 0.267_949_192_431_123, 1.324_717_957_244_746, 0.110_714_871_779_409] {
        let h = &a + &b * C64::new(c, 0.0);
        let vecs = h.symmetric_eigen().eigenvectors;
        let d = vecs.adjoint() * w * &vecs;
        let off = (0..dim)
            .flat_map(|r| (0..dim).map(move |k| (r, k)))
            .filter(|(r, k)| r != k)
            .map(|(r, k)| d[(r, k)].norm())
            .fold(0.0, f64::max);
        let diag: Vec<C64> = (0..dim).map(|k| d[(k, k)]).collect();
        if off < 1e-9 {
            return diag;
        }
        if best.as_ref().is_none_or(|(o, _)| off < *o) {
            best = Some((off, diag));
        }
    }
    best.expect("at least one attempt").1
}

/// `½‖U·U† − V·V†‖_⋄ = √(1 − ν²)` with `ν` the distance from the origin to the
/// convex hull of the eigenvalues of `U†V`.
///
/// The eigenvalues lie on the unit circle; if they fit in an arc of angular
/// span `s < π` then `ν = cos(s/2)` and the distance is `sin(s/2)`, otherwise
/// the hull contains the origin and the distance is 1.
pub fn diamond_distance_unitary(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64, VerifyError> {
    if u.dim() != v.dim() {
        return Err(VerifyError::DimMismatch(u.dim(), v.dim()));
    }
    let w = u.adjoint().mul(v);
    let mut angles: Vec<f64> = unitary_eigenvalues(w.matrix()).iter().map(|z| z.arg()).collect();
    angles.sort_by(f64::total_cmp);
    let tau = std::f64::consts::TAU;
    let max_gap = angles
        .windows(2)
        .map(|p| p[1] - p[0])
        .chain(std::iter::once(angles[0] + tau - angles[angles.len() - 1]))
        .fold(0.0, f64::max);
    let span = tau - max_gap;
    Ok(if span < std::f64::consts::PI {
        (span / 2.0).sin().clamp(0.0, 1.0)
    } else {
        1.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_circuit;
    use crate::gates::GateSet;
    use crate::lil::{lil, LilConfig};
    use crate::sim::{unitary_of, Matrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn circ(text: &str) -> Circuit {
        parse_circuit(text, &GateSet::clifford_t()).unwrap()
    }

    fn exact() -> VerifyConfig {
        VerifyConfig::default()
    }

    fn rz(theta: f64) -> UnitaryMatrix {
        let m = Matrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::from_polar(1.0, theta)],
        );
        UnitaryMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn identical_channels_are_at_distance_zero() {
        let c = circ("qubits 2\nh 0\ncx 0 1\nt 1\n");
        let est = d_ave(&c, &c, &exact()).unwrap();
        assert_eq!(est.inputs, 36);
        assert!(est.mean < 1e-15);
    }

    #[test]
    fn x_against_identity_averages_two_thirds() {
        let x = circ("qubits 1\nx 0\n");
        let id = Circuit::identity(1, GateSet::clifford_t());
        let est = d_ave(&x, &id, &exact()).unwrap();
        assert_abs_diff_eq!(est.mean, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn global_phase_is_invisible() {
        // Z·X·Z·X = −I.
        let minus_id = circ("qubits 1\nz 0\nx 0\nz 0\nx 0\n");
        let id = Circuit::identity(1, GateSet::clifford_t());
        assert!(d_ave(&minus_id, &id, &exact()).unwrap().mean < 1e-12);
        let u = unitary_of(&minus_id).unwrap();
        assert!(diamond_distance_unitary(&u, &UnitaryMatrix::identity(1)).unwrap() < 1e-12);
    }

    #[test]
    fn unitarity_of_circuits_and_exact_sewn_channels() {
        let c = circ("qubits 2\nh 0\ncx 0 1\nt 1\n");
        assert_eq!(unitarity_check(&c, &exact()).unwrap(), 0.0);
        let sewn = lil(&c, &LilConfig::default()).unwrap();
        assert!(unitarity_check(&sewn, &exact()).unwrap() <= 1e-9);
    }

    #[test]
    fn corrupted_sewn_block_breaks_unitarity() {
        let c = circ("qubits 2\nh 0\ncx 0 1\n");
        let mut sewn = lil(&c, &LilConfig::default()).unwrap();
        // Replace the inversion of qubit 0 with a wrong gate and re-sew.
        let mut invs: Vec<_> = sewn
            .blocks
            .iter()
            .map(|b| crate::lil::LocalInversion {
                qubit: b.qubit,
                circuit: b.inversion.clone(),
                support: b.support.clone(),
                residual: 0.0,
            })
            .collect();
        invs[0].circuit = circ("qubits 2\nh 1\n");
        sewn = crate::lil::sew(&invs, 2).unwrap();
        assert!(unitarity_check(&sewn, &exact()).unwrap() > 0.01);
    }

    #[test]
    fn exact_lil_output_passes() {
        let c = circ("qubits 3\nh 0\ncx 0 1\nt 1\ncx 1 2\n");
        let sewn = lil(&c, &LilConfig::default()).unwrap();
        let v = verify(&sewn, &c, &exact()).unwrap();
        assert_eq!(v.status, VerdictStatus::Pass);
        assert!(v.d_ave_estimate < 1e-9);
    }

    #[test]
    fn half_circuit_against_whole_fails() {
        let c = circ("qubits 2\nh 0\nh 1\ncx 0 1\nh 0\nh 1\n");
        let (left, _) = c.cut(crate::circuit::CutRatio::HALF).unwrap();
        let sewn = lil(&left, &LilConfig::default()).unwrap();
        let v = verify(&sewn, &c, &exact()).unwrap();
        assert!(v.d_ave_estimate > 0.05);
        assert_eq!(v.status, VerdictStatus::Fail);
    }

    #[test]
    fn small_rotation_is_inconclusive() {
        // d_ave of Rz(θ) vs I is (4/6)·sin(θ/2); pick θ so it sits in (ε/12, ε].
        let theta = 0.08;
        let id = UnitaryMatrix::identity(1);
        let v = verify(&rz(theta), &id, &exact()).unwrap();
        assert_abs_diff_eq!(v.d_ave_estimate, 4.0 / 6.0 * (theta / 2.0).sin(), epsilon = 1e-12);
        assert_eq!(v.status, VerdictStatus::Inconclusive);
    }

    #[test]
    fn threshold_variants() {
        let cfg = VerifyConfig {
            epsilon: 0.12,
            ..exact()
        };
        assert_abs_diff_eq!(cfg.pass_bound(4), 0.0025);
        let flat = VerifyConfig {
            thresholds: Thresholds::Flat,
            ..cfg
        };
        assert_abs_diff_eq!(flat.pass_bound(4), 0.01);
        assert_eq!("algorithm1".parse::<Thresholds>().unwrap(), Thresholds::Flat);
        assert_eq!(Thresholds::PerQubit.to_string(), "theorem10");
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify(0.001, 0.0, 0.001, 0.05), VerdictStatus::Pass);
        assert_eq!(classify(0.001, 0.002, 0.001, 0.05), VerdictStatus::Inconclusive);
        assert_eq!(classify(0.05, 0.0, 0.001, 0.05), VerdictStatus::Inconclusive);
        assert_eq!(classify(0.0501, 0.0, 0.001, 0.05), VerdictStatus::Fail);
    }

    #[test]
    fn sampled_mode_requires_enough_inputs() {
        let cfg = VerifyConfig {
            mode: ShadowMode::Sampled,
            samples: Some(10),
            ..exact()
        };
        assert!(matches!(
            cfg.sample_count(3),
            Err(VerifyError::TooFewSamples { got: 10, .. })
        ));
    }

    #[test]
    fn sampled_estimate_tracks_exact() {
        let theta = 0.9;
        let id = UnitaryMatrix::identity(1);
        let exact_v = d_ave(&rz(theta), &id, &exact()).unwrap().mean;
        let cfg = VerifyConfig {
            mode: ShadowMode::Sampled,
            seed: 5,
            ..exact()
        };
        let est = d_ave(&rz(theta), &id, &cfg).unwrap();
        assert!(est.std_err > 0.0);
        assert!((est.mean - exact_v).abs() <= 4.0 * est.std_err);
    }

    #[test]
    fn diamond_examples() {
        let x = unitary_of(&circ("qubits 1\nx 0\n")).unwrap();
        let id = UnitaryMatrix::identity(1);
        assert_abs_diff_eq!(diamond_distance_unitary(&x, &id).unwrap(), 1.0);
        assert_abs_diff_eq!(diamond_distance_unitary(&id, &id).unwrap(), 0.0);
        // T vs I: eigenvalues {1, e^{iπ/4}}, span π/4.
        let t = unitary_of(&circ("qubits 1\nt 0\n")).unwrap();
        assert_abs_diff_eq!(
            diamond_distance_unitary(&t, &id).unwrap(),
            (std::f64::consts::PI / 8.0).sin(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cyclic_permutation_eigenvalues() {
        // |k⟩ ↦ |k+1 mod 4⟩ has the fourth roots of unity as eigenvalues.
        let m = Matrix::from_fn(4, 4, |r, c| {
            if r == (c + 1) % 4 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let eig = unitary_eigenvalues(&m);
        for want in [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)] {
            assert!(eig.iter().any(|z| (z - want).norm() < 1e-9), "{eig:?}");
        }
        let p = UnitaryMatrix::from_matrix(m).unwrap();
        assert_abs_diff_eq!(diamond_distance_unitary(&p, &UnitaryMatrix::identity(2)).unwrap(), 1.0);
    }

    #[test]
    fn program_channel_with_resets() {
        // Data that is swapped back before the ancilla reset survives it.
        let set = std::sync::Arc::new(GateSet::clifford_t().with_swap());
        let text = "qubits 2\ngateset clifford+t+swap\nh 0\nswap 0 1\nswap 0 1\nreset 1\nx 1\nreset 1\n";
        let p = crate::format::parse_program(text, Some(&set)).unwrap();
        let ch = ProgramChannel::new(p, 1);
        let h = circ("qubits 1\nh 0\n");
        assert!(d_ave(&ch, &h, &exact()).unwrap().mean < 1e-12);
        // Resetting the qubit that holds the data loses it.
        let text = "qubits 2\ngateset clifford+t+swap\nh 0\nswap 0 1\nreset 1\nswap 0 1\n";
        let p = crate::format::parse_program(text, Some(&set)).unwrap();
        let lossy = ProgramChannel::new(p, 1);
        let zero = d_ave(&lossy, &Circuit::identity(1, GateSet::clifford_t()), &exact()).unwrap();
        assert!(zero.mean > 0.3);
    }

    fn random_unitary(seed: u64, n: usize) -> UnitaryMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Circuit::random(&mut rng, n, 4, &GateSet::clifford_t(), false);
        unitary_of(&c).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn diamond_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), n in 1usize..=2) {
            let (u, v, w) = (random_unitary(a, n), random_unitary(b, n), random_unitary(c, n));
            let uv = diamond_distance_unitary(&u, &v).unwrap();
            let vu = diamond_distance_unitary(&v, &u).unwrap();
            let uw = diamond_distance_unitary(&u, &w).unwrap();
            let wv = diamond_distance_unitary(&w, &v).unwrap();
            prop_assert!(uv >= 0.0);
            prop_assert!((uv - vu).abs() < 1e-9);
            prop_assert!(uv <= uw + wv + 1e-9);
            prop_assert!(diamond_distance_unitary(&u, &u).unwrap() < 1e-9);
        }

        #[test]
        fn d_ave_is_a_metric_below_the_worst_case(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), n in 1usize..=2) {
            let (u, v, w) = (random_unitary(a, n), random_unitary(b, n), random_unitary(c, n));
            let cfg = VerifyConfig::default();
            let uv = d_ave(&u, &v, &cfg).unwrap().mean;
            let vu = d_ave(&v, &u, &cfg).unwrap().mean;
            let uw = d_ave(&u, &w, &cfg).unwrap().mean;
            let wv = d_ave(&w, &v, &cfg).unwrap().mean;
            prop_assert!(uv >= 0.0);
            prop_assert!((uv - vu).abs() < 1e-9);
            prop_assert!(uv <= uw + wv + 1e-9);
            prop_assert!(uv <= 2.0 * diamond_distance_unitary(&u, &v).unwrap() + 1e-9);
        }
    }
}
