//! Sewing local inversions into one circuit on a doubled register.
//!
//! Block `W_i = V_i S_i V_i†` runs, in time order, `V_i†`, then `SWAP(i, n+i)`,
//! then `V_i`. When every `V_i` is an exact inversion the blocks commute and
//! their product is `S (U ⊗ U†)`, so the ancilla register `n..2n` carries
//! `U ρ U†` for input `ρ ⊗ |0ⁿ⟩⟨0ⁿ|`.

use std::sync::Arc;

use thiserror::Error;

use crate::circuit::{Circuit, Gate, Layer};
use crate::format::{header_value, parse_circuit_auto, serialize_circuit, FormatError};
use crate::gates::GateSet;
use crate::pauli::ObservableSum;
use crate::sim::{DensityMatrix, SimError, StateVector, UnitaryMatrix, DEFAULT_WIDTH_CAP};

use super::search::LocalInversion;

/// Largest `2n` simulated as a statevector when evaluating the sewn channel.
pub const SEWN_STATE_CAP: usize = 2 * DEFAULT_WIDTH_CAP;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SewError {
    #[error("no inversion for qubit {0}")]
    MissingInversion(usize),
    #[error("inversion for qubit {qubit} has width {got}, expected {expected}")]
    WidthMismatch { qubit: usize, got: usize, expected: usize },
    #[error("sewn file lacks a `# sewn n=<n>` header")]
    MissingHeader,
    #[error("sewn file declares n={n} but has {width} qubits")]
    BadWidth { n: usize, width: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Clone, Debug)]
pub struct SewnBlock {
    pub qubit: usize,
    /// `V_i` on the system register.
    pub inversion: Circuit,
    /// System qubits touched by `W_i`, ascending.
    pub support: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SewnCircuit {
    pub n: usize,
    /// The `2n`-qubit circuit; ancilla `i` is qubit `n + i`.
    pub circuit: Circuit,
    /// Empty when loaded from text.
    pub blocks: Vec<SewnBlock>,
    /// Block indices per sewing layer; blocks in one layer are disjoint.
    pub sewing_layers: Vec<Vec<usize>>,
    /// Learned `Ô_{i,P}`, `P = X, Y, Z`.
    pub observables: Vec<[ObservableSum; 3]>,
    /// `ε_{i,P}` recorded for each learned observable.
    pub epsilons: Vec<[f64; 3]>,
}

/// Greedy coloring of the overlap graph in block order: each block takes the
/// first layer holding no block it intersects.
pub fn sewing_order(supports: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let overlaps = |a: &[usize], b: &[usize]| a.iter().any(|q| b.contains(q));
    for (i, s) in supports.iter().enumerate() {
        match layers
            .iter()
            .position(|layer| layer.iter().all(|&j| !overlaps(s, &supports[j])))
        {
            Some(l) => layers[l].push(i),
            None => layers.push(vec![i]),
        }
    }
    layers
}

/// Layers of `W_i` on the `2n` register, in time order.
fn block_layers(
    inv: &LocalInversion,
    n: usize,
    sewn_set: &Arc<GateSet>,
) -> Vec<Layer> {
    let v = inv
        .circuit
        .embed(2 * n, sewn_set.clone(), |q| q)
        .expect("base gates exist in the extended set");
    let v_dag = v.inverse().expect("gate set closed under inverse");
    let swap = sewn_set.lookup("swap").expect("extended set has swap");
    let mut layers: Vec<Layer> = v_dag.layers().to_vec();
    layers.push(vec![Gate::two(swap, inv.qubit, n + inv.qubit)]);
    layers.extend(v.layers().iter().cloned());
    layers
}

/// Sew one exact inversion per qubit, ordered by qubit index.
pub fn sew(inversions: &[LocalInversion], n: usize) -> Result<SewnCircuit, SewError> {
    let mut by_qubit: Vec<Option<&LocalInversion>> = vec![None; n];
    for inv in inversions {
        if inv.circuit.n_qubits() != n {
            return Err(SewError::WidthMismatch {
                qubit: inv.qubit,
                got: inv.circuit.n_qubits(),
                expected: n,
            });
        }
        if inv.qubit < n {
            by_qubit[inv.qubit] = Some(inv);
        }
    }
    let invs: Vec<&LocalInversion> = by_qubit
        .iter()
        .enumerate()
        .map(|(q, inv)| inv.ok_or(SewError::MissingInversion(q)))
        .collect::<Result<_, _>>()?;
    let base = invs
        .first()
        .map(|i| i.circuit.gate_set().clone())
        .unwrap_or_else(GateSet::clifford_t);
    let sewn_set = Arc::new(base.with_swap());

    let blocks: Vec<SewnBlock> = invs
        .iter()
        .map(|inv| {
            let mut support: Vec<usize> = inv.circuit.gates().flat_map(|g| g.qubits().to_vec()).collect();
            support.push(inv.qubit);
            support.sort_unstable();
            support.dedup();
            SewnBlock {
                qubit: inv.qubit,
                inversion: inv.circuit.clone(),
                support,
            }
        })
        .collect();
    let supports: Vec<Vec<usize>> = blocks.iter().map(|b| b.support.clone()).collect();
    let sewing_layers = sewing_order(&supports);

    let mut circuit = Circuit::identity(2 * n, sewn_set.clone());
    for group in &sewing_layers {
        let parts: Vec<Vec<Layer>> = group
            .iter()
            .map(|&b| block_layers(invs[b], n, &sewn_set))
            .collect();
        let depth = parts.iter().map(Vec::len).max().unwrap_or(0);
        for t in 0..depth {
            let layer: Layer = parts
                .iter()
                .filter_map(|p| p.get(t))
                .flat_map(|l| l.iter().copied())
                .collect();
            circuit.push_layer(layer).expect("blocks in one sewing layer are disjoint");
        }
    }
    Ok(SewnCircuit {
        n,
        circuit,
        blocks,
        sewing_layers,
        observables: Vec::new(),
        epsilons: Vec::new(),
    })
}

impl SewnCircuit {
    pub fn depth(&self) -> usize {
        self.circuit.depth()
    }

    /// Circuit text with a `# sewn n=<n>` header line.
    pub fn to_text(&self) -> String {
        format!("# sewn n={}\n{}", self.n, serialize_circuit(&self.circuit))
    }

    pub fn from_text(text: &str) -> Result<Self, SewError> {
        let n = header_value(text, "sewn", "n").ok_or(SewError::MissingHeader)?;
        let circuit = parse_circuit_auto(text)?;
        if circuit.n_qubits() != 2 * n {
            return Err(SewError::BadWidth {
                n,
                width: circuit.n_qubits(),
            });
        }
        Ok(Self {
            n,
            circuit,
            blocks: Vec::new(),
            sewing_layers: Vec::new(),
            observables: Vec::new(),
            epsilons: Vec::new(),
        })
    }

    /// Dense `2n`-qubit unitary `Û` (requires `2n` within the dense cap).
    pub fn unitary(&self) -> Result<UnitaryMatrix, SimError> {
        crate::sim::unitary_of(&self.circuit)
    }

    fn ancillas(&self) -> Vec<usize> {
        (self.n..2 * self.n).collect()
    }

    /// Output of the induced channel on a pure input, via a `2n`-qubit statevector.
    pub fn output_pure(&self, psi: &StateVector) -> Result<DensityMatrix, SimError> {
        if psi.n_qubits() != self.n {
            return Err(SimError::DimMismatch(psi.n_qubits(), self.n));
        }
        if 2 * self.n > SEWN_STATE_CAP {
            return Err(SimError::WidthOverCap {
                width: 2 * self.n,
                cap: SEWN_STATE_CAP,
            });
        }
        let mut amps = psi.amplitudes().to_vec();
        amps.resize(1 << (2 * self.n), num_complex::Complex64::new(0.0, 0.0));
        let mut state = StateVector::from_amplitudes(amps)?;
        state.apply_circuit(&self.circuit);
        state.reduced(&self.ancillas())
    }
}

/// `Tr_sys[Û (ρ ⊗ |0ⁿ⟩⟨0ⁿ|) Û†]` read on the ancilla register, which equals
/// `Tr_anc[S Û (ρ ⊗ |0ⁿ⟩⟨0ⁿ|) (S Û)†]`.
pub fn reconstruct_channel(sewn: &SewnCircuit, rho: &DensityMatrix) -> Result<DensityMatrix, SimError> {
    let n = sewn.n;
    if rho.n_qubits() != n {
        return Err(SimError::DimMismatch(rho.n_qubits(), n));
    }
    if 2 * n > DEFAULT_WIDTH_CAP {
        return Err(SimError::WidthOverCap {
            width: 2 * n,
            cap: DEFAULT_WIDTH_CAP,
        });
    }
    let dim = 1usize << n;
    let big = crate::sim::Matrix::from_fn(dim * dim, dim * dim, |r, c| {
        if r < dim && c < dim {
            rho.matrix()[(r, c)]
        } else {
            num_complex::Complex64::new(0.0, 0.0)
        }
    });
    let mut joint = DensityMatrix::from_matrix(big)?;
    joint.apply_circuit(&sewn.circuit);
    joint.partial_trace(&sewn.ancillas())
}
