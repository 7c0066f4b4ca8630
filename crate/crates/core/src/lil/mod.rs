//! Local inversion learning: learn `U† P_i U` for every qubit and Pauli,
//! search a shallow `V_i` that maps the learned triple back to `(X_i, Y_i, Z_i)`,
//! and sew the `V_i` into one circuit.

mod search;
mod sew;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use search::{objective, search_local_inversion, LocalInversion, SearchConfig, SearchFailure};
pub use sew::{reconstruct_channel, sew, sewing_order, SewError, SewnBlock, SewnCircuit, SEWN_STATE_CAP};

use crate::circuit::{Circuit, Direction};
use crate::pauli::{ObservableSum, Pauli, PauliKey, PauliString};
use crate::shadows::{
    derive_seed, generate_dataset, generate_exact_dataset, learn_observable, payloads, LearnConfig,
    ShadowDataset, ShadowError, ShadowMode,
};
use crate::sim::{heisenberg, inf_norm};

/// Largest `k` in the non-Clifford coefficient lattice `{±2^{-k/2}}`.
const SNAP_LATTICE_DEPTH: i32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LilConfig {
    pub mode: ShadowMode,
    /// Sample count in sampled mode; `None` uses [`LearnConfig::min_samples`].
    pub samples: Option<usize>,
    pub seed: u64,
    pub learn: LearnConfig,
    pub search: SearchConfig,
    /// Round sampled coefficients to the nearest lattice value before search.
    pub snap: bool,
    /// Record each `ε_{i,P}` as the exact error of the learned observable
    /// instead of the configured target.
    pub exact_check: bool,
    /// Stop at the first qubit whose search fails.
    pub fail_fast: bool,
}

impl Default for LilConfig {
    fn default() -> Self {
        Self {
            mode: ShadowMode::Exact,
            samples: None,
            seed: 0,
            learn: LearnConfig::default(),
            search: SearchConfig::default(),
            snap: true,
            exact_check: true,
            fail_fast: false,
        }
    }
}

impl LilConfig {
    pub fn sample_count(&self, n: usize) -> usize {
        self.samples.unwrap_or_else(|| self.learn.min_samples(n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QubitFailure {
    pub qubit: usize,
    #[serde(flatten)]
    pub failure: SearchFailure,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LilError {
    #[error("learning failed: {0}")]
    Learn(#[from] ShadowError),
    #[error("search failed for {} qubit(s), first on qubit {}", .failures.len(), .failures[0].qubit)]
    Search { failures: Vec<QubitFailure> },
    #[error(transparent)]
    Sew(#[from] SewError),
}

impl LilError {
    /// Whether a resource limit, rather than an exhausted search, caused the failure.
    pub fn is_budget(&self) -> bool {
        match self {
            LilError::Learn(ShadowError::BudgetExceeded { .. } | ShadowError::WidthOverCap { .. }) => true,
            LilError::Search { failures } => failures
                .iter()
                .any(|f| matches!(f.failure, SearchFailure::BudgetExceeded { .. })),
            _ => false,
        }
    }

    /// Best residual per failed qubit, when known.
    pub fn residuals(&self) -> Vec<(usize, Option<f64>)> {
        match self {
            LilError::Search { failures } => failures.iter().map(|f| (f.qubit, f.failure.best_residual())).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnedObservables {
    /// `Ô_{i,P}` for `P = X, Y, Z`.
    pub observables: Vec<[ObservableSum; 3]>,
    pub epsilons: Vec<[f64; 3]>,
    /// Samples per dataset (inputs per cone dataset in exact mode).
    pub samples: usize,
}

/// Nearest value of `{0, ±1}` (Clifford) or `{0} ∪ {±2^{-k/2} : 0 ≤ k ≤ 8}`.
pub fn snap_coefficient(c: f64, clifford: bool) -> f64 {
    let lattice = std::iter::once(0.0).chain(if clifford {
        vec![1.0]
    } else {
        (0..=SNAP_LATTICE_DEPTH).map(|k| 2f64.powf(-k as f64 / 2.0)).collect()
    });
    let mag = lattice
        .min_by(|a, b| (c.abs() - a).abs().total_cmp(&(c.abs() - b).abs()))
        .expect("lattice is nonempty");
    mag.copysign(c)
}

fn snap_observable(o: &ObservableSum, clifford: bool) -> ObservableSum {
    let terms = o
        .terms()
        .iter()
        .map(|&(k, c)| (k, snap_coefficient(c, clifford)))
        .filter(|&(_, c)| c != 0.0)
        .collect();
    ObservableSum::from_terms(o.n(), terms)
}

/// Learn `Ô_{i,P}` for every qubit `i` and `P ∈ {X, Y, Z}`.
///
/// Exact mode builds one exact dataset per qubit on the backward cone of `i`
/// (relabelled to its own register); sampled mode draws one dataset for the
/// whole circuit and restricts candidate supports to each cone.
pub fn learn_heisenberg_observables(c: &Circuit, cfg: &LilConfig) -> Result<LearnedObservables, LilError> {
    let n = c.n_qubits();
    let per_qubit = |ds: &ShadowDataset, local: usize, candidates: &[usize], map: &dyn Fn(usize) -> usize| {
        Pauli::XYZ
            .iter()
            .map(|&p| {
                let pl = payloads(ds, local, p);
                let o = learn_observable(ds, &pl, &cfg.learn, candidates)?;
                let o = if ds.n == n { o } else { o.relabel(n, map) };
                Ok(if cfg.snap && ds.mode == ShadowMode::Sampled {
                    snap_observable(&o, cfg.search.clifford_only || c.is_clifford())
                } else {
                    o
                })
            })
            .collect::<Result<Vec<_>, ShadowError>>()
            .map(|v| <[ObservableSum; 3]>::try_from(v).expect("three Paulis"))
    };

    let (observables, samples) = match cfg.mode {
        ShadowMode::Exact => {
            let results: Vec<Result<([ObservableSum; 3], usize), ShadowError>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let target = BTreeSet::from([i]);
                    let cone: Vec<usize> = c.lightcone(&target, Direction::Backward).into_iter().collect();
                    let sub = c
                        .backward_cone_circuit(&target)
                        .restrict(&cone)
                        .expect("cone circuit stays on its cone");
                    let ds = generate_exact_dataset(&sub, derive_seed(cfg.seed, &format!("lil-exact-{i}")))?;
                    let local = cone.binary_search(&i).expect("qubit in its own cone");
                    let all: Vec<usize> = (0..cone.len()).collect();
                    let obs = per_qubit(&ds, local, &all, &|q| cone[q])?;
                    Ok((obs, ds.samples.len()))
                })
                .collect();
            let mut obs = Vec::with_capacity(n);
            let mut samples = 0;
            for r in results {
                let (o, s) = r?;
                samples = samples.max(s);
                obs.push(o);
            }
            (obs, samples)
        }
        ShadowMode::Sampled => {
            let ds = generate_dataset(c, cfg.sample_count(n), derive_seed(cfg.seed, "lil-sampled"))?;
            let obs = (0..n)
                .into_par_iter()
                .map(|i| {
                    let cone: Vec<usize> = c
                        .lightcone(&BTreeSet::from([i]), Direction::Backward)
                        .into_iter()
                        .collect();
                    per_qubit(&ds, i, &cone, &|q| q)
                })
                .collect::<Result<Vec<_>, _>>()?;
            (obs, ds.samples.len())
        }
    };

    let epsilons = observables
        .iter()
        .enumerate()
        .map(|(i, triple)| {
            let mut eps = [cfg.learn.epsilon; 3];
            if cfg.exact_check {
                for (k, p) in Pauli::XYZ.into_iter().enumerate() {
                    let ps = PauliString::single(n, i, p).expect("qubit in range");
                    if let Ok(truth) = heisenberg(c, &ps) {
                        if let Ok(e) = inf_norm(&triple[k].sub(&truth)) {
                            eps[k] = e;
                        }
                    }
                }
            }
            eps
        })
        .collect();
    Ok(LearnedObservables {
        observables,
        epsilons,
        samples,
    })
}

/// Search an inversion for every qubit of the learned triples.
pub fn search_all(
    c: &Circuit,
    learned: &LearnedObservables,
    cfg: &LilConfig,
) -> Result<Vec<LocalInversion>, LilError> {
    let n = c.n_qubits();
    let run = |i: usize| search_local_inversion(i, &learned.observables[i], c.gate_set(), &cfg.search);
    let results: Vec<Result<LocalInversion, SearchFailure>> = if cfg.fail_fast {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = run(i);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    } else {
        (0..n).into_par_iter().map(run).collect()
    };
    let mut inversions = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (qubit, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => inversions.push(v),
            Err(failure) => failures.push(QubitFailure { qubit, failure }),
        }
    }
    if failures.is_empty() {
        Ok(inversions)
    } else {
        Err(LilError::Search { failures })
    }
}

/// Learn, search, and sew.
pub fn lil(c: &Circuit, cfg: &LilConfig) -> Result<SewnCircuit, LilError> {
    let learned = learn_heisenberg_observables(c, cfg)?;
    let inversions = search_all(c, &learned, cfg)?;
    let mut sewn = sew(&inversions, c.n_qubits())?;
    sewn.observables = learned.observables;
    sewn.epsilons = learned.epsilons;
    Ok(sewn)
}

/// `P_i` as a single-term observable on `n` qubits.
pub fn local_pauli(n: usize, i: usize, p: Pauli) -> ObservableSum {
    ObservableSum::single(n, PauliKey::single(i, p), 1.0)
}

#[cfg(test)]
mod tests;
