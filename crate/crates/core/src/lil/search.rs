//! Meet-in-the-middle search for a local inversion.
//!
//! Given learned `Ô_P ≈ U† P_i U` for `P ∈ {X, Y, Z}`, find `V` with
//! `V† Ô_P V = P_i` for all three. Forward states are `(M† s M)` images of the
//! learned triple, backward states are `(N t N†)` images of the goal triple
//! `(X_i, Y_i, Z_i)`; a forward state equal to a backward state joins into a
//! full candidate `V = M_1…M_a · N_b…N_1`.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::Serialize;

use crate::circuit::{Circuit, Gate, Layer};
use crate::gates::{GateId, GateSet};
use crate::pauli::{conjugate_terms, mask_to_qubits, merge_terms, ObservableSum, Pauli, PauliKey};
use crate::sim::{heisenberg_observable, inf_norm};

/// Search limits and tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SearchConfig {
    pub d_inv: usize,
    pub support_cap: usize,
    pub max_states: usize,
    pub max_transitions: u64,
    pub dedup_tol: f64,
    pub tol_exact: f64,
    pub clifford_only: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            d_inv: 3,
            support_cap: 8,
            max_states: 400_000,
            max_transitions: 20_000_000,
            dedup_tol: 1e-9,
            tol_exact: 1e-9,
            clifford_only: false,
        }
    }
}

/// A successful search: `circuit` acts on the `n` system qubits.
#[derive(Clone, Debug)]
pub struct LocalInversion {
    pub qubit: usize,
    pub circuit: Circuit,
    /// Qubits the search ran on, ascending.
    pub support: Vec<usize>,
    /// `Σ_P ‖V† Ô_P V − P_i‖_∞`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchFailure {
    /// The whole space up to `d_inv` was explored without a match.
    NotFound { best_residual: f64 },
    /// A state, transition, or support limit stopped the search.
    BudgetExceeded { reason: String, best_residual: Option<f64> },
}

impl SearchFailure {
    pub fn best_residual(&self) -> Option<f64> {
        match self {
            SearchFailure::NotFound { best_residual } => Some(*best_residual),
            SearchFailure::BudgetExceeded { best_residual, .. } => *best_residual,
        }
    }
}

type Terms = Vec<(PauliKey, f64)>;
type Triple = [Terms; 3];

struct Node {
    parent: Option<usize>,
    layer: Layer,
}

struct Side {
    nodes: Vec<Node>,
    index: HashMap<Vec<i64>, usize>,
    frontier: Vec<(usize, Triple)>,
    level: usize,
    heisenberg: bool,
}

impl Side {
    fn new(start: Triple, tol: f64, heisenberg: bool) -> Self {
        let mut index = HashMap::new();
        index.insert(state_key(&start, tol), 0);
        Self {
            nodes: vec![Node {
                parent: None,
                layer: Vec::new(),
            }],
            index,
            frontier: vec![(0, start)],
            level: 0,
            heisenberg,
        }
    }

    /// Layers from `node` back to the root, newest first.
    fn chain(&self, mut node: usize) -> Vec<Layer> {
        let mut out = Vec::new();
        while let Some(parent) = self.nodes[node].parent {
            out.push(self.nodes[node].layer.clone());
            node = parent;
        }
        out
    }
}

fn state_key(t: &Triple, tol: f64) -> Vec<i64> {
    let mut key = Vec::with_capacity(3 + t.iter().map(|x| 3 * x.len()).sum::<usize>());
    for terms in t {
        key.push(terms.len() as i64);
        for &(k, c) in terms {
            key.push(k.x as i64);
            key.push(k.z as i64);
            key.push((c / tol).round() as i64);
        }
    }
    key
}

/// Candidate gates split by arity, in gate-set order.
struct GateMenu {
    one: Vec<GateId>,
    two: Vec<GateId>,
}

/// Visit every non-empty layer on local qubits `0..m` whose gates each touch
/// `sigma`, conjugating `state` incrementally. Order: per qubit ascending,
/// leave idle, then one-qubit gates, then two-qubit gates with a higher
/// partner (both orientations).
#[allow(clippy::too_many_arguments)]
fn for_each_layer(
    gs: &GateSet,
    menu: &GateMenu,
    m: usize,
    sigma: u64,
    heisenberg: bool,
    q: usize,
    used: u64,
    layer: &mut Layer,
    state: &Triple,
    f: &mut dyn FnMut(&Layer, &Triple) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if q == m {
        if layer.is_empty() {
            return ControlFlow::Continue(());
        }
        return f(layer, state);
    }
    if used >> q & 1 == 1 {
        return for_each_layer(gs, menu, m, sigma, heisenberg, q + 1, used, layer, state, f);
    }
    for_each_layer(gs, menu, m, sigma, heisenberg, q + 1, used, layer, state, f)?;
    let conj = |g: GateId, qs: &[usize]| -> Triple {
        let def = gs.gate(g);
        let mut out: Triple = Default::default();
        for (o, terms) in out.iter_mut().zip(state) {
            conjugate_terms(terms, def, qs, heisenberg, o);
        }
        out
    };
    if sigma >> q & 1 == 1 {
        for &g in &menu.one {
            let next = conj(g, &[q]);
            layer.push(Gate::one(g, q));
            let r = for_each_layer(gs, menu, m, sigma, heisenberg, q + 1, used | 1 << q, layer, &next, f);
            layer.pop();
            r?;
        }
    }
    for r in q + 1..m {
        if used >> r & 1 == 1 || (sigma >> q | sigma >> r) & 1 == 0 {
            continue;
        }
        for &g in &menu.two {
            for (a, b) in [(q, r), (r, q)] {
                let next = conj(g, &[a, b]);
                layer.push(Gate::two(g, a, b));
                let res = for_each_layer(
                    gs,
                    menu,
                    m,
                    sigma,
                    heisenberg,
                    q + 1,
                    used | 1 << q | 1 << r,
                    layer,
                    &next,
                    f,
                );
                layer.pop();
                res?;
            }
        }
    }
    ControlFlow::Continue(())
}

fn support_of(t: &Triple) -> u64 {
    t.iter()
        .flat_map(|terms| terms.iter().map(|(k, _)| k.support_mask()))
        .fold(0, |a, b| a | b)
}

fn diff_terms(a: &Terms, b: &Terms) -> Terms {
    let mut out: Terms = a.iter().copied().chain(b.iter().map(|&(k, c)| (k, -c))).collect();
    merge_terms(&mut out);
    out
}

/// Exact objective `Σ_P ‖a_P − b_P‖_∞` on `m` local qubits.
fn triple_distance(a: &Triple, b: &Triple, m: usize) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| inf_norm(&ObservableSum::from_terms(m, diff_terms(x, y))).unwrap_or(f64::INFINITY))
        .sum()
}

/// Cheap proxy for [`triple_distance`]: Frobenius norm of the coefficient difference.
fn triple_proxy(a: &Triple, b: &Triple) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| diff_terms(x, y).iter().map(|(_, c)| c * c).sum::<f64>().sqrt())
        .sum()
}

/// Search for `V` on the union support of `observables` (plus `qubit`) with
/// `V† Ô_P V = P_qubit` for `P = X, Y, Z` in that order.
pub fn search_local_inversion(
    qubit: usize,
    observables: &[ObservableSum; 3],
    gate_set: &Arc<GateSet>,
    cfg: &SearchConfig,
) -> Result<LocalInversion, SearchFailure> {
    let n = observables[0].n();
    let mask = observables
        .iter()
        .fold(1u64 << qubit, |m, o| m | o.support_mask());
    let support = mask_to_qubits(mask);
    let m = support.len();
    if m > cfg.support_cap {
        return Err(SearchFailure::BudgetExceeded {
            reason: format!("support of {m} qubits exceeds cap {}", cfg.support_cap),
            best_residual: None,
        });
    }
    let local_of = |q: usize| support.binary_search(&q).expect("in support");
    let local = |o: &ObservableSum| -> Terms { o.relabel(m, local_of).terms().to_vec() };
    let start: Triple = [local(&observables[0]), local(&observables[1]), local(&observables[2])];
    let li = local_of(qubit);
    let goal: Triple = Pauli::XYZ.map(|p| vec![(PauliKey::single(li, p), 1.0)]);

    let ids = gate_set.search_gates(cfg.clifford_only);
    let menu = GateMenu {
        one: ids.iter().copied().filter(|&g| gate_set.gate(g).arity == 1).collect(),
        two: ids.iter().copied().filter(|&g| gate_set.gate(g).arity == 2).collect(),
    };

    let mut fwd = Side::new(start.clone(), cfg.dedup_tol, true);
    let mut bwd = Side::new(goal.clone(), cfg.dedup_tol, false);
    let mut best = (triple_proxy(&start, &goal), start.clone());
    let mut transitions: u64 = 0;

    let mut found: Option<(usize, usize)> = bwd
        .index
        .contains_key(&state_key(&start, cfg.dedup_tol))
        .then_some((0, 0));
    let mut budget_reason: Option<String> = None;

    while found.is_none() && fwd.level + bwd.level < cfg.d_inv {
        let forward = fwd.frontier.len() <= bwd.frontier.len();
        let (side, other) = if forward {
            (&mut fwd, &bwd)
        } else {
            (&mut bwd, &fwd)
        };
        let frontier = std::mem::take(&mut side.frontier);
        let mut next_frontier = Vec::new();
        for (node, state) in &frontier {
            let sigma = support_of(state);
            let heis = side.heisenberg;
            let mut layer = Vec::new();
            let flow = for_each_layer(
                gate_set,
                &menu,
                m,
                sigma,
                heis,
                0,
                0,
                &mut layer,
                state,
                &mut |l, st| {
                    transitions += 1;
                    if transitions > cfg.max_transitions {
                        budget_reason = Some(format!("more than {} transitions", cfg.max_transitions));
                        return ControlFlow::Break(());
                    }
                    let key = state_key(st, cfg.dedup_tol);
                    if side.index.contains_key(&key) {
                        return ControlFlow::Continue(());
                    }
                    if side.nodes.len() + other.nodes.len() >= cfg.max_states {
                        budget_reason = Some(format!("more than {} states", cfg.max_states));
                        return ControlFlow::Break(());
                    }
                    let idx = side.nodes.len();
                    side.nodes.push(Node {
                        parent: Some(*node),
                        layer: l.clone(),
                    });
                    side.index.insert(key.clone(), idx);
                    if forward {
                        let p = triple_proxy(st, &goal);
                        if p < best.0 {
                            best = (p, st.clone());
                        }
                    }
                    if let Some(&hit) = other.index.get(&key) {
                        found = Some(if forward { (idx, hit) } else { (hit, idx) });
                        return ControlFlow::Break(());
                    }
                    next_frontier.push((idx, st.clone()));
                    ControlFlow::Continue(())
                },
            );
            if flow.is_break() {
                break;
            }
        }
        side.frontier = next_frontier;
        side.level += 1;
        if budget_reason.is_some() || (found.is_none() && side.frontier.is_empty()) {
            break;
        }
    }

    if let Some((a, b)) = found {
        let mut layers: Vec<Layer> = bwd.chain(b);
        layers.reverse();
        layers.extend(fwd.chain(a));
        let layers = layers
            .into_iter()
            .map(|l| l.iter().map(|g| g.relabel(|q| support[q])).collect())
            .collect();
        let circuit = Circuit::new(n, gate_set.clone(), layers).expect("layers built on disjoint qubits");
        let residual = objective(&circuit, qubit, observables);
        if residual <= cfg.tol_exact {
            return Ok(LocalInversion {
                qubit,
                circuit,
                support,
                residual,
            });
        }
        // Rounding in the state keys joined two states that differ beyond tolerance.
        return Err(SearchFailure::NotFound {
            best_residual: residual,
        });
    }
    let best_residual = triple_distance(&best.1, &goal, m);
    match budget_reason {
        Some(reason) => Err(SearchFailure::BudgetExceeded {
            reason,
            best_residual: Some(best_residual),
        }),
        None => Err(SearchFailure::NotFound { best_residual }),
    }
}

/// `Σ_P ‖V† Ô_P V − P_i‖_∞`, propagated independently of the search states.
pub fn objective(v: &Circuit, qubit: usize, observables: &[ObservableSum; 3]) -> f64 {
    let n = v.n_qubits();
    observables
        .iter()
        .zip(Pauli::XYZ)
        .map(|(o, p)| {
            let image = heisenberg_observable(v, o).expect("inversion support within cap");
            let diff = image.sub(&ObservableSum::single(n, PauliKey::single(qubit, p), 1.0));
            inf_norm(&diff).unwrap_or(f64::INFINITY)
        })
        .sum()
}
