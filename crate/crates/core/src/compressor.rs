//! Recursive compression driver.
//!
//! Nodes of an ordered worklist are learned and verified; a node that passes
//! is replaced by its sewn circuit, a node that fails is cut and its parts
//! are queued in temporal order. Leaves are assembled on a doubled register
//! whose two halves trade roles after every compressed segment.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{BinaryLabel, Circuit, CircuitError, CutRatio, Program, ProgramStep};
use crate::format::{serialize_circuit, serialize_program};
use crate::lil::{lil, LilConfig, LilError, SewnCircuit};
use crate::shadows::derive_seed;
use crate::verify::{verify, ProgramChannel, Verdict, VerdictStatus, VerifyConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("cannot compress an empty circuit")]
    EmptyCircuit,
    #[error("label set is not prefix-free: `{0}` is a prefix of `{1}`")]
    NotPrefixFree(String, String),
    #[error("node `{0}` is unresolved")]
    Unresolved(String),
    #[error("invalid cut strategy: {0}")]
    BadStrategy(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// How a node that failed verification is split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CutStrategy {
    /// `θ = 1/2`.
    Half,
    Theta { ratio: CutRatio },
    /// Longest window `[t_i, t_f)` that compresses on its own, plus the parts
    /// before and after it.
    Window,
    /// Parts with depths proportional to `weights`.
    Partition { weights: Vec<u64> },
}

impl fmt::Display for CutStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutStrategy::Half => f.write_str("half"),
            CutStrategy::Theta { ratio } => write!(f, "theta:{ratio}"),
            CutStrategy::Window => f.write_str("window"),
            CutStrategy::Partition { weights } => {
                let w: Vec<String> = weights.iter().map(u64::to_string).collect();
                write!(f, "partition:{}", w.join(","))
            }
        }
    }
}

impl FromStr for CutStrategy {
    type Err = CompressError;

    /// `half`, `window`, `theta:<ratio>`, or `partition:<w>,<w>,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CompressError::BadStrategy(s.to_string());
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("half", None) => Ok(CutStrategy::Half),
            ("window", None) => Ok(CutStrategy::Window),
            ("theta", Some(a)) => Ok(CutStrategy::Theta {
                ratio: CutRatio::parse(a).ok_or_else(bad)?,
            }),
            ("partition", Some(a)) => {
                let weights = a
                    .split(',')
                    .map(|w| w.trim().parse::<u64>().ok().filter(|&w| w > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(bad)?;
                if weights.len() < 2 {
                    return Err(bad());
                }
                Ok(CutStrategy::Partition { weights })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressConfig {
    pub lil: LilConfig,
    pub verify: VerifyConfig,
    pub strategy: CutStrategy,
    /// Nodes this shallow are kept as they are.
    pub stop_depth: usize,
    /// Worker threads; 0 uses the global default.
    pub threads: usize,
    pub seed: u64,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            lil: LilConfig {
                fail_fast: true,
                ..LilConfig::default()
            },
            verify: VerifyConfig::default(),
            strategy: CutStrategy::Half,
            stop_depth: 1,
            threads: 0,
            seed: 0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Pending,
    Compressed,
    Cut,
    Terminal,
}

#[derive(Clone, Debug)]
pub struct CompressionNode {
    pub label: BinaryLabel,
    pub circuit: Circuit,
    pub status: NodeStatus,
    pub sewn: Option<SewnCircuit>,
    /// Child node indices in temporal order; two for every cut node.
    pub children: Vec<usize>,
    pub verdict: Option<Verdict>,
    /// Per-qubit inversion residuals (best found on failure).
    pub residuals: Vec<Option<f64>>,
    pub note: Option<String>,
    pub seconds: f64,
}

impl CompressionNode {
    fn pending(label: BinaryLabel, circuit: Circuit) -> Self {
        Self {
            label,
            circuit,
            status: NodeStatus::Pending,
            sewn: None,
            children: Vec::new(),
            verdict: None,
            residuals: Vec::new(),
            note: None,
            seconds: 0.0,
        }
    }

    pub fn depth_out(&self) -> Option<usize> {
        match self.status {
            NodeStatus::Compressed => self.sewn.as_ref().map(SewnCircuit::depth),
            NodeStatus::Terminal => Some(self.circuit.depth()),
            _ => None,
        }
    }
}

/// Node arena; index 0 is the root.
#[derive(Clone, Debug)]
pub struct CompressionTree {
    pub nodes: Vec<CompressionNode>,
}

impl CompressionTree {
    pub fn root(&self) -> &CompressionNode {
        &self.nodes[0]
    }

    /// Node indices in pre-order (parents first, children in temporal order).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.nodes[i].children.iter().rev());
        }
        out
    }

    /// Leaf indices in temporal order.
    pub fn leaves(&self) -> Vec<usize> {
        self.preorder()
            .into_iter()
            .filter(|&i| self.nodes[i].children.is_empty())
            .collect()
    }

    /// Number of levels: the longest label plus one.
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.label.len()).max().unwrap_or(0) + 1
    }

    /// Labels of compressed leaves, in temporal order.
    pub fn compressed_labels(&self) -> Vec<BinaryLabel> {
        self.leaves()
            .into_iter()
            .filter(|&i| self.nodes[i].status == NodeStatus::Compressed)
            .map(|i| self.nodes[i].label.clone())
            .collect()
    }
}

/// `1 − Σ_{l∈S} 2^{−|l|}` for a prefix-free label set.
pub fn compression_rate(labels: &[BinaryLabel]) -> Result<f64, CompressError> {
    for a in labels {
        for b in labels {
            if !std::ptr::eq(a, b) && a.is_prefix_of(b) {
                return Err(CompressError::NotPrefixFree(a.to_string(), b.to_string()));
            }
        }
    }
    Ok(1.0 - labels.iter().map(|l| 0.5f64.powi(l.len() as i32)).sum::<f64>())
}

/// Binary split of a node, possibly several levels deep for multi-way cuts.
#[derive(Clone, Debug, PartialEq)]
pub enum Split {
    Leaf(Circuit),
    Node(Box<Split>, Box<Split>),
}

impl Split {
    /// Left-leaning binarization: `[a, b, c]` becomes `((a, b), c)`, so the
    /// parts receive labels `00`, `01`, `1`.
    pub fn binarize(mut parts: Vec<Circuit>) -> Split {
        let last = parts.pop().expect("at least one part");
        if parts.is_empty() {
            Split::Leaf(last)
        } else {
            Split::Node(Box::new(Split::binarize(parts)), Box::new(Split::Leaf(last)))
        }
    }

    /// Label suffixes of the leaves, in temporal order.
    pub fn leaf_suffixes(&self) -> Vec<String> {
        match self {
            Split::Leaf(_) => vec![String::new()],
            Split::Node(l, r) => {
                let mut out: Vec<String> = l.leaf_suffixes().into_iter().map(|s| format!("0{s}")).collect();
                out.extend(r.leaf_suffixes().into_iter().map(|s| format!("1{s}")));
                out
            }
        }
    }
}

/// Part lengths for `weights` over depth `d`, each at least 1, from rounded
/// cumulative boundaries.
fn partition_lengths(d: usize, weights: &[u64]) -> Option<Vec<usize>> {
    if weights.len() > d {
        return None;
    }
    let total: u64 = weights.iter().sum();
    let mut bounds = Vec::with_capacity(weights.len());
    let mut acc = 0u64;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        let raw = ((acc as f64 / total as f64) * d as f64).round() as usize;
        let lo = k + 1;
        let hi = d - (weights.len() - 1 - k);
        bounds.push(raw.clamp(lo, hi));
    }
    for k in 1..bounds.len() {
        bounds[k] = bounds[k].max(bounds[k - 1] + 1);
    }
    let mut prev = 0;
    Some(
        bounds
            .into_iter()
            .map(|b| {
                let len = b - prev;
                prev = b;
                len
            })
            .collect(),
    )
}

fn split_at_lengths(c: &Circuit, lengths: &[usize]) -> Vec<Circuit> {
    let mut start = 0;
    lengths
        .iter()
        .map(|&len| {
            let part = c.slice(start, start + len);
            start += len;
            part
        })
        .collect()
}

/// Outcome of learning and verifying one circuit.
struct Attempt {
    sewn: Option<SewnCircuit>,
    verdict: Option<Verdict>,
    residuals: Vec<Option<f64>>,
    note: Option<String>,
}

impl Attempt {
    fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.status == VerdictStatus::Pass)
    }
}

fn attempt(c: &Circuit, tag: &str, cfg: &CompressConfig) -> Attempt {
    let lil_cfg = LilConfig {
        seed: derive_seed(cfg.seed, &format!("lil/{tag}")),
        ..cfg.lil.clone()
    };
    match lil(c, &lil_cfg) {
        Ok(sewn) => {
            let residuals = sewn
                .blocks
                .iter()
                .map(|b| Some(crate::lil::objective(&b.inversion, b.qubit, &sewn.observables[b.qubit])))
                .collect();
            let verify_cfg = VerifyConfig {
                seed: derive_seed(cfg.seed, &format!("verify/{tag}")),
                ..cfg.verify.clone()
            };
            match verify(&sewn, c, &verify_cfg) {
                Ok(v) => Attempt {
                    sewn: Some(sewn),
                    verdict: Some(v),
                    residuals,
                    note: None,
                },
                Err(e) => Attempt {
                    sewn: None,
                    verdict: None,
                    residuals,
                    note: Some(format!("verification error: {e}")),
                },
            }
        }
        Err(e) => {
            let residuals = match &e {
                LilError::Search { failures } => {
                    let mut r = vec![None; c.n_qubits()];
                    for f in failures {
                        r[f.qubit] = f.failure.best_residual();
                    }
                    r
                }
                _ => Vec::new(),
            };
            Attempt {
                sewn: None,
                verdict: None,
                residuals,
                note: Some(e.to_string()),
            }
        }
    }
}

/// Children of a node that failed, per the configured strategy.
pub fn cut_strategy(c: &Circuit, label: &BinaryLabel, cfg: &CompressConfig) -> Result<Split, CompressError> {
    let d = c.depth();
    if d < 2 {
        return Err(CircuitError::NotCuttable(d).into());
    }
    let half = || -> Result<Split, CompressError> {
        let (l, r) = c.cut(CutRatio::HALF)?;
        Ok(Split::binarize(vec![l, r]))
    };
    match &cfg.strategy {
        CutStrategy::Half => half(),
        CutStrategy::Theta { ratio } => {
            let (l, r) = c.cut(*ratio)?;
            Ok(Split::binarize(vec![l, r]))
        }
        CutStrategy::Partition { weights } => match partition_lengths(d, weights) {
            Some(lengths) => Ok(Split::binarize(split_at_lengths(c, &lengths))),
            None => half(),
        },
        CutStrategy::Window => {
            let min_len = (cfg.stop_depth + 1).max(1);
            for len in (min_len..d).rev() {
                for t_i in 0..=d - len {
                    let (before, window, after) = c.window(t_i, t_i + len)?;
                    let tag = format!("{label}/window/{t_i}-{}", t_i + len);
                    if attempt(&window, &tag, cfg).passed() {
                        let parts: Vec<Circuit> =
                            [before, window, after].into_iter().filter(|p| p.depth() > 0).collect();
                        return Ok(Split::binarize(parts));
                    }
                }
            }
            half()
        }
    }
}

enum Resolution {
    Compressed(Attempt),
    Terminal(Option<Attempt>),
    Cut(Attempt, Split),
}

fn resolve(node: &CompressionNode, cfg: &CompressConfig) -> Result<(Resolution, f64), CompressError> {
    let start = Instant::now();
    let c = &node.circuit;
    let res = if c.depth() <= cfg.stop_depth {
        Resolution::Terminal(None)
    } else {
        let a = attempt(c, node.label.as_str(), cfg);
        if a.passed() {
            Resolution::Compressed(a)
        } else if c.depth() < 2 {
            Resolution::Terminal(Some(a))
        } else {
            let split = cut_strategy(c, &node.label, cfg)?;
            Resolution::Cut(a, split)
        }
    };
    Ok((res, start.elapsed().as_secs_f64()))
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeRecord {
    pub label: String,
    pub status: NodeStatus,
    pub depth_in: usize,
    pub depth_out: Option<usize>,
    pub residuals: Vec<Option<f64>>,
    pub verdict: Option<Verdict>,
    pub note: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressionReport {
    pub config: CompressConfig,
    pub tree: Vec<NodeRecord>,
    #[serde(rename = "R")]
    pub r: f64,
    pub depth_ratio: f64,
    #[serde(rename = "S")]
    pub compressed_labels: Vec<String>,
    pub n_qubits: usize,
    pub input_depth: usize,
    pub output_depth: usize,
    pub output_width: usize,
    /// First qubit of the register holding the output.
    pub output_offset: usize,
    pub resets: usize,
    pub tree_height: usize,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
}

impl CompressionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report as JSON with timing fields and the thread count zeroed.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        r.config.threads = 0;
        r.tree.iter_mut().for_each(|n| n.seconds = 0.0);
        serde_json::to_value(&r).expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct Compressed {
    pub tree: CompressionTree,
    pub report: CompressionReport,
    pub output: Program,
    pub output_offset: usize,
    pub n_qubits: usize,
}

impl Compressed {
    /// The output read as a channel on the original width.
    pub fn channel(&self) -> ProgramChannel {
        ProgramChannel::with_output(self.output.clone(), self.n_qubits, self.output_offset)
    }

    /// Output text: the plain circuit when nothing was compressed, otherwise
    /// the program with a `# compressed n=<n> output=<offset>` header.
    pub fn to_text(&self) -> String {
        match (self.output.n_qubits == self.n_qubits, self.output.as_circuit()) {
            (true, Some(c)) => serialize_circuit(&c),
            _ => format!(
                "# compressed n={} output={}\n{}",
                self.n_qubits,
                self.output_offset,
                serialize_program(&self.output)
            ),
        }
    }
}

/// Run the worklist to completion.
pub fn compress(c: &Circuit, cfg: &CompressConfig) -> Result<Compressed, CompressError> {
    if c.depth() == 0 {
        return Err(CompressError::EmptyCircuit);
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CompressError::Pool(e.to_string()))?;
    let mut tree = CompressionTree {
        nodes: vec![CompressionNode::pending(BinaryLabel::root(), c.clone())],
    };
    pool.install(|| -> Result<(), CompressError> {
        loop {
            let pending: Vec<usize> = (0..tree.nodes.len())
                .filter(|&i| tree.nodes[i].status == NodeStatus::Pending)
                .collect();
            if pending.is_empty() {
                return Ok(());
            }
            let results: Vec<Result<(Resolution, f64), CompressError>> =
                pending.par_iter().map(|&i| resolve(&tree.nodes[i], cfg)).collect();
            for (i, r) in pending.into_iter().zip(results) {
                let (res, seconds) = r?;
                tree.nodes[i].seconds = seconds;
                match res {
                    Resolution::Compressed(a) => {
                        let node = &mut tree.nodes[i];
                        node.status = NodeStatus::Compressed;
                        node.sewn = a.sewn;
                        node.verdict = a.verdict;
                        node.residuals = a.residuals;
                    }
                    Resolution::Terminal(a) => {
                        let node = &mut tree.nodes[i];
                        node.status = NodeStatus::Terminal;
                        if let Some(a) = a {
                            node.verdict = a.verdict;
                            node.residuals = a.residuals;
                            node.note = a.note;
                        }
                    }
                    Resolution::Cut(a, split) => {
                        let node = &mut tree.nodes[i];
                        node.verdict = a.verdict;
                        node.residuals = a.residuals;
                        node.note = a.note;
                        attach(&mut tree, i, split);
                    }
                }
            }
        }
    })?;

    let (output, output_offset) = assemble(&tree)?;
    let labels = tree.compressed_labels();
    let r = compression_rate(&labels)?;
    let records = tree
        .preorder()
        .into_iter()
        .map(|i| {
            let n = &tree.nodes[i];
            NodeRecord {
                label: n.label.as_str().to_string(),
                status: n.status,
                depth_in: n.circuit.depth(),
                depth_out: n.depth_out(),
                residuals: n.residuals.clone(),
                verdict: n.verdict.clone(),
                note: n.note.clone(),
                seconds: n.seconds,
            }
        })
        .collect();
    let report = CompressionReport {
        config: cfg.clone(),
        tree: records,
        r,
        depth_ratio: output.depth() as f64 / c.depth() as f64,
        compressed_labels: labels.iter().map(|l| l.as_str().to_string()).collect(),
        n_qubits: c.n_qubits(),
        input_depth: c.depth(),
        output_depth: output.depth(),
        output_width: output.n_qubits,
        output_offset,
        resets: output.reset_count(),
        tree_height: tree.height(),
        seed: cfg.seed,
        version: VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(Compressed {
        tree,
        report,
        output,
        output_offset,
        n_qubits: c.n_qubits(),
    })
}

/// Mark node `i` cut and append the nodes of `split` below it.
fn attach(tree: &mut CompressionTree, i: usize, split: Split) {
    tree.nodes[i].status = NodeStatus::Cut;
    let Split::Node(l, r) = split else {
        unreachable!("a cut has two sides");
    };
    for (bit, side) in [(false, *l), (true, *r)] {
        let label = tree.nodes[i].label.child(bit);
        let idx = tree.nodes.len();
        match side {
            Split::Leaf(c) => tree.nodes.push(CompressionNode::pending(label, c)),
            Split::Node(..) => {
                let circuit = flatten(&side);
                tree.nodes.push(CompressionNode::pending(label, circuit));
                attach(tree, idx, side);
            }
        }
        tree.nodes[i].children.push(idx);
    }
}

fn flatten(split: &Split) -> Circuit {
    match split {
        Split::Leaf(c) => c.clone(),
        Split::Node(l, r) => flatten(l).compose(&flatten(r)).expect("parts of one circuit"),
    }
}

/// Concatenate the leaves in temporal order.
///
/// Without compressed leaves the output is the input circuit. Otherwise the
/// output has `2n` qubits: the data starts on `0..n`; a compressed segment
/// takes the data register as system and the other register as ancilla, and
/// leaves the data on the ancilla register. The other register is reset
/// before every compressed segment but the first. Returns the program and the
/// first qubit of the final data register.
pub fn assemble(tree: &CompressionTree) -> Result<(Program, usize), CompressError> {
    let leaves = tree.leaves();
    for &i in &leaves {
        let node = &tree.nodes[i];
        if !matches!(node.status, NodeStatus::Compressed | NodeStatus::Terminal) {
            return Err(CompressError::Unresolved(node.label.to_string()));
        }
    }
    let root = &tree.root().circuit;
    let n = root.n_qubits();
    if leaves.iter().all(|&i| tree.nodes[i].status == NodeStatus::Terminal) {
        return Ok((Program::from_circuit(root), 0));
    }
    let set = Arc::new(root.gate_set().with_swap());
    let mut steps = Vec::new();
    let mut data = 0;
    let mut first = true;
    for &i in &leaves {
        let node = &tree.nodes[i];
        match node.status {
            NodeStatus::Terminal => {
                let c = node.circuit.embed(2 * n, set.clone(), |q| data + q)?;
                steps.extend(c.layers().iter().cloned().map(ProgramStep::Layer));
            }
            NodeStatus::Compressed => {
                let sewn = node.sewn.as_ref().ok_or_else(|| CompressError::Unresolved(node.label.to_string()))?;
                let anc = n - data;
                if !first {
                    steps.push(ProgramStep::Reset((anc..anc + n).collect()));
                }
                first = false;
                let c = sewn
                    .circuit
                    .embed(2 * n, set.clone(), |q| if q < n { data + q } else { anc + q - n })?;
                steps.extend(c.layers().iter().cloned().map(ProgramStep::Layer));
                data = anc;
            }
            _ => unreachable!("checked above"),
        }
    }
    Ok((
        Program {
            n_qubits: 2 * n,
            gate_set: set,
            steps,
        },
        data,
    ))
}
