//! Line-based circuit file format.
//!
//! ```text
//! # comment
//! qubits 2
//! gateset clifford+t
//! layer
//! h 0
//! layer
//! cx 0 1
//! ```
//!
//! When a file contains `layer` markers, every marker opens a new layer and
//! gates are placed exactly as written (gates before the first marker form an
//! implicit first layer). Without markers, consecutive gates with disjoint
//! supports are packed greedily into one layer. `reset <q>...` lines are only
//! accepted in programs and occupy their own time step.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::circuit::{Circuit, Gate, Layer, Program, ProgramStep};
use crate::gates::GateSet;

pub const DEFAULT_GATE_SET: &str = "clifford+t";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatErrorKind {
    #[error("missing `qubits <n>` header")]
    MissingHeader,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unknown gate set `{0}`")]
    UnknownGateSet(String),
    #[error("file declares gate set `{found}` but `{expected}` was requested")]
    GateSetMismatch { found: String, expected: String },
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("bad qubit index `{0}`")]
    BadQubit(String),
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("gate `{mnemonic}` expects {expected} qubit(s), got {got}")]
    Arity {
        mnemonic: String,
        expected: usize,
        got: usize,
    },
    #[error("gate repeats qubit {0}")]
    RepeatedQubit(usize),
    #[error("duplicate qubit {0} in layer")]
    DuplicateQubitInLayer(usize),
    #[error("`reset` is only allowed in programs")]
    ResetNotAllowed,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct FormatError {
    pub line: usize,
    pub kind: FormatErrorKind,
}

fn err(line: usize, kind: FormatErrorKind) -> FormatError {
    FormatError { line, kind }
}

/// Parse a circuit using `gate_set`. A `gateset` line naming another set is an error.
pub fn parse_circuit(text: &str, gate_set: &Arc<GateSet>) -> Result<Circuit, FormatError> {
    let p = parse(text, Some(gate_set), false)?;
    to_circuit(p)
}

/// Parse a circuit, resolving the gate set from its `gateset` line
/// (default `clifford+t`).
pub fn parse_circuit_auto(text: &str) -> Result<Circuit, FormatError> {
    to_circuit(parse(text, None, false)?)
}

/// Parse a program (circuit with `reset` lines), resolving its gate set as
/// [`parse_circuit_auto`] does unless `gate_set` is given.
pub fn parse_program(text: &str, gate_set: Option<&Arc<GateSet>>) -> Result<Program, FormatError> {
    parse(text, gate_set, true)
}

fn to_circuit(p: Program) -> Result<Circuit, FormatError> {
    let layers = p
        .steps
        .into_iter()
        .map(|s| match s {
            ProgramStep::Layer(l) => l,
            ProgramStep::Reset(_) => unreachable!("resets rejected while parsing"),
        })
        .collect();
    // Every gate was validated while parsing.
    Ok(Circuit::new(p.n_qubits, p.gate_set, layers).expect("validated layers"))
}

/// Value of `key=<usize>` in a `# <tag> key=value` comment, e.g. `# sewn n=3`.
pub fn header_value(text: &str, tag: &str, key: &str) -> Option<usize> {
    text.lines().find_map(|line| {
        let rest = line.trim().strip_prefix('#')?.trim();
        let mut words = rest.split_whitespace();
        (words.next()? == tag).then_some(())?;
        words.find_map(|w| w.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
    })
}

struct Builder {
    n: usize,
    strict: bool,
    steps: Vec<ProgramStep>,
    current: Option<(Layer, Vec<bool>)>,
}

impl Builder {
    fn flush(&mut self) {
        if let Some((layer, _)) = self.current.take() {
            self.steps.push(ProgramStep::Layer(layer));
        }
    }

    fn open(&mut self) {
        self.flush();
        self.current = Some((Vec::new(), vec![false; self.n]));
    }

    fn push(&mut self, gate: Gate, line: usize) -> Result<(), FormatError> {
        let clash = |used: &Vec<bool>| gate.qubits().iter().copied().find(|&q| used[q]);
        match &self.current {
            None => self.open(),
            Some((_, used)) => {
                if let Some(q) = clash(used) {
                    if self.strict {
                        return Err(err(line, FormatErrorKind::DuplicateQubitInLayer(q)));
                    }
                    self.open();
                }
            }
        }
        let (layer, used) = self.current.as_mut().expect("layer open");
        for &q in gate.qubits() {
            used[q] = true;
        }
        layer.push(gate);
        Ok(())
    }
}

fn parse(
    text: &str,
    requested: Option<&Arc<GateSet>>,
    allow_reset: bool,
) -> Result<Program, FormatError> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, w)| !w.is_empty())
        .collect();
    let strict = lines
        .iter()
        .any(|(_, w)| w[0].eq_ignore_ascii_case("layer"));

    let mut n: Option<usize> = None;
    let mut gate_set: Option<Arc<GateSet>> = None;
    let mut builder: Option<Builder> = None;

    for (line, words) in &lines {
        let line = *line;
        let head = words[0].to_ascii_lowercase();
        match head.as_str() {
            "qubits" => {
                if n.is_some() || builder.is_some() {
                    return Err(err(line, FormatErrorKind::MalformedHeader("repeated or late `qubits` line".into())));
                }
                let value = match words.as_slice() {
                    [_, v] => v.parse::<usize>().ok().filter(|&v| v > 0),
                    _ => None,
                };
                n = Some(value.ok_or_else(|| {
                    err(line, FormatErrorKind::MalformedHeader("expected `qubits <n>` with n >= 1".into()))
                })?);
            }
            "gateset" => {
                if gate_set.is_some() || builder.is_some() {
                    return Err(err(line, FormatErrorKind::MalformedHeader("repeated or late `gateset` line".into())));
                }
                let [_, name] = words.as_slice() else {
                    return Err(err(line, FormatErrorKind::MalformedHeader("expected `gateset <name>`".into())));
                };
                gate_set = Some(resolve_gate_set(name, requested, line)?);
            }
            _ => {
                let n = n.ok_or_else(|| err(line, FormatErrorKind::MissingHeader))?;
                let gs = match &gate_set {
                    Some(g) => g.clone(),
                    None => {
                        let g = match requested {
                            Some(g) => g.clone(),
                            None => resolve_gate_set(DEFAULT_GATE_SET, None, line)?,
                        };
                        gate_set = Some(g.clone());
                        g
                    }
                };
                let b = builder.get_or_insert_with(|| Builder {
                    n,
                    strict,
                    steps: Vec::new(),
                    current: None,
                });
                match head.as_str() {
                    "layer" => {
                        if words.len() != 1 {
                            return Err(err(line, FormatErrorKind::MalformedHeader("`layer` takes no arguments".into())));
                        }
                        b.open();
                    }
                    "reset" => {
                        if !allow_reset {
                            return Err(err(line, FormatErrorKind::ResetNotAllowed));
                        }
                        let qubits = parse_qubits(&words[1..], n, line)?;
                        let mut sorted = qubits.clone();
                        sorted.sort_unstable();
                        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                            return Err(err(line, FormatErrorKind::RepeatedQubit(w[0])));
                        }
                        b.flush();
                        b.steps.push(ProgramStep::Reset(qubits));
                    }
                    _ => {
                        let kind = gs
                            .lookup(&head)
                            .ok_or_else(|| err(line, FormatErrorKind::UnknownMnemonic(words[0].to_string())))?;
                        let qubits = parse_qubits(&words[1..], n, line)?;
                        let def = gs.gate(kind);
                        if qubits.len() != def.arity {
                            return Err(err(
                                line,
                                FormatErrorKind::Arity {
                                    mnemonic: def.mnemonic.clone(),
                                    expected: def.arity,
                                    got: qubits.len(),
                                },
                            ));
                        }
                        if qubits.len() == 2 && qubits[0] == qubits[1] {
                            return Err(err(line, FormatErrorKind::RepeatedQubit(qubits[0])));
                        }
                        b.push(Gate::new(kind, &qubits), line)?;
                    }
                }
            }
        }
    }

    let n = n.ok_or_else(|| err(lines.last().map_or(1, |l| l.0), FormatErrorKind::MissingHeader))?;
    let gate_set = match gate_set {
        Some(g) => g,
        None => match requested {
            Some(g) => g.clone(),
            None => resolve_gate_set(DEFAULT_GATE_SET, None, 1)?,
        },
    };
    let steps = match builder {
        Some(mut b) => {
            b.flush();
            b.steps
        }
        None => Vec::new(),
    };
    Ok(Program {
        n_qubits: n,
        gate_set,
        steps,
    })
}

fn resolve_gate_set(
    name: &str,
    requested: Option<&Arc<GateSet>>,
    line: usize,
) -> Result<Arc<GateSet>, FormatError> {
    match requested {
        Some(g) if g.name() == name.to_ascii_lowercase() => Ok(g.clone()),
        Some(g) => Err(err(
            line,
            FormatErrorKind::GateSetMismatch {
                found: name.to_string(),
                expected: g.name().to_string(),
            },
        )),
        None => GateSet::builtin(name).map_err(|_| err(line, FormatErrorKind::UnknownGateSet(name.to_string()))),
    }
}

fn parse_qubits(words: &[&str], n: usize, line: usize) -> Result<Vec<usize>, FormatError> {
    words
        .iter()
        .map(|w| {
            let q: usize = w
                .parse()
                .map_err(|_| err(line, FormatErrorKind::BadQubit(w.to_string())))?;
            if q >= n {
                return Err(err(line, FormatErrorKind::QubitOutOfRange { qubit: q, n }));
            }
            Ok(q)
        })
        .collect()
}

fn write_layer(out: &mut String, gs: &GateSet, layer: &Layer) {
    out.push_str("layer\n");
    for g in layer {
        out.push_str(&gs.gate(g.kind).mnemonic);
        for q in g.qubits() {
            let _ = write!(out, " {q}");
        }
        out.push('\n');
    }
}

/// Canonical text: header, explicit `layer` markers, lowercase mnemonics.
pub fn serialize_circuit(c: &Circuit) -> String {
    let mut out = format!("qubits {}\ngateset {}\n", c.n_qubits(), c.gate_set().name());
    for layer in c.layers() {
        write_layer(&mut out, c.gate_set(), layer);
    }
    out
}

pub fn serialize_program(p: &Program) -> String {
    let mut out = format!("qubits {}\ngateset {}\n", p.n_qubits, p.gate_set.name());
    for step in &p.steps {
        match step {
            ProgramStep::Layer(layer) => write_layer(&mut out, &p.gate_set, layer),
            ProgramStep::Reset(qs) => {
                out.push_str("reset");
                for q in qs {
                    let _ = write!(out, " {q}");
                }
                out.push('\n');
            }
        }
    }
    out
}
