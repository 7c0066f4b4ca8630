use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use shallowc::compressor::{compress, CompressConfig, CompressError, CutStrategy};
use shallowc::format::{header_value, parse_circuit, parse_circuit_auto, parse_program, FormatError};
use shallowc::lil::{lil, LilConfig, LilError, SearchConfig, SearchFailure, SewError, SewnCircuit};
use shallowc::shadows::{
    generate_dataset, generate_exact_dataset, product_state, LearnConfig, ShadowError, ShadowMode, StabilizerAxis,
};
use shallowc::sim::SimError;
use shallowc::verify::{verify, Channel, ChannelOutput, ProgramChannel, VerifyConfig, VerifyError};
use shallowc::{Circuit, GateSet};

use crate::args::{Command, Opts, StrategyKind};

/// A failed run; the variant fixes the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Budget(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Budget(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Budget(m) => m,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SewError> for Failure {
    fn from(e: SewError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::WidthOverCap { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ShadowError> for Failure {
    fn from(e: ShadowError) -> Self {
        match e {
            ShadowError::Parse { .. } | ShadowError::PayloadMismatch { .. } => Failure::Input(e.to_string()),
            _ => Failure::Budget(e.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Sim(s) => s.into(),
            VerifyError::TooFewSamples { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<CompressError> for Failure {
    fn from(e: CompressError) -> Self {
        match e {
            CompressError::BadStrategy(_) | CompressError::Pool(_) => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

/// Run one subcommand; returns the path of the written report.
pub fn run(cmd: &Command) -> Result<PathBuf, Failure> {
    let opts = cmd.opts();
    if opts.threads > 0 && !matches!(cmd, Command::Compress(_)) {
        // Fails only when a global pool already exists, which then serves instead.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(opts.threads).build_global();
    }
    match cmd {
        Command::Compress(o) => run_compress(cmd, o),
        Command::Lil(o) => run_lil(cmd, o),
        Command::Verify(o) => run_verify(cmd, o),
        Command::Simulate(o) => run_simulate(cmd, o),
        Command::GenShadows(o) => run_gen_shadows(cmd, o),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// `dir/stem.<suffix>` next to the input.
fn derived(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    input.with_file_name(format!("{stem}.{suffix}"))
}

fn write_report(cmd: &Command, body: Value, default_suffix: &str) -> Result<PathBuf, Failure> {
    let opts = cmd.opts();
    let path = opts.report.clone().unwrap_or_else(|| derived(&opts.input, default_suffix));
    let mut report = json!({ "run": cmd });
    if let (Value::Object(dst), Value::Object(src)) = (&mut report, body) {
        dst.extend(src);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&path, &(text + "\n"))?;
    Ok(path)
}

fn load_circuit(opts: &Opts) -> Result<(Circuit, String), Failure> {
    let text = read(&opts.input)?;
    let c = match &opts.gate_set {
        Some(name) => {
            let gs = GateSet::builtin(name).map_err(|e| Failure::Usage(e.to_string()))?;
            parse_circuit(&text, &gs)?
        }
        None => parse_circuit_auto(&text)?,
    };
    Ok((c, text))
}

fn lil_config(o: &Opts) -> LilConfig {
    LilConfig {
        mode: o.mode,
        samples: o.samples,
        seed: o.seed,
        learn: LearnConfig {
            k_max: o.k_max,
            epsilon: o.epsilon,
            delta: o.delta,
            ..LearnConfig::default()
        },
        search: SearchConfig {
            d_inv: o.d_inv,
            ..SearchConfig::default()
        },
        ..LilConfig::default()
    }
}

fn verify_config(o: &Opts) -> VerifyConfig {
    VerifyConfig {
        epsilon: o.epsilon,
        delta: o.delta,
        samples: o.verify_samples,
        mode: o.mode,
        thresholds: o.thresholds,
        seed: o.seed,
        ..VerifyConfig::default()
    }
}

fn cut_strategy(o: &Opts) -> Result<CutStrategy, Failure> {
    let text = match (o.cut_strategy, &o.cut_ratio) {
        (StrategyKind::Half, None) => "half".to_string(),
        (StrategyKind::Half | StrategyKind::Theta, Some(r)) => format!("theta:{r}"),
        (StrategyKind::Theta, None) => "theta:1/2".to_string(),
        (StrategyKind::Window, _) => "window".to_string(),
        (StrategyKind::Partition, Some(w)) => format!("partition:{w}"),
        (StrategyKind::Partition, None) => {
            return Err(Failure::Usage("`--cut-strategy partition` needs weights in `--cut-ratio`".into()))
        }
    };
    text.parse().map_err(|e: CompressError| Failure::Usage(e.to_string()))
}

fn run_compress(cmd: &Command, o: &Opts) -> Result<PathBuf, Failure> {
    let (c, text) = load_circuit(o)?;
    let cfg = CompressConfig {
        lil: LilConfig {
            fail_fast: true,
            ..lil_config(o)
        },
        verify: verify_config(o),
        strategy: cut_strategy(o)?,
        stop_depth: o.stop_depth,
        threads: o.threads,
        seed: o.seed,
    };
    let out = compress(&c, &cfg)?;
    let output = o.output.clone().unwrap_or_else(|| derived(&o.input, "compressed.qc"));
    if out.report.compressed_labels.is_empty() {
        write(&output, &text)?;
    } else {
        write(&output, &out.to_text())?;
    }
    let mut body = serde_json::to_value(&out.report).expect("report serializes");
    body["output_path"] = json!(output);
    write_report(cmd, body, "report.json")
}

fn describe_failure(f: &SearchFailure) -> String {
    let residual = |r: Option<f64>| r.map_or_else(|| "unknown".to_string(), |r| format!("{r:.6}"));
    match f {
        SearchFailure::NotFound { best_residual } => {
            format!("no inversion found, best residual {}", residual(Some(*best_residual)))
        }
        SearchFailure::BudgetExceeded { reason, best_residual } => {
            format!("search budget exceeded ({reason}), best residual {}", residual(*best_residual))
        }
    }
}

fn run_lil(cmd: &Command, o: &Opts) -> Result<PathBuf, Failure> {
    let (c, _) = load_circuit(o)?;
    let cfg = lil_config(o);
    let sewn = match lil(&c, &cfg) {
        Ok(s) => s,
        Err(LilError::Search { failures }) => {
            for f in &failures {
                eprintln!("qubit {}: {}", f.qubit, describe_failure(&f.failure));
            }
            return Err(Failure::Budget(format!(
                "local inversion failed for {} of {} qubits with d_inv = {}",
                failures.len(),
                c.n_qubits(),
                o.d_inv
            )));
        }
        Err(LilError::Learn(e)) => return Err(Failure::Budget(format!("learning failed: {e}"))),
        Err(LilError::Sew(e)) => return Err(e.into()),
    };
    let output = o.output.clone().unwrap_or_else(|| derived(&o.input, "sewn.qc"));
    write(&output, &sewn.to_text())?;
    let inversions: Vec<Value> = sewn
        .blocks
        .iter()
        .map(|b| json!({ "qubit": b.qubit, "depth": b.inversion.depth(), "support": b.support }))
        .collect();
    let body = json!({
        "n_qubits": c.n_qubits(),
        "input_depth": c.depth(),
        "sewn_depth": sewn.depth(),
        "sewing_layers": sewn.sewing_layers,
        "inversions": inversions,
        "epsilons": sewn.epsilons,
        "output_path": output,
    });
    write_report(cmd, body, "lil.json")
}

/// A circuit, a sewn circuit, or a program, read as a channel on `n` qubits
/// (`n` defaults to the width the file declares).
fn load_channel(text: &str, n: Option<usize>) -> Result<Box<dyn Channel>, Failure> {
    if header_value(text, "sewn", "n").is_some() {
        return Ok(Box::new(SewnCircuit::from_text(text)?));
    }
    let program = parse_program(text, None)?;
    if let Some(system) = header_value(text, "compressed", "n") {
        let offset = header_value(text, "compressed", "output").unwrap_or(0);
        if offset + system > program.n_qubits {
            return Err(Failure::Input(format!(
                "output register {offset}..{} exceeds width {}",
                offset + system,
                program.n_qubits
            )));
        }
        return Ok(Box::new(ProgramChannel::with_output(program, system, offset)));
    }
    let system = n.unwrap_or(program.n_qubits);
    if system > program.n_qubits {
        return Err(Failure::Input(format!(
            "candidate has {} qubits, fewer than the {system} required",
            program.n_qubits
        )));
    }
    match program.as_circuit() {
        Some(c) if c.n_qubits() == system => Ok(Box::new(c)),
        _ => Ok(Box::new(ProgramChannel::new(program, system))),
    }
}

fn run_verify(cmd: &Command, o: &Opts) -> Result<PathBuf, Failure> {
    let (target, _) = load_circuit(o)?;
    let cand_path = o
        .candidate
        .as_ref()
        .ok_or_else(|| Failure::Usage("`verify` needs `--candidate`".into()))?;
    let candidate = load_channel(&read(cand_path)?, Some(target.n_qubits()))?;
    let verdict = verify(candidate.as_ref(), &target, &verify_config(o))?;
    eprintln!("verdict: {:?} (d_ave {:.3e})", verdict.status, verdict.d_ave_estimate);
    let body = json!({ "n_qubits": target.n_qubits(), "verdict": verdict });
    write_report(cmd, body, "verify.json")
}

fn complex_pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
#[serde(untagged)]
enum StateBody {
    Pure { amplitudes: Vec<[f64; 2]> },
    Mixed { purity: f64, density: Vec<Vec<[f64; 2]>> },
}

fn run_simulate(cmd: &Command, o: &Opts) -> Result<PathBuf, Failure> {
    let text = read(&o.input)?;
    let channel = match &o.gate_set {
        Some(_) => Box::new(load_circuit(o)?.0),
        None => load_channel(&text, None)?,
    };
    let n = channel.n_qubits();
    let codes = o.state.clone().unwrap_or_else(|| "0".repeat(n));
    let axes: Vec<StabilizerAxis> = codes
        .chars()
        .map(StabilizerAxis::from_code)
        .collect::<Option<_>>()
        .filter(|a: &Vec<_>| a.len() == n)
        .ok_or_else(|| Failure::Usage(format!("`--state` needs {n} codes from `01+-rl`, got `{codes}`")))?;
    let state = match channel.apply_pure(&product_state(&axes))? {
        ChannelOutput::Pure(psi) => StateBody::Pure {
            amplitudes: psi.amplitudes().iter().map(complex_pair).collect(),
        },
        ChannelOutput::Mixed(rho) => {
            let m = rho.matrix();
            StateBody::Mixed {
                purity: rho.purity(),
                density: (0..m.nrows())
                    .map(|r| (0..m.ncols()).map(|c| complex_pair(&m[(r, c)])).collect())
                    .collect(),
            }
        }
    };
    let body = json!({ "n_qubits": n, "state": codes, "output": state });
    let path = write_report(cmd, body, "sim.json")?;
    if let Some(out) = &o.output {
        fs::copy(&path, out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    }
    Ok(path)
}

fn run_gen_shadows(cmd: &Command, o: &Opts) -> Result<PathBuf, Failure> {
    let (c, _) = load_circuit(o)?;
    let ds = match o.mode {
        ShadowMode::Exact => generate_exact_dataset(&c, o.seed)?,
        ShadowMode::Sampled => {
            let learn = lil_config(o).learn;
            let count = o.samples.unwrap_or_else(|| learn.min_samples(c.n_qubits()));
            generate_dataset(&c, count, o.seed)?
        }
    };
    let output = o.output.clone().unwrap_or_else(|| derived(&o.input, "shadows.txt"));
    write(&output, &ds.to_text())?;
    let body = json!({
        "n_qubits": ds.n,
        "samples": ds.samples.len(),
        "mode": ds.mode,
        "seed": ds.seed,
        "output_path": output,
    });
    write_report(cmd, body, "shadows.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_paths_sit_next_to_the_input() {
        assert_eq!(derived(Path::new("a/b/c.qc"), "report.json"), PathBuf::from("a/b/c.report.json"));
        assert_eq!(derived(Path::new("c"), "sewn.qc"), PathBuf::from("c.sewn.qc"));
    }

    #[test]
    fn plain_circuit_loads_as_unitary_channel() {
        let ch = load_channel("qubits 2\nlayer\ncx 0 1\n", None).unwrap();
        assert_eq!(ch.n_qubits(), 2);
        assert!(ch.is_unitary());
    }

    #[test]
    fn compressed_header_sets_output_register() {
        let ch = load_channel("# compressed n=1 output=1\nqubits 2\ngateset clifford+t+swap\nlayer\nswap 0 1\n", None)
            .unwrap();
        assert_eq!(ch.n_qubits(), 1);
        let psi = product_state(&[StabilizerAxis::One]);
        let out = ch.apply_pure(&psi).unwrap();
        assert!(out.distance(&ChannelOutput::Pure(psi)).unwrap() < 1e-12);
    }

    #[test]
    fn compressed_header_rejects_out_of_range_output() {
        let err = load_channel("# compressed n=2 output=1\nqubits 2\nlayer\nh 0\n", None).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn failure_codes() {
        assert_eq!(Failure::Usage(String::new()).exit_code(), 1);
        assert_eq!(Failure::Input(String::new()).exit_code(), 2);
        assert_eq!(Failure::Budget(String::new()).exit_code(), 3);
        let e: Failure = SimError::WidthOverCap { width: 20, cap: 12 }.into();
        assert_eq!(e.exit_code(), 3);
    }
}
