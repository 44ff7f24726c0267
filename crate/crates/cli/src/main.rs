//! `cmlab`: build circuits, solve MDPs, and run the verification and
//! approximation experiments from the command line.

mod config;
mod families;
mod suites;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cmlab_core::approx::{run_approx_experiment, smooth, TrainConfig};
use cmlab_core::circuit::{decode, encode_with_meta};
use cmlab_core::mdp::{sample_dnf_condition, sampler_satisfaction_probability, MajoritySpecFile};
use cmlab_core::solver::backward_induction;
use cmlab_core::verify::{
    analyze_scaling, check_circuit_equivalence, scaling_csv, scaling_experiment, CheckMode, ScalingFamily,
    MAX_EXHAUSTIVE_WIDTH,
};
use cmlab_core::{BitString, DeterministicMdp, ParityMdpSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use config::{csv_header_line, emit, header, require, resolve, usage, UsageError};
use families::{Family, MajorityParams};
use suites::{Check, SuiteParams};

#[derive(Parser)]
#[command(name = "cmlab", version, about = "Circuit and MDP representation-complexity workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a circuit family member and write it as JSON.
    BuildCircuit(BuildArgs),
    /// Solve a majority or parity MDP and dump V/Q as JSON lines.
    Solve(SolveArgs),
    /// Run verification suites or check a circuit file.
    Verify(VerifyArgs),
    /// Measure size and depth of the circuit families.
    Scaling(ScalingArgs),
    /// Monte Carlo estimate of the sampled condition accepting s_reward.
    LemmaCondition(LemmaArgs),
    /// Draw DNF conditions from the sampler.
    SampleDnf(SampleArgs),
    /// Fit networks to model, reward and Q targets and report relative errors.
    Approx(ApproxArgs),
}

/// Majority MDP selection shared by several subcommands.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct MajorityFlags {
    /// MDP size (n = 2^b - 1 for majority MDPs).
    #[arg(long)]
    n: Option<usize>,
    /// Majority spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Reward representation bits, e.g. 1011001.
    #[arg(long)]
    s_reward: Option<String>,
    /// Sampled condition: total literal budget.
    #[arg(long)]
    m: Option<usize>,
    /// Sampled condition: literals per conjunct.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl MajorityFlags {
    fn params(&self) -> MajorityParams {
        MajorityParams {
            n: self.n,
            spec: self.spec.clone(),
            s_reward: self.s_reward.clone(),
            m: self.m,
            k: self.k,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct BuildArgs {
    /// majority-model, majority-reward, parity-model, parity-reward, addition, max, xor, delta, control
    #[arg(long)]
    family: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    mdp: MajorityFlags,
    /// Index k of the delta_k indicator.
    #[arg(long)]
    index: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct SolveArgs {
    /// majority (default) or parity
    #[arg(long)]
    family: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    mdp: MajorityFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct VerifyArgs {
    /// circuits, gadgets, scaling, bellman, lemmas, extraction, parity, condition, gradient, approx, mutation, all
    #[arg(long)]
    suite: Option<String>,
    /// Circuit JSON file to check against its family's semantics.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Family of --circuit (defaults to the file's metadata).
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    index: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    s_reward: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    m: Vec<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct ScalingArgs {
    /// Comma-separated family names (default: all six).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    families: Vec<String>,
    /// Comma-separated sizes (default: per-family).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    ns: Vec<usize>,
    #[arg(long)]
    max_slope: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct LemmaArgs {
    /// Number of variables (default 63).
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated literal budgets (default 6,12,24).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    m: Vec<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct SampleArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of conditions to draw (default 1).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct ApproxArgs {
    #[command(flatten)]
    #[serde(flatten)]
    mdp: MajorityFlags,
    /// Hidden layers (default 1).
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden width (default 8).
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Also write exponentially smoothed curves at this rate.
    #[arg(long)]
    smooth: Option<f64>,
    /// Output prefix: PREFIX.json, PREFIX.epochs.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("CMLAB_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| usage(format!("CMLAB_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::BuildCircuit(a) => cmd_build_circuit(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Scaling(a) => cmd_scaling(&a),
        Command::LemmaCondition(a) => cmd_lemma_condition(&a),
        Command::SampleDnf(a) => cmd_sample_dnf(&a),
        Command::Approx(a) => cmd_approx(&a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// build-circuit

fn cmd_build_circuit(args: &BuildArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let family = Family::parse(&require(a.family.clone(), "family")?)?;
    let spec = if family.needs_majority_spec() {
        Some(families::resolve_majority(&a.mdp.params())?)
    } else {
        None
    };
    let n = match (&spec, family) {
        (Some(s), _) => s.n(),
        (None, Family::Xor) => 2,
        (None, _) => require(a.mdp.n, "n")?,
    };
    let circuit = families::build(family, n, a.index, spec.as_ref())?;
    let mut meta = header("build-circuit", &cfg);
    meta["family"] = json!(family.name());
    meta["n"] = json!(n);
    if let Some(k) = a.index {
        meta["index"] = json!(k);
    }
    if let Some(s) = &spec {
        meta["spec"] = serde_json::to_value(MajoritySpecFile::from_spec(s, a.mdp.seed))?;
    }
    let text = encode_with_meta(&circuit, meta);
    let metrics = format!("{},{},{},{}", family.name(), n, circuit.size(), circuit.depth());
    match &a.out {
        Some(path) => {
            emit(Some(path), &text)?;
            println!("{metrics}");
        }
        None => {
            emit(None, &text)?;
            eprintln!("{metrics}");
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// solve

fn write_tables<M: DeterministicMdp>(
    mdp: &M,
    head: &Value,
    out: &mut dyn Write,
) -> Result<cmlab_core::solver::Solution> {
    let sol = backward_induction(mdp).map_err(|e| usage(e.to_string()))?;
    let width = mdp.state_width();
    writeln!(out, "{head}")?;
    for h in 1..=mdp.horizon() + 1 {
        for s in 0..1u64 << width {
            let state = BitString::from_int(s, width)?;
            writeln!(out, "{}", json!({"kind": "v", "h": h, "state": state, "value": sol.values.get(h, s)}))?;
            if h <= mdp.horizon() {
                for (a, q) in sol.q.row(h, s).iter().enumerate() {
                    writeln!(out, "{}", json!({"kind": "q", "h": h, "state": state, "action": a, "value": q}))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(sol)
}

fn cmd_solve(args: &SolveArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let mut head = header("solve", &cfg);
    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let summary = match a.family.as_deref().unwrap_or("majority") {
        "majority" => {
            let spec = families::resolve_majority(&a.mdp.params())?;
            head["spec"] = serde_json::to_value(MajoritySpecFile::from_spec(&spec, a.mdp.seed))?;
            let sol = write_tables(&spec, &head, &mut sink)?;
            let at = |rep: &BitString| sol.values.initial(spec.encode_state(0, rep.to_int()));
            json!({
                "horizon": spec.horizon(),
                "terminal_max": sol.values.step(spec.horizon() + 1).iter().max(),
                "v1_at_s_reward": at(spec.s_reward()),
                "v1_at_complement": at(&spec.s_reward().complement()),
            })
        }
        "parity" => {
            let n = require(a.mdp.n, "n")?;
            let spec = ParityMdpSpec::new(n).map_err(|e| usage(e.to_string()))?;
            let sol = write_tables(&spec, &head, &mut sink)?;
            json!({
                "horizon": n,
                "terminal_max": sol.values.step(n + 1).iter().max(),
                "v1_at_zero": sol.values.initial(0),
                "v1_at_one_hot": sol.values.initial(1),
            })
        }
        other => return Err(usage(format!("unknown solve family {other:?}; expected majority or parity"))),
    };
    drop(sink);
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// verify

fn suite_params(a: &VerifyArgs) -> SuiteParams {
    SuiteParams {
        n: a.n,
        m: a.m.clone(),
        k: a.k,
        seed: a.seed,
        trials: a.trials,
        depth: a.depth,
        width: a.width,
        epochs: a.epochs,
        repeats: a.repeats,
    }
}

fn report_checks(command: &str, cfg: &Value, checks: Vec<Check>, extra: Option<(&str, Value)>, out: Option<&PathBuf>) -> Result<bool> {
    for c in &checks {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    let passed = checks.iter().all(|c| c.passed);
    let mut doc = header(command, cfg);
    doc["checks"] = serde_json::to_value(&checks)?;
    if let Some((key, value)) = extra {
        doc[key] = value;
    }
    doc["passed"] = json!(passed);
    emit(out, &to_json(&doc))?;
    Ok(passed)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    if let Some(path) = &a.circuit {
        let check = verify_circuit_file(path, &a)?;
        return report_checks("verify", &cfg, vec![check], None, a.out.as_ref());
    }
    let suite = require(a.suite.clone(), "suite")?;
    let p = suite_params(&a);
    if suite == "scaling" {
        let (checks, rows) = suites::scaling()?;
        for c in &checks {
            eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
        }
        emit(a.out.as_ref(), &(csv_header_line("verify", &cfg) + &scaling_csv(&rows)))?;
        return Ok(checks.iter().all(|c| c.passed));
    }
    let names: Vec<&str> = if suite == "all" {
        suites::SUITES.to_vec()
    } else if suites::SUITES.contains(&suite.as_str()) {
        vec![suite.as_str()]
    } else {
        return Err(usage(format!(
            "unknown suite {suite:?}; expected one of {}, all",
            suites::SUITES.join(", ")
        )));
    };
    let mut checks = Vec::new();
    let mut rows = None;
    for name in names {
        checks.extend(match name {
            "circuits" => suites::circuits(&p)?,
            "gadgets" => suites::gadgets_suite(&p)?,
            "scaling" => {
                let (c, r) = suites::scaling()?;
                rows = Some(serde_json::to_value(r)?);
                c
            }
            "bellman" => suites::bellman(&p)?,
            "lemmas" => suites::lemmas(&p)?,
            "extraction" => suites::extraction(&p)?,
            "parity" => suites::parity(&p)?,
            "condition" => suites::condition(&p)?,
            "gradient" => suites::gradient(&p)?,
            "approx" => suites::approx(&p)?,
            "mutation" => suites::mutation(&p)?,
            _ => unreachable!("suite names are checked above"),
        });
    }
    report_checks("verify", &cfg, checks, rows.map(|r| ("scaling_rows", r)), a.out.as_ref())
}

fn verify_circuit_file(path: &PathBuf, a: &VerifyArgs) -> Result<Check> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = format!("circuit {}", path.display());
    let failed = |detail: Value| Check { name: name.clone(), passed: false, detail };
    let raw: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return Ok(failed(json!({ "error": format!("not JSON: {e}") }))),
    };
    let circuit = match decode(&text) {
        Ok(c) => c,
        Err(e) => return Ok(failed(json!({ "error": e.to_string() }))),
    };
    if let Err(violations) = circuit.validate() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Ok(failed(json!({ "error": "malformed circuit", "violations": list })));
    }
    let meta = &raw["meta"];
    let family_name = a
        .family
        .clone()
        .or_else(|| meta["family"].as_str().map(String::from))
        .ok_or_else(|| usage("--family is required when the circuit file has no metadata"))?;
    let family = Family::parse(&family_name)?;
    let index = a.index.or_else(|| meta["index"].as_u64());
    let flags_pick_spec = a.spec.is_some() || a.s_reward.is_some() || !a.m.is_empty() || a.k.is_some();
    let spec = if !family.needs_majority_spec() {
        None
    } else if !flags_pick_spec && meta["spec"].is_object() {
        let file: MajoritySpecFile =
            serde_json::from_value(meta["spec"].clone()).map_err(|e| usage(format!("metadata spec: {e}")))?;
        Some(file.to_spec().map_err(|e| usage(e.to_string()))?)
    } else {
        Some(families::resolve_majority(&MajorityParams {
            n: a.n.or_else(|| meta["n"].as_u64().map(|n| n as usize)),
            spec: a.spec.clone(),
            s_reward: a.s_reward.clone(),
            m: a.m.first().copied(),
            k: a.k,
            seed: a.seed,
        })?)
    };
    let n = match &spec {
        Some(s) => s.n(),
        None if family == Family::Xor => 2,
        None => a
            .n
            .or_else(|| meta["n"].as_u64().map(|n| n as usize))
            .ok_or_else(|| usage("--n is required when the circuit file has no metadata"))?,
    };
    let reference = families::build(family, n, index, spec.as_ref())?;
    if (reference.input_count(), reference.output_count()) != (circuit.input_count(), circuit.output_count()) {
        return Ok(failed(json!({
            "error": "interface mismatch",
            "expected": [reference.input_count(), reference.output_count()],
            "got": [circuit.input_count(), circuit.output_count()],
        })));
    }
    let mode = if circuit.input_count() <= MAX_EXHAUSTIVE_WIDTH {
        CheckMode::Exhaustive
    } else {
        CheckMode::Random {
            count: a.trials.unwrap_or(100_000),
            seed: require(a.seed, "seed").map_err(|_| usage("circuits wider than 22 inputs are sampled and need --seed"))?,
        }
    };
    let oracle = families::oracle(family, n, index, spec.as_ref())?;
    let report = check_circuit_equivalence(&format!("{} n={n}", family.name()), &circuit, &*oracle, mode)
        .map_err(|e| usage(e.to_string()))?;
    Ok(Check {
        name,
        passed: report.passed(),
        detail: serde_json::to_value(&report)?,
    })
}

// ---------------------------------------------------------------------------
// scaling

fn cmd_scaling(args: &ScalingArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let families = if a.families.is_empty() {
        ScalingFamily::ALL.to_vec()
    } else {
        a.families
            .iter()
            .map(|f| ScalingFamily::from_name(f).ok_or_else(|| usage(format!("unknown scaling family {f:?}"))))
            .collect::<Result<Vec<_>>>()?
    };
    let ns = (!a.ns.is_empty()).then_some(a.ns.as_slice());
    let rows = scaling_experiment(&families, ns).map_err(|e| usage(e.to_string()))?;
    let analysis = analyze_scaling(&rows, a.max_slope.unwrap_or(3.0));
    for r in &analysis {
        eprintln!(
            "{} {} depths {:?} slope {:.3}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.family,
            r.depths,
            r.slope
        );
    }
    emit(a.out.as_ref(), &(csv_header_line("scaling", &cfg) + &scaling_csv(&rows)))?;
    Ok(analysis.iter().all(|r| r.passed()))
}

// ---------------------------------------------------------------------------
// lemma-condition, sample-dnf

fn cmd_lemma_condition(args: &LemmaArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let p = SuiteParams {
        n: a.n,
        m: a.m.clone(),
        k: a.k,
        seed: a.seed,
        trials: a.trials,
        ..SuiteParams::default()
    };
    report_checks("lemma-condition", &cfg, suites::condition(&p)?, None, a.out.as_ref())
}

fn cmd_sample_dnf(args: &SampleArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let n = require(a.n, "n")?;
    let m = require(a.m, "m")?;
    let k = require(a.k, "k")?;
    let mut rng = ChaCha8Rng::seed_from_u64(require(a.seed, "seed")?);
    let conditions = (0..a.count.unwrap_or(1))
        .map(|_| sample_dnf_condition(n, m, k, &mut rng).map(|d| d.to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let mut doc = header("sample-dnf", &cfg);
    doc["satisfaction_probability"] = json!(sampler_satisfaction_probability(m, k));
    doc["conditions"] = json!(conditions);
    emit(a.out.as_ref(), &to_json(&doc))?;
    Ok(true)
}

// ---------------------------------------------------------------------------
// approx

fn epochs_csv(command: &str, cfg: &Value, rows: &[(usize, f64, f64, f64)]) -> String {
    let mut s = csv_header_line(command, cfg);
    s.push_str("epoch,e_model,e_reward,e_q\n");
    for (e, m, r, q) in rows {
        s.push_str(&format!("{e},{m},{r},{q}\n"));
    }
    s
}

fn cmd_approx(args: &ApproxArgs) -> Result<bool> {
    let (a, cfg) = resolve(args, args.config.as_deref())?;
    let seed = require(a.mdp.seed, "seed")?;
    let mut params = a.mdp.params();
    params.n = params.n.or(Some(7));
    let spec = families::resolve_majority(&params)?;
    let defaults = TrainConfig::with_seed(seed);
    let train = TrainConfig {
        lr: a.lr.unwrap_or(defaults.lr),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        ..defaults
    };
    if let Some(rate) = a.smooth {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(usage(format!("--smooth must lie in (0, 1], got {rate}")));
        }
    }
    let exp = run_approx_experiment(&spec, a.depth.unwrap_or(1), a.width.unwrap_or(8), &train, a.repeats.unwrap_or(5))
        .map_err(|e| usage(e.to_string()))?;

    let mean_at = |e: usize, f: fn(&cmlab_core::approx::EpochErrors) -> f64| {
        exp.reports.iter().map(|r| f(&r.epochs[e])).sum::<f64>() / exp.reports.len() as f64
    };
    let rows: Vec<(usize, f64, f64, f64)> = (0..train.epochs)
        .map(|e| (e + 1, mean_at(e, |x| x.e_model), mean_at(e, |x| x.e_reward), mean_at(e, |x| x.e_q)))
        .collect();

    let diverged: Vec<usize> = exp.reports.iter().filter(|r| !r.diverged.is_empty()).map(|r| r.repeat).collect();
    let mut doc = header("approx", &cfg);
    doc["spec"] = serde_json::to_value(MajoritySpecFile::from_spec(&spec, Some(seed)))?;
    doc["experiment"] = serde_json::to_value(&exp)?;
    doc["q_error_largest"] = json!(exp.q_hardest());
    doc["diverged_repeats"] = json!(diverged);
    let agg = &exp.aggregate;
    eprintln!(
        "e_model {:.4} +/- {:.4}  e_reward {:.4} +/- {:.4}  e_q {:.4} +/- {:.4}",
        agg.e_model.mean, agg.e_model.std, agg.e_reward.mean, agg.e_reward.std, agg.e_q.mean, agg.e_q.std
    );

    match &a.out {
        Some(prefix) => {
            let with = |suffix: &str| PathBuf::from(format!("{}{suffix}", prefix.display()));
            emit(Some(&with(".json")), &to_json(&doc))?;
            emit(Some(&with(".epochs.csv")), &epochs_csv("approx", &cfg, &rows))?;
            if let Some(rate) = a.smooth {
                let col = |f: fn(&(usize, f64, f64, f64)) -> f64| smooth(&rows.iter().map(f).collect::<Vec<_>>(), rate);
                let (m, r, q) = (col(|x| x.1), col(|x| x.2), col(|x| x.3));
                let smoothed: Vec<_> = (0..rows.len()).map(|i| (i + 1, m[i], r[i], q[i])).collect();
                emit(Some(&with(".epochs.smoothed.csv")), &epochs_csv("approx", &cfg, &smoothed))?;
            }
        }
        None => emit(None, &to_json(&doc))?,
    }
    Ok(diverged.is_empty())
}
