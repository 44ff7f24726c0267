//! The check suites behind `cmlab verify`.

use anyhow::Result;
use cmlab_core::approx::{finite_difference_deviation, run_approx_experiment, MlpParams, Sample, TrainConfig};
use cmlab_core::mdp::{sample_conditioned_spec, ParityMdpSpec};
use cmlab_core::verify::{
    self, analyze_scaling, condition_lemma_montecarlo, monotone_within_ci, mutation_sensitivity,
    scaling_experiment, CheckMode, ScalingFamily, VerifyReport,
};
use cmlab_core::{gadgets, MajorityMdpSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{require, usage};
use crate::families::default_s_reward;

pub const SUITES: [&str; 11] = [
    "circuits",
    "gadgets",
    "scaling",
    "bellman",
    "lemmas",
    "extraction",
    "parity",
    "condition",
    "gradient",
    "approx",
    "mutation",
];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

impl Check {
    fn from_report(r: VerifyReport) -> Self {
        Check {
            name: r.subject.clone(),
            passed: r.passed(),
            detail: serde_json::to_value(&r).expect("report serializes"),
        }
    }

    fn note(name: &str, message: &str) -> Self {
        Check {
            name: name.into(),
            passed: true,
            detail: json!({ "skipped": message }),
        }
    }
}

/// Resolved parameters for a suite run; unset fields fall back to each
/// suite's defaults.
#[derive(Debug, Clone, Default)]
pub struct SuiteParams {
    pub n: Option<usize>,
    pub m: Vec<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub epochs: Option<usize>,
    pub repeats: Option<usize>,
}

impl SuiteParams {
    fn majority_ns(&self) -> Vec<usize> {
        self.n.map_or(vec![3, 7], |n| vec![n])
    }

    fn seed(&self, suite: &str) -> Result<u64> {
        require(self.seed, "seed").map_err(|_| usage(format!("suite {suite} draws random inputs and needs --seed")))
    }
}

fn unconditioned(n: usize, p: &SuiteParams) -> Result<MajorityMdpSpec> {
    let s_reward = match p.seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            cmlab_core::BitString::new((0..n).map(|_| rng.gen_bool(0.5)).collect())
        }
        None => default_s_reward(n),
    };
    MajorityMdpSpec::unconditioned(n, s_reward).map_err(|e| usage(e.to_string()))
}

/// Largest `m < n/2` capped at 3, with `k = 1` when `m = 1` and 2 otherwise.
fn sampler_params(n: usize) -> (usize, usize) {
    let m = ((n - 1) / 2).clamp(1, 3);
    (m, if m == 1 { 1 } else { 2 })
}

/// A sampled conditioned instance, or `None` without a seed.
fn conditioned(n: usize, p: &SuiteParams) -> Result<Option<MajorityMdpSpec>> {
    let Some(seed) = p.seed else { return Ok(None) };
    let (m, k) = sampler_params(n);
    let spec = sample_conditioned_spec(n, m, k, &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64)))
        .map_err(|e| usage(e.to_string()))?;
    Ok(Some(spec))
}

fn specs(n: usize, p: &SuiteParams, out: &mut Vec<Check>, suite: &str) -> Result<Vec<MajorityMdpSpec>> {
    let mut v = vec![unconditioned(n, p)?];
    match conditioned(n, p)? {
        Some(c) => v.push(c),
        None => out.push(Check::note(
            &format!("{suite} conditioned n={n}"),
            "no --seed, conditioned instance not sampled",
        )),
    }
    Ok(v)
}

fn vr<T>(r: Result<T, verify::VerifyError>) -> Result<T> {
    r.map_err(|e| usage(e.to_string()))
}

pub fn circuits(p: &SuiteParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in p.majority_ns() {
        for spec in specs(n, p, &mut out, "circuits")? {
            out.push(Check::from_report(vr(verify::check_majority_model(&spec))?));
            out.push(Check::from_report(vr(verify::check_majority_reward(&spec))?));
        }
    }
    out.push(Check::from_report(vr(verify::check_parity_model(4))?));
    out.push(Check::from_report(vr(verify::check_parity_reward(4))?));
    Ok(out)
}

pub fn gadgets_suite(p: &SuiteParams) -> Result<Vec<Check>> {
    let seed = p.seed("gadgets")?;
    let mut out = Vec::new();
    for n in 1..=6 {
        out.push(Check::from_report(vr(verify::check_addition(n, CheckMode::Exhaustive))?));
        out.push(Check::from_report(vr(verify::check_max(n))?));
    }
    out.push(Check::from_report(vr(verify::check_addition(
        12,
        CheckMode::Random { count: 10_000, seed },
    ))?));
    for b in 1..=4 {
        out.push(Check::from_report(vr(verify::check_delta(b))?));
    }
    out.push(Check::from_report(vr(verify::check_xor())?));
    Ok(out)
}

pub fn scaling() -> Result<(Vec<Check>, Vec<verify::ScalingRow>)> {
    let rows = vr(scaling_experiment(&ScalingFamily::ALL, None))?;
    let checks = analyze_scaling(&rows, 3.0)
        .into_iter()
        .map(|a| Check {
            name: format!("scaling {}", a.family),
            passed: a.passed(),
            detail: serde_json::to_value(&a).expect("serializes"),
        })
        .collect();
    Ok((checks, rows))
}

pub fn bellman(p: &SuiteParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in p.majority_ns() {
        for spec in specs(n, p, &mut out, "bellman")? {
            let name = format!("bellman majority n={n}{}", if spec.is_conditioned() { " conditioned" } else { "" });
            out.push(Check::from_report(vr(verify::check_bellman(&name, &spec))?));
        }
    }
    for n in 1..=7 {
        let spec = ParityMdpSpec::new(n).expect("n >= 1");
        out.push(Check::from_report(vr(verify::check_bellman(&format!("bellman parity n={n}"), &spec))?));
    }
    Ok(out)
}

pub fn lemmas(p: &SuiteParams) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in p.majority_ns() {
        out.push(Check::from_report(vr(verify::check_closed_forms(&unconditioned(n, p)?))?));
    }
    let n = p.n.unwrap_or(7);
    match conditioned(n, p)? {
        Some(spec) => out.push(Check::from_report(vr(verify::check_closed_forms(&spec))?)),
        None => out.push(Check::note("lemmas conditioned", "no --seed, conditioned instance not sampled")),
    }
    Ok(out)
}

pub fn extraction(p: &SuiteParams) -> Result<Vec<Check>> {
    let n = p.n.unwrap_or(7);
    let mut out = Vec::new();
    for spec in specs(n, p, &mut out, "extraction")? {
        out.push(Check::from_report(vr(verify::check_majority_extraction(&spec))?));
    }
    Ok(out)
}

pub fn parity(p: &SuiteParams) -> Result<Vec<Check>> {
    let ns = p.n.map_or(vec![4, 6, 8], |n| vec![n]);
    ns.into_iter()
        .map(|n| Ok(Check::from_report(vr(verify::check_parity_indicator(n))?)))
        .collect()
}

pub fn condition(p: &SuiteParams) -> Result<Vec<Check>> {
    let seed = p.seed("condition")?;
    let n = p.n.unwrap_or(63);
    let k = p.k.unwrap_or(3);
    let ms = if p.m.is_empty() { vec![6, 12, 24] } else { p.m.clone() };
    let trials = p.trials.unwrap_or(100_000);
    let results = ms
        .iter()
        .map(|&m| vr(condition_lemma_montecarlo(n, m, k, trials, seed)))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Check> = results
        .iter()
        .map(|r| Check {
            name: format!("condition n={n} m={} k={k}", r.m),
            passed: r.analytic_within(),
            detail: serde_json::to_value(r).expect("serializes"),
        })
        .collect();
    out.push(Check {
        name: "condition monotone in m".into(),
        passed: monotone_within_ci(&results),
        detail: json!(results.iter().map(|r| r.empirical).collect::<Vec<_>>()),
    });
    Ok(out)
}

pub fn gradient(p: &SuiteParams) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed("gradient")?);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (depth, width) = (rng.gen_range(1..=2), rng.gen_range(2..=8));
        let (input, output) = (rng.gen_range(2..=6), rng.gen_range(1..=3));
        let mut net = MlpParams::random(input, depth, width, output, &mut rng);
        for v in net.params_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let batch: Vec<Sample> = (0..8)
            .map(|_| Sample {
                x: (0..input).map(|_| rng.gen_range(0.0..1.0)).collect(),
                y: (0..output).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                weight: 1.0,
            })
            .collect();
        let refs: Vec<&Sample> = batch.iter().collect();
        let dev = finite_difference_deviation(&net, &refs, 1e-5).map_err(|e| usage(e.to_string()))?;
        worst = worst.max(dev);
    }
    Ok(vec![Check {
        name: "gradient check".into(),
        passed: worst < 1e-4,
        detail: json!({ "max_relative_deviation": worst, "limit": 1e-4, "networks": 10 }),
    }])
}

pub fn approx(p: &SuiteParams) -> Result<Vec<Check>> {
    let seed = p.seed("approx")?;
    let spec = unconditioned(p.n.unwrap_or(7), p)?;
    let cfg = TrainConfig {
        epochs: p.epochs.unwrap_or(100),
        ..TrainConfig::with_seed(seed)
    };
    let exp = run_approx_experiment(&spec, p.depth.unwrap_or(1), p.width.unwrap_or(8), &cfg, p.repeats.unwrap_or(5))
        .map_err(|e| usage(e.to_string()))?;
    let diverged = exp.reports.iter().any(|r| !r.diverged.is_empty());
    Ok(vec![Check {
        name: format!("approx ordering n={}", spec.n()),
        passed: exp.q_hardest() && !diverged,
        detail: json!({
            "s_reward": spec.s_reward(),
            "aggregate": exp.aggregate,
            "diverged": diverged,
        }),
    }])
}

pub fn mutation(p: &SuiteParams) -> Result<Vec<Check>> {
    let seed = p.seed("mutation")?;
    let spec = unconditioned(p.n.unwrap_or(7), p)?;
    let circuit = gadgets::majority_mdp_model_circuit(&spec);
    let oracle = verify::majority_model_oracle(&spec);
    let outcomes = vr(mutation_sensitivity(&circuit, &*oracle, 20, seed))?;
    Ok(vec![Check {
        name: format!("mutation sensitivity n={}", spec.n()),
        passed: outcomes.iter().all(|o| o.detected()),
        detail: serde_json::to_value(&outcomes).expect("serializes"),
    }])
}
