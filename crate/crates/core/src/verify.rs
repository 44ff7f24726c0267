//! Checks that tie the circuits, the interpreters and the DP solver together.
//!
//! Every check returns a [`VerifyReport`]; a report passes iff it holds no
//! mismatches. Randomised checks are fully determined by their seed: inputs
//! are drawn sequentially before any parallel work, and Monte Carlo trials
//! are split into fixed streams independent of the thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bits::{bits_for, BitString, BitsError};
use crate::circuit::{Circuit, CircuitError, Evaluator, GateKind};
use crate::gadgets::{self, GadgetError};
use crate::mdp::{
    free_variable_set, majority_reward, majority_transition, parity_reward,
    parity_transition_encoded, sample_dnf_condition, sampler_satisfaction_probability,
    ControlFunction, DeterministicMdp, MajorityMdpSpec, MdpError, ParityMdpSpec,
};
use crate::solver::{
    backward_induction, max_bellman_residual, optimal_policy, rollout,
    value_closed_form_conditioned, value_closed_form_unconditioned,
    value_formula_counting_matches, SolverError, ValueTable,
};

/// Largest input width checked exhaustively.
pub const MAX_EXHAUSTIVE_WIDTH: usize = 22;
/// Counterexamples kept per report; `mismatch_count` has the full tally.
pub const MAX_RECORDED_MISMATCHES: usize = 256;
/// Smallest trial count accepted by the Monte Carlo check.
pub const MIN_TRIALS: u64 = 1000;

const MC_STREAMS: u64 = 64;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("input width {0} exceeds the exhaustive limit of {MAX_EXHAUSTIVE_WIDTH}")]
    TooWideForExhaustive(usize),
    #[error("input width {0} exceeds 64 bits")]
    TooWide(usize),
    #[error("oracle returned {got} bits, circuit has {expected} outputs")]
    OracleWidth { expected: usize, got: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Bits(#[from] BitsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckMode {
    Exhaustive,
    Random { count: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub input: String,
    pub expected: String,
    pub got: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub subject: String,
    pub mode: CheckMode,
    pub inputs_checked: u64,
    pub mismatch_count: u64,
    pub mismatches: Vec<Counterexample>,
    pub wall_time_secs: f64,
    /// Free-form observations attached by the check.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerifyReport {
    fn new(subject: impl Into<String>, mode: CheckMode) -> Self {
        VerifyReport {
            subject: subject.into(),
            mode,
            inputs_checked: 0,
            mismatch_count: 0,
            mismatches: Vec::new(),
            wall_time_secs: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatch_count == 0
    }

    fn record(&mut self, cx: Counterexample) {
        self.mismatch_count += 1;
        if self.mismatches.len() < MAX_RECORDED_MISMATCHES {
            self.mismatches.push(cx);
        }
    }

    fn absorb(&mut self, found: Vec<Counterexample>, total: u64) {
        self.mismatch_count += total;
        let room = MAX_RECORDED_MISMATCHES.saturating_sub(self.mismatches.len());
        self.mismatches.extend(found.into_iter().take(room));
    }

    fn finish(mut self, start: Instant) -> Self {
        self.wall_time_secs = start.elapsed().as_secs_f64();
        self
    }

    /// One line: `PASS subject (inputs, time)` or `FAIL subject (k mismatches, first ...)`.
    pub fn summary(&self) -> String {
        if self.passed() {
            format!(
                "PASS {} ({} inputs, {:.3}s)",
                self.subject, self.inputs_checked, self.wall_time_secs
            )
        } else {
            let first = &self.mismatches[0];
            format!(
                "FAIL {} ({} mismatches; first: input {} expected {} got {})",
                self.subject, self.mismatch_count, first.input, first.expected, first.got
            )
        }
    }
}

fn cx(input: impl ToString, expected: impl ToString, got: impl ToString) -> Counterexample {
    Counterexample {
        input: input.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Circuit equivalence

/// Oracle on bit strings of the circuit's input width.
pub type Oracle<'a> = dyn Fn(&BitString) -> BitString + Sync + 'a;

fn draw_inputs(width: usize, mode: CheckMode) -> Result<Vec<u64>, VerifyError> {
    if width > 64 {
        return Err(VerifyError::TooWide(width));
    }
    match mode {
        CheckMode::Exhaustive => {
            if width > MAX_EXHAUSTIVE_WIDTH {
                return Err(VerifyError::TooWideForExhaustive(width));
            }
            Ok((0..1u64 << width).collect())
        }
        CheckMode::Random { count, seed } => {
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count).map(|_| rng.gen::<u64>() & mask).collect())
        }
    }
}

/// Compares `circuit` with `oracle` on every input (exhaustive) or on
/// `count` seeded draws (random). The circuit is evaluated 64 inputs at a
/// time; the oracle once per input.
pub fn check_circuit_equivalence(
    subject: &str,
    circuit: &Circuit,
    oracle: &Oracle<'_>,
    mode: CheckMode,
) -> Result<VerifyReport, VerifyError> {
    let start = Instant::now();
    let width = circuit.input_count();
    let outputs = circuit.output_count();
    Evaluator::new(circuit)?;
    let inputs = draw_inputs(width, mode)?;
    let probe = oracle(&BitString::from_int(inputs.first().copied().unwrap_or(0), width)?);
    if probe.width() != outputs {
        return Err(VerifyError::OracleWidth {
            expected: outputs,
            got: probe.width(),
        });
    }

    let results: Vec<(Vec<Counterexample>, u64)> = inputs
        .par_chunks(64 * 64)
        .map(|block| {
            let mut eval = Evaluator::new(circuit).expect("validated above");
            let mut found = Vec::new();
            let mut total = 0u64;
            for chunk in block.chunks(64) {
                let words: Vec<u64> = (0..width)
                    .map(|p| {
                        chunk.iter().enumerate().fold(0u64, |w, (lane, &x)| {
                            w | (((x >> (width - 1 - p)) & 1) << lane)
                        })
                    })
                    .collect();
                let out = eval.eval_packed(&words).expect("width matches");
                for (lane, &x) in chunk.iter().enumerate() {
                    let got = BitString::new(out.iter().map(|w| (w >> lane) & 1 == 1).collect());
                    let input = BitString::from_int(x, width).expect("masked to width");
                    let want = oracle(&input);
                    if want != got {
                        total += 1;
                        if found.len() < MAX_RECORDED_MISMATCHES {
                            found.push(cx(&input, &want, &got));
                        }
                    }
                }
            }
            (found, total)
        })
        .collect();

    let mut report = VerifyReport::new(subject, mode);
    report.inputs_checked = inputs.len() as u64;
    for (found, total) in results {
        report.absorb(found, total);
    }
    Ok(report.finish(start))
}

// Reference oracles. Each takes the circuit's input bits and returns the
// expected output bits.

/// `s ++ a` to the next state under [`majority_transition`].
pub fn majority_model_oracle(spec: &MajorityMdpSpec) -> Box<Oracle<'_>> {
    let w = spec.state_width();
    Box::new(move |x: &BitString| {
        majority_transition(spec, &x.slice(0..w), x.get(w)).expect("state width matches")
    })
}

/// State to the reward bit. The reward ignores the action, so the circuit
/// takes the state only.
pub fn majority_reward_oracle(spec: &MajorityMdpSpec) -> Box<Oracle<'_>> {
    Box::new(move |x: &BitString| {
        BitString::new(vec![majority_reward(spec, x).expect("state width matches")])
    })
}

/// `s ++ i ++ j` to the next state under [`parity_transition_encoded`],
/// including index encodings that name no bit.
pub fn parity_model_oracle(spec: ParityMdpSpec) -> Box<Oracle<'static>> {
    let (n, w) = (spec.n, spec.index_width());
    Box::new(move |x: &BitString| {
        let i = x.slice(n..n + w).to_int();
        let j = x.slice(n + w..n + 2 * w).to_int();
        parity_transition_encoded(&spec, &x.slice(0..n), i, j)
    })
}

pub fn parity_reward_oracle(spec: ParityMdpSpec) -> Box<Oracle<'static>> {
    Box::new(move |x: &BitString| BitString::new(vec![parity_reward(&spec, x).expect("width")]))
}

/// `x ++ y` (n bits each) to `x + y` in `n + 1` bits.
pub fn addition_oracle(n: usize) -> Box<Oracle<'static>> {
    Box::new(move |x: &BitString| {
        let sum = x.slice(0..n).to_int() + x.slice(n..2 * n).to_int();
        BitString::from_int(sum, n + 1).expect("sum fits in n+1 bits")
    })
}

pub fn max_oracle(n: usize) -> Box<Oracle<'static>> {
    Box::new(move |x: &BitString| {
        let m = x.slice(0..n).to_int().max(x.slice(n..2 * n).to_int());
        BitString::from_int(m, n).expect("fits")
    })
}

pub fn delta_oracle(k: u64) -> Box<Oracle<'static>> {
    Box::new(move |x: &BitString| BitString::new(vec![x.to_int() == k]))
}

pub fn xor_oracle() -> Box<Oracle<'static>> {
    Box::new(|x: &BitString| BitString::new(vec![x.get(0) != x.get(1)]))
}

pub fn control_oracle(f: &ControlFunction) -> Box<Oracle<'_>> {
    Box::new(move |x: &BitString| f.apply(x).expect("width matches"))
}

fn cond_tag(spec: &MajorityMdpSpec) -> &'static str {
    if spec.is_conditioned() {
        " conditioned"
    } else {
        ""
    }
}

pub fn check_majority_model(spec: &MajorityMdpSpec) -> Result<VerifyReport, VerifyError> {
    check_circuit_equivalence(
        &format!("majority-model n={}{}", spec.n(), cond_tag(spec)),
        &gadgets::majority_mdp_model_circuit(spec),
        &*majority_model_oracle(spec),
        CheckMode::Exhaustive,
    )
}

pub fn check_majority_reward(spec: &MajorityMdpSpec) -> Result<VerifyReport, VerifyError> {
    check_circuit_equivalence(
        &format!("majority-reward n={}{}", spec.n(), cond_tag(spec)),
        &gadgets::majority_mdp_reward_circuit(spec),
        &*majority_reward_oracle(spec),
        CheckMode::Exhaustive,
    )
}

pub fn check_parity_model(n: usize) -> Result<VerifyReport, VerifyError> {
    let spec = ParityMdpSpec::new(n)?;
    check_circuit_equivalence(
        &format!("parity-model n={n}"),
        &gadgets::parity_mdp_model_circuit(n)?,
        &*parity_model_oracle(spec),
        CheckMode::Exhaustive,
    )
}

pub fn check_parity_reward(n: usize) -> Result<VerifyReport, VerifyError> {
    let spec = ParityMdpSpec::new(n)?;
    check_circuit_equivalence(
        &format!("parity-reward n={n}"),
        &gadgets::parity_mdp_reward_circuit(n)?,
        &*parity_reward_oracle(spec),
        CheckMode::Exhaustive,
    )
}

// ---------------------------------------------------------------------------
// Gadgets

pub fn check_addition(n: usize, mode: CheckMode) -> Result<VerifyReport, VerifyError> {
    let circuit = gadgets::addition_circuit(n)?;
    check_circuit_equivalence(&format!("addition n={n}"), &circuit, &*addition_oracle(n), mode)
}

pub fn check_max(n: usize) -> Result<VerifyReport, VerifyError> {
    let circuit = gadgets::max_circuit(n)?;
    check_circuit_equivalence(&format!("max n={n}"), &circuit, &*max_oracle(n), CheckMode::Exhaustive)
}

/// Every indicator `delta_k` for `k < 2^b`.
pub fn check_delta(b: usize) -> Result<VerifyReport, VerifyError> {
    let start = Instant::now();
    let mut report = VerifyReport::new(format!("delta b={b}"), CheckMode::Exhaustive);
    for k in 0..1u64 << b {
        let circuit = gadgets::delta_k(b, k)?;
        let r = check_circuit_equivalence("delta", &circuit, &*delta_oracle(k), CheckMode::Exhaustive)?;
        report.inputs_checked += r.inputs_checked;
        report.absorb(r.mismatches, r.mismatch_count);
    }
    Ok(report.finish(start))
}

pub fn check_xor() -> Result<VerifyReport, VerifyError> {
    check_circuit_equivalence("xor", &gadgets::xor2(), &*xor_oracle(), CheckMode::Exhaustive)
}

// ---------------------------------------------------------------------------
// Solver-backed checks

/// Zero Bellman residual, `V_{H+1} = 0`, and optimal rollouts from every
/// start state collect exactly `V_1`.
pub fn check_bellman<M: DeterministicMdp + ?Sized>(
    subject: &str,
    mdp: &M,
) -> Result<VerifyReport, VerifyError> {
    let start = Instant::now();
    let sol = backward_induction(mdp)?;
    let mut report = VerifyReport::new(subject, CheckMode::Exhaustive);
    let residual = max_bellman_residual(mdp, &sol);
    if residual != 0 {
        report.record(cx("bellman residual", 0, residual));
    }
    let policy = optimal_policy(&sol.q);
    let states = 1u64 << mdp.state_width();
    let bad: Vec<Counterexample> = (0..states)
        .into_par_iter()
        .filter_map(|s0| {
            let ret: u32 = rollout(mdp, &policy, s0).iter().map(|st| st.reward).sum();
            let v = sol.values.initial(s0);
            (ret != v).then(|| {
                cx(
                    format!("rollout from {}", BitString::from_int(s0, mdp.state_width()).unwrap()),
                    v,
                    ret,
                )
            })
        })
        .collect();
    let n_bad = bad.len() as u64;
    report.absorb(bad, n_bad);
    report.inputs_checked = states;
    Ok(report.finish(start))
}

/// Representation strings of the closed form's slice: all of `{0,1}^n`
/// when unconditioned, otherwise `s_reward` with the bits of `A` free.
fn slice_reps(spec: &MajorityMdpSpec, free: &[usize]) -> Vec<u64> {
    let n = spec.n();
    let base = spec.s_reward().to_int();
    if !spec.is_conditioned() {
        return (0..1u64 << n).collect();
    }
    (0..1u64 << free.len())
        .map(|sub| {
            free.iter().enumerate().fold(base, |r, (t, &var)| {
                let bit = (sub >> (free.len() - 1 - t)) & 1;
                r ^ (bit << (n - var))
            })
        })
        .collect()
}

/// `V_1` from backward induction against the closed form on its slice.
///
/// The unconditioned form is checked on every `(0_b, x)`; the conditioned
/// form on `(0_b, x)` with `x` equal to `s_reward` outside the free set `A`.
/// The notes record the match-counting reading of the formula at the first
/// slice state for comparison.
pub fn check_closed_forms(spec: &MajorityMdpSpec) -> Result<VerifyReport, VerifyError> {
    let start = Instant::now();
    let sol = backward_induction(spec)?;
    let free = if spec.is_conditioned() {
        free_variable_set(spec.condition(), spec.n())?
    } else {
        Vec::new()
    };
    let subject = if spec.is_conditioned() {
        format!("closed-form conditioned n={} |A|={}", spec.n(), free.len())
    } else {
        format!("closed-form unconditioned n={}", spec.n())
    };
    let mut report = VerifyReport::new(subject, CheckMode::Exhaustive);
    let w = spec.state_width();
    let reps = slice_reps(spec, &free);
    for &r in &reps {
        let s = spec.encode_state(0, r);
        let state = BitString::from_int(s, w)?;
        let closed = if spec.is_conditioned() {
            value_closed_form_conditioned(spec, &free, &state)?
        } else {
            value_closed_form_unconditioned(spec, &state)?
        };
        let dp = sol.values.initial(s);
        if closed != dp {
            report.record(cx(&state, closed, dp));
        }
    }
    report.inputs_checked = reps.len() as u64;

    let probe = BitString::from_int(spec.encode_state(0, reps[0]), w)?;
    let literal = value_formula_counting_matches(spec, &probe)?;
    report.notes.push(format!(
        "at s={probe}: DP V_1={}, n+1-mismatches={}, n-matches+1={literal}",
        sol.values.initial(probe.to_int()),
        spec.n() + 1 - probe.slice(spec.b()..w).hamming(spec.s_reward())?,
    ));
    Ok(report.finish(start))
}

/// Representation indices whose mismatch count the value encodes: all of
/// `1..=n` when unconditioned, the free set `A` when conditioned.
pub fn extraction_scope(spec: &MajorityMdpSpec) -> Result<Vec<usize>, VerifyError> {
    if spec.is_conditioned() {
        Ok(free_variable_set(spec.condition(), spec.n())?)
    } else {
        Ok((1..=spec.n()).collect())
    }
}

/// Reads `majority(x)` off the value table.
///
/// Sets `s[c] = 0_b`, `s_{b+i} = x_i ^ s_reward_i` on the scope and
/// `s_reward`'s bits elsewhere, so `n + 1 - V_1(s)` counts the ones of `x`.
/// That count is at most `|scope| = 2^w - 1`; its top bit as a `w`-bit
/// number is the majority bit.
pub fn extract_majority_bit(
    spec: &MajorityMdpSpec,
    values: &ValueTable,
    x: &BitString,
) -> Result<bool, VerifyError> {
    let scope = extraction_scope(spec)?;
    if x.width() != scope.len() {
        return Err(VerifyError::Bits(BitsError::WidthMismatch {
            left: x.width(),
            right: scope.len(),
        }));
    }
    let n = spec.n();
    let mut rep = spec.s_reward().to_int();
    for (t, &var) in scope.iter().enumerate() {
        if x.get(t) {
            rep ^= 1u64 << (n - var);
        }
    }
    let v = values.initial(spec.encode_state(0, rep)) as usize;
    let count = (n + 1).checked_sub(v).ok_or_else(|| {
        VerifyError::Precondition(format!("V_1 = {v} exceeds n + 1 on the extraction slice"))
    })?;
    let w = bits_for(scope.len() as u64);
    Ok((count >> (w - 1)) & 1 == 1)
}

/// [`extract_majority_bit`] against [`BitString::majority`] on every `x`.
pub fn check_majority_extraction(spec: &MajorityMdpSpec) -> Result<VerifyReport, VerifyError> {
    let start = Instant::now();
    let sol = backward_induction(spec)?;
    let width = extraction_scope(spec)?.len();
    let mut report = VerifyReport::new(
        format!("majority-extraction n={}{} |x|={width}", spec.n(), cond_tag(spec)),
        CheckMode::Exhaustive,
    );
    for v in 0..1u64 << width {
        let x = BitString::from_int(v, width)?;
        let got = extract_majority_bit(spec, &sol.values, &x)?;
        if got != x.majority() {
            report.record(cx(&x, u8::from(x.majority()), u8::from(got)));
        }
    }
    report.inputs_checked = 1 << width;
    Ok(report.finish(start))
}

/// `V_1(s) > 0` iff `s` has even parity, over all of `{0,1}^n`, `n <= 8`.
pub fn check_parity_indicator(n: usize) -> Result<VerifyReport, VerifyError> {
    if n > 8 {
        return Err(VerifyError::Precondition(format!("parity indicator needs n <= 8, got {n}")));
    }
    let start = Instant::now();
    let spec = ParityMdpSpec::new(n)?;
    let sol = backward_induction(&spec)?;
    let mut report = VerifyReport::new(format!("parity-indicator n={n}"), CheckMode::Exhaustive);
    for s in 0..1u64 << n {
        let x = BitString::from_int(s, n)?;
        let positive = sol.values.initial(s) > 0;
        if positive != !x.parity() {
            report.record(cx(&x, u8::from(!x.parity()), u8::from(positive)));
        }
    }
    report.inputs_checked = 1 << n;
    Ok(report.finish(start))
}

// ---------------------------------------------------------------------------
// Scaling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalingFamily {
    MajorityModel,
    MajorityReward,
    ParityModel,
    ParityReward,
    Addition,
    Max,
}

impl ScalingFamily {
    pub const ALL: [ScalingFamily; 6] = [
        ScalingFamily::MajorityModel,
        ScalingFamily::MajorityReward,
        ScalingFamily::ParityModel,
        ScalingFamily::ParityReward,
        ScalingFamily::Addition,
        ScalingFamily::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScalingFamily::MajorityModel => "majority-model",
            ScalingFamily::MajorityReward => "majority-reward",
            ScalingFamily::ParityModel => "parity-model",
            ScalingFamily::ParityReward => "parity-reward",
            ScalingFamily::Addition => "addition",
            ScalingFamily::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn default_ns(self) -> Vec<usize> {
        match self {
            ScalingFamily::Addition | ScalingFamily::Max => vec![2, 4, 8, 16],
            _ => vec![3, 7, 15, 31],
        }
    }

    /// The family's circuit at size `n`. Majority families use the
    /// increment control and `s_reward = 1010...`.
    pub fn build(self, n: usize) -> Result<Circuit, VerifyError> {
        Ok(match self {
            ScalingFamily::MajorityModel => gadgets::majority_mdp_model_circuit(&scaling_spec(n)?),
            ScalingFamily::MajorityReward => gadgets::majority_mdp_reward_circuit(&scaling_spec(n)?),
            ScalingFamily::ParityModel => gadgets::parity_mdp_model_circuit(n)?,
            ScalingFamily::ParityReward => gadgets::parity_mdp_reward_circuit(n)?,
            ScalingFamily::Addition => gadgets::addition_circuit(n)?,
            ScalingFamily::Max => gadgets::max_circuit(n)?,
        })
    }
}

fn scaling_spec(n: usize) -> Result<MajorityMdpSpec, VerifyError> {
    let s_reward = BitString::new((0..n).map(|i| i % 2 == 0).collect());
    Ok(MajorityMdpSpec::unconditioned(n, s_reward)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScalingRow {
    pub family: String,
    pub n: usize,
    pub size: usize,
    pub depth: usize,
}

pub fn scaling_experiment(
    families: &[ScalingFamily],
    ns: Option<&[usize]>,
) -> Result<Vec<ScalingRow>, VerifyError> {
    let mut rows = Vec::new();
    for &family in families {
        let ns = ns.map_or_else(|| family.default_ns(), <[usize]>::to_vec);
        for n in ns {
            let c = family.build(n)?;
            rows.push(ScalingRow {
                family: family.name().to_string(),
                n,
                size: c.size(),
                depth: c.depth(),
            });
        }
    }
    Ok(rows)
}

pub const SCALING_CSV_HEADER: &str = "family,n,size,depth";

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SCALING_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.family, r.n, r.size, r.depth));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingAnalysis {
    pub family: String,
    pub depths: Vec<usize>,
    pub depth_constant: bool,
    /// Least-squares slope of `ln size` against `ln n`.
    pub slope: f64,
    pub max_slope: f64,
}

impl ScalingAnalysis {
    pub fn passed(&self) -> bool {
        self.depth_constant && self.slope <= self.max_slope
    }
}

fn log_log_slope(points: &[(usize, usize)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, s)| (s as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Groups rows by family (in first-seen order) and tests constant depth and
/// `slope <= max_slope`.
pub fn analyze_scaling(rows: &[ScalingRow], max_slope: f64) -> Vec<ScalingAnalysis> {
    let mut families: Vec<&str> = Vec::new();
    for r in rows {
        if !families.contains(&r.family.as_str()) {
            families.push(&r.family);
        }
    }
    families
        .into_iter()
        .map(|f| {
            let pts: Vec<&ScalingRow> = rows.iter().filter(|r| r.family == f).collect();
            let depths: Vec<usize> = pts.iter().map(|r| r.depth).collect();
            let points: Vec<(usize, usize)> = pts.iter().map(|r| (r.n, r.size)).collect();
            ScalingAnalysis {
                family: f.to_string(),
                depth_constant: depths.windows(2).all(|w| w[0] == w[1]),
                depths,
                slope: log_log_slope(&points),
                max_slope,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Condition lemma

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloResult {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub s_reward: BitString,
    pub hits: u64,
    pub empirical: f64,
    /// `3 * sqrt(p (1 - p) / trials)` at the empirical `p`.
    pub half_width: f64,
    pub analytic: f64,
}

impl MonteCarloResult {
    pub fn lower(&self) -> f64 {
        self.empirical - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.empirical + self.half_width
    }

    pub fn analytic_within(&self) -> bool {
        (self.analytic - self.empirical).abs() <= self.half_width
    }
}

/// Fraction of sampled conditions accepting a fixed `s_reward`.
///
/// `s_reward` is drawn uniformly from the seed; trials are split into
/// fixed ChaCha streams so the result does not depend on thread count.
pub fn condition_lemma_montecarlo(
    n: usize,
    m: usize,
    k: usize,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloResult, VerifyError> {
    if trials < MIN_TRIALS {
        return Err(VerifyError::Precondition(format!(
            "trials must be at least {MIN_TRIALS}, got {trials}"
        )));
    }
    if k == 0 || k > m || 2 * m >= n || n > 64 {
        return Err(MdpError::SamplerParams { n, m, k }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_reward = BitString::from_int(rng.gen::<u64>() & (u64::MAX >> (64 - n)), n)?;
    let hits: u64 = (0..MC_STREAMS)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream + 1);
            let count = trials / MC_STREAMS + u64::from(stream < trials % MC_STREAMS);
            (0..count)
                .filter(|_| {
                    sample_dnf_condition(n, m, k, &mut rng)
                        .expect("parameters checked")
                        .eval_slice(s_reward.bits())
                })
                .count() as u64
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok(MonteCarloResult {
        n,
        m,
        k,
        trials,
        seed,
        s_reward,
        hits,
        empirical: p,
        half_width: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
        analytic: sampler_satisfaction_probability(m, k),
    })
}

/// Estimates at increasing `m` never drop by more than their intervals allow.
pub fn monotone_within_ci(results: &[MonteCarloResult]) -> bool {
    results
        .windows(2)
        .all(|w| w[1].upper() >= w[0].lower() && w[1].empirical + w[0].half_width + w[1].half_width >= w[0].empirical)
}

// ---------------------------------------------------------------------------
// Mutation sensitivity

#[derive(Debug, Clone, Serialize)]
pub struct MutationOutcome {
    pub gate: usize,
    pub from: String,
    pub to: String,
    pub mismatch_count: u64,
}

impl MutationOutcome {
    pub fn detected(&self) -> bool {
        self.mismatch_count > 0
    }
}

/// Gates that reach an output, excluding inputs.
fn live_internal_gates(c: &Circuit) -> Vec<usize> {
    let mut live = vec![false; c.gates().len()];
    for o in c.outputs() {
        live[o.0] = true;
    }
    for k in (0..c.gates().len()).rev() {
        if live[k] {
            for a in &c.gates()[k].args {
                live[a.0] = true;
            }
        }
    }
    (0..c.gates().len())
        .filter(|&k| live[k] && !matches!(c.gates()[k].kind, GateKind::Input(_)))
        .collect()
}

/// The single-kind flip applied to a gate: AND and OR swap, NOT becomes a
/// one-argument AND (a buffer), constants invert.
pub fn flipped_kind(kind: GateKind) -> Option<GateKind> {
    match kind {
        GateKind::And => Some(GateKind::Or),
        GateKind::Or => Some(GateKind::And),
        GateKind::Not => Some(GateKind::And),
        GateKind::Const(b) => Some(GateKind::Const(!b)),
        GateKind::Input(_) => None,
    }
}

/// Applies `count` seeded single-gate mutations to live gates (distinct
/// while possible) and checks each exhaustively against `oracle`.
pub fn mutation_sensitivity(
    circuit: &Circuit,
    oracle: &Oracle<'_>,
    count: usize,
    seed: u64,
) -> Result<Vec<MutationOutcome>, VerifyError> {
    let candidates = live_internal_gates(circuit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut pool = Vec::new();
    for _ in 0..count {
        if pool.is_empty() {
            pool.extend_from_slice(&candidates);
        }
        let gate = pool.swap_remove(rng.gen_range(0..pool.len()));
        let from = circuit.gates()[gate].kind;
        let to = flipped_kind(from).expect("inputs are excluded");
        let mutant = circuit.with_gate_kind(gate, to);
        let r = check_circuit_equivalence("mutant", &mutant, oracle, CheckMode::Exhaustive)?;
        out.push(MutationOutcome {
            gate,
            from: format!("{from:?}"),
            to: format!("{to:?}"),
            mismatch_count: r.mismatch_count,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnf::parse_dnf;
    use crate::mdp::increment_control;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn equivalence_passes_and_catches_corruption() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("1011001")).unwrap();
        let report = check_majority_model(&spec).unwrap();
        assert!(report.passed(), "{}", report.summary());
        assert_eq!(report.inputs_checked, 1 << 11);
        assert!(check_parity_reward(8).unwrap().passed());

        let good = gadgets::parity_mdp_reward_circuit(3).unwrap();
        let and_gate = good.outputs()[0].0;
        let bad = good.with_gate_kind(and_gate, GateKind::Or);
        let spec = ParityMdpSpec::new(3).unwrap();
        let oracle = |x: &BitString| BitString::new(vec![parity_reward(&spec, x).unwrap()]);
        let r = check_circuit_equivalence("bad", &bad, &oracle, CheckMode::Exhaustive).unwrap();
        assert!(!r.passed());
        assert_eq!(r.mismatch_count, 6);
        assert!(r.summary().starts_with("FAIL"));
    }

    #[test]
    fn equivalence_errors() {
        let c = gadgets::parity_mdp_reward_circuit(23).unwrap();
        let oracle = |_: &BitString| BitString::zeros(1);
        assert!(matches!(
            check_circuit_equivalence("wide", &c, &oracle, CheckMode::Exhaustive),
            Err(VerifyError::TooWideForExhaustive(23))
        ));
        let r = check_circuit_equivalence("wide", &c, &oracle, CheckMode::Random { count: 100, seed: 1 })
            .unwrap();
        assert_eq!(r.inputs_checked, 100);
        let small = gadgets::xor2();
        let wrong = |_: &BitString| BitString::zeros(2);
        assert!(matches!(
            check_circuit_equivalence("w", &small, &wrong, CheckMode::Exhaustive),
            Err(VerifyError::OracleWidth { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn random_mode_is_reproducible() {
        let c = gadgets::addition_circuit(12).unwrap();
        let mode = CheckMode::Random { count: 500, seed: 9 };
        let a = check_addition(12, mode).unwrap();
        assert!(a.passed());
        assert_eq!(draw_inputs(24, mode).unwrap(), draw_inputs(24, mode).unwrap());
        assert_eq!(c.input_count(), 24);
    }

    #[test]
    fn gadget_checks_pass() {
        for n in 1..=4 {
            assert!(check_addition(n, CheckMode::Exhaustive).unwrap().passed());
            assert!(check_max(n).unwrap().passed());
        }
        for b in 1..=3 {
            assert!(check_delta(b).unwrap().passed());
        }
        assert!(check_xor().unwrap().passed());
    }

    #[test]
    fn closed_forms_small() {
        let spec = MajorityMdpSpec::unconditioned(3, bs("110")).unwrap();
        let r = check_closed_forms(&spec).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.inputs_checked, 8);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn closed_forms_conditioned() {
        let cond = parse_dnf("(x1 & !x2) | (x6)", 7).unwrap();
        let spec = MajorityMdpSpec::new(7, bs("1000110"), increment_control(3), Some(cond)).unwrap();
        let r = check_closed_forms(&spec).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.inputs_checked, 8);
        let rejecting = parse_dnf("(!x1)", 7).unwrap();
        let spec = MajorityMdpSpec::new(7, bs("1000110"), increment_control(3), Some(rejecting)).unwrap();
        assert!(matches!(check_closed_forms(&spec), Err(VerifyError::Solver(_))));
    }

    #[test]
    fn extraction_examples() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("0110010")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        assert!(extract_majority_bit(&spec, &sol.values, &bs("1111111")).unwrap());
        assert!(!extract_majority_bit(&spec, &sol.values, &bs("0000000")).unwrap());
        assert!(extract_majority_bit(&spec, &sol.values, &bs("000")).is_err());
        assert!(check_majority_extraction(&spec).unwrap().passed());
    }

    #[test]
    fn parity_indicator_small() {
        for n in 1..=5 {
            assert!(check_parity_indicator(n).unwrap().passed());
        }
        assert!(check_parity_indicator(9).is_err());
    }

    #[test]
    fn bellman_check_small() {
        let spec = MajorityMdpSpec::unconditioned(3, bs("011")).unwrap();
        assert!(check_bellman("m3", &spec).unwrap().passed());
    }

    #[test]
    fn scaling_rows_and_csv() {
        let rows = scaling_experiment(&[ScalingFamily::ParityReward], Some(&[3, 7, 15])).unwrap();
        assert_eq!(rows[0], ScalingRow { family: "parity-reward".into(), n: 3, size: 7, depth: 2 });
        let a = analyze_scaling(&rows, 3.0);
        assert!(a[0].passed());
        assert!((a[0].slope - 1.0).abs() < 0.1);
        assert!(scaling_csv(&rows).starts_with("family,n,size,depth\nparity-reward,3,7,2\n"));
        assert_eq!(ScalingFamily::from_name("max"), Some(ScalingFamily::Max));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(usize, usize)> = [2usize, 4, 8, 16].iter().map(|&n| (n, n * n)).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn montecarlo_trivial_case() {
        let r = condition_lemma_montecarlo(3, 1, 1, 20_000, 5).unwrap();
        assert_eq!(r.analytic, 0.5);
        assert!(r.analytic_within(), "{r:?}");
        let again = condition_lemma_montecarlo(3, 1, 1, 20_000, 5).unwrap();
        assert_eq!(r.hits, again.hits);
        assert!(condition_lemma_montecarlo(3, 1, 1, 10, 5).is_err());
        assert!(condition_lemma_montecarlo(4, 2, 1, 1000, 5).is_err());
    }

    #[test]
    fn mutations_are_detected_on_small_model() {
        let spec = MajorityMdpSpec::unconditioned(3, bs("101")).unwrap();
        let c = gadgets::majority_mdp_model_circuit(&spec);
        let oracle = |x: &BitString| majority_transition(&spec, &x.slice(0..5), x.get(5)).unwrap();
        let outcomes = mutation_sensitivity(&c, &oracle, 10, 3).unwrap();
        assert_eq!(outcomes.len(), 10);
        assert!(outcomes.iter().all(MutationOutcome::detected), "{outcomes:?}");
    }
}
