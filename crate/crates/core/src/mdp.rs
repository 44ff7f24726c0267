//! Interpreter-level semantics for the Parity and Majority MDP families.
//!
//! Every function here operates on [`BitString`]s and is the reference the
//! circuit builders are checked against. The [`DeterministicMdp`] impls use
//! an integer encoding of the same states (`BitString::to_int`, MSB first)
//! for the solver's inner loops; unit tests pin the two paths together.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{bits_for, BitString, BitsError};
use crate::dnf::{parse_dnf, CompiledDnf, Dnf, DnfError, Literal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MdpError {
    #[error("control function does not fix 1_b: f({ones}) = {image}")]
    NotFixed { ones: BitString, image: BitString },
    #[error("control orbit of 0_b misses {missing} (visited {visited} distinct nonzero strings)")]
    Traversal { missing: BitString, visited: usize },
    #[error("control table has {got} entries, expected {expected}")]
    TableSize { got: usize, expected: usize },
    #[error("control table maps {input} outside {{0,1}}^{b}")]
    TableRange { input: u64, b: usize },
    #[error("invalid control order: {0}")]
    Order(String),
    #[error("n = {0} is not of the form 2^b - 1 with 1 <= b <= 6")]
    BadN(usize),
    #[error("parity MDP needs n >= 1")]
    EmptyParity,
    #[error("expected width {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("action index ({i}, {j}) outside 1..={n}")]
    ActionOutOfRange { i: usize, j: usize, n: usize },
    #[error("sampler needs 1 <= k <= m and 2m < n; got n={n}, m={m}, k={k}")]
    SamplerParams { n: usize, m: usize, k: usize },
    #[error("condition has only {found} free variables, {needed} required")]
    NotEnoughFree { found: usize, needed: usize },
    #[error("condition is over {got} variables, expected {expected}")]
    ConditionWidth { expected: usize, got: usize },
    #[error(transparent)]
    Dnf(#[from] DnfError),
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error("unknown control kind {0:?}")]
    UnknownControl(String),
    #[error("no sampled condition accepted s_reward in {0} attempts")]
    NoAcceptingCondition(usize),
}

// ---------------------------------------------------------------------------
// Control functions

/// A self-map of `{0,1}^b` fixing `1_b` whose orbit from `0_b` visits every
/// nonzero string. Stored as a table indexed by the integer encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlFunction {
    b: usize,
    table: Vec<u64>,
}

impl ControlFunction {
    /// Builds and validates.
    pub fn from_table(b: usize, table: Vec<u64>) -> Result<Self, MdpError> {
        let f = ControlFunction { b, table };
        validate_control(&f)?;
        Ok(f)
    }

    /// No validation; for constructing counterexamples.
    pub fn from_table_unchecked(b: usize, table: Vec<u64>) -> Self {
        ControlFunction { b, table }
    }

    pub fn width(&self) -> usize {
        self.b
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    pub fn apply_int(&self, x: u64) -> u64 {
        self.table[x as usize]
    }

    pub fn apply(&self, x: &BitString) -> Result<BitString, MdpError> {
        if x.width() != self.b {
            return Err(MdpError::WidthMismatch {
                expected: self.b,
                got: x.width(),
            });
        }
        Ok(BitString::from_int(self.apply_int(x.to_int()), self.b)?)
    }

    /// `f^(k)(x)`.
    pub fn iterate(&self, x: u64, k: usize) -> u64 {
        (0..k).fold(x, |v, _| self.apply_int(v))
    }
}

pub fn validate_control(f: &ControlFunction) -> Result<(), MdpError> {
    let size = 1usize << f.b;
    if f.table.len() != size {
        return Err(MdpError::TableSize {
            got: f.table.len(),
            expected: size,
        });
    }
    if let Some(input) = f.table.iter().position(|&v| v >= size as u64) {
        return Err(MdpError::TableRange {
            input: input as u64,
            b: f.b,
        });
    }
    let ones = (size - 1) as u64;
    if f.table[size - 1] != ones {
        return Err(MdpError::NotFixed {
            ones: BitString::ones(f.b),
            image: BitString::from_int(f.table[size - 1], f.b)?,
        });
    }
    let mut seen = vec![false; size];
    let mut x = 0u64;
    for _ in 1..size {
        x = f.apply_int(x);
        seen[x as usize] = true;
    }
    if let Some(missing) = (1..size).find(|&v| !seen[v]) {
        return Err(MdpError::Traversal {
            missing: BitString::from_int(missing as u64, f.b)?,
            visited: seen[1..].iter().filter(|&&s| s).count(),
        });
    }
    Ok(())
}

/// `f(x) = x + 1` below `1_b`, `f(1_b) = 1_b`.
pub fn increment_control(b: usize) -> ControlFunction {
    assert!((1..=16).contains(&b), "control width {b} out of range");
    let top = (1u64 << b) - 1;
    let table = (0..=top).map(|x| (x + 1).min(top)).collect();
    ControlFunction { b, table }
}

/// Control visiting `order[0], order[1], ...` from `0_b`; `order` must be a
/// permutation of the nonzero strings ending with `1_b`.
pub fn control_from_order(order: &[BitString]) -> Result<ControlFunction, MdpError> {
    let b = order
        .first()
        .map(BitString::width)
        .ok_or_else(|| MdpError::Order("empty order".into()))?;
    if b == 0 || b > 16 {
        return Err(MdpError::Order(format!("width {b} out of range")));
    }
    let size = 1usize << b;
    if order.len() != size - 1 {
        return Err(MdpError::Order(format!(
            "expected {} strings, got {}",
            size - 1,
            order.len()
        )));
    }
    let mut seen = vec![false; size];
    for s in order {
        if s.width() != b {
            return Err(MdpError::Order(format!("{s} has width {}, expected {b}", s.width())));
        }
        let v = s.to_int() as usize;
        if v == 0 {
            return Err(MdpError::Order("0_b cannot appear in the order".into()));
        }
        if seen[v] {
            return Err(MdpError::Order(format!("{s} repeats")));
        }
        seen[v] = true;
    }
    if order.last().map(BitString::to_int) != Some((size - 1) as u64) {
        return Err(MdpError::Order("order must end with 1_b".into()));
    }
    let mut table = vec![0u64; size];
    let mut prev = 0usize;
    for s in order {
        table[prev] = s.to_int();
        prev = s.to_int() as usize;
    }
    table[size - 1] = (size - 1) as u64;
    ControlFunction::from_table(b, table)
}

// ---------------------------------------------------------------------------
// Solver-facing interface

/// Finite-horizon deterministic MDP over integer-encoded bit-string states.
///
/// States are `0..2^state_width()`, actions `0..num_actions()`. Rewards are
/// non-negative integers. Only meaningful for `state_width() <= 64`.
pub trait DeterministicMdp: Sync {
    fn state_width(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn transition(&self, state: u64, action: usize) -> u64;
    fn reward(&self, state: u64, action: usize) -> u32;
}

// ---------------------------------------------------------------------------
// Parity MDP

/// `{0,1}^n` states, actions `(i, j)` flipping bits `i` and `j` (1-based),
/// reward at `0_n`, horizon `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityMdpSpec {
    pub n: usize,
}

impl ParityMdpSpec {
    pub fn new(n: usize) -> Result<Self, MdpError> {
        if n == 0 {
            return Err(MdpError::EmptyParity);
        }
        Ok(ParityMdpSpec { n })
    }

    /// Width of one binary action index, `ceil(log2(n + 1))`.
    pub fn index_width(&self) -> usize {
        bits_for(self.n as u64)
    }

    /// Integer action id of `(i, j)`; ids order actions lexicographically.
    pub fn action_id(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.n + (j - 1)
    }

    pub fn action_pair(&self, id: usize) -> (usize, usize) {
        (id / self.n + 1, id % self.n + 1)
    }
}

pub fn parity_transition(
    spec: &ParityMdpSpec,
    s: &BitString,
    action: (usize, usize),
) -> Result<BitString, MdpError> {
    let (i, j) = action;
    if s.width() != spec.n {
        return Err(MdpError::WidthMismatch {
            expected: spec.n,
            got: s.width(),
        });
    }
    if !(1..=spec.n).contains(&i) || !(1..=spec.n).contains(&j) {
        return Err(MdpError::ActionOutOfRange { i, j, n: spec.n });
    }
    Ok(s.flipped(i - 1).flipped(j - 1))
}

/// Transition on binary-encoded action indices. An index outside `1..=n`
/// (including 0) flips nothing; this is the behaviour of the model circuit
/// on encodings that name no bit.
pub fn parity_transition_encoded(spec: &ParityMdpSpec, s: &BitString, i: u64, j: u64) -> BitString {
    let mut out = s.clone();
    for idx in [i, j] {
        if (1..=spec.n as u64).contains(&idx) {
            out = out.flipped(idx as usize - 1);
        }
    }
    out
}

pub fn parity_reward(spec: &ParityMdpSpec, s: &BitString) -> Result<bool, MdpError> {
    if s.width() != spec.n {
        return Err(MdpError::WidthMismatch {
            expected: spec.n,
            got: s.width(),
        });
    }
    Ok(s.count_ones() == 0)
}

impl DeterministicMdp for ParityMdpSpec {
    fn state_width(&self) -> usize {
        self.n
    }

    fn num_actions(&self) -> usize {
        self.n * self.n
    }

    fn horizon(&self) -> usize {
        self.n
    }

    fn transition(&self, state: u64, action: usize) -> u64 {
        let (i, j) = self.action_pair(action);
        state ^ (1u64 << (self.n - i)) ^ (1u64 << (self.n - j))
    }

    fn reward(&self, state: u64, _action: usize) -> u32 {
        u32::from(state == 0)
    }
}

// ---------------------------------------------------------------------------
// Majority MDP

/// State `(s[c], s[r])` with `b` control bits followed by `n = 2^b - 1`
/// representation bits; actions `{0, 1}`; horizon `2^b + n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityMdpSpec {
    n: usize,
    b: usize,
    s_reward: BitString,
    control: ControlFunction,
    condition: Option<Dnf>,
    compiled: Option<CompiledDnf>,
}

impl MajorityMdpSpec {
    pub fn new(
        n: usize,
        s_reward: BitString,
        control: ControlFunction,
        condition: Option<Dnf>,
    ) -> Result<Self, MdpError> {
        let b = bits_for(n as u64);
        if n == 0 || b > 6 || n != (1usize << b) - 1 {
            return Err(MdpError::BadN(n));
        }
        if s_reward.width() != n {
            return Err(MdpError::WidthMismatch {
                expected: n,
                got: s_reward.width(),
            });
        }
        if control.width() != b {
            return Err(MdpError::WidthMismatch {
                expected: b,
                got: control.width(),
            });
        }
        validate_control(&control)?;
        if let Some(c) = &condition {
            if c.num_vars() != n {
                return Err(MdpError::ConditionWidth {
                    expected: n,
                    got: c.num_vars(),
                });
            }
        }
        let compiled = condition.as_ref().map(Dnf::compile);
        Ok(MajorityMdpSpec {
            n,
            b,
            s_reward,
            control,
            condition,
            compiled,
        })
    }

    /// Unconditioned spec with the increment control.
    pub fn unconditioned(n: usize, s_reward: BitString) -> Result<Self, MdpError> {
        let b = bits_for(n as u64);
        if n == 0 || b > 6 {
            return Err(MdpError::BadN(n));
        }
        Self::new(n, s_reward, increment_control(b), None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn s_reward(&self) -> &BitString {
        &self.s_reward
    }

    pub fn control(&self) -> &ControlFunction {
        &self.control
    }

    pub fn condition(&self) -> Option<&Dnf> {
        self.condition.as_ref()
    }

    pub fn is_conditioned(&self) -> bool {
        self.condition.is_some()
    }

    pub fn horizon(&self) -> usize {
        (1 << self.b) + self.n
    }

    pub fn state_width(&self) -> usize {
        self.b + self.n
    }

    /// `C(x)`; constant 1 when unconditioned.
    pub fn condition_holds(&self, rep: &BitString) -> bool {
        self.condition
            .as_ref()
            .is_none_or(|c| c.eval_slice(rep.bits()))
    }

    fn condition_holds_int(&self, rep: u64) -> bool {
        self.compiled.as_ref().is_none_or(|c| c.eval(rep))
    }

    /// Splits a state into `(s[c], s[r])`.
    pub fn split(&self, s: &BitString) -> Result<(BitString, BitString), MdpError> {
        if s.width() != self.state_width() {
            return Err(MdpError::WidthMismatch {
                expected: self.state_width(),
                got: s.width(),
            });
        }
        Ok((s.slice(0..self.b), s.slice(self.b..self.b + self.n)))
    }

    /// Integer encoding of `(control, rep)`.
    pub fn encode_state(&self, control: u64, rep: u64) -> u64 {
        (control << self.n) | rep
    }

    fn rep_mask(&self) -> u64 {
        (1u64 << self.n) - 1
    }
}

/// One step of the majority MDP.
///
/// With `a = 1` and `C(s[r]) = 1` the control bits stay and representation
/// bit `i = int(s[c])` flips; `i = 0` names no bit and flips nothing.
/// Otherwise the control advances by `f` and the representation is held.
pub fn majority_transition(
    spec: &MajorityMdpSpec,
    s: &BitString,
    a: bool,
) -> Result<BitString, MdpError> {
    let (c, r) = spec.split(s)?;
    if a && spec.condition_holds(&r) {
        let i = c.to_int() as usize;
        let r = if i >= 1 { r.flipped(i - 1) } else { r };
        Ok(c.concat(&r))
    } else {
        Ok(spec.control.apply(&c)?.concat(&r))
    }
}

pub fn majority_reward(spec: &MajorityMdpSpec, s: &BitString) -> Result<bool, MdpError> {
    let (c, r) = spec.split(s)?;
    Ok(c.count_ones() == spec.b && r == spec.s_reward)
}

impl DeterministicMdp for MajorityMdpSpec {
    fn state_width(&self) -> usize {
        self.b + self.n
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        MajorityMdpSpec::horizon(self)
    }

    fn transition(&self, state: u64, action: usize) -> u64 {
        let c = state >> self.n;
        let mut r = state & self.rep_mask();
        if action == 1 && self.condition_holds_int(r) {
            if c >= 1 {
                r ^= 1u64 << (self.n - c as usize);
            }
            self.encode_state(c, r)
        } else {
            self.encode_state(self.control.apply_int(c), r)
        }
    }

    fn reward(&self, state: u64, _action: usize) -> u32 {
        let top = (1u64 << self.b) - 1;
        u32::from(state >> self.n == top && state & self.rep_mask() == self.s_reward.to_int())
    }
}

// ---------------------------------------------------------------------------
// JSON form

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    Named(String),
    Order { order: Vec<BitString> },
}

/// On-disk form of a [`MajorityMdpSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajoritySpecFile {
    pub n: usize,
    pub s_reward: BitString,
    pub control: ControlSpec,
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MajoritySpecFile {
    pub fn to_spec(&self) -> Result<MajorityMdpSpec, MdpError> {
        let b = bits_for(self.n as u64);
        if self.n == 0 || b > 6 {
            return Err(MdpError::BadN(self.n));
        }
        let control = match &self.control {
            ControlSpec::Named(name) if name == "increment" => increment_control(b),
            ControlSpec::Named(name) => return Err(MdpError::UnknownControl(name.clone())),
            ControlSpec::Order { order } => control_from_order(order)?,
        };
        let condition = self
            .condition
            .as_deref()
            .map(|text| parse_dnf(text, self.n))
            .transpose()?;
        MajorityMdpSpec::new(self.n, self.s_reward.clone(), control, condition)
    }

    pub fn from_spec(spec: &MajorityMdpSpec, seed: Option<u64>) -> Self {
        let b = spec.b;
        let control = if spec.control == increment_control(b) {
            ControlSpec::Named("increment".into())
        } else {
            let mut order = Vec::with_capacity((1 << b) - 1);
            let mut x = 0u64;
            for _ in 1..(1u64 << b) {
                x = spec.control.apply_int(x);
                order.push(BitString::from_int(x, b).expect("value fits control width"));
            }
            ControlSpec::Order { order }
        };
        MajoritySpecFile {
            n: spec.n,
            s_reward: spec.s_reward.clone(),
            control,
            condition: spec.condition.as_ref().map(ToString::to_string),
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Condition sampling

/// `floor(m/k)` conjuncts, each over `k` distinct variables drawn uniformly
/// from `x1..xm` with independent uniform signs.
pub fn sample_dnf_condition<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    k: usize,
    rng: &mut R,
) -> Result<Dnf, MdpError> {
    if k == 0 || k > m || 2 * m >= n || n > 64 {
        return Err(MdpError::SamplerParams { n, m, k });
    }
    let conjuncts = (0..m / k)
        .map(|_| {
            let mut vars = sample(rng, m, k).into_vec();
            vars.sort_unstable();
            vars.into_iter()
                .map(|v| Literal {
                    var: v + 1,
                    positive: rng.gen_bool(0.5),
                })
                .collect()
        })
        .collect();
    Ok(Dnf::new(n, conjuncts)?)
}

/// Closed-form `P(C(x) = 1)` at any fixed `x` under [`sample_dnf_condition`]:
/// `1 - (1 - 2^-k)^floor(m/k)`.
pub fn sampler_satisfaction_probability(m: usize, k: usize) -> f64 {
    1.0 - (1.0 - 0.5f64.powi(k as i32)).powi((m / k) as i32)
}

/// Attempts [`sample_conditioned_spec`] makes before giving up.
pub const CONDITION_ATTEMPTS: usize = 10_000;

/// Conditioned majority MDP with the increment control: `s_reward` is drawn
/// uniformly, then conditions are drawn from [`sample_dnf_condition`] until
/// one accepts `s_reward`.
pub fn sample_conditioned_spec<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    k: usize,
    rng: &mut R,
) -> Result<MajorityMdpSpec, MdpError> {
    let b = bits_for(n as u64);
    if n == 0 || n != (1 << b) - 1 || b > 6 {
        return Err(MdpError::BadN(n));
    }
    let s_reward = BitString::new((0..n).map(|_| rng.gen_bool(0.5)).collect());
    for _ in 0..CONDITION_ATTEMPTS {
        let cond = sample_dnf_condition(n, m, k, rng)?;
        if cond.eval_slice(s_reward.bits()) {
            return MajorityMdpSpec::new(n, s_reward, increment_control(b), Some(cond));
        }
    }
    Err(MdpError::NoAcceptingCondition(CONDITION_ATTEMPTS))
}

/// The first `2^(b-1) - 1` variables (1-based, ascending) the condition does
/// not mention. `None` stands for the unconditioned `C = 1`.
pub fn free_variable_set(cond: Option<&Dnf>, n: usize) -> Result<Vec<usize>, MdpError> {
    let b = bits_for(n as u64);
    let needed = (1usize << (b - 1)) - 1;
    let used: BTreeSet<usize> = cond.map(Dnf::variables).unwrap_or_default();
    let free: Vec<usize> = (1..=n).filter(|v| !used.contains(v)).collect();
    if free.len() < needed {
        return Err(MdpError::NotEnoughFree {
            found: free.len(),
            needed,
        });
    }
    Ok(free.into_iter().take(needed).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn all(width: usize) -> impl Iterator<Item = BitString> {
        (0..1u64 << width).map(move |v| BitString::from_int(v, width).unwrap())
    }

    #[test]
    fn conditioned_sampling_accepts_s_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let spec = sample_conditioned_spec(7, 3, 2, &mut rng).unwrap();
            assert!(spec.condition_holds(spec.s_reward()));
            assert_eq!(spec.condition().unwrap().conjuncts().len(), 1);
        }
        assert!(sample_conditioned_spec(6, 1, 1, &mut rng).is_err());
        assert!(sample_conditioned_spec(7, 4, 2, &mut rng).is_err());
    }

    #[test]
    fn parity_transition_examples() {
        let spec = ParityMdpSpec::new(3).unwrap();
        assert_eq!(parity_transition(&spec, &bs("110"), (1, 3)).unwrap(), bs("011"));
        assert_eq!(parity_transition(&spec, &bs("110"), (2, 2)).unwrap(), bs("110"));
        assert_eq!(
            parity_transition(&spec, &bs("110"), (0, 2)),
            Err(MdpError::ActionOutOfRange { i: 0, j: 2, n: 3 })
        );
        assert!(parity_transition(&spec, &bs("11"), (1, 1)).is_err());
    }

    #[test]
    fn parity_is_conserved() {
        for n in 1..=5 {
            let spec = ParityMdpSpec::new(n).unwrap();
            for s in all(n) {
                for i in 1..=n {
                    for j in 1..=n {
                        let t = parity_transition(&spec, &s, (i, j)).unwrap();
                        assert_eq!(t.parity(), s.parity());
                    }
                }
            }
        }
    }

    #[test]
    fn parity_reward_examples() {
        let spec = ParityMdpSpec::new(3).unwrap();
        assert!(parity_reward(&spec, &bs("000")).unwrap());
        assert!(!parity_reward(&spec, &bs("100")).unwrap());
        let spec6 = ParityMdpSpec::new(6).unwrap();
        assert_eq!(all(6).filter(|s| parity_reward(&spec6, s).unwrap()).count(), 1);
    }

    #[test]
    fn parity_integer_path_matches_bitstrings() {
        let spec = ParityMdpSpec::new(4).unwrap();
        for s in all(4) {
            for a in 0..spec.num_actions() {
                let t = parity_transition(&spec, &s, spec.action_pair(a)).unwrap();
                assert_eq!(spec.transition(s.to_int(), a), t.to_int());
                assert_eq!(
                    spec.reward(s.to_int(), a) == 1,
                    parity_reward(&spec, &s).unwrap()
                );
            }
        }
    }

    #[test]
    fn encoded_parity_transition_ignores_out_of_range_indices() {
        let spec = ParityMdpSpec::new(4).unwrap();
        let s = bs("1010");
        assert_eq!(parity_transition_encoded(&spec, &s, 0, 0), s);
        assert_eq!(parity_transition_encoded(&spec, &s, 7, 5), s);
        assert_eq!(parity_transition_encoded(&spec, &s, 1, 7), bs("0010"));
        assert_eq!(
            parity_transition_encoded(&spec, &s, 1, 4),
            parity_transition(&spec, &s, (1, 4)).unwrap()
        );
    }

    #[test]
    fn increment_control_examples() {
        let f = increment_control(2);
        assert_eq!(f.table(), &[1, 2, 3, 3]);
        assert_eq!(f.iterate(0, 3), 3);
        assert_eq!(validate_control(&increment_control(4)), Ok(()));
        assert_eq!(validate_control(&increment_control(3)), Ok(()));
    }

    #[test]
    fn validate_control_failures() {
        let identity = ControlFunction::from_table_unchecked(2, vec![0, 1, 2, 3]);
        assert!(matches!(
            validate_control(&identity),
            Err(MdpError::Traversal { visited: 0, .. })
        ));
        let no_fix = ControlFunction::from_table_unchecked(2, vec![1, 2, 3, 0]);
        assert!(matches!(validate_control(&no_fix), Err(MdpError::NotFixed { .. })));
        let short = ControlFunction::from_table_unchecked(2, vec![1, 2, 3]);
        assert!(matches!(validate_control(&short), Err(MdpError::TableSize { .. })));
    }

    #[test]
    fn control_from_order_examples() {
        let f = control_from_order(&[bs("10"), bs("01"), bs("11")]).unwrap();
        assert_eq!(f.apply(&bs("00")).unwrap(), bs("10"));
        assert_eq!(f.apply(&bs("10")).unwrap(), bs("01"));
        assert_eq!(f.apply(&bs("01")).unwrap(), bs("11"));
        assert_eq!(f.apply(&bs("11")).unwrap(), bs("11"));
        assert!(control_from_order(&[bs("11"), bs("01"), bs("10")]).is_err());
        assert!(control_from_order(&[bs("01"), bs("01"), bs("11")]).is_err());
        assert!(control_from_order(&[bs("00"), bs("01"), bs("11")]).is_err());
    }

    #[test]
    fn every_order_gives_a_valid_control() {
        for b in 2..=3usize {
            let mids: Vec<u64> = (1..(1u64 << b) - 1).collect();
            let mut count = 0;
            permute(&mut mids.clone(), 0, &mut |perm| {
                let mut order: Vec<BitString> =
                    perm.iter().map(|&v| BitString::from_int(v, b).unwrap()).collect();
                order.push(BitString::ones(b));
                let f = control_from_order(&order).unwrap();
                assert_eq!(validate_control(&f), Ok(()));
                count += 1;
            });
            assert_eq!(count, (1..=mids.len()).product::<usize>());
        }
    }

    fn permute(v: &mut Vec<u64>, k: usize, visit: &mut dyn FnMut(&[u64])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    fn spec3() -> MajorityMdpSpec {
        MajorityMdpSpec::unconditioned(3, bs("101")).unwrap()
    }

    #[test]
    fn majority_transition_examples() {
        let spec = spec3();
        assert_eq!(majority_transition(&spec, &bs("01110"), true).unwrap(), bs("01010"));
        assert_eq!(majority_transition(&spec, &bs("01110"), false).unwrap(), bs("10110"));
        assert_eq!(majority_transition(&spec, &bs("00110"), true).unwrap(), bs("00110"));
        assert!(majority_transition(&spec, &bs("0110"), true).is_err());
    }

    #[test]
    fn condition_gates_the_flip() {
        let cond = parse_dnf("x1 & x2", 3).unwrap();
        let spec =
            MajorityMdpSpec::new(3, bs("111"), increment_control(2), Some(cond)).unwrap();
        for s in all(5) {
            let r = s.slice(2..5);
            let t1 = majority_transition(&spec, &s, true).unwrap();
            let t0 = majority_transition(&spec, &s, false).unwrap();
            assert_eq!(t0.slice(2..5), r);
            if !(r.get(0) && r.get(1)) {
                assert_eq!(t1, t0);
            }
        }
    }

    #[test]
    fn majority_reward_examples() {
        let spec = spec3();
        assert!(majority_reward(&spec, &bs("11101")).unwrap());
        assert!(!majority_reward(&spec, &bs("00101")).unwrap());
        let spec7 = MajorityMdpSpec::unconditioned(7, bs("0110100")).unwrap();
        assert_eq!(all(10).filter(|s| majority_reward(&spec7, s).unwrap()).count(), 1);
    }

    #[test]
    fn majority_integer_path_matches_bitstrings() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cond = sample_dnf_condition(7, 3, 2, &mut rng).unwrap();
        let order: Vec<BitString> = [3u64, 1, 6, 2, 5, 4, 7]
            .iter()
            .map(|&v| BitString::from_int(v, 3).unwrap())
            .collect();
        let specs = [
            MajorityMdpSpec::unconditioned(7, bs("1100101")).unwrap(),
            MajorityMdpSpec::new(7, bs("0011010"), control_from_order(&order).unwrap(), Some(cond))
                .unwrap(),
        ];
        for spec in &specs {
            for s in all(10) {
                for a in 0..2 {
                    let t = majority_transition(spec, &s, a == 1).unwrap();
                    assert_eq!(spec.transition(s.to_int(), a), t.to_int());
                    assert_eq!(
                        spec.reward(s.to_int(), a) == 1,
                        majority_reward(spec, &s).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn control_orbit_never_revisits() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("1010101")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut s = BitString::from_int(rng.gen_range(0..1u64 << 10), 10).unwrap();
            let mut history = vec![s.slice(0..3).to_int()];
            for _ in 0..spec.horizon() {
                s = majority_transition(&spec, &s, rng.gen_bool(0.5)).unwrap();
                let c = s.slice(0..3).to_int();
                if *history.last().unwrap() != c {
                    assert!(!history.contains(&c), "control revisited {c}");
                    history.push(c);
                }
            }
        }
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        assert_eq!(
            MajorityMdpSpec::unconditioned(5, bs("10101")),
            Err(MdpError::BadN(5))
        );
        assert!(MajorityMdpSpec::unconditioned(3, bs("10")).is_err());
        assert!(MajorityMdpSpec::new(3, bs("101"), increment_control(3), None).is_err());
        let cond = parse_dnf("x1", 4).unwrap();
        assert!(MajorityMdpSpec::new(3, bs("101"), increment_control(2), Some(cond)).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let json = r#"{"n": 7, "s_reward": "0101101", "control": "increment", "condition": "(x1 & !x2)", "seed": 9}"#;
        let file: MajoritySpecFile = serde_json::from_str(json).unwrap();
        let spec = file.to_spec().unwrap();
        assert_eq!(spec.condition().unwrap().to_string(), "(x1 & !x2)");
        assert_eq!(MajoritySpecFile::from_spec(&spec, Some(9)), file);

        let json = r#"{"n": 3, "s_reward": "101", "control": {"order": ["10", "01", "11"]}, "condition": null}"#;
        let file: MajoritySpecFile = serde_json::from_str(json).unwrap();
        let spec = file.to_spec().unwrap();
        assert_eq!(spec.control().table(), &[2, 3, 1, 3]);
        assert_eq!(MajoritySpecFile::from_spec(&spec, None), file);

        let bad = r#"{"n": 3, "s_reward": "101", "control": "decrement"}"#;
        let file: MajoritySpecFile = serde_json::from_str(bad).unwrap();
        assert_eq!(file.to_spec(), Err(MdpError::UnknownControl("decrement".into())));
    }

    #[test]
    fn sampler_forced_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let f = sample_dnf_condition(7, 3, 3, &mut rng).unwrap();
            assert_eq!(f.conjuncts().len(), 1);
            assert_eq!(f.variables(), [1, 2, 3].into_iter().collect());
        }
    }

    #[test]
    fn sampler_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m, k) in [(63, 24, 3), (63, 12, 5), (15, 7, 2), (9, 4, 1)] {
            for _ in 0..50 {
                let f = sample_dnf_condition(n, m, k, &mut rng).unwrap();
                assert_eq!(f.conjuncts().len(), m / k);
                assert!(f.max_width() <= k);
                assert!(f.total_literals() <= m);
                assert!(f.variables().iter().all(|&v| v <= m));
            }
        }
        assert!(sample_dnf_condition(7, 4, 2, &mut rng).is_err());
        assert!(sample_dnf_condition(7, 2, 3, &mut rng).is_err());
        assert!(sample_dnf_condition(7, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn sampler_is_reproducible() {
        let a = sample_dnf_condition(63, 24, 3, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = sample_dnf_condition(63, 24, 3, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analytic_probability_examples() {
        assert!((sampler_satisfaction_probability(1, 1) - 0.5).abs() < 1e-15);
        let p = sampler_satisfaction_probability(24, 3);
        assert!((p - (1.0 - (7.0f64 / 8.0).powi(8))).abs() < 1e-15);
        assert!((p - 0.6564).abs() < 1e-3);
    }

    #[test]
    fn free_variable_set_examples() {
        assert_eq!(free_variable_set(None, 7).unwrap(), vec![1, 2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = sample_dnf_condition(7, 3, 3, &mut rng).unwrap();
        assert_eq!(free_variable_set(Some(&f), 7).unwrap(), vec![4, 5, 6]);
        let greedy = parse_dnf("x1 & x2 & x3 & x4 & x5", 7).unwrap();
        assert_eq!(
            free_variable_set(Some(&greedy), 7),
            Err(MdpError::NotEnoughFree { found: 2, needed: 3 })
        );
    }

    #[test]
    fn condition_is_invariant_on_free_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let f = sample_dnf_condition(7, 3, 2, &mut rng).unwrap();
            let a = free_variable_set(Some(&f), 7).unwrap();
            for x in all(7) {
                for flips in 0..(1u32 << a.len()) {
                    let mut y = x.clone();
                    for (t, &v) in a.iter().enumerate() {
                        if flips >> t & 1 == 1 {
                            y = y.flipped(v - 1);
                        }
                    }
                    assert_eq!(f.eval(&x).unwrap(), f.eval(&y).unwrap());
                }
            }
        }
    }

    #[test]
    fn free_set_always_exists_under_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [7usize, 15, 31, 63] {
            for m in 1..n.div_ceil(2) {
                for k in 1..=m.min(4) {
                    let f = sample_dnf_condition(n, m, k, &mut rng).unwrap();
                    assert!(free_variable_set(Some(&f), n).is_ok(), "n={n} m={m} k={k}");
                }
            }
        }
    }
}
