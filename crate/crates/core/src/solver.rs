//! Exact finite-horizon dynamic programming over enumerable bit-string MDPs.
//!
//! Time steps run `h = 1..=H`; `V_{H+1} = 0` and
//! `Q_h(s, a) = r(s, a) + V_{h+1}(T(s, a))`, `V_h(s) = max_a Q_h(s, a)`.
//! All values are exact integers.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::bits::BitString;
use crate::mdp::{DeterministicMdp, MajorityMdpSpec, MdpError};

/// Largest state width [`backward_induction`] enumerates.
pub const MAX_SOLVE_WIDTH: usize = 22;
/// Cap on `H * |S| * |A|` Q-table entries.
pub const MAX_Q_ENTRIES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("state width {0} exceeds the enumeration limit of {MAX_SOLVE_WIDTH}")]
    TooWide(usize),
    #[error("Q table would hold {0} entries (limit {MAX_Q_ENTRIES})")]
    TooLarge(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("initial distribution is empty")]
    EmptyInitial,
    #[error("initial weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// `V_h(s)` for `h = 1..=H+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueTable {
    horizon: usize,
    values: Vec<Vec<u32>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.values[0].len()
    }

    /// `V_h(state)`, `1 <= h <= H + 1`.
    pub fn get(&self, h: usize, state: u64) -> u32 {
        self.values[h - 1][state as usize]
    }

    /// The full sweep for step `h`.
    pub fn step(&self, h: usize) -> &[u32] {
        &self.values[h - 1]
    }

    /// `V_1`, the value with all `H` steps remaining.
    pub fn initial(&self, state: u64) -> u32 {
        self.get(1, state)
    }
}

/// `Q_h(s, a)` for `h = 1..=H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTable {
    horizon: usize,
    num_actions: usize,
    q: Vec<Vec<u32>>,
}

impl QTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.q.first().map_or(0, |row| row.len() / self.num_actions)
    }

    pub fn get(&self, h: usize, state: u64, action: usize) -> u32 {
        self.q[h - 1][state as usize * self.num_actions + action]
    }

    /// `Q_h(state, .)` over all actions.
    pub fn row(&self, h: usize, state: u64) -> &[u32] {
        let base = state as usize * self.num_actions;
        &self.q[h - 1][base..base + self.num_actions]
    }
}

/// Greedy action per step and state; ties go to the smallest action id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    actions: Vec<Vec<usize>>,
}

impl PolicyTable {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, h: usize, state: u64) -> usize {
        self.actions[h - 1][state as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub values: ValueTable,
    pub q: QTable,
}

fn check_size<M: DeterministicMdp + ?Sized>(mdp: &M) -> Result<usize, SolverError> {
    let width = mdp.state_width();
    if width > MAX_SOLVE_WIDTH {
        return Err(SolverError::TooWide(width));
    }
    let states = 1usize << width;
    let entries = states
        .saturating_mul(mdp.num_actions())
        .saturating_mul(mdp.horizon());
    if entries > MAX_Q_ENTRIES {
        return Err(SolverError::TooLarge(entries));
    }
    Ok(states)
}

fn q_sweep<M: DeterministicMdp + ?Sized>(mdp: &M, next: &[u32]) -> Vec<u32> {
    let na = mdp.num_actions();
    let mut q = vec![0u32; next.len() * na];
    q.par_chunks_mut(na).enumerate().for_each(|(s, row)| {
        for (a, slot) in row.iter_mut().enumerate() {
            let t = mdp.transition(s as u64, a);
            *slot = mdp.reward(s as u64, a) + next[t as usize];
        }
    });
    q
}

fn max_rows(q: &[u32], na: usize) -> Vec<u32> {
    q.par_chunks(na)
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .collect()
}

/// Exact `V` and `Q` tables by sweeping `h = H, H-1, ..., 1`.
pub fn backward_induction<M: DeterministicMdp + ?Sized>(mdp: &M) -> Result<Solution, SolverError> {
    let states = check_size(mdp)?;
    let horizon = mdp.horizon();
    let na = mdp.num_actions();
    let mut values = vec![Vec::new(); horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    values[horizon] = vec![0u32; states];
    for h in (1..=horizon).rev() {
        let qh = q_sweep(mdp, &values[h]);
        values[h - 1] = max_rows(&qh, na);
        q[h - 1] = qh;
    }
    Ok(Solution {
        values: ValueTable { horizon, values },
        q: QTable {
            horizon,
            num_actions: na,
            q,
        },
    })
}

/// Rebuilds `Q_h = r + V_{h+1} o T` from a value table.
pub fn q_from_v<M: DeterministicMdp + ?Sized>(mdp: &M, values: &ValueTable) -> QTable {
    let q = (1..=values.horizon)
        .map(|h| q_sweep(mdp, values.step(h + 1)))
        .collect();
    QTable {
        horizon: values.horizon,
        num_actions: mdp.num_actions(),
        q,
    }
}

pub fn optimal_policy(q: &QTable) -> PolicyTable {
    let na = q.num_actions;
    let actions = q
        .q
        .iter()
        .map(|qh| {
            qh.par_chunks(na)
                .map(|row| {
                    // first index attaining the max
                    row.iter()
                        .enumerate()
                        .fold((0usize, row[0]), |best, (a, &v)| if v > best.1 { (a, v) } else { best })
                        .0
                })
                .collect()
        })
        .collect();
    PolicyTable { actions }
}

/// Largest `|Q_h(s,a) - r(s,a) - V_{h+1}(T(s,a))|` or `|V_h(s) - max_a Q_h(s,a)|`
/// over the whole table, plus the terminal check `V_{H+1} = 0`.
pub fn max_bellman_residual<M: DeterministicMdp + ?Sized>(mdp: &M, sol: &Solution) -> u64 {
    let horizon = sol.values.horizon;
    let terminal = sol
        .values
        .step(horizon + 1)
        .iter()
        .map(|&v| u64::from(v))
        .max()
        .unwrap_or(0);
    let inner = (1..=horizon)
        .into_par_iter()
        .map(|h| {
            (0..sol.values.num_states() as u64)
                .map(|s| {
                    let row = sol.q.row(h, s);
                    let mut worst = 0u64;
                    for (a, &qv) in row.iter().enumerate() {
                        let target = i64::from(mdp.reward(s, a))
                            + i64::from(sol.values.get(h + 1, mdp.transition(s, a)));
                        worst = worst.max((i64::from(qv) - target).unsigned_abs());
                    }
                    let vmax = row.iter().copied().max().unwrap_or(0);
                    worst.max((i64::from(sol.values.get(h, s)) - i64::from(vmax)).unsigned_abs())
                })
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0);
    terminal.max(inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub h: usize,
    pub state: u64,
    pub action: usize,
    pub reward: u32,
}

/// Follows `policy` from `s0` for its full horizon.
pub fn rollout<M: DeterministicMdp + ?Sized>(mdp: &M, policy: &PolicyTable, s0: u64) -> Vec<Step> {
    let mut s = s0;
    (1..=policy.horizon())
        .map(|h| {
            let action = policy.action(h, s);
            let step = Step {
                h,
                state: s,
                action,
                reward: mdp.reward(s, action),
            };
            s = mdp.transition(s, action);
            step
        })
        .collect()
}

/// Time-uniform occupancy of `(state, action)` pairs along `policy`'s
/// rollouts from a weighted set of start states. Weights sum to 1.
pub fn optimal_state_distribution<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    policy: &PolicyTable,
    initial: &[(u64, f64)],
) -> Result<Vec<((u64, usize), f64)>, SolverError> {
    if initial.is_empty() {
        return Err(SolverError::EmptyInitial);
    }
    let total: f64 = initial.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SolverError::WeightSum(total));
    }
    let horizon = policy.horizon() as f64;
    let mut occupancy: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    for &(s0, w) in initial {
        for step in rollout(mdp, policy, s0) {
            *occupancy.entry((step.state, step.action)).or_insert(0.0) += w / horizon;
        }
    }
    Ok(occupancy.into_iter().collect())
}

fn check_zero_control(spec: &MajorityMdpSpec, s: &BitString) -> Result<(BitString, BitString), SolverError> {
    let (c, r) = spec.split(s)?;
    if c.count_ones() != 0 {
        return Err(SolverError::Precondition(format!(
            "control bits {c} are not 0_b"
        )));
    }
    Ok((c, r))
}

/// `n + 1 - hamming(s[r], s_reward)` on the slice `s[c] = 0_b` of an
/// unconditioned majority MDP.
pub fn value_closed_form_unconditioned(
    spec: &MajorityMdpSpec,
    s: &BitString,
) -> Result<u32, SolverError> {
    if spec.is_conditioned() {
        return Err(SolverError::Precondition(
            "spec is conditioned; use the conditioned closed form".into(),
        ));
    }
    let (_, r) = check_zero_control(spec, s)?;
    let mismatches = r.hamming(spec.s_reward()).expect("widths checked by split");
    Ok((spec.n() + 1 - mismatches) as u32)
}

/// `n + 1 - sum_{i in A} (s_{b+i} xor s_reward_i)` on the slice where
/// `s[c] = 0_b` and `s[r]` agrees with `s_reward` outside `A`.
///
/// `A` holds 1-based representation indices, `|A| = 2^(b-1) - 1`; the
/// condition must not mention any variable of `A` and must accept `s_reward`.
pub fn value_closed_form_conditioned(
    spec: &MajorityMdpSpec,
    free: &[usize],
    s: &BitString,
) -> Result<u32, SolverError> {
    let needed = (1usize << (spec.b() - 1)) - 1;
    if free.len() != needed {
        return Err(SolverError::Precondition(format!(
            "|A| = {}, expected {needed}",
            free.len()
        )));
    }
    if free.iter().any(|&i| i == 0 || i > spec.n()) {
        return Err(SolverError::Precondition("A has an index outside 1..=n".into()));
    }
    if let Some(cond) = spec.condition() {
        let used = cond.variables();
        if let Some(v) = free.iter().find(|v| used.contains(v)) {
            return Err(SolverError::Precondition(format!(
                "condition depends on x{v}, which is in A"
            )));
        }
    }
    if !spec.condition_holds(spec.s_reward()) {
        return Err(SolverError::Precondition("C(s_reward) = 0".into()));
    }
    let (_, r) = check_zero_control(spec, s)?;
    let mut mismatches = 0;
    for (i, (x, y)) in r.iter().zip(spec.s_reward().iter()).enumerate() {
        if x != y {
            if !free.contains(&(i + 1)) {
                return Err(SolverError::Precondition(format!(
                    "representation bit {} differs from s_reward outside A",
                    i + 1
                )));
            }
            mismatches += 1;
        }
    }
    Ok((spec.n() + 1 - mismatches) as u32)
}

/// The unconditioned value formula read literally as `n - (#matches) + 1`.
/// Kept only to document how it departs from the solver; it is not a value.
pub fn value_formula_counting_matches(
    spec: &MajorityMdpSpec,
    s: &BitString,
) -> Result<i64, SolverError> {
    let (_, r) = check_zero_control(spec, s)?;
    let matches = spec.n() - r.hamming(spec.s_reward()).expect("widths checked by split");
    Ok(spec.n() as i64 - matches as i64 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{increment_control, ParityMdpSpec};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn spec3() -> MajorityMdpSpec {
        MajorityMdpSpec::unconditioned(3, bs("101")).unwrap()
    }

    /// Brute-force optimum by enumerating every action sequence.
    fn brute_force_value<M: DeterministicMdp>(mdp: &M, s0: u64, steps: usize) -> u32 {
        if steps == 0 {
            return 0;
        }
        (0..mdp.num_actions())
            .map(|a| mdp.reward(s0, a) + brute_force_value(mdp, mdp.transition(s0, a), steps - 1))
            .max()
            .unwrap()
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let spec = spec3();
        let sol = backward_induction(&spec).unwrap();
        for s in 0..32u64 {
            assert_eq!(sol.values.initial(s), brute_force_value(&spec, s, spec.horizon()));
        }
        let parity = ParityMdpSpec::new(3).unwrap();
        let sol = backward_induction(&parity).unwrap();
        for s in 0..8u64 {
            assert_eq!(sol.values.initial(s), brute_force_value(&parity, s, 3));
        }
    }

    #[test]
    fn majority_n3_values() {
        let spec = spec3();
        let sol = backward_induction(&spec).unwrap();
        // (00, s_reward)
        assert_eq!(sol.values.initial(bs("00101").to_int()), 4);
        // one mismatch
        assert_eq!(sol.values.initial(bs("00100").to_int()), 3);
        // complement of s_reward
        assert_eq!(sol.values.initial(bs("00010").to_int()), 1);
        for s in 0..32u64 {
            assert_eq!(sol.values.get(spec.horizon() + 1, s), 0);
        }
    }

    #[test]
    fn bellman_residual_is_zero() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("0110101")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        assert_eq!(max_bellman_residual(&spec, &sol), 0);
        let parity = ParityMdpSpec::new(5).unwrap();
        let sol = backward_induction(&parity).unwrap();
        assert_eq!(max_bellman_residual(&parity, &sol), 0);
    }

    #[test]
    fn residual_detects_a_corrupted_table() {
        let spec = spec3();
        let mut sol = backward_induction(&spec).unwrap();
        sol.q.q[2][7] += 1;
        assert_eq!(max_bellman_residual(&spec, &sol), 1);
    }

    #[test]
    fn value_bounds_and_monotonicity() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("1110000")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        let horizon = spec.horizon();
        for h in 1..=horizon {
            for s in 0..1u64 << 10 {
                let v = sol.values.get(h, s);
                assert!(v as usize <= horizon - h + 1);
                assert!(v >= sol.values.get(h + 1, s));
            }
        }
    }

    #[test]
    fn q_from_v_agrees_with_backward_induction() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("1001011")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        assert_eq!(q_from_v(&spec, &sol.values), sol.q);
        // self-loop at the reward state with a = 0
        let reward_state = bs("1111001011").to_int();
        for h in 1..=spec.horizon() {
            assert_eq!(sol.q.get(h, reward_state, 0), 1 + sol.values.get(h + 1, reward_state));
        }
    }

    #[test]
    fn policy_matches_flip_rule() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("1001011")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        let policy = optimal_policy(&sol.q);
        let target = spec.s_reward().clone();
        // at step 1 with control i >= 1 and all earlier bits already fixed:
        // flip iff bit i mismatches
        for c in 1..=7u64 {
            for r in 0..1u64 << 7 {
                let rep = BitString::from_int(r, 7).unwrap();
                let fixable = (0..(c as usize - 1)).all(|i| rep.get(i) == target.get(i));
                if !fixable {
                    continue;
                }
                let s = spec.encode_state(c, r);
                let want = usize::from(rep.get(c as usize - 1) != target.get(c as usize - 1));
                assert_eq!(policy.action(1, s), want, "c={c} r={rep}");
            }
        }
        // s[r] = s_reward: always advance
        for c in 0..8u64 {
            let s = spec.encode_state(c, target.to_int());
            for h in 1..=spec.horizon() {
                assert_eq!(policy.action(h, s), 0);
            }
        }
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let spec = spec3();
        let sol = backward_induction(&spec).unwrap();
        let mut scaled = sol.q.clone();
        for qh in &mut scaled.q {
            for v in qh.iter_mut() {
                *v *= 3;
            }
        }
        assert_eq!(optimal_policy(&scaled), optimal_policy(&sol.q));
    }

    #[test]
    fn rollout_returns_match_values() {
        let spec = MajorityMdpSpec::unconditioned(7, bs("0101100")).unwrap();
        let sol = backward_induction(&spec).unwrap();
        let policy = optimal_policy(&sol.q);
        for s in 0..1u64 << 10 {
            let traj = rollout(&spec, &policy, s);
            assert_eq!(traj.len(), spec.horizon());
            let ret: u32 = traj.iter().map(|st| st.reward).sum();
            assert_eq!(ret, sol.values.initial(s));
        }
        let small = spec3();
        let sol = backward_induction(&small).unwrap();
        let traj = rollout(&small, &optimal_policy(&sol.q), bs("00101").to_int());
        assert_eq!(traj.iter().map(|s| s.reward).sum::<u32>(), 4);
    }

    #[test]
    fn odd_parity_rollout_collects_nothing() {
        let spec = ParityMdpSpec::new(5).unwrap();
        let sol = backward_induction(&spec).unwrap();
        let traj = rollout(&spec, &optimal_policy(&sol.q), bs("10110").to_int());
        assert_eq!(traj.len(), 5);
        assert_eq!(traj.iter().map(|s| s.reward).sum::<u32>(), 0);
    }

    #[test]
    fn occupancy_examples() {
        let spec = spec3();
        let sol = backward_induction(&spec).unwrap();
        let policy = optimal_policy(&sol.q);
        let single = optimal_state_distribution(&spec, &policy, &[(bs("00100").to_int(), 1.0)]).unwrap();
        let h = spec.horizon() as f64;
        assert!(single.len() <= spec.horizon());
        // weights are multiples of 1/H
        assert!(single.iter().all(|(_, w)| ((w * h).round() - w * h).abs() < 1e-9));
        let reward_state = bs("11101").to_int();
        let dwell: f64 = single.iter().filter(|((s, _), _)| *s == reward_state).map(|(_, w)| w).sum();
        assert!((dwell - 3.0 / h).abs() < 1e-12);
        let starts: Vec<(u64, f64)> = (0..8u64).map(|r| (r, 1.0 / 8.0)).collect();
        let dist = optimal_state_distribution(&spec, &policy, &starts).unwrap();
        let total: f64 = dist.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(dist.iter().any(|((s, _), _)| *s == reward_state));
        assert_eq!(
            optimal_state_distribution(&spec, &policy, &[]),
            Err(SolverError::EmptyInitial)
        );
        assert!(matches!(
            optimal_state_distribution(&spec, &policy, &[(0, 0.5)]),
            Err(SolverError::WeightSum(_))
        ));
    }

    #[test]
    fn closed_form_unconditioned_examples() {
        let spec = spec3();
        assert_eq!(value_closed_form_unconditioned(&spec, &bs("00101")), Ok(4));
        assert_eq!(value_closed_form_unconditioned(&spec, &bs("00010")), Ok(1));
        assert!(matches!(
            value_closed_form_unconditioned(&spec, &bs("01101")),
            Err(SolverError::Precondition(_))
        ));
        assert_eq!(value_formula_counting_matches(&spec, &bs("00101")), Ok(1));
    }

    #[test]
    fn closed_form_conditioned_preconditions() {
        let cond = crate::dnf::parse_dnf("(x1 & !x2)", 7).unwrap();
        let spec = MajorityMdpSpec::new(7, bs("1000110"), increment_control(3), Some(cond)).unwrap();
        let a = [3, 4, 5];
        assert_eq!(value_closed_form_conditioned(&spec, &a, &bs("0001000110")), Ok(8));
        assert_eq!(value_closed_form_conditioned(&spec, &a, &bs("0001011010")), Ok(5));
        // differs outside A
        assert!(value_closed_form_conditioned(&spec, &a, &bs("0001000111")).is_err());
        // A overlaps the condition
        assert!(value_closed_form_conditioned(&spec, &[1, 4, 5], &bs("0001000110")).is_err());
        // wrong |A|
        assert!(value_closed_form_conditioned(&spec, &[3, 4], &bs("0001000110")).is_err());
        // nonzero control
        assert!(value_closed_form_conditioned(&spec, &a, &bs("0011000110")).is_err());
        let reject = crate::dnf::parse_dnf("(!x1)", 7).unwrap();
        let spec = MajorityMdpSpec::new(7, bs("1000110"), increment_control(3), Some(reject)).unwrap();
        assert!(value_closed_form_conditioned(&spec, &a, &bs("0001000110")).is_err());
    }

    #[test]
    fn too_wide_is_rejected() {
        let spec = ParityMdpSpec::new(23).unwrap();
        assert_eq!(backward_induction(&spec), Err(SolverError::TooWide(23)));
    }
}
