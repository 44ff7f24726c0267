//! Constant-depth circuit constructions.
//!
//! Each public builder returns a standalone [`Circuit`]; the `*_into`
//! helpers emit the same structure inside an existing [`CircuitBuilder`] so
//! larger circuits can share literals and subterms.

use thiserror::Error;

use crate::bits::BitString;
use crate::circuit::{Circuit, CircuitBuilder, GateId};
use crate::dnf::Dnf;
use crate::mdp::{ControlFunction, MajorityMdpSpec};

/// Largest input width [`truth_table_circuit`] will enumerate.
pub const MAX_TABLE_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GadgetError {
    #[error("index {k} does not fit in {b} bits")]
    DeltaRange { b: usize, k: u64 },
    #[error("truth table over {0} inputs is too large (max {MAX_TABLE_WIDTH})")]
    TableTooWide(usize),
    #[error("table row {row} has width {got}, expected {expected}")]
    TableOutputWidth {
        row: u64,
        got: usize,
        expected: usize,
    },
    #[error("width must be at least 1")]
    ZeroWidth,
}

/// `(x | y) & (!x | !y)`.
pub fn xor_into(b: &mut CircuitBuilder, x: GateId, y: GateId) -> GateId {
    let either = b.or(&[x, y]);
    let nx = b.not(x);
    let ny = b.not(y);
    let not_both = b.or(&[nx, ny]);
    b.and(&[either, not_both])
}

pub fn xor2() -> Circuit {
    let mut b = CircuitBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let o = xor_into(&mut b, x, y);
    b.finish(vec![o])
}

/// Indicator `int(bits) == k`: the conjunction of literals matching the
/// binary expansion of `k` (MSB first).
pub fn delta_into(b: &mut CircuitBuilder, bits: &[GateId], k: u64) -> GateId {
    let w = bits.len();
    let lits: Vec<GateId> = bits
        .iter()
        .enumerate()
        .map(|(j, &x)| b.literal(x, (k >> (w - 1 - j)) & 1 == 1))
        .collect();
    b.and(&lits)
}

pub fn delta_k(width: usize, k: u64) -> Result<Circuit, GadgetError> {
    if width == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    if width < 64 && k >> width != 0 {
        return Err(GadgetError::DeltaRange { b: width, k });
    }
    let mut b = CircuitBuilder::new(width);
    let ins = b.inputs();
    let o = delta_into(&mut b, &ins, k);
    Ok(b.finish(vec![o]))
}

/// OR of ANDs of literals; variable `x_i` is `vars[i - 1]`.
pub fn dnf_into(b: &mut CircuitBuilder, vars: &[GateId], f: &Dnf) -> GateId {
    let terms: Vec<GateId> = f
        .conjuncts()
        .iter()
        .map(|conj| {
            let lits: Vec<GateId> = conj
                .iter()
                .map(|l| b.literal(vars[l.var - 1], l.positive))
                .collect();
            b.and(&lits)
        })
        .collect();
    b.or(&terms)
}

pub fn dnf_circuit(f: &Dnf) -> Circuit {
    let mut b = CircuitBuilder::new(f.num_vars());
    let ins = b.inputs();
    let o = dnf_into(&mut b, &ins, f);
    b.finish(vec![o])
}

/// One CNF per output bit: the AND, over rows where that bit is 0, of the
/// maxterm that is false exactly on the row. `rows[x]` is the integer
/// encoding of `f(x)` (MSB first, `out_width` bits).
pub fn cnf_table_into(
    b: &mut CircuitBuilder,
    vars: &[GateId],
    rows: &[u64],
    out_width: usize,
) -> Vec<GateId> {
    let w = vars.len();
    (0..out_width)
        .map(|bit| {
            let shift = out_width - 1 - bit;
            let clauses: Vec<GateId> = rows
                .iter()
                .enumerate()
                .filter(|(_, &y)| (y >> shift) & 1 == 0)
                .map(|(x, _)| {
                    let lits: Vec<GateId> = vars
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| b.literal(v, (x >> (w - 1 - j)) & 1 == 0))
                        .collect();
                    b.or(&lits)
                })
                .collect();
            b.and(&clauses)
        })
        .collect()
}

/// Circuit for an arbitrary `{0,1}^in_width -> {0,1}^out_width` function,
/// one CNF per output bit.
pub fn truth_table_circuit<F>(
    in_width: usize,
    out_width: usize,
    f: F,
) -> Result<Circuit, GadgetError>
where
    F: Fn(&BitString) -> BitString,
{
    if in_width == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    if in_width > MAX_TABLE_WIDTH {
        return Err(GadgetError::TableTooWide(in_width));
    }
    let rows = (0..1u64 << in_width)
        .map(|v| {
            let y = f(&BitString::from_int(v, in_width).expect("row fits"));
            if y.width() != out_width {
                return Err(GadgetError::TableOutputWidth {
                    row: v,
                    got: y.width(),
                    expected: out_width,
                });
            }
            Ok(y.to_int())
        })
        .collect::<Result<Vec<u64>, _>>()?;
    let mut b = CircuitBuilder::new(in_width);
    let ins = b.inputs();
    let outs = cnf_table_into(&mut b, &ins, &rows, out_width);
    Ok(b.finish(outs))
}

/// Carry-lookahead adder: inputs `a ++ b` (each `n` bits, MSB first),
/// outputs the `n + 1`-bit sum.
///
/// With generate `g_l = a_l & b_l` and propagate `p_t = a_l | b_l`, the
/// carry into position `j` is `OR_{l > j} (g_l & AND_{j < t < l} p_t)`
/// (positions count from the MSB, so `l > j` is less significant).
pub fn addition_circuit(n: usize) -> Result<Circuit, GadgetError> {
    if n == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    let mut b = CircuitBuilder::new(2 * n);
    let a: Vec<GateId> = b.input_range(0..n);
    let c: Vec<GateId> = b.input_range(n..2 * n);
    let g: Vec<GateId> = (0..n).map(|j| b.and(&[a[j], c[j]])).collect();
    let p: Vec<GateId> = (0..n).map(|j| b.or(&[a[j], c[j]])).collect();

    // carry produced by positions strictly below (less significant than) `above`
    let carry = |b: &mut CircuitBuilder, above: Option<usize>| -> Option<GateId> {
        let first = above.map_or(0, |j| j + 1);
        let terms: Vec<GateId> = (first..n)
            .map(|l| {
                let mut args = vec![g[l]];
                args.extend_from_slice(&p[first..l]);
                b.and(&args)
            })
            .collect();
        (!terms.is_empty()).then(|| b.or(&terms))
    };

    let mut outs = Vec::with_capacity(n + 1);
    outs.push(carry(&mut b, None).expect("n >= 1"));
    for j in 0..n {
        let half = xor_into(&mut b, a[j], c[j]);
        let sum = match carry(&mut b, Some(j)) {
            Some(cin) => xor_into(&mut b, half, cin),
            None => half,
        };
        outs.push(sum);
    }
    Ok(b.finish(outs))
}

/// `max(w1, w2)` on inputs `w1 ++ w2`, each `n` bits MSB first.
///
/// `k = OR_i (w1_i & !w2_i & AND_{j<i} !(w1_j ^ w2_j))` is `w1 > w2`, and
/// output bit `i` is `(w1_i & k) | (w2_i & !k)`.
pub fn max_circuit(n: usize) -> Result<Circuit, GadgetError> {
    if n == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    let mut b = CircuitBuilder::new(2 * n);
    let w1: Vec<GateId> = b.input_range(0..n);
    let w2: Vec<GateId> = b.input_range(n..2 * n);
    let eq: Vec<GateId> = (0..n)
        .map(|j| {
            let x = xor_into(&mut b, w1[j], w2[j]);
            b.not(x)
        })
        .collect();
    let terms: Vec<GateId> = (0..n)
        .map(|i| {
            let nw2 = b.not(w2[i]);
            let mut args = vec![w1[i], nw2];
            args.extend_from_slice(&eq[..i]);
            b.and(&args)
        })
        .collect();
    let k = b.or(&terms);
    let nk = b.not(k);
    let outs = (0..n)
        .map(|i| {
            let hi = b.and(&[w1[i], k]);
            let lo = b.and(&[w2[i], nk]);
            b.or(&[hi, lo])
        })
        .collect();
    Ok(b.finish(outs))
}

pub fn control_circuit(f: &ControlFunction) -> Circuit {
    let mut b = CircuitBuilder::new(f.width());
    let ins = b.inputs();
    let outs = cnf_table_into(&mut b, &ins, f.table(), f.width());
    b.finish(outs)
}

/// 1 iff `s = 0_n`, as `AND_i !s_i`.
pub fn parity_mdp_reward_circuit(n: usize) -> Result<Circuit, GadgetError> {
    if n == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    let mut b = CircuitBuilder::new(n);
    let lits: Vec<GateId> = (0..n).map(|i| b.not(b.input(i))).collect();
    let o = b.and(&lits);
    Ok(b.finish(vec![o]))
}

/// Inputs `s (n) ++ i (w) ++ j (w)` with `w = ceil(log2(n + 1))`; output bit
/// `k` is `s_k ^ delta_k(i) ^ delta_k(j)`.
pub fn parity_mdp_model_circuit(n: usize) -> Result<Circuit, GadgetError> {
    if n == 0 {
        return Err(GadgetError::ZeroWidth);
    }
    let w = crate::bits::bits_for(n as u64);
    let mut b = CircuitBuilder::new(n + 2 * w);
    let s = b.input_range(0..n);
    let i_bits = b.input_range(n..n + w);
    let j_bits = b.input_range(n + w..n + 2 * w);
    let outs = (1..=n)
        .map(|k| {
            let di = delta_into(&mut b, &i_bits, k as u64);
            let dj = delta_into(&mut b, &j_bits, k as u64);
            let t = xor_into(&mut b, s[k - 1], di);
            xor_into(&mut b, t, dj)
        })
        .collect();
    Ok(b.finish(outs))
}

/// `s_1 & ... & s_b & AND_i !(s_{b+i} ^ s_reward_i)`. With `s_reward`
/// fixed, each XNOR is the literal `s_{b+i}` or `!s_{b+i}`.
pub fn majority_mdp_reward_circuit(spec: &MajorityMdpSpec) -> Circuit {
    let (nb, n) = (spec.b(), spec.n());
    let mut b = CircuitBuilder::new(nb + n);
    let mut args = b.input_range(0..nb);
    for (i, bit) in spec.s_reward().iter().enumerate() {
        let lit = b.literal(b.input(nb + i), bit);
        args.push(lit);
    }
    let o = b.and(&args);
    b.finish(vec![o])
}

/// Inputs `s[c] (b) ++ s[r] (n) ++ a`; outputs the next state.
///
/// With enable `e = a & C(s[r])` (`e = a` when unconditioned):
/// control bit `i` is `(f(s[c])_i & !e) | (s_i & e)` and representation
/// bit `k` is `s_{b+k} ^ (delta_k(s[c]) & e)` for `k = 1..n`.
pub fn majority_mdp_model_circuit(spec: &MajorityMdpSpec) -> Circuit {
    let (nb, n) = (spec.b(), spec.n());
    let mut b = CircuitBuilder::new(nb + n + 1);
    let ctrl = b.input_range(0..nb);
    let rep = b.input_range(nb..nb + n);
    let a = b.input(nb + n);

    let enable = match spec.condition() {
        Some(cond) => {
            let c = dnf_into(&mut b, &rep, cond);
            b.and(&[a, c])
        }
        None => a,
    };
    let not_enable = b.not(enable);

    let next_ctrl = cnf_table_into(&mut b, &ctrl, spec.control().table(), nb);
    let mut outs: Vec<GateId> = (0..nb)
        .map(|i| {
            let advance = b.and(&[next_ctrl[i], not_enable]);
            let hold = b.and(&[ctrl[i], enable]);
            b.or(&[advance, hold])
        })
        .collect();
    for k in 1..=n {
        let d = delta_into(&mut b, &ctrl, k as u64);
        let flip = b.and(&[d, enable]);
        outs.push(xor_into(&mut b, rep[k - 1], flip));
    }
    b.finish(outs)
}
