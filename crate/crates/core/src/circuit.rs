//! Unbounded fan-in Boolean circuits.
//!
//! A [`Circuit`] is a gate list in topological order: every argument of gate
//! `k` names a gate with a smaller id. Inputs and constants are vertices too,
//! so [`Circuit::size`] counts them, and [`Circuit::depth`] counts edges on
//! the longest path (inputs sit at depth 0).
//!
//! Circuits are normally produced through [`CircuitBuilder`], which keeps the
//! ordering invariant by construction and shares structurally identical
//! gates. [`Circuit::from_parts`] and [`decode`] accept arbitrary gate lists;
//! those go through [`Circuit::validate`] before evaluation.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateId(pub usize);

impl fmt::Display for GateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    /// Reads input position `p` (0-based).
    Input(usize),
    Const(bool),
    And,
    Or,
    Not,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Input(_) => "INPUT",
            GateKind::Const(_) => "CONST",
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Not => "NOT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub args: Vec<GateId>,
}

/// A structural defect found by [`Circuit::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("gate {gate} references {arg}, which is not an earlier gate")]
    ForwardReference { gate: usize, arg: usize },
    #[error("gate {gate} ({kind}) has {got} args")]
    Arity {
        gate: usize,
        kind: &'static str,
        got: usize,
    },
    #[error("gate {gate} reads input position {pos}, but the circuit has {inputs} inputs")]
    InputOutOfRange { gate: usize, pos: usize, inputs: usize },
    #[error("input position {pos} is read by gates {first} and {second}")]
    DuplicateInput {
        pos: usize,
        first: usize,
        second: usize,
    },
    #[error("output {index} names gate {id}, which does not exist")]
    OutputOutOfRange { index: usize, id: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("expected {expected} input bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("malformed circuit: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Malformed(Vec<Violation>),
    #[error("composition arity mismatch: inner circuits provide {provided} outputs, outer expects {expected}")]
    Arity { provided: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    input_count: usize,
    gates: Vec<Gate>,
    outputs: Vec<GateId>,
}

impl Circuit {
    /// Assembles a circuit without checking it. Use [`Circuit::validate`]
    /// before trusting the result.
    pub fn from_parts(input_count: usize, gates: Vec<Gate>, outputs: Vec<GateId>) -> Self {
        Circuit {
            input_count,
            gates,
            outputs,
        }
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn outputs(&self) -> &[GateId] {
        &self.outputs
    }

    /// Number of vertices, inputs and constants included.
    pub fn size(&self) -> usize {
        self.gates.len()
    }

    /// Edges on the longest directed path. Assumes a valid circuit.
    pub fn depth(&self) -> usize {
        self.levels().into_iter().max().unwrap_or(0)
    }

    /// Per-gate depth: 0 for inputs and constants, 1 + max over args otherwise.
    pub fn levels(&self) -> Vec<usize> {
        let mut level = vec![0usize; self.gates.len()];
        for (k, gate) in self.gates.iter().enumerate() {
            if !gate.args.is_empty() {
                level[k] = 1 + gate
                    .args
                    .iter()
                    .map(|a| level.get(a.0).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
            }
        }
        level
    }

    /// Collects every structural violation; `Ok` iff there are none.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let mut readers: Vec<Option<usize>> = vec![None; self.input_count];
        for (k, gate) in self.gates.iter().enumerate() {
            let arity_ok = match gate.kind {
                GateKind::Input(_) | GateKind::Const(_) => gate.args.is_empty(),
                GateKind::Not => gate.args.len() == 1,
                GateKind::And | GateKind::Or => !gate.args.is_empty(),
            };
            if !arity_ok {
                violations.push(Violation::Arity {
                    gate: k,
                    kind: gate.kind.name(),
                    got: gate.args.len(),
                });
            }
            for arg in &gate.args {
                if arg.0 >= k {
                    violations.push(Violation::ForwardReference { gate: k, arg: arg.0 });
                }
            }
            if let GateKind::Input(pos) = gate.kind {
                match readers.get_mut(pos) {
                    None => violations.push(Violation::InputOutOfRange {
                        gate: k,
                        pos,
                        inputs: self.input_count,
                    }),
                    Some(Some(first)) => violations.push(Violation::DuplicateInput {
                        pos,
                        first: *first,
                        second: k,
                    }),
                    Some(slot) => *slot = Some(k),
                }
            }
        }
        for (index, id) in self.outputs.iter().enumerate() {
            if id.0 >= self.gates.len() {
                violations.push(Violation::OutputOutOfRange { index, id: id.0 });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn evaluate(&self, x: &BitString) -> Result<BitString, CircuitError> {
        let mut eval = Evaluator::new(self)?;
        eval.eval(x.bits()).map(BitString::new)
    }

    /// Copy with gate `index` relabelled to `kind` (arguments unchanged).
    pub fn with_gate_kind(&self, index: usize, kind: GateKind) -> Circuit {
        let mut out = self.clone();
        out.gates[index].kind = kind;
        out
    }
}

/// Reusable evaluation scratch for one validated circuit.
///
/// Each worker thread should own its own evaluator; the circuit itself is
/// only borrowed immutably.
pub struct Evaluator<'c> {
    circuit: &'c Circuit,
    values: Vec<bool>,
    words: Vec<u64>,
}

impl<'c> Evaluator<'c> {
    pub fn new(circuit: &'c Circuit) -> Result<Self, CircuitError> {
        circuit.validate().map_err(CircuitError::Malformed)?;
        Ok(Evaluator {
            circuit,
            values: vec![false; circuit.gates.len()],
            words: Vec::new(),
        })
    }

    pub fn circuit(&self) -> &Circuit {
        self.circuit
    }

    pub fn eval(&mut self, x: &[bool]) -> Result<Vec<bool>, CircuitError> {
        if x.len() != self.circuit.input_count {
            return Err(CircuitError::WidthMismatch {
                expected: self.circuit.input_count,
                got: x.len(),
            });
        }
        for (k, gate) in self.circuit.gates.iter().enumerate() {
            let v = match gate.kind {
                GateKind::Input(p) => x[p],
                GateKind::Const(b) => b,
                GateKind::And => gate.args.iter().all(|a| self.values[a.0]),
                GateKind::Or => gate.args.iter().any(|a| self.values[a.0]),
                GateKind::Not => !self.values[gate.args[0].0],
            };
            self.values[k] = v;
        }
        Ok(self.circuit.outputs.iter().map(|o| self.values[o.0]).collect())
    }

    /// Evaluates on the integer encoding of the input (MSB first, as in
    /// [`BitString::to_int`]) and returns the integer encoding of the output.
    /// Requires at most 64 inputs and 64 outputs.
    pub fn eval_int(&mut self, x: u64) -> u64 {
        let n = self.circuit.input_count;
        for (k, gate) in self.circuit.gates.iter().enumerate() {
            let v = match gate.kind {
                GateKind::Input(p) => (x >> (n - 1 - p)) & 1 == 1,
                GateKind::Const(b) => b,
                GateKind::And => gate.args.iter().all(|a| self.values[a.0]),
                GateKind::Or => gate.args.iter().any(|a| self.values[a.0]),
                GateKind::Not => !self.values[gate.args[0].0],
            };
            self.values[k] = v;
        }
        self.circuit
            .outputs
            .iter()
            .fold(0u64, |acc, o| (acc << 1) | u64::from(self.values[o.0]))
    }

    /// Bit-sliced evaluation of 64 input vectors at once: `inputs[p]` holds
    /// input position `p` across the 64 lanes. Returns one word per output.
    pub fn eval_packed(&mut self, inputs: &[u64]) -> Result<Vec<u64>, CircuitError> {
        if inputs.len() != self.circuit.input_count {
            return Err(CircuitError::WidthMismatch {
                expected: self.circuit.input_count,
                got: inputs.len(),
            });
        }
        self.words.resize(self.circuit.gates.len(), 0);
        for (k, gate) in self.circuit.gates.iter().enumerate() {
            let w = match gate.kind {
                GateKind::Input(p) => inputs[p],
                GateKind::Const(b) => {
                    if b {
                        u64::MAX
                    } else {
                        0
                    }
                }
                GateKind::And => gate.args.iter().fold(u64::MAX, |acc, a| acc & self.words[a.0]),
                GateKind::Or => gate.args.iter().fold(0, |acc, a| acc | self.words[a.0]),
                GateKind::Not => !self.words[gate.args[0].0],
            };
            self.words[k] = w;
        }
        Ok(self.circuit.outputs.iter().map(|o| self.words[o.0]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum StrashKey {
    Const(bool),
    And(Vec<GateId>),
    Or(Vec<GateId>),
    Not(GateId),
}

/// Incremental circuit construction with structural hashing.
///
/// All `input_count` input vertices are created up front as gates
/// `0..input_count`. `and`/`or` sort and deduplicate their arguments and
/// collapse to the argument itself when only one remains, so the builder
/// never emits a single-argument AND/OR.
#[derive(Debug, Clone)]
pub struct CircuitBuilder {
    input_count: usize,
    gates: Vec<Gate>,
    strash: HashMap<StrashKey, GateId>,
}

impl CircuitBuilder {
    pub fn new(input_count: usize) -> Self {
        let gates = (0..input_count)
            .map(|p| Gate {
                kind: GateKind::Input(p),
                args: Vec::new(),
            })
            .collect();
        CircuitBuilder {
            input_count,
            gates,
            strash: HashMap::new(),
        }
    }

    pub fn input(&self, pos: usize) -> GateId {
        assert!(pos < self.input_count, "input {pos} out of range");
        GateId(pos)
    }

    pub fn inputs(&self) -> Vec<GateId> {
        (0..self.input_count).map(GateId).collect()
    }

    pub fn input_range(&self, range: std::ops::Range<usize>) -> Vec<GateId> {
        range.map(|p| self.input(p)).collect()
    }

    fn push(&mut self, key: StrashKey, gate: Gate) -> GateId {
        if let Some(&id) = self.strash.get(&key) {
            return id;
        }
        let id = GateId(self.gates.len());
        self.gates.push(gate);
        self.strash.insert(key, id);
        id
    }

    pub fn constant(&mut self, bit: bool) -> GateId {
        self.push(
            StrashKey::Const(bit),
            Gate {
                kind: GateKind::Const(bit),
                args: Vec::new(),
            },
        )
    }

    fn nary(&mut self, kind: GateKind, args: &[GateId]) -> GateId {
        let mut args = args.to_vec();
        args.sort_unstable();
        args.dedup();
        match args.len() {
            0 => self.constant(kind == GateKind::And),
            1 => args[0],
            _ => {
                let key = if kind == GateKind::And {
                    StrashKey::And(args.clone())
                } else {
                    StrashKey::Or(args.clone())
                };
                self.push(key, Gate { kind, args })
            }
        }
    }

    /// Conjunction; the empty conjunction is constant 1.
    pub fn and(&mut self, args: &[GateId]) -> GateId {
        self.nary(GateKind::And, args)
    }

    /// Disjunction; the empty disjunction is constant 0.
    pub fn or(&mut self, args: &[GateId]) -> GateId {
        self.nary(GateKind::Or, args)
    }

    pub fn not(&mut self, arg: GateId) -> GateId {
        self.push(
            StrashKey::Not(arg),
            Gate {
                kind: GateKind::Not,
                args: vec![arg],
            },
        )
    }

    /// `arg` when `positive`, otherwise `NOT arg`.
    pub fn literal(&mut self, arg: GateId, positive: bool) -> GateId {
        if positive {
            arg
        } else {
            self.not(arg)
        }
    }

    /// Copies a validated sub-circuit into this builder, wiring its input
    /// position `p` to `inputs[p]`. Returns the ids of its outputs.
    pub fn instantiate(&mut self, sub: &Circuit, inputs: &[GateId]) -> Vec<GateId> {
        assert_eq!(
            inputs.len(),
            sub.input_count,
            "instantiate: expected {} inputs",
            sub.input_count
        );
        let mut map: Vec<GateId> = Vec::with_capacity(sub.gates.len());
        for gate in &sub.gates {
            let args: Vec<GateId> = gate.args.iter().map(|a| map[a.0]).collect();
            let id = match gate.kind {
                GateKind::Input(p) => inputs[p],
                GateKind::Const(b) => self.constant(b),
                GateKind::And => self.and(&args),
                GateKind::Or => self.or(&args),
                GateKind::Not => self.not(args[0]),
            };
            map.push(id);
        }
        sub.outputs.iter().map(|o| map[o.0]).collect()
    }

    pub fn finish(self, outputs: Vec<GateId>) -> Circuit {
        Circuit {
            input_count: self.input_count,
            gates: self.gates,
            outputs,
        }
    }
}

/// `outer(inner_1(x_1), ..., inner_k(x_k))`, with the composed inputs laid
/// out as the concatenation `x_1 ++ ... ++ x_k`.
pub fn compose(outer: &Circuit, inners: &[Circuit]) -> Result<Circuit, CircuitError> {
    outer.validate().map_err(CircuitError::Malformed)?;
    for inner in inners {
        inner.validate().map_err(CircuitError::Malformed)?;
    }
    let provided: usize = inners.iter().map(Circuit::output_count).sum();
    if provided != outer.input_count {
        return Err(CircuitError::Arity {
            provided,
            expected: outer.input_count,
        });
    }
    let total: usize = inners.iter().map(Circuit::input_count).sum();
    let mut b = CircuitBuilder::new(total);
    let mut offset = 0;
    let mut mid = Vec::with_capacity(provided);
    for inner in inners {
        let ins = b.input_range(offset..offset + inner.input_count);
        mid.extend(b.instantiate(inner, &ins));
        offset += inner.input_count;
    }
    let outs = b.instantiate(outer, &mid);
    Ok(b.finish(outs))
}

// ---------------------------------------------------------------------------
// JSON interchange

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
enum KindTag {
    Input,
    Const,
    And,
    Or,
    Not,
}

#[derive(Debug, Serialize, Deserialize)]
struct GateRecord {
    id: usize,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bit: Option<u8>,
    #[serde(default)]
    args: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
    inputs: usize,
    gates: Vec<GateRecord>,
    outputs: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("circuit JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gate record {index}: field `{field}`: {message}")]
    Field {
        index: usize,
        field: &'static str,
        message: String,
    },
}

fn to_file(c: &Circuit, meta: Option<serde_json::Value>) -> CircuitFile {
    let gates = c
        .gates
        .iter()
        .enumerate()
        .map(|(id, g)| {
            let (kind, pos, bit) = match g.kind {
                GateKind::Input(p) => (KindTag::Input, Some(p), None),
                GateKind::Const(b) => (KindTag::Const, None, Some(u8::from(b))),
                GateKind::And => (KindTag::And, None, None),
                GateKind::Or => (KindTag::Or, None, None),
                GateKind::Not => (KindTag::Not, None, None),
            };
            GateRecord {
                id,
                kind,
                pos,
                bit,
                args: g.args.iter().map(|a| a.0).collect(),
            }
        })
        .collect();
    CircuitFile {
        meta,
        inputs: c.input_count,
        gates,
        outputs: c.outputs.iter().map(|o| o.0).collect(),
    }
}

/// Serializes to the circuit JSON interchange format.
pub fn encode(c: &Circuit) -> String {
    serde_json::to_string_pretty(&to_file(c, None)).expect("circuit serialization is infallible")
}

/// Like [`encode`], with an extra top-level `meta` object that [`decode`] ignores.
pub fn encode_with_meta(c: &Circuit, meta: serde_json::Value) -> String {
    serde_json::to_string_pretty(&to_file(c, Some(meta)))
        .expect("circuit serialization is infallible")
}

/// Parses the circuit JSON format. Structural checks beyond the record
/// fields (ordering, arity) are left to [`Circuit::validate`].
pub fn decode(text: &str) -> Result<Circuit, DecodeError> {
    let file: CircuitFile = serde_json::from_str(text)?;
    let mut gates = Vec::with_capacity(file.gates.len());
    for (index, rec) in file.gates.into_iter().enumerate() {
        if rec.id != index {
            return Err(DecodeError::Field {
                index,
                field: "id",
                message: format!("expected consecutive id {index}, found {}", rec.id),
            });
        }
        let kind = match rec.kind {
            KindTag::Input => GateKind::Input(rec.pos.ok_or(DecodeError::Field {
                index,
                field: "pos",
                message: "INPUT gate requires `pos`".into(),
            })?),
            KindTag::Const => match rec.bit {
                Some(0) => GateKind::Const(false),
                Some(1) => GateKind::Const(true),
                Some(other) => {
                    return Err(DecodeError::Field {
                        index,
                        field: "bit",
                        message: format!("expected 0 or 1, found {other}"),
                    })
                }
                None => {
                    return Err(DecodeError::Field {
                        index,
                        field: "bit",
                        message: "CONST gate requires `bit`".into(),
                    })
                }
            },
            KindTag::And => GateKind::And,
            KindTag::Or => GateKind::Or,
            KindTag::Not => GateKind::Not,
        };
        gates.push(Gate {
            kind,
            args: rec.args.into_iter().map(GateId).collect(),
        });
    }
    Ok(Circuit {
        input_count: file.inputs,
        gates,
        outputs: file.outputs.into_iter().map(GateId).collect(),
    })
}
