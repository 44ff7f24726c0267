//! Disjunctive normal form formulas over `x1..xn`.
//!
//! Text form: `(x1 & !x2) | (x3 & x4)`. Variables are 1-based, `!` negates,
//! `&` conjoins, `|` disjoins. Parentheses around a conjunct are optional and
//! the empty disjunction is written `false`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    /// 1-based variable index.
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal {
            var,
            positive: true,
        }
    }

    pub fn neg(var: usize) -> Self {
        Literal {
            var,
            positive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DnfError {
    #[error("conjunct {0} is empty")]
    EmptyConjunct(usize),
    #[error("variable x{var} in conjunct {conjunct} is outside 1..={num_vars}")]
    VarOutOfRange {
        conjunct: usize,
        var: usize,
        num_vars: usize,
    },
    #[error("variable x{var} repeats in conjunct {conjunct}")]
    RepeatedVar { conjunct: usize, var: usize },
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("expected {expected} input bits, got {got}")]
    WidthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dnf {
    num_vars: usize,
    conjuncts: Vec<Vec<Literal>>,
}

impl Dnf {
    pub fn new(num_vars: usize, conjuncts: Vec<Vec<Literal>>) -> Result<Self, DnfError> {
        for (ci, conj) in conjuncts.iter().enumerate() {
            if conj.is_empty() {
                return Err(DnfError::EmptyConjunct(ci));
            }
            let mut seen = BTreeSet::new();
            for lit in conj {
                if lit.var == 0 || lit.var > num_vars {
                    return Err(DnfError::VarOutOfRange {
                        conjunct: ci,
                        var: lit.var,
                        num_vars,
                    });
                }
                if !seen.insert(lit.var) {
                    return Err(DnfError::RepeatedVar {
                        conjunct: ci,
                        var: lit.var,
                    });
                }
            }
        }
        Ok(Dnf {
            num_vars,
            conjuncts,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn conjuncts(&self) -> &[Vec<Literal>] {
        &self.conjuncts
    }

    /// Variables the formula mentions, ascending.
    pub fn variables(&self) -> BTreeSet<usize> {
        self.conjuncts.iter().flatten().map(|l| l.var).collect()
    }

    pub fn total_literals(&self) -> usize {
        self.conjuncts.iter().map(Vec::len).sum()
    }

    pub fn max_width(&self) -> usize {
        self.conjuncts.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &BitString) -> Result<bool, DnfError> {
        if x.width() != self.num_vars {
            return Err(DnfError::WidthMismatch {
                expected: self.num_vars,
                got: x.width(),
            });
        }
        Ok(self.eval_slice(x.bits()))
    }

    /// Truth value on a slice of exactly `num_vars` bits (unchecked width).
    pub fn eval_slice(&self, x: &[bool]) -> bool {
        self.conjuncts
            .iter()
            .any(|c| c.iter().all(|l| x[l.var - 1] == l.positive))
    }

    /// Mask/value form for fast evaluation on the integer encoding of an
    /// input (`x1` is the most significant of `num_vars` bits).
    pub fn compile(&self) -> CompiledDnf {
        let terms = self
            .conjuncts
            .iter()
            .map(|c| {
                c.iter().fold((0u64, 0u64), |(mask, val), l| {
                    let bit = 1u64 << (self.num_vars - l.var);
                    (mask | bit, if l.positive { val | bit } else { val })
                })
            })
            .collect();
        CompiledDnf { terms }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledDnf {
    terms: Vec<(u64, u64)>,
}

impl CompiledDnf {
    pub fn eval(&self, x: u64) -> bool {
        self.terms.iter().any(|&(mask, val)| x & mask == val)
    }
}

impl fmt::Display for Dnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjuncts.is_empty() {
            return f.write_str("false");
        }
        for (ci, conj) in self.conjuncts.iter().enumerate() {
            if ci > 0 {
                f.write_str(" | ")?;
            }
            f.write_str("(")?;
            for (li, lit) in conj.iter().enumerate() {
                if li > 0 {
                    f.write_str(" & ")?;
                }
                if !lit.positive {
                    f.write_str("!")?;
                }
                write!(f, "x{}", lit.var)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, DnfError> {
        Err(DnfError::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn literal(&mut self) -> Result<Literal, DnfError> {
        let positive = !self.eat(b'!');
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'x') {
            return self.err("expected variable `x<index>`");
        }
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match digits.parse::<usize>() {
            Ok(var) => Ok(Literal { var, positive }),
            Err(_) => {
                self.pos = start;
                self.err("expected variable index after `x`")
            }
        }
    }

    fn conjunct(&mut self) -> Result<Vec<Literal>, DnfError> {
        let paren = self.eat(b'(');
        let mut lits = vec![self.literal()?];
        while self.eat(b'&') {
            lits.push(self.literal()?);
        }
        if paren && !self.eat(b')') {
            return self.err("expected `)`");
        }
        Ok(lits)
    }
}

/// Parses the text form. Variables above `num_vars` are rejected.
pub fn parse_dnf(text: &str, num_vars: usize) -> Result<Dnf, DnfError> {
    if text.trim() == "false" {
        return Dnf::new(num_vars, Vec::new());
    }
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let mut conjuncts = vec![p.conjunct()?];
    while p.eat(b'|') {
        conjuncts.push(p.conjunct()?);
    }
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input");
    }
    Dnf::new(num_vars, conjuncts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let f = parse_dnf("(x1 & !x2) | (x3 & x4)", 4).unwrap();
        assert_eq!(
            f.conjuncts(),
            &[
                vec![Literal::pos(1), Literal::neg(2)],
                vec![Literal::pos(3), Literal::pos(4)]
            ]
        );
        assert_eq!(f.to_string(), "(x1 & !x2) | (x3 & x4)");
        let g = parse_dnf("x2|!x1&x3", 3).unwrap();
        assert_eq!(g.to_string(), "(x2) | (!x1 & x3)");
        assert_eq!(parse_dnf("false", 2).unwrap().conjuncts().len(), 0);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_dnf("(x1 & y2)", 2), Err(DnfError::Parse { .. })));
        assert!(matches!(parse_dnf("(x1 & x2", 2), Err(DnfError::Parse { .. })));
        assert!(matches!(parse_dnf("x1 x2", 2), Err(DnfError::Parse { .. })));
        assert!(matches!(parse_dnf("x", 2), Err(DnfError::Parse { offset: 1, .. })));
        assert_eq!(
            parse_dnf("x3", 2),
            Err(DnfError::VarOutOfRange {
                conjunct: 0,
                var: 3,
                num_vars: 2
            })
        );
        assert_eq!(
            parse_dnf("x1 & !x1", 2),
            Err(DnfError::RepeatedVar { conjunct: 0, var: 1 })
        );
    }

    #[test]
    fn eval_examples() {
        let f = parse_dnf("(x1 & !x2) | (x2)", 2).unwrap();
        assert!(f.eval(&"10".parse().unwrap()).unwrap());
        assert!(!f.eval(&"00".parse().unwrap()).unwrap());
        assert!(f.eval(&"01".parse().unwrap()).unwrap());
        assert!(f.eval(&"0".parse().unwrap()).is_err());
    }

    fn arb_dnf() -> impl Strategy<Value = Dnf> {
        (1usize..=10).prop_flat_map(|n| {
            proptest::collection::vec(
                proptest::collection::btree_map(1..=n, any::<bool>(), 1..=n.min(4)),
                0..5,
            )
            .prop_map(move |cs| {
                let conjuncts = cs
                    .into_iter()
                    .map(|m| {
                        m.into_iter()
                            .map(|(var, positive)| Literal { var, positive })
                            .collect()
                    })
                    .collect();
                Dnf::new(n, conjuncts).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(f in arb_dnf()) {
            prop_assert_eq!(parse_dnf(&f.to_string(), f.num_vars()).unwrap(), f);
        }

        #[test]
        fn compiled_matches_direct(f in arb_dnf(), seed in any::<u64>()) {
            let n = f.num_vars();
            let v = seed & ((1u64 << n) - 1);
            let x = BitString::from_int(v, n).unwrap();
            prop_assert_eq!(f.compile().eval(v), f.eval(&x).unwrap());
        }
    }
}
