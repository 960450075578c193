//! Finite-trace LTL: propositional connectives plus X, F, G, U and B.
//!
//! Semantics over a finite trace: X is strong (false at the final
//! position), G quantifies over the remaining suffix, U is strong (the
//! right operand must occur), and B is defined by `φ B ψ ≡ ¬(¬φ U ψ)`.

pub mod checks;
pub mod exhaustive;
pub mod fuzz;

use std::fmt;

use thiserror::Error;

use crate::monitor::AbstractInput;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Prop(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Future(Box<Formula>),
    Globally(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Before(Box<Formula>, Box<Formula>),
}

pub fn prop(name: &str) -> Formula {
    Formula::Prop(name.to_string())
}
pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}
pub fn and(a: Formula, b: Formula) -> Formula {
    Formula::And(Box::new(a), Box::new(b))
}
pub fn or(a: Formula, b: Formula) -> Formula {
    Formula::Or(Box::new(a), Box::new(b))
}
pub fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Implies(Box::new(a), Box::new(b))
}
pub fn next(f: Formula) -> Formula {
    Formula::Next(Box::new(f))
}
pub fn future(f: Formula) -> Formula {
    Formula::Future(Box::new(f))
}
pub fn globally(f: Formula) -> Formula {
    Formula::Globally(Box::new(f))
}
pub fn until(a: Formula, b: Formula) -> Formula {
    Formula::Until(Box::new(a), Box::new(b))
}
pub fn before(a: Formula, b: Formula) -> Formula {
    Formula::Before(Box::new(a), Box::new(b))
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        match self {
            Prop(p) => write!(f, "{p}"),
            Not(a) => write!(f, "!({a})"),
            And(a, b) => write!(f, "({a} & {b})"),
            Or(a, b) => write!(f, "({a} | {b})"),
            Implies(a, b) => write!(f, "({a} -> {b})"),
            Next(a) => write!(f, "X({a})"),
            Future(a) => write!(f, "F({a})"),
            Globally(a) => write!(f, "G({a})"),
            Until(a, b) => write!(f, "({a} U {b})"),
            Before(a, b) => write!(f, "({a} B {b})"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtlError {
    #[error("unknown proposition `{0}`")]
    UnknownProp(String),
    #[error("position {pos} out of range for trace of length {len}")]
    PosOutOfRange { pos: usize, len: usize },
}

/// A finite trace of named boolean assignments, bit-packed per cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropTrace {
    cols: Vec<String>,
    rows: Vec<u64>,
}

impl PropTrace {
    pub fn new(cols: Vec<String>) -> Self {
        assert!(cols.len() <= 64, "at most 64 propositions");
        PropTrace {
            cols,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.cols
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.cols.iter().position(|c| c == name)
    }

    pub fn push_mask(&mut self, mask: u64) {
        self.rows.push(mask);
    }

    pub fn push(&mut self, values: &[bool]) {
        assert_eq!(values.len(), self.cols.len());
        let mut mask = 0u64;
        for (i, v) in values.iter().enumerate() {
            if *v {
                mask |= 1 << i;
            }
        }
        self.rows.push(mask);
    }

    pub fn get(&self, pos: usize, col: usize) -> bool {
        self.rows[pos] & (1 << col) != 0
    }

    pub fn get_named(&self, pos: usize, name: &str) -> Option<bool> {
        self.col(name).map(|c| self.get(pos, c))
    }

    /// Column vector for one proposition.
    pub fn column_bits(&self, name: &str) -> Result<Vec<bool>, LtlError> {
        let c = self
            .col(name)
            .ok_or_else(|| LtlError::UnknownProp(name.to_string()))?;
        Ok((0..self.len()).map(|i| self.get(i, c)).collect())
    }
}

/// Standard column set recorded by the simulator for every cycle.
pub const TRACE_PROPS: [&str; 20] = [
    "pc_in_er",
    "pc_eq_ermin",
    "pc_eq_ermax",
    "pc_in_cr",
    "pc_eq_crmin",
    "irq",
    "reset",
    "dma_en",
    "w_er",
    "dma_er",
    "w_or",
    "dma_or",
    "w_meta",
    "dma_meta",
    "bounds_valid",
    "er_cr_disjoint",
    "mm_er",
    "mm_or",
    "mm_meta",
    "exec",
];

pub fn standard_trace() -> PropTrace {
    PropTrace::new(TRACE_PROPS.iter().map(|s| s.to_string()).collect())
}

/// Packs one cycle of abstract input plus the composed EXEC bit in
/// `TRACE_PROPS` order.
pub fn standard_row(ai: &AbstractInput, exec: bool) -> u64 {
    let bits = [
        ai.pc_in_er,
        ai.pc_eq_ermin,
        ai.pc_eq_ermax,
        ai.pc_in_cr,
        ai.pc_eq_crmin,
        ai.irq,
        ai.reset,
        ai.dma_en,
        ai.w_er,
        ai.dma_er,
        ai.w_or,
        ai.dma_or,
        ai.w_meta,
        ai.dma_meta,
        ai.bounds_valid,
        ai.er_cr_disjoint,
        ai.w_er || ai.dma_er,
        ai.w_or || ai.dma_or,
        ai.w_meta || ai.dma_meta,
        exec,
    ];
    let mut mask = 0u64;
    for (i, b) in bits.iter().enumerate() {
        if *b {
            mask |= 1 << i;
        }
    }
    mask
}

/// Evaluates `f` at every position of the trace in one backward pass.
pub fn eval_all(f: &Formula, tr: &PropTrace) -> Result<Vec<bool>, LtlError> {
    let n = tr.len();
    use Formula::*;
    Ok(match f {
        Prop(name) => tr.column_bits(name)?,
        Not(a) => eval_all(a, tr)?.into_iter().map(|v| !v).collect(),
        And(a, b) => zip(eval_all(a, tr)?, eval_all(b, tr)?, |x, y| x && y),
        Or(a, b) => zip(eval_all(a, tr)?, eval_all(b, tr)?, |x, y| x || y),
        Implies(a, b) => zip(eval_all(a, tr)?, eval_all(b, tr)?, |x, y| !x || y),
        Next(a) => {
            let va = eval_all(a, tr)?;
            (0..n).map(|i| i + 1 < n && va[i + 1]).collect()
        }
        Future(a) => {
            let va = eval_all(a, tr)?;
            let mut out = vec![false; n];
            let mut acc = false;
            for i in (0..n).rev() {
                acc |= va[i];
                out[i] = acc;
            }
            out
        }
        Globally(a) => {
            let va = eval_all(a, tr)?;
            let mut out = vec![false; n];
            let mut acc = true;
            for i in (0..n).rev() {
                acc &= va[i];
                out[i] = acc;
            }
            out
        }
        Until(a, b) => {
            let va = eval_all(a, tr)?;
            let vb = eval_all(b, tr)?;
            let mut out = vec![false; n];
            for i in (0..n).rev() {
                out[i] = vb[i] || (va[i] && i + 1 < n && out[i + 1]);
            }
            out
        }
        Before(a, b) => {
            // φ B ψ ≡ ¬(¬φ U ψ)
            let equiv = not(until(not(a.as_ref().clone()), b.as_ref().clone()));
            eval_all(&equiv, tr)?
        }
    })
}

fn zip(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

/// Evaluates `f` at one position.
pub fn eval(f: &Formula, tr: &PropTrace, pos: usize) -> Result<bool, LtlError> {
    if pos >= tr.len() {
        return Err(LtlError::PosOutOfRange { pos, len: tr.len() });
    }
    Ok(eval_all(f, tr)?[pos])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pq_trace(ps: &[bool], qs: &[bool]) -> PropTrace {
        let mut tr = PropTrace::new(vec!["p".into(), "q".into()]);
        for i in 0..ps.len() {
            tr.push(&[ps[i], qs[i]]);
        }
        tr
    }

    #[test]
    fn globally_true_when_prop_everywhere() {
        let tr = pq_trace(&[true, true, true], &[false; 3]);
        assert!(eval(&globally(prop("p")), &tr, 0).unwrap());
        let tr = pq_trace(&[true, false, true], &[false; 3]);
        assert!(!eval(&globally(prop("p")), &tr, 0).unwrap());
        assert!(eval(&globally(prop("p")), &tr, 2).unwrap());
    }

    #[test]
    fn strong_next_false_at_final_position() {
        let tr = pq_trace(&[true, true], &[false; 2]);
        assert!(eval(&next(prop("p")), &tr, 0).unwrap());
        assert!(!eval(&next(prop("p")), &tr, 1).unwrap());
    }

    #[test]
    fn until_example_from_semantics() {
        // p = (1,1,0), q = (0,0,1): p U q holds at 0
        let tr = pq_trace(&[true, true, false], &[false, false, true]);
        assert!(eval(&until(prop("p"), prop("q")), &tr, 0).unwrap());
        // strong U: q never occurs -> false even with p everywhere
        let tr = pq_trace(&[true, true, true], &[false; 3]);
        assert!(!eval(&until(prop("p"), prop("q")), &tr, 0).unwrap());
    }

    #[test]
    fn unknown_prop_is_an_error() {
        let tr = pq_trace(&[true], &[true]);
        assert_eq!(
            eval(&prop("zork"), &tr, 0),
            Err(LtlError::UnknownProp("zork".into()))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

        // φ B ψ ≡ ¬(¬φ U ψ), pointwise on random length-12 traces
        #[test]
        fn before_until_equivalence(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 12)) {
            let ps: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let qs: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let tr = pq_trace(&ps, &qs);
            let b = before(prop("p"), prop("q"));
            let u = not(until(not(prop("p")), prop("q")));
            prop_assert_eq!(eval_all(&b, &tr).unwrap(), eval_all(&u, &tr).unwrap());
        }

        // G p  ≡  ¬F¬p
        #[test]
        fn globally_future_duality(bits in proptest::collection::vec(any::<bool>(), 1..16)) {
            let qs = vec![false; bits.len()];
            let tr = pq_trace(&bits, &qs);
            let g = globally(prop("p"));
            let dual = not(future(not(prop("p"))));
            prop_assert_eq!(eval_all(&g, &tr).unwrap(), eval_all(&dual, &tr).unwrap());
        }
    }
}
