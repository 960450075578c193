//! Bounded-exhaustive checking of a sub-module transition table against
//! its temporal formulas.
//!
//! Every input sequence up to the requested depth is covered. The search
//! memoizes on (state, previous cycle's values, remaining depth): the
//! formulas are safety-shaped with at most one step of lookahead, so
//! whether a violation exists below a node depends only on that tuple.
//! A brute-force enumerator cross-checks the memoized search in tests.

use std::collections::HashMap;

use thiserror::Error;

use super::{and, eval_all, implies, next, not, or, prop, Formula, PropTrace};
use crate::monitor::{TableError, TransitionTable};

/// The formulas each sub-module must enforce, stated over its own input
/// bits plus its `exec` output.
pub fn submodule_formulas(submodule: &str) -> Option<Vec<(&'static str, Formula)>> {
    let e = || prop("exec");
    let f = match submodule {
        "immutability" => vec![(
            "ephemeral_immutability",
            implies(or(prop("w_er"), prop("dma_er")), not(e())),
        )],
        "atomicity" => vec![
            (
                "ephemeral_atomicity_exit",
                implies(
                    and(prop("pc_in_er"), not(next(prop("pc_in_er")))),
                    or(prop("pc_eq_ermax"), not(next(e()))),
                ),
            ),
            (
                "ephemeral_atomicity_entry",
                implies(
                    and(not(prop("pc_in_er")), next(prop("pc_in_er"))),
                    or(next(prop("pc_eq_ermin")), not(next(e()))),
                ),
            ),
            (
                "ephemeral_atomicity_irq",
                implies(and(prop("pc_in_er"), prop("irq")), not(e())),
            ),
        ],
        "output_protection" => vec![(
            "output_protection",
            implies(
                or(
                    or(and(not(prop("pc_in_er")), prop("w_or")), prop("dma_or")),
                    and(prop("pc_in_er"), prop("dma_en")),
                ),
                not(e()),
            ),
        )],
        "boundaries" => vec![("boundaries", implies(not(prop("bounds_valid")), not(e())))],
        "er_cr_disjoint" => vec![(
            "er_cr_disjoint",
            implies(not(prop("er_cr_disjoint")), not(e())),
        )],
        "metadata" => vec![(
            "metadata_protection",
            implies(or(prop("w_meta"), prop("dma_meta")), not(e())),
        )],
        "reset_gate" => vec![
            ("reset", implies(prop("reset"), not(e()))),
            (
                "exec_rise_gate",
                implies(and(not(e()), next(e())), next(prop("pc_eq_ermin"))),
            ),
        ],
        _ => return None,
    };
    Some(f)
}

#[derive(Debug, Error)]
pub enum ExhaustiveError {
    #[error("no formula catalog for sub-module `{0}`")]
    UnknownSubmodule(String),
    #[error("enumeration of ~{estimate} sequences exceeds the budget of {budget}")]
    TooLarge { estimate: u128, budget: u128 },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("formula references proposition `{0}` missing from the table inputs")]
    MissingProp(String),
}

/// A violating input sequence, replayable against the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// One guard mask per cycle, in the table's input-bit order.
    pub inputs: Vec<u16>,
    /// Name of the first formula it violates.
    pub formula: &'static str,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveReport {
    pub submodule: String,
    pub depth: u32,
    /// Raw number of input sequences the search covers.
    pub sequences: u128,
    pub counterexamples: Vec<Counterexample>,
}

/// Window-evaluation of a body with at most one level of X, with strong
/// semantics when the next cycle is absent.
fn eval_window(f: &Formula, cur: u32, nxt: Option<u32>, cols: &HashMap<String, u32>) -> bool {
    use Formula::*;
    match f {
        Prop(p) => cur & cols[p] != 0,
        Not(a) => !eval_window(a, cur, nxt, cols),
        And(a, b) => eval_window(a, cur, nxt, cols) && eval_window(b, cur, nxt, cols),
        Or(a, b) => eval_window(a, cur, nxt, cols) || eval_window(b, cur, nxt, cols),
        Implies(a, b) => !eval_window(a, cur, nxt, cols) || eval_window(b, cur, nxt, cols),
        Next(a) => match nxt {
            Some(row) => eval_window(a, row, None, cols),
            None => false,
        },
        _ => panic!("sub-module bodies are propositional with one X level"),
    }
}

fn uses_next(f: &Formula) -> bool {
    use Formula::*;
    match f {
        Prop(_) => false,
        Not(a) | Next(a) | Future(a) | Globally(a) => matches!(f, Next(_)) || uses_next(a),
        And(a, b) | Or(a, b) | Implies(a, b) | Until(a, b) | Before(a, b) => {
            uses_next(a) || uses_next(b)
        }
    }
}

/// Replays an input sequence through the table, producing the trace of
/// input bits plus the output bit. Used to confirm counterexamples with
/// the general evaluation engine.
pub fn replay(table: &TransitionTable, inputs: &[u16]) -> Result<PropTrace, ExhaustiveError> {
    let map = table.step_map()?;
    let mut cols: Vec<String> = table.inputs.clone();
    cols.push("exec".to_string());
    let mut tr = PropTrace::new(cols);
    let mut state = table.initial_index();
    for guard in inputs {
        let (nxt, exec) = *map
            .get(&(state, *guard))
            .ok_or_else(|| TableError::Incomplete {
                state: table.states[state].clone(),
                guard: *guard,
            })?;
        let mut mask = *guard as u64;
        if exec != 0 {
            mask |= 1 << table.inputs.len();
        }
        tr.push_mask(mask);
        state = nxt;
    }
    Ok(tr)
}

/// A violating input suffix and the formula it breaks, when one exists
/// below a search node.
type Witness = Option<(Vec<u16>, &'static str)>;

struct Search<'a> {
    alphabet: &'a [u16],
    step: &'a crate::monitor::StepMap,
    cols: &'a HashMap<String, u32>,
    cur_bodies: &'a [(&'static str, Formula)],
    pair_bodies: &'a [(&'static str, Formula)],
    exec_bit: u32,
    memo: HashMap<(usize, Option<u32>, u32), Witness>,
}

impl Search<'_> {
    /// First violating input suffix from `state` with `prev` being the
    /// last produced cycle, `depth` cycles remaining. Memoized.
    fn run(&mut self, state: usize, prev: Option<u32>, depth: u32) -> Witness {
        if depth == 0 {
            return None;
        }
        let key = (state, prev, depth);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let mut found: Option<(Vec<u16>, &'static str)> = None;
        for &guard in self.alphabet {
            let (nxt_state, exec) = self.step[&(state, guard)];
            let mut row = guard as u32;
            if exec != 0 {
                row |= self.exec_bit;
            }
            let mut broken: Option<&'static str> = None;
            for (name, body) in self.cur_bodies {
                if !eval_window(body, row, None, self.cols) {
                    broken = Some(name);
                    break;
                }
            }
            if broken.is_none() {
                if let Some(p) = prev {
                    for (name, body) in self.pair_bodies {
                        if !eval_window(body, p, Some(row), self.cols) {
                            broken = Some(name);
                            break;
                        }
                    }
                }
            }
            if let Some(formula) = broken {
                found = Some((vec![guard], formula));
                break;
            }
            if let Some((suffix, formula)) = self.run(nxt_state, Some(row), depth - 1) {
                let mut inputs = vec![guard];
                inputs.extend(suffix);
                found = Some((inputs, formula));
                break;
            }
        }
        self.memo.insert(key, found.clone());
        found
    }
}

/// Checks every input sequence up to `depth` against the sub-module's
/// formulas. Returns the (expected empty) list of violating sequences,
/// capped at 16 witnesses.
pub fn exhaustive_submodule(
    table: &TransitionTable,
    depth: u32,
    budget: u128,
) -> Result<ExhaustiveReport, ExhaustiveError> {
    let formulas = submodule_formulas(&table.submodule)
        .ok_or_else(|| ExhaustiveError::UnknownSubmodule(table.submodule.clone()))?;

    let mut cols: HashMap<String, u32> = HashMap::new();
    for (i, name) in table.inputs.iter().enumerate() {
        cols.insert(name.clone(), 1 << i);
    }
    let exec_bit = 1u32 << table.inputs.len();
    cols.insert("exec".to_string(), exec_bit);
    for (_, f) in &formulas {
        check_props(f, &cols)?;
    }

    let mut alphabet: Vec<u16> = table.rows.iter().map(|r| r.guard).collect();
    alphabet.sort_unstable();
    alphabet.dedup();

    let sequences = (alphabet.len() as u128)
        .checked_pow(depth)
        .unwrap_or(u128::MAX);
    if sequences > budget {
        return Err(ExhaustiveError::TooLarge {
            estimate: sequences,
            budget,
        });
    }

    let step = table.step_map()?;
    // Sanity: the table must be input-total over its alphabet.
    for s in 0..table.states.len() {
        for &g in &alphabet {
            if !step.contains_key(&(s, g)) {
                return Err(TableError::Incomplete {
                    state: table.states[s].clone(),
                    guard: g,
                }
                .into());
            }
        }
    }

    let (pair_bodies, cur_bodies): (Vec<_>, Vec<_>) =
        formulas.into_iter().partition(|(_, f)| uses_next(f));

    let mut search = Search {
        alphabet: &alphabet,
        step: &step,
        cols: &cols,
        cur_bodies: &cur_bodies,
        pair_bodies: &pair_bodies,
        exec_bit,
        memo: HashMap::new(),
    };

    // Collect up to 16 witnesses by exploring each top-level branch.
    let initial = table.initial_index();
    let mut counterexamples = Vec::new();
    for &guard in &alphabet {
        if counterexamples.len() >= 16 {
            break;
        }
        let (nxt_state, exec) = step[&(initial, guard)];
        let mut row = guard as u32;
        if exec != 0 {
            row |= exec_bit;
        }
        let mut direct: Option<&'static str> = None;
        for (name, body) in &cur_bodies {
            if !eval_window(body, row, None, &cols) {
                direct = Some(name);
                break;
            }
        }
        if let Some(formula) = direct {
            counterexamples.push(Counterexample {
                inputs: vec![guard],
                formula,
            });
            continue;
        }
        if let Some((suffix, formula)) = search.run(nxt_state, Some(row), depth - 1) {
            let mut inputs = vec![guard];
            inputs.extend(suffix);
            counterexamples.push(Counterexample { inputs, formula });
        }
    }

    Ok(ExhaustiveReport {
        submodule: table.submodule.clone(),
        depth,
        sequences,
        counterexamples,
    })
}

fn check_props(f: &Formula, cols: &HashMap<String, u32>) -> Result<(), ExhaustiveError> {
    use Formula::*;
    match f {
        Prop(p) => {
            if !cols.contains_key(p) {
                return Err(ExhaustiveError::MissingProp(p.clone()));
            }
        }
        Not(a) | Next(a) | Future(a) | Globally(a) => check_props(a, cols)?,
        And(a, b) | Or(a, b) | Implies(a, b) | Until(a, b) | Before(a, b) => {
            check_props(a, cols)?;
            check_props(b, cols)?;
        }
    }
    Ok(())
}

/// Confirms a counterexample independently: replays it through the table
/// and evaluates `G(body)` with the general engine at position 0.
pub fn confirm_counterexample(
    table: &TransitionTable,
    cex: &Counterexample,
) -> Result<bool, ExhaustiveError> {
    let tr = replay(table, &cex.inputs)?;
    let formulas = submodule_formulas(&table.submodule)
        .ok_or_else(|| ExhaustiveError::UnknownSubmodule(table.submodule.clone()))?;
    for (name, body) in formulas {
        if name == cex.formula {
            let vals = eval_all(&super::globally(body), &tr).map_err(|e| match e {
                super::LtlError::UnknownProp(p) => ExhaustiveError::MissingProp(p),
                _ => unreachable!(),
            })?;
            return Ok(!vals[0]);
        }
    }
    Ok(false)
}
