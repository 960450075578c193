//! Acceptance suite: one test per success criterion, each printing one
//! pass/fail line (visible with `cargo test -- --nocapture`).
//!
//! Criteria covered here:
//!   1. metadata register file size (exactly 9 bytes excluding the
//!      challenge slot)
//!   2. attestation cycle-cost model (8 KiB ≈ 7.2M cycles ± 1%, exact
//!      affine linearity)
//!   3. exhaustive sub-module verification at depth 8 with zero
//!      counterexamples, and planted mutations caught at depth ≤ 4
//!   4. ten thousand randomized traces with zero property discrepancies
//!   5. the security game: every adversary strategy loses every trial
//!   6. HMAC oracle vectors byte-exact
//!   7. byte-identical traces and reports for a repeated seeded demo run
//!   8. the evaluation engine agrees with a naive-semantics oracle on
//!      every small formula over every small trace

use std::process::Command;

use pox_core::layout::REG_FILE_BYTES;
use pox_core::ltl::exhaustive::{confirm_counterexample, exhaustive_submodule};
use pox_core::ltl::fuzz::monitor_fuzz;
use pox_core::ltl::{self, Formula, PropTrace};
use pox_core::monitor::{export_table, TransitionTable, ALL_SUBMODULES};
use pox_core::scenarios::{run_security_game, Strategy, ADVERSARY_STRATEGIES};
use pox_core::swatt::{hmac_sha256, CostModel};

fn verdict(name: &str, pass: bool) -> bool {
    println!("{}: {name}", if pass { "PASS" } else { "FAIL" });
    pass
}

#[test]
fn criterion_metadata_register_file_size() {
    let pass = REG_FILE_BYTES == 9;
    assert!(verdict(
        "metadata register file is exactly 9 bytes beside the challenge slot",
        pass
    ));
}

#[test]
fn criterion_attestation_cost_model() {
    let c = CostModel::default();
    let full = c.cycles(8192);
    let in_band = (7_128_000..=7_272_000).contains(&full);
    let linear = [64u64, 1024, 4096]
        .iter()
        .all(|&n| c.cycles(2 * n) - c.cycles(n) == c.per_byte * n);
    let pass = in_band && linear;
    assert!(verdict(
        &format!("cycle cost: 8 KiB -> {full} cycles (~900 ms at 8 MHz), affine model exact"),
        pass
    ));
}

#[test]
fn criterion_exhaustive_submodule_verification() {
    let budget = 1_000_000_000_000u128;
    let mut clean = true;
    let mut covered: u128 = 0;
    for id in ALL_SUBMODULES {
        let table = export_table(id);
        let report = exhaustive_submodule(&table, 8, budget).unwrap();
        covered += report.sequences;
        if !report.counterexamples.is_empty() {
            eprintln!(
                "sub-module {} has counterexamples: {:?}",
                id.name(),
                report.counterexamples
            );
            clean = false;
        }
    }
    // A planted ignore-the-trigger mutation in each sub-module must be
    // caught within depth 4, and each witness must replay to a concrete
    // violating trace under the general evaluation engine.
    let mut mutants_caught = true;
    for id in ALL_SUBMODULES {
        let mut table = export_table(id);
        plant_ignore_mutation(&mut table);
        let report = exhaustive_submodule(&table, 4, budget).unwrap();
        if report.counterexamples.is_empty() {
            eprintln!("planted mutation in {} went unnoticed", id.name());
            mutants_caught = false;
            continue;
        }
        for cex in &report.counterexamples {
            if !confirm_counterexample(&table, cex).unwrap() {
                eprintln!("witness for {} does not replay", id.name());
                mutants_caught = false;
            }
        }
    }
    let pass = clean && mutants_caught;
    assert!(verdict(
        &format!("exhaustive sub-module check: 7 sub-modules, depth 8, {covered} sequences, 0 counterexamples; planted mutations caught at depth <= 4"),
        pass
    ));
}

/// Redirects the first trigger-taking transition back to its source state
/// with the output held high: the classic dropped-guard bug.
fn plant_ignore_mutation(table: &mut TransitionTable) {
    let row = table
        .rows
        .iter_mut()
        .find(|r| r.state != "NotExec" && r.next == "NotExec")
        .expect("every sub-module has a violating transition");
    row.next = row.state.clone();
    row.exec = 1;
}

#[test]
fn criterion_monitor_fuzz() {
    let report = monitor_fuzz(10_000, 0);
    let pass = report.clean() && report.proving_trials > 0;
    if !pass {
        eprintln!("{report}");
    }
    assert!(verdict(
        &format!(
            "whole-device fuzz: {} randomized traces ({} proving, {} rejected), {} discrepancies",
            report.trials,
            report.proving_trials,
            report.trials - report.proving_trials,
            report.discrepancies.len()
        ),
        pass
    ));
}

#[test]
fn criterion_security_game() {
    let mut pass = true;
    let honest = run_security_game(Strategy::Honest, 100, 0xACCE55);
    if honest.accepts != 100 || !honest.monitor_conformant() {
        eprintln!("honest: accepts={}/100", honest.accepts);
        pass = false;
    }
    let mut lines = vec![format!("honest accepts {}/100", honest.accepts)];
    for strategy in ADVERSARY_STRATEGIES {
        let trials = if strategy == Strategy::ForgeGuess {
            100_000
        } else {
            100
        };
        let result = run_security_game(strategy, trials, 0xACCE55);
        if result.wins != 0 || !result.monitor_conformant() {
            eprintln!(
                "strategy {}: wins={} conformant={}",
                strategy,
                result.wins,
                result.monitor_conformant()
            );
            pass = false;
        }
        lines.push(format!("{} wins {}/{}", strategy, result.wins, trials));
    }
    assert!(verdict(
        &format!("security game: {}", lines.join(", ")),
        pass
    ));
}

#[test]
fn criterion_hmac_oracle() {
    // Recomputed with an independent implementation before the build.
    let vectors: Vec<(Vec<u8>, Vec<u8>, &str)> = vec![
        (
            vec![0x0b; 20],
            b"Hi There".to_vec(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7",
        ),
        (
            b"Jefe".to_vec(),
            b"what do ya want for nothing?".to_vec(),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843",
        ),
        (
            vec![0xaa; 20],
            vec![0xdd; 50],
            "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe",
        ),
        (
            (1u8..=25).collect(),
            vec![0xcd; 50],
            "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b",
        ),
        (
            vec![0xaa; 131],
            b"Test Using Larger Than Block-Size Key - Hash Key First".to_vec(),
            "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54",
        ),
        (
            vec![0xaa; 131],
            b"This is a test using a larger than block-size key and a larger than block-size data. The key needs to be hashed before being used by the HMAC algorithm.".to_vec(),
            "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2",
        ),
    ];
    let mut pass = true;
    for (i, (key, msg, want)) in vectors.iter().enumerate() {
        let got = hmac_sha256(key, msg);
        let got_hex: String = got.iter().map(|b| format!("{b:02x}")).collect();
        if got_hex != *want {
            eprintln!("vector {i}: got {got_hex}, want {want}");
            pass = false;
        }
    }
    assert!(verdict(
        "HMAC-SHA-256 matches independently computed vectors byte-exactly",
        pass
    ));
}

#[test]
fn criterion_demo_determinism() {
    let bin = env!("CARGO_BIN_EXE_pox");
    let dir = std::env::temp_dir().join("pox_acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let run = |tag: &str| {
        let trace = dir.join(format!("t{tag}.jsonl"));
        let report = dir.join(format!("r{tag}.txt"));
        let status = Command::new(bin)
            .args([
                "demo-fire-sensor",
                "--seed",
                "1",
                "--trace",
                trace.to_str().unwrap(),
                "--report",
                report.to_str().unwrap(),
            ])
            .current_dir(&dir)
            .status()
            .expect("demo runs");
        assert!(status.success(), "demo exited with {status}");
        (
            std::fs::read(trace).unwrap(),
            std::fs::read(report).unwrap(),
        )
    };
    let (trace_a, report_a) = run("a");
    let (trace_b, report_b) = run("b");
    let pass = trace_a == trace_b && report_a == report_b;
    assert!(verdict(
        &format!(
            "determinism: repeated seeded demo runs byte-identical ({} trace bytes, {} report bytes)",
            trace_a.len(),
            report_a.len()
        ),
        pass
    ));
}

// ---------------------------------------------------------------------------
// Naive-semantics oracle for the evaluation engine
// ---------------------------------------------------------------------------

/// Direct transcription of the finite-trace semantics, recursing over
/// positions with no sharing. Kept independent of the engine on purpose.
fn naive_eval(f: &Formula, tr: &[(bool, bool)], pos: usize) -> bool {
    use Formula::*;
    let n = tr.len();
    match f {
        Prop(name) => match name.as_str() {
            "p" => tr[pos].0,
            "q" => tr[pos].1,
            other => panic!("unknown prop {other}"),
        },
        Not(a) => !naive_eval(a, tr, pos),
        And(a, b) => naive_eval(a, tr, pos) && naive_eval(b, tr, pos),
        Or(a, b) => naive_eval(a, tr, pos) || naive_eval(b, tr, pos),
        Implies(a, b) => !naive_eval(a, tr, pos) || naive_eval(b, tr, pos),
        Next(a) => pos + 1 < n && naive_eval(a, tr, pos + 1),
        Future(a) => (pos..n).any(|i| naive_eval(a, tr, i)),
        Globally(a) => (pos..n).all(|i| naive_eval(a, tr, i)),
        Until(a, b) => {
            (pos..n).any(|j| naive_eval(b, tr, j) && (pos..j).all(|i| naive_eval(a, tr, i)))
        }
        // "if psi ever holds, phi held strictly earlier" — stated from the
        // connective's meaning, not via the until-equivalence the engine
        // uses.
        Before(a, b) => {
            (pos..n).all(|j| !naive_eval(b, tr, j) || (pos..j).any(|i| naive_eval(a, tr, i)))
        }
    }
}

/// Every formula of height ≤ `depth` over propositions p and q, counting
/// an atom as height 1.
fn all_formulas(depth: u32) -> Vec<Formula> {
    let atoms = vec![ltl::prop("p"), ltl::prop("q")];
    if depth == 1 {
        return atoms;
    }
    let smaller = all_formulas(depth - 1);
    let mut out = atoms;
    for f in &smaller {
        out.push(ltl::not(f.clone()));
        out.push(ltl::next(f.clone()));
        out.push(ltl::future(f.clone()));
        out.push(ltl::globally(f.clone()));
    }
    for a in &smaller {
        for b in &smaller {
            out.push(ltl::and(a.clone(), b.clone()));
            out.push(ltl::or(a.clone(), b.clone()));
            out.push(ltl::implies(a.clone(), b.clone()));
            out.push(ltl::until(a.clone(), b.clone()));
            out.push(ltl::before(a.clone(), b.clone()));
        }
    }
    out
}

#[test]
fn criterion_engine_matches_naive_oracle() {
    let formulas = all_formulas(3);
    assert_eq!(formulas.len(), 4622);
    let mut mismatches = 0u64;
    let mut checked = 0u64;
    for len in 1..=5usize {
        for code in 0..4u32.pow(len as u32) {
            let rows: Vec<(bool, bool)> = (0..len)
                .map(|i| {
                    let bits = (code >> (2 * i)) & 0b11;
                    (bits & 1 != 0, bits & 2 != 0)
                })
                .collect();
            let mut tr = PropTrace::new(vec!["p".into(), "q".into()]);
            for (p, q) in &rows {
                tr.push(&[*p, *q]);
            }
            for f in &formulas {
                let engine = ltl::eval_all(f, &tr).unwrap();
                for (pos, engine_val) in engine.iter().enumerate() {
                    checked += 1;
                    if *engine_val != naive_eval(f, &rows, pos) {
                        mismatches += 1;
                        if mismatches < 5 {
                            eprintln!("mismatch: {f} at {pos} on {rows:?}");
                        }
                    }
                }
            }
        }
    }
    let pass = mismatches == 0;
    assert!(verdict(
        &format!(
            "engine cross-check: {} formulas x all traces (len <= 5, 2 props), {checked} evaluations, {mismatches} mismatches",
            formulas.len()
        ),
        pass
    ));
}
