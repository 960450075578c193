//! Randomized end-to-end validation of the monitor: random programs,
//! event schedules and tamperings run through the full device, and every
//! resulting trace must satisfy the nine conformance formulas plus the
//! end-to-end implication (a raised flag inside the attestation ROM is
//! always preceded by a compliant execution window).

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::checks::{check_conformance, check_end_to_end};
use crate::layout::{MemoryLayout, MD_CHAL, METADATA_BYTES};
use crate::machine::asm::assemble;
use crate::machine::{DmaEvent, DmaOp, IrqEvent};
use crate::monitor::{MonitorState, OR_BOTTOM};
use crate::protocol::{Prover, Request};
use crate::scenarios::build_program;
use crate::swatt::{AttestationKey, CostModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discrepancy {
    pub trial: u32,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzReport {
    pub trials: u32,
    pub seed: u64,
    /// Trials whose trace raised the flag inside the attestation ROM,
    /// i.e. exercised the implication non-vacuously.
    pub proving_trials: u32,
    pub discrepancies: Vec<Discrepancy>,
}

impl FuzzReport {
    pub fn clean(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "fuzz: trials={} seed={} proving={} discrepancies={}",
            self.trials,
            self.seed,
            self.proving_trials,
            self.discrepancies.len()
        )?;
        for d in self.discrepancies.iter().take(32) {
            writeln!(f, "  trial {}: {}", d.trial, d.failures.join("; "))?;
        }
        Ok(())
    }
}

fn pick(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    rng.next_u64() % n
}

fn chance(rng: &mut ChaCha8Rng, percent: u64) -> bool {
    pick(rng, 100) < percent
}

/// A random straight-line program over the toy ISA, with occasional
/// extra exits and reads of the peripheral port.
fn random_source(rng: &mut ChaCha8Rng, or: Option<(u16, u16)>) -> (String, usize) {
    let n = 1 + pick(rng, 8) as usize;
    let mut out = String::new();
    for _ in 0..n {
        match pick(rng, 10) {
            0 | 1 => out.push_str(&format!("MOVI r{}, {}\n", pick(rng, 4), pick(rng, 256))),
            2 | 3 => {
                let addr = match (or, pick(rng, 4)) {
                    (Some((lo, hi)), 0 | 1) => lo + (pick(rng, (hi - lo + 1) as u64) as u16),
                    _ => 0x3000 + pick(rng, 0x100) as u16,
                };
                out.push_str(&format!("STORE r{}, {:#06X}\n", pick(rng, 4), addr));
            }
            4 => out.push_str(&format!("LOAD r{}, {:#06X}\n", pick(rng, 4), 0x001C)),
            5 => out.push_str(&format!(
                "LOAD r{}, {:#06X}\n",
                pick(rng, 4),
                0x3000 + pick(rng, 0x100) as u16
            )),
            6 => out.push_str(&format!("ADD r{}, r{}\n", pick(rng, 4), pick(rng, 4))),
            7 => out.push_str(&format!("SUB r{}, r{}\n", pick(rng, 4), pick(rng, 4))),
            8 => out.push_str("EXIT\n"),
            _ => out.push_str("NOP\n"),
        }
    }
    out.push_str("EXIT\n");
    (out, n + 1)
}

/// One randomized trial: build, install (possibly with adversarial
/// bounds), maybe execute (possibly entering mid-region, possibly twice),
/// maybe tamper afterwards, always attest, then check both properties.
/// The boolean reports whether the flag was ever high inside the ROM.
fn run_trial(trial: u32, seed: u64, monitor: MonitorState) -> (bool, Option<Discrepancy>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = MemoryLayout::default();

    let or = if chance(&mut rng, 70) {
        let lo = 0x2000 + pick(&mut rng, 0x40) as u16;
        let len = 1 + pick(&mut rng, 6) as u16;
        Some((lo, lo + len - 1))
    } else {
        None
    };
    let (source, n_instr) = random_source(&mut rng, or);
    let slots = n_instr + 1 + pick(&mut rng, 4) as usize;
    let er_min = 0xE000 + (pick(&mut rng, 16) * 4) as u16;
    let er = (er_min, er_min + (slots * 4 - 1) as u16);
    let program = match build_program(&source, er, &layout) {
        Ok(p) => p,
        Err(_) => return (false, None), // over-budget random draw; skip
    };

    let mut key = [0u8; 32];
    rng.fill_bytes(&mut key);
    let master = AttestationKey(key);
    let mut prover = Prover::with_monitor(layout, master, monitor);
    prover.cost = CostModel {
        base: 40 + pick(&mut rng, 64),
        per_byte: 1,
    };

    // An interrupt handler that just returns, somewhere in program memory.
    let (handler_img, _) = assemble("RETI", 0xF800, &layout).unwrap();
    prover.machine.load_image(0xF800, &handler_img);

    let mut chal = [0u8; 32];
    rng.fill_bytes(&mut chal);
    let (or_min, or_max) = or.unwrap_or((OR_BOTTOM, OR_BOTTOM));
    let mut req = Request {
        chal,
        er_min: er.0,
        er_max: er.1,
        or_min,
        or_max,
        s: Some(program.image.clone()),
    };
    // Occasionally claim inverted or shifted bounds.
    if chance(&mut rng, 10) {
        std::mem::swap(&mut req.er_min, &mut req.er_max);
        req.s = None;
    } else if chance(&mut rng, 10) {
        req.er_min = req.er_min.wrapping_add(4);
        req.er_max = req.er_max.wrapping_add(4);
    }

    // Event schedules across the whole run.
    let horizon = 400;
    for _ in 0..pick(&mut rng, 3) {
        let addr = match pick(&mut rng, 5) {
            0 => er.0.wrapping_add(pick(&mut rng, slots as u64 * 4) as u16),
            1 if or.is_some() => or.unwrap().0,
            2 => layout.metadata.min + pick(&mut rng, METADATA_BYTES as u64) as u16,
            3 => layout.kr.min + pick(&mut rng, 32) as u16,
            _ => 0x3000 + pick(&mut rng, 0x200) as u16,
        };
        let op = if chance(&mut rng, 80) {
            DmaOp::Write
        } else {
            DmaOp::Read
        };
        prover.schedule_dma(DmaEvent {
            fire_cycle: pick(&mut rng, horizon),
            op,
            addr,
            value: (rng.next_u32() & 0xFF) as u8,
        });
    }
    for _ in 0..pick(&mut rng, 2) {
        let vector = if chance(&mut rng, 70) {
            0xF800
        } else {
            0x3000 + pick(&mut rng, 0x100) as u16
        };
        prover.schedule_irq(IrqEvent {
            fire_cycle: pick(&mut rng, horizon),
            vector,
        });
    }
    if chance(&mut rng, 15) {
        prover.schedule_reset(pick(&mut rng, horizon));
    }

    if prover.install(&req).is_err() {
        return (false, None);
    }

    if chance(&mut rng, 85) {
        if chance(&mut rng, 15) {
            prover.enter_er_at_offset(4 + (pick(&mut rng, slots as u64 - 1) * 4) as u16, 2_000);
        } else {
            prover.xatomic_exec(2_000);
        }
        if chance(&mut rng, 20) {
            // run it again
            prover.xatomic_exec(2_000);
        }
    }

    // Post-run tampering.
    if chance(&mut rng, 30) {
        let target = match pick(&mut rng, 3) {
            0 => er.0.wrapping_add(pick(&mut rng, slots as u64 * 4) as u16),
            1 => layout.metadata.min + MD_CHAL + pick(&mut rng, 32) as u16,
            _ => or.map(|o| o.0).unwrap_or(0x3000),
        };
        prover.host_store(target, (rng.next_u32() & 0xFF) as u8);
    }

    prover.xprove();
    if chance(&mut rng, 25) {
        // a second proof, sometimes after extra noise
        if chance(&mut rng, 50) {
            prover.host_store(er.0, 0x00);
        }
        prover.xprove();
    }

    let mut failures = Vec::new();
    // Trace discipline: snapshots cover every cycle with no gaps, and any
    // key-region read outside the attestation ROM carries the reset.
    for (i, snap) in prover.trace.iter().enumerate() {
        if snap.cycle != i as u64 {
            failures.push(format!("cycle gap at index {i} (cycle {})", snap.cycle));
            break;
        }
        let in_kr = layout.kr.contains(snap.d_addr);
        if snap.r_en == 1 && in_kr && !layout.cr.contains(snap.pc) && snap.reset != 1 {
            failures.push(format!("unguarded key read at cycle {i}"));
        }
    }
    match check_conformance(&prover.props) {
        Ok(report) => {
            for entry in report.entries.iter().filter(|e| !e.pass) {
                failures.push(format!(
                    "{} violated at cycle {:?}",
                    entry.name, entry.first_violation
                ));
            }
        }
        Err(e) => failures.push(format!("conformance check failed: {e}")),
    }
    match check_end_to_end(&prover.props) {
        Ok(v) if !v.pass => failures.push(format!(
            "end-to-end implication violated at cycle {:?}",
            v.first_unjustified
        )),
        Ok(_) => {}
        Err(e) => failures.push(format!("end-to-end check failed: {e}")),
    }

    let proving = {
        let exec = prover.props.col("exec").unwrap();
        let in_cr = prover.props.col("pc_in_cr").unwrap();
        (0..prover.props.len()).any(|i| prover.props.get(i, exec) && prover.props.get(i, in_cr))
    };
    let discrepancy = if failures.is_empty() {
        None
    } else {
        Some(Discrepancy { trial, failures })
    };
    (proving, discrepancy)
}

/// Runs `trials` randomized scenarios against the healthy monitor.
pub fn monitor_fuzz(trials: u32, seed: u64) -> FuzzReport {
    monitor_fuzz_with(trials, seed, MonitorState::new())
}

/// Same, against a possibly sabotaged monitor build (used to show the
/// harness catches planted monitor bugs).
pub fn monitor_fuzz_with(trials: u32, seed: u64, monitor: MonitorState) -> FuzzReport {
    let mut master_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut discrepancies = Vec::new();
    let mut proving_trials = 0;
    for trial in 0..trials {
        let trial_seed = master_rng.next_u64();
        let (proving, discrepancy) = run_trial(trial, trial_seed, monitor.clone());
        if proving {
            proving_trials += 1;
        }
        if let Some(d) = discrepancy {
            discrepancies.push(d);
        }
    }
    FuzzReport {
        trials,
        seed,
        proving_trials,
        discrepancies,
    }
}
