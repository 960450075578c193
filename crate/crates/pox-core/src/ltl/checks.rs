//! The temporal-property catalog checked on recorded traces: nine
//! monitor-conformance formulas plus the end-to-end execution property.

use std::fmt;

use super::{
    and, eval_all, implies, next, not, or, prop, standard_row, standard_trace, until, Formula,
    LtlError, PropTrace,
};
use crate::layout::MemoryLayout;
use crate::monitor::{project, MetadataRegisters};
use crate::trace::{SignalSnapshot, TraceBounds};

/// Rebuilds the proposition trace from a persisted signal trace, taking
/// the region bounds as fixed over the whole trace. In-process checking
/// uses the live per-cycle bounds instead; a persisted trace carries only
/// the wires, so its sidecar pins the bounds it should be judged against.
pub fn props_from_snapshots(
    snapshots: &[SignalSnapshot],
    bounds: &TraceBounds,
    layout: &MemoryLayout,
) -> PropTrace {
    let md = MetadataRegisters {
        er_min: bounds.er_min,
        er_max: bounds.er_max,
        or_min: bounds.or_min,
        or_max: bounds.or_max,
        exec: 0,
        chal: [0; 32],
    };
    let mut tr = standard_trace();
    for snap in snapshots {
        let ai = project(snap, &md, layout);
        tr.push_mask(standard_row(&ai, snap.exec != 0));
    }
    tr
}

/// The nine conformance formulas, each of the shape `G(body)`. The
/// response-protection entry conjoins the EXEC 0→1 gate with the reset
/// rule, matching the grouping under that heading.
pub fn conformance_bodies() -> Vec<(&'static str, Formula)> {
    let e = || prop("exec");
    vec![
        ("ephemeral_immutability", implies(prop("mm_er"), not(e()))),
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
        (
            "output_protection",
            implies(
                or(
                    or(and(not(prop("pc_in_er")), prop("w_or")), prop("dma_or")),
                    and(prop("pc_in_er"), prop("dma_en")),
                ),
                not(e()),
            ),
        ),
        ("boundaries", implies(not(prop("bounds_valid")), not(e()))),
        (
            "er_cr_disjoint",
            implies(not(prop("er_cr_disjoint")), not(e())),
        ),
        ("metadata_protection", implies(prop("mm_meta"), not(e()))),
        (
            "response_protection",
            and(
                implies(prop("reset"), not(e())),
                implies(and(not(e()), next(e())), next(prop("pc_eq_ermin"))),
            ),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaVerdict {
    pub name: &'static str,
    pub pass: bool,
    pub first_violation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceReport {
    pub entries: Vec<FormulaVerdict>,
    /// Empty trace: every universally-quantified formula holds trivially.
    pub vacuous: bool,
}

impl ConformanceReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            match (e.pass, self.vacuous, e.first_violation) {
                (true, true, _) => writeln!(f, "formula {}: pass (vacuous: empty trace)", e.name)?,
                (true, false, _) => writeln!(f, "formula {}: pass", e.name)?,
                (false, _, Some(c)) => {
                    writeln!(f, "formula {}: fail (first violation at cycle {c})", e.name)?
                }
                (false, _, None) => writeln!(f, "formula {}: fail", e.name)?,
            }
        }
        Ok(())
    }
}

/// Evaluates all nine formulas with G unrolled across the whole trace.
pub fn check_conformance(tr: &PropTrace) -> Result<ConformanceReport, LtlError> {
    let mut entries = Vec::new();
    for (name, body) in conformance_bodies() {
        if tr.is_empty() {
            entries.push(FormulaVerdict {
                name,
                pass: true,
                first_violation: None,
            });
            continue;
        }
        let vals = eval_all(&body, tr)?;
        let first_violation = vals.iter().position(|v| !v);
        entries.push(FormulaVerdict {
            name,
            pass: first_violation.is_none(),
            first_violation,
        });
    }
    Ok(ConformanceReport {
        entries,
        vacuous: tr.is_empty(),
    })
}

/// Antecedent of the end-to-end property: execution entered at the first
/// instruction, ran inside ER with no interrupt/reset/DMA until the last
/// instruction, and from entry until the attestation routine started,
/// neither ER nor the metadata changed and only in-ER execution touched
/// the output region.
pub fn end_to_end_antecedent() -> Formula {
    and(
        prop("pc_eq_ermin"),
        and(
            until(
                and(
                    prop("pc_in_er"),
                    and(
                        not(prop("irq")),
                        and(not(prop("reset")), not(prop("dma_en"))),
                    ),
                ),
                prop("pc_eq_ermax"),
            ),
            until(
                and(
                    not(prop("mm_er")),
                    and(
                        not(prop("mm_meta")),
                        or(prop("pc_in_er"), not(prop("mm_or"))),
                    ),
                ),
                prop("pc_eq_crmin"),
            ),
        ),
    )
}

/// The full end-to-end property: antecedent B (exec ∧ pc ∈ CR).
pub fn end_to_end_formula() -> Formula {
    super::before(end_to_end_antecedent(), and(prop("exec"), prop("pc_in_cr")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndToEndVerdict {
    pub pass: bool,
    /// First cycle where the flag was high inside the attestation ROM
    /// without an earlier position satisfying the antecedent.
    pub first_unjustified: Option<usize>,
}

impl fmt::Display for EndToEndVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pass, self.first_unjustified) {
            (true, _) => write!(f, "end-to-end execution: pass"),
            (false, Some(c)) => write!(
                f,
                "end-to-end execution: fail (unjustified exec at cycle {c})"
            ),
            (false, None) => write!(f, "end-to-end execution: fail"),
        }
    }
}

/// Direct implementation of the B-shaped check: every position where
/// (exec ∧ pc ∈ CR) holds must be strictly preceded by a position where
/// the antecedent holds. Cross-checked against the engine's B evaluation.
pub fn check_end_to_end(tr: &PropTrace) -> Result<EndToEndVerdict, LtlError> {
    if tr.is_empty() {
        return Ok(EndToEndVerdict {
            pass: true,
            first_unjustified: None,
        });
    }
    let phi = eval_all(&end_to_end_antecedent(), tr)?;
    let exec = tr.column_bits("exec")?;
    let in_cr = tr.column_bits("pc_in_cr")?;
    let mut seen_phi = false;
    for i in 0..tr.len() {
        if exec[i] && in_cr[i] && !seen_phi {
            return Ok(EndToEndVerdict {
                pass: false,
                first_unjustified: Some(i),
            });
        }
        seen_phi |= phi[i];
    }
    Ok(EndToEndVerdict {
        pass: true,
        first_unjustified: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{eval, standard_trace, TRACE_PROPS};

    fn bit(name: &str) -> usize {
        TRACE_PROPS.iter().position(|p| *p == name).unwrap()
    }

    fn mask(names: &[&str]) -> u64 {
        names.iter().map(|n| 1u64 << bit(n)).fold(0, |a, b| a | b)
    }

    #[test]
    fn empty_trace_is_vacuously_conformant() {
        let tr = standard_trace();
        let report = check_conformance(&tr).unwrap();
        assert!(report.all_pass() && report.vacuous);
        assert!(check_end_to_end(&tr).unwrap().pass);
    }

    #[test]
    fn immutability_violation_reports_position() {
        let mut tr = standard_trace();
        let ok = mask(&["bounds_valid", "er_cr_disjoint"]);
        tr.push_mask(ok);
        // write into ER while exec stays high
        tr.push_mask(ok | mask(&["mm_er", "w_er", "exec"]));
        let report = check_conformance(&tr).unwrap();
        let imm = &report.entries[0];
        assert_eq!(imm.name, "ephemeral_immutability");
        assert!(!imm.pass);
        assert_eq!(imm.first_violation, Some(1));
    }

    #[test]
    fn reset_must_drop_exec() {
        let mut tr = standard_trace();
        let ok = mask(&["bounds_valid", "er_cr_disjoint"]);
        tr.push_mask(ok | mask(&["reset"]));
        let report = check_conformance(&tr).unwrap();
        assert!(report.all_pass());
        let mut tr = standard_trace();
        tr.push_mask(ok | mask(&["reset", "exec"]));
        let report = check_conformance(&tr).unwrap();
        assert!(!report.entries[8].pass);
    }

    #[test]
    fn end_to_end_vacuous_when_cr_never_reached() {
        let mut tr = standard_trace();
        let ok = mask(&["bounds_valid", "er_cr_disjoint"]);
        for _ in 0..5 {
            tr.push_mask(ok | mask(&["exec", "pc_in_er"]));
        }
        assert!(check_end_to_end(&tr).unwrap().pass);
    }

    #[test]
    fn end_to_end_direct_checker_agrees_with_engine_b() {
        // A few hand-built traces, honest and violating.
        let ok = mask(&["bounds_valid", "er_cr_disjoint"]);
        let honest = [
            ok | mask(&["pc_in_er", "pc_eq_ermin", "exec"]),
            ok | mask(&["pc_in_er", "exec"]),
            ok | mask(&["pc_in_er", "pc_eq_ermax", "exec"]),
            ok | mask(&["exec"]),
            ok | mask(&["pc_in_cr", "pc_eq_crmin", "exec"]),
            ok | mask(&["pc_in_cr", "exec"]),
        ];
        let violating = [ok, ok | mask(&["pc_in_cr", "pc_eq_crmin", "exec"])];
        for rows in [&honest[..], &violating[..]] {
            let mut tr = standard_trace();
            for r in rows {
                tr.push_mask(*r);
            }
            let direct = check_end_to_end(&tr).unwrap();
            let engine = eval(&end_to_end_formula(), &tr, 0).unwrap();
            assert_eq!(direct.pass, engine);
        }
    }

    #[test]
    fn end_to_end_monotone_under_nonconsequent_extension() {
        let ok = mask(&["bounds_valid", "er_cr_disjoint"]);
        let mut tr = standard_trace();
        tr.push_mask(ok | mask(&["pc_in_er", "pc_eq_ermin", "pc_eq_ermax", "exec"]));
        tr.push_mask(ok | mask(&["pc_in_cr", "pc_eq_crmin", "exec"]));
        assert!(check_end_to_end(&tr).unwrap().pass);
        // appending cycles without (exec ∧ pc_in_cr) cannot flip the verdict
        for extra in [ok, ok | mask(&["pc_in_er"]), ok | mask(&["exec"])] {
            let mut ext = tr.clone();
            ext.push_mask(extra);
            assert!(check_end_to_end(&ext).unwrap().pass);
        }
    }
}
