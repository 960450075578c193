//! The execution-monitor hardware model.
//!
//! Seven Mealy FSM sub-modules consume one abstract input per cycle and
//! jointly produce the EXEC flag: a sub-module outputs 0 exactly when its
//! next state is its `NotExec` state, the composed flag is the AND of all
//! seven outputs, and every re-entry edge out of `NotExec` requires the
//! program counter to sit on the first instruction of the execution region
//! with no simultaneous violation (violation wins).

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::layout::{
    MemoryLayout, CHAL_BYTES, MD_CHAL, MD_ER_MAX, MD_ER_MIN, MD_EXEC, MD_OR_MAX, MD_OR_MIN,
};
use crate::machine::isa::INSTR_BYTES;
use crate::trace::SignalSnapshot;

/// Sentinel pair meaning "no output region".
pub const OR_BOTTOM: u16 = 0xFFFF;

/// The monitor's register file: region bounds, the hardware-owned EXEC
/// byte, and the challenge slot. Memory-mapped into the metadata region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetadataRegisters {
    pub er_min: u16,
    pub er_max: u16,
    pub or_min: u16,
    pub or_max: u16,
    pub exec: u8,
    pub chal: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Applied,
    /// Writes aimed at the EXEC byte land nowhere: the flag has no
    /// software-write path.
    IgnoredExec,
}

impl MetadataRegisters {
    /// Reads the byte at `offset` within the metadata region.
    pub fn load_byte(&self, offset: u16) -> u8 {
        match offset {
            MD_ER_MIN => self.er_min.to_le_bytes()[0],
            o if o == MD_ER_MIN + 1 => self.er_min.to_le_bytes()[1],
            MD_ER_MAX => self.er_max.to_le_bytes()[0],
            o if o == MD_ER_MAX + 1 => self.er_max.to_le_bytes()[1],
            MD_OR_MIN => self.or_min.to_le_bytes()[0],
            o if o == MD_OR_MIN + 1 => self.or_min.to_le_bytes()[1],
            MD_OR_MAX => self.or_max.to_le_bytes()[0],
            o if o == MD_OR_MAX + 1 => self.or_max.to_le_bytes()[1],
            MD_EXEC => self.exec,
            o if (MD_CHAL..MD_CHAL + CHAL_BYTES as u16).contains(&o) => {
                self.chal[(o - MD_CHAL) as usize]
            }
            _ => 0,
        }
    }

    /// Writes the byte at `offset`; the EXEC byte is ignored.
    pub fn store_byte(&mut self, offset: u16, value: u8) -> WriteOutcome {
        let set_lo = |field: &mut u16| *field = (*field & 0xFF00) | value as u16;
        let set_hi = |field: &mut u16| *field = (*field & 0x00FF) | ((value as u16) << 8);
        match offset {
            MD_ER_MIN => set_lo(&mut self.er_min),
            o if o == MD_ER_MIN + 1 => set_hi(&mut self.er_min),
            MD_ER_MAX => set_lo(&mut self.er_max),
            o if o == MD_ER_MAX + 1 => set_hi(&mut self.er_max),
            MD_OR_MIN => set_lo(&mut self.or_min),
            o if o == MD_OR_MIN + 1 => set_hi(&mut self.or_min),
            MD_OR_MAX => set_lo(&mut self.or_max),
            o if o == MD_OR_MAX + 1 => set_hi(&mut self.or_max),
            MD_EXEC => return WriteOutcome::IgnoredExec,
            o if (MD_CHAL..MD_CHAL + CHAL_BYTES as u16).contains(&o) => {
                self.chal[(o - MD_CHAL) as usize] = value;
            }
            _ => {}
        }
        WriteOutcome::Applied
    }

    pub fn bounds_valid(&self) -> bool {
        self.er_min <= self.er_max && self.or_min <= self.or_max
    }

    pub fn or_is_bottom(&self) -> bool {
        self.or_min == OR_BOTTOM && self.or_max == OR_BOTTOM
    }

    /// Address of the last whole instruction of ER, the position the
    /// monitor treats as "PC at ER_max". ER bounds are byte-inclusive
    /// while the PC holds instruction start addresses, so for a span of
    /// one 4-byte instruction or less this collapses onto `er_min`.
    pub fn er_last_instr(&self) -> u16 {
        if self.er_max >= self.er_min.saturating_add(INSTR_BYTES - 1) {
            self.er_max - (INSTR_BYTES - 1)
        } else {
            self.er_min
        }
    }

    pub fn er_contains(&self, addr: u16) -> bool {
        self.er_min <= self.er_max && self.er_min <= addr && addr <= self.er_max
    }

    pub fn or_contains(&self, addr: u16) -> bool {
        !self.or_is_bottom()
            && self.or_min <= self.or_max
            && self.or_min <= addr
            && addr <= self.or_max
    }
}

/// Per-cycle input bits for the sub-modules, projected from the raw wires
/// and the live register-file values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AbstractInput {
    pub pc_in_er: bool,
    pub pc_eq_ermin: bool,
    pub pc_eq_ermax: bool,
    pub pc_in_cr: bool,
    pub pc_eq_crmin: bool,
    pub irq: bool,
    pub reset: bool,
    pub dma_en: bool,
    pub w_er: bool,
    pub dma_er: bool,
    pub w_or: bool,
    pub dma_or: bool,
    pub w_meta: bool,
    pub dma_meta: bool,
    pub bounds_valid: bool,
    pub er_cr_disjoint: bool,
}

/// Computes every input bit from the snapshot, the live register file and
/// the fixed layout. Pure.
pub fn project(
    snap: &SignalSnapshot,
    md: &MetadataRegisters,
    layout: &MemoryLayout,
) -> AbstractInput {
    let w_en = snap.w_en != 0;
    let dma_en = snap.dma_en != 0;
    let pc_in_er = md.er_contains(snap.pc);
    let meta = layout.metadata;
    let exec_addr = layout.exec_addr();
    // Writes aimed at the EXEC byte are inert (no register changes), so
    // they do not count as metadata modification.
    let in_meta = |addr: u16| meta.contains(addr) && addr != exec_addr;
    let er_cr_disjoint =
        md.er_min > md.er_max || md.er_max < layout.cr.min || md.er_min > layout.cr.max;
    AbstractInput {
        pc_in_er,
        pc_eq_ermin: pc_in_er && snap.pc == md.er_min,
        pc_eq_ermax: pc_in_er && snap.pc == md.er_last_instr(),
        pc_in_cr: layout.cr.contains(snap.pc),
        pc_eq_crmin: snap.pc == layout.cr.min,
        irq: snap.irq != 0,
        reset: snap.reset != 0,
        dma_en,
        w_er: w_en && md.er_contains(snap.d_addr),
        dma_er: dma_en && md.er_contains(snap.dma_addr),
        w_or: w_en && md.or_contains(snap.d_addr),
        dma_or: dma_en && md.or_contains(snap.dma_addr),
        w_meta: w_en && in_meta(snap.d_addr),
        dma_meta: dma_en && in_meta(snap.dma_addr),
        bounds_valid: md.bounds_valid(),
        er_cr_disjoint,
    }
}

impl AbstractInput {
    /// Named-bit accessor used by the table machinery.
    pub fn bit(&self, name: &str) -> Option<bool> {
        Some(match name {
            "pc_in_er" => self.pc_in_er,
            "pc_eq_ermin" => self.pc_eq_ermin,
            "pc_eq_ermax" => self.pc_eq_ermax,
            "pc_in_cr" => self.pc_in_cr,
            "pc_eq_crmin" => self.pc_eq_crmin,
            "irq" => self.irq,
            "reset" => self.reset,
            "dma_en" => self.dma_en,
            "w_er" => self.w_er,
            "dma_er" => self.dma_er,
            "w_or" => self.w_or,
            "dma_or" => self.dma_or,
            "w_meta" => self.w_meta,
            "dma_meta" => self.dma_meta,
            "bounds_valid" => self.bounds_valid,
            "er_cr_disjoint" => self.er_cr_disjoint,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubmoduleId {
    Immutability,
    Atomicity,
    OutputProtection,
    Boundaries,
    ErCrDisjoint,
    Metadata,
    ResetGate,
}

pub const ALL_SUBMODULES: [SubmoduleId; 7] = [
    SubmoduleId::Immutability,
    SubmoduleId::Atomicity,
    SubmoduleId::OutputProtection,
    SubmoduleId::Boundaries,
    SubmoduleId::ErCrDisjoint,
    SubmoduleId::Metadata,
    SubmoduleId::ResetGate,
];

impl SubmoduleId {
    pub fn name(&self) -> &'static str {
        match self {
            SubmoduleId::Immutability => "immutability",
            SubmoduleId::Atomicity => "atomicity",
            SubmoduleId::OutputProtection => "output_protection",
            SubmoduleId::Boundaries => "boundaries",
            SubmoduleId::ErCrDisjoint => "er_cr_disjoint",
            SubmoduleId::Metadata => "metadata",
            SubmoduleId::ResetGate => "reset_gate",
        }
    }

    pub fn from_name(name: &str) -> Option<SubmoduleId> {
        ALL_SUBMODULES.into_iter().find(|id| id.name() == name)
    }

    /// The abstract input bits this sub-module observes.
    pub fn input_bits(&self) -> &'static [&'static str] {
        match self {
            SubmoduleId::Immutability => &["pc_eq_ermin", "w_er", "dma_er"],
            SubmoduleId::Atomicity => &["pc_in_er", "pc_eq_ermin", "pc_eq_ermax", "irq"],
            SubmoduleId::OutputProtection => {
                &["pc_in_er", "pc_eq_ermin", "w_or", "dma_en", "dma_or"]
            }
            SubmoduleId::Boundaries => &["pc_eq_ermin", "bounds_valid"],
            SubmoduleId::ErCrDisjoint => &["pc_eq_ermin", "er_cr_disjoint"],
            SubmoduleId::Metadata => &["pc_eq_ermin", "w_meta", "dma_meta"],
            SubmoduleId::ResetGate => &["pc_eq_ermin", "reset"],
        }
    }

    /// Rejects structurally impossible input combinations, e.g. a PC that
    /// is at ER_min but not inside ER. `mask` bit i corresponds to
    /// `input_bits()[i]`.
    pub fn input_mask_consistent(&self, mask: u16) -> bool {
        let bit = |i: usize| mask & (1 << i) != 0;
        match self {
            // pc_eq_ermin ⇒ pc_in_er and pc_eq_ermax ⇒ pc_in_er
            SubmoduleId::Atomicity => (!bit(1) || bit(0)) && (!bit(2) || bit(0)),
            // pc_eq_ermin ⇒ pc_in_er and dma_or ⇒ dma_en
            SubmoduleId::OutputProtection => (!bit(1) || bit(0)) && (!bit(4) || bit(3)),
            _ => true,
        }
    }

    pub fn legal_masks(&self) -> Vec<u16> {
        let n = self.input_bits().len();
        (0..(1u16 << n))
            .filter(|m| self.input_mask_consistent(*m))
            .collect()
    }
}

/// Five-state FSM guarding atomic, entry-to-exit execution of ER.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicityState {
    NotExec,
    NotEr,
    FstEr,
    MidEr,
    LastEr,
}

/// Two-state shape shared by the other six sub-modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateState {
    NotExec,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmoduleState {
    Atomicity(AtomicityState),
    Gate(GateState),
}

impl SubmoduleState {
    pub fn is_not_exec(&self) -> bool {
        matches!(
            self,
            SubmoduleState::Atomicity(AtomicityState::NotExec)
                | SubmoduleState::Gate(GateState::NotExec)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SubmoduleState::Atomicity(AtomicityState::NotExec) => "NotExec",
            SubmoduleState::Atomicity(AtomicityState::NotEr) => "notER",
            SubmoduleState::Atomicity(AtomicityState::FstEr) => "fstER",
            SubmoduleState::Atomicity(AtomicityState::MidEr) => "midER",
            SubmoduleState::Atomicity(AtomicityState::LastEr) => "lastER",
            SubmoduleState::Gate(GateState::NotExec) => "NotExec",
            SubmoduleState::Gate(GateState::Run) => "Run",
        }
    }
}

fn atomicity_step(s: AtomicityState, i: &AbstractInput) -> AtomicityState {
    use AtomicityState::*;
    let enter = i.pc_eq_ermin && !i.irq;
    let enter_target = if i.pc_eq_ermax { LastEr } else { FstEr };
    match s {
        NotExec => {
            if enter {
                enter_target
            } else {
                NotExec
            }
        }
        NotEr => {
            if !i.pc_in_er {
                NotEr
            } else if enter {
                enter_target
            } else {
                NotExec
            }
        }
        FstEr => {
            if i.irq {
                NotExec
            } else if i.pc_eq_ermax {
                LastEr
            } else if i.pc_eq_ermin {
                FstEr
            } else if i.pc_in_er {
                MidEr
            } else {
                NotExec
            }
        }
        MidEr => {
            if i.irq {
                NotExec
            } else if i.pc_eq_ermax {
                LastEr
            } else if i.pc_in_er && !i.pc_eq_ermin {
                MidEr
            } else {
                NotExec
            }
        }
        LastEr => {
            if i.irq {
                NotExec
            } else if i.pc_eq_ermax {
                LastEr
            } else if !i.pc_in_er {
                NotEr
            } else {
                NotExec
            }
        }
    }
}

fn gate_step(s: GateState, violation: bool, pc_eq_ermin: bool) -> GateState {
    match s {
        GateState::Run => {
            if violation {
                GateState::NotExec
            } else {
                GateState::Run
            }
        }
        GateState::NotExec => {
            if pc_eq_ermin && !violation {
                GateState::Run
            } else {
                GateState::NotExec
            }
        }
    }
}

fn gate_violation(id: SubmoduleId, i: &AbstractInput) -> bool {
    match id {
        SubmoduleId::Immutability => i.w_er || i.dma_er,
        SubmoduleId::OutputProtection => {
            (!i.pc_in_er && i.w_or) || i.dma_or || (i.pc_in_er && i.dma_en)
        }
        SubmoduleId::Boundaries => !i.bounds_valid,
        SubmoduleId::ErCrDisjoint => !i.er_cr_disjoint,
        SubmoduleId::Metadata => i.w_meta || i.dma_meta,
        SubmoduleId::ResetGate => i.reset,
        SubmoduleId::Atomicity => unreachable!("atomicity is not a gate"),
    }
}

/// One sub-module transition. The output bit follows the implicit
/// representation: 0 exactly when the next state is `NotExec`.
pub fn tick_submodule(id: SubmoduleId, s: SubmoduleState, input: &AbstractInput) -> SubmoduleState {
    match (id, s) {
        (SubmoduleId::Atomicity, SubmoduleState::Atomicity(a)) => {
            SubmoduleState::Atomicity(atomicity_step(a, input))
        }
        (_, SubmoduleState::Gate(g)) => {
            SubmoduleState::Gate(gate_step(g, gate_violation(id, input), input.pc_eq_ermin))
        }
        _ => panic!("state/submodule mismatch"),
    }
}

pub fn initial_state(id: SubmoduleId) -> SubmoduleState {
    match id {
        SubmoduleId::Atomicity => SubmoduleState::Atomicity(AtomicityState::NotExec),
        _ => SubmoduleState::Gate(GateState::NotExec),
    }
}

/// The composed monitor: seven sub-module states plus an optional
/// test-only sabotage hook that forces one sub-module to report pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorState {
    states: [SubmoduleState; 7],
    disabled: Option<SubmoduleId>,
}

impl Default for MonitorState {
    fn default() -> Self {
        MonitorState::new()
    }
}

impl MonitorState {
    pub fn new() -> Self {
        let mut states = [SubmoduleState::Gate(GateState::NotExec); 7];
        for (i, id) in ALL_SUBMODULES.iter().enumerate() {
            states[i] = initial_state(*id);
        }
        MonitorState {
            states,
            disabled: None,
        }
    }

    /// Deliberately broken build: the named sub-module's output is forced
    /// to 1 and its state frozen. Exists so tests can plant monitor bugs.
    pub fn with_disabled(id: SubmoduleId) -> Self {
        let mut m = MonitorState::new();
        m.disabled = Some(id);
        m
    }

    pub fn submodule(&self, id: SubmoduleId) -> SubmoduleState {
        let idx = ALL_SUBMODULES.iter().position(|x| *x == id).unwrap();
        self.states[idx]
    }

    /// Ticks all seven sub-modules on the same projected input and returns
    /// the composed EXEC bit (AND over the individual outputs).
    pub fn tick(
        &mut self,
        snap: &SignalSnapshot,
        md: &MetadataRegisters,
        layout: &MemoryLayout,
    ) -> bool {
        let input = project(snap, md, layout);
        self.tick_input(&input)
    }

    pub fn tick_input(&mut self, input: &AbstractInput) -> bool {
        let mut exec = true;
        for (i, id) in ALL_SUBMODULES.iter().enumerate() {
            if self.disabled == Some(*id) {
                continue;
            }
            let next = tick_submodule(*id, self.states[i], input);
            self.states[i] = next;
            exec &= !next.is_not_exec();
        }
        exec
    }

    /// True when every enabled sub-module sits outside its NotExec state.
    pub fn all_clear(&self) -> bool {
        ALL_SUBMODULES
            .iter()
            .enumerate()
            .all(|(i, id)| self.disabled == Some(*id) || !self.states[i].is_not_exec())
    }
}

// ---------------------------------------------------------------------------
// Machine-readable transition tables
// ---------------------------------------------------------------------------

/// One fully-enumerated transition: `state | guard-conjunction | next | exec`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub state: String,
    /// Assignment of every input bit, in `inputs` order.
    pub guard: u16,
    pub next: String,
    pub exec: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTable {
    pub submodule: String,
    pub inputs: Vec<String>,
    pub states: Vec<String>,
    pub initial: String,
    pub rows: Vec<TableRow>,
}

/// (state index, guard mask) -> (next state index, exec bit).
pub type StepMap = HashMap<(usize, u16), (usize, u8)>;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("table has no transition for state {state} under guard {guard:#x}")]
    Incomplete { state: String, guard: u16 },
}

fn states_of(id: SubmoduleId) -> Vec<SubmoduleState> {
    match id {
        SubmoduleId::Atomicity => vec![
            SubmoduleState::Atomicity(AtomicityState::NotExec),
            SubmoduleState::Atomicity(AtomicityState::NotEr),
            SubmoduleState::Atomicity(AtomicityState::FstEr),
            SubmoduleState::Atomicity(AtomicityState::MidEr),
            SubmoduleState::Atomicity(AtomicityState::LastEr),
        ],
        _ => vec![
            SubmoduleState::Gate(GateState::NotExec),
            SubmoduleState::Gate(GateState::Run),
        ],
    }
}

fn input_from_mask(bits: &[&'static str], mask: u16) -> AbstractInput {
    // Bits absent from a sub-module's view default to benign values.
    let mut input = AbstractInput {
        bounds_valid: true,
        er_cr_disjoint: true,
        ..AbstractInput::default()
    };
    for (i, name) in bits.iter().enumerate() {
        let v = mask & (1 << i) != 0;
        match *name {
            "pc_in_er" => input.pc_in_er = v,
            "pc_eq_ermin" => input.pc_eq_ermin = v,
            "pc_eq_ermax" => input.pc_eq_ermax = v,
            "irq" => input.irq = v,
            "reset" => input.reset = v,
            "dma_en" => input.dma_en = v,
            "w_er" => input.w_er = v,
            "dma_er" => input.dma_er = v,
            "w_or" => input.w_or = v,
            "dma_or" => input.dma_or = v,
            "w_meta" => input.w_meta = v,
            "dma_meta" => input.dma_meta = v,
            "bounds_valid" => input.bounds_valid = v,
            "er_cr_disjoint" => input.er_cr_disjoint = v,
            other => panic!("unknown input bit {other}"),
        }
    }
    input
}

/// Enumerates the sub-module's behavior into a table: one row per
/// (state, consistent input assignment).
pub fn export_table(id: SubmoduleId) -> TransitionTable {
    let bits = id.input_bits();
    let states = states_of(id);
    let mut rows = Vec::new();
    for s in &states {
        for mask in id.legal_masks() {
            let input = input_from_mask(bits, mask);
            let next = tick_submodule(id, *s, &input);
            rows.push(TableRow {
                state: s.name().to_string(),
                guard: mask,
                next: next.name().to_string(),
                exec: u8::from(!next.is_not_exec()),
            });
        }
    }
    TransitionTable {
        submodule: id.name().to_string(),
        inputs: bits.iter().map(|s| s.to_string()).collect(),
        states: states.iter().map(|s| s.name().to_string()).collect(),
        initial: initial_state(id).name().to_string(),
        rows,
    }
}

impl TransitionTable {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn initial_index(&self) -> usize {
        self.state_index(&self.initial)
            .expect("initial state listed")
    }

    /// Lookup map from (state index, guard mask) to (next index, exec bit).
    pub fn step_map(&self) -> Result<StepMap, TableError> {
        let mut map = HashMap::with_capacity(self.rows.len());
        for row in &self.rows {
            let s = self
                .state_index(&row.state)
                .ok_or_else(|| TableError::Parse {
                    line: 0,
                    msg: format!("unknown state {}", row.state),
                })?;
            let n = self
                .state_index(&row.next)
                .ok_or_else(|| TableError::Parse {
                    line: 0,
                    msg: format!("unknown state {}", row.next),
                })?;
            map.insert((s, row.guard), (n, row.exec));
        }
        Ok(map)
    }

    pub fn parse(text: &str) -> Result<TransitionTable, TableError> {
        let mut submodule = String::new();
        let mut inputs: Vec<String> = Vec::new();
        let mut states: Vec<String> = Vec::new();
        let mut initial = String::new();
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("submodule:") {
                    submodule = v.trim().to_string();
                } else if let Some(v) = rest.strip_prefix("inputs:") {
                    inputs = v.split_whitespace().map(|s| s.to_string()).collect();
                } else if let Some(v) = rest.strip_prefix("states:") {
                    states = v.split_whitespace().map(|s| s.to_string()).collect();
                } else if let Some(v) = rest.strip_prefix("initial:") {
                    initial = v.trim().to_string();
                }
                continue;
            }
            let parts: Vec<&str> = l.split('|').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(TableError::Parse {
                    line,
                    msg: "expected `state | guard | next | exec`".into(),
                });
            }
            let mut guard = 0u16;
            for assign in parts[1].split_whitespace() {
                let (name, val) = assign.split_once('=').ok_or_else(|| TableError::Parse {
                    line,
                    msg: format!("bad guard term `{assign}`"),
                })?;
                let bit =
                    inputs
                        .iter()
                        .position(|i| i == name)
                        .ok_or_else(|| TableError::Parse {
                            line,
                            msg: format!("unknown input `{name}`"),
                        })?;
                match val {
                    "1" => guard |= 1 << bit,
                    "0" => {}
                    _ => {
                        return Err(TableError::Parse {
                            line,
                            msg: format!("bad guard value `{val}`"),
                        })
                    }
                }
            }
            let exec = match parts[3] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(TableError::Parse {
                        line,
                        msg: format!("bad exec bit `{other}`"),
                    })
                }
            };
            rows.push(TableRow {
                state: parts[0].to_string(),
                guard,
                next: parts[2].to_string(),
                exec,
            });
        }
        Ok(TransitionTable {
            submodule,
            inputs,
            states,
            initial,
            rows,
        })
    }
}

impl fmt::Display for TransitionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# submodule: {}", self.submodule)?;
        writeln!(f, "# inputs: {}", self.inputs.join(" "))?;
        writeln!(f, "# states: {}", self.states.join(" "))?;
        writeln!(f, "# initial: {}", self.initial)?;
        for row in &self.rows {
            let guard = self
                .inputs
                .iter()
                .enumerate()
                .map(|(i, name)| format!("{}={}", name, u8::from(row.guard & (1 << i) != 0)))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(f, "{} | {} | {} | {}", row.state, guard, row.next, row.exec)?;
        }
        Ok(())
    }
}
