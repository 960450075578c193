//! Cycle-level emulator of a 16-bit, byte-addressable, single-core MCU
//! with DMA, a single maskable interrupt line, reset, and memory-mapped
//! GPIO. Every cycle retires exactly one of: an instruction, a DMA event,
//! an IRQ entry, a reset, or a host-level routine step, and emits one
//! [`SignalSnapshot`].

pub mod asm;
pub mod isa;

use serde::{Deserialize, Serialize};

use crate::layout::MemoryLayout;
use crate::monitor::MetadataRegisters;
use crate::trace::SignalSnapshot;

use isa::{Instruction, Opcode, INSTR_BYTES};

pub const MEM_SIZE: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmaOp {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaEvent {
    pub fire_cycle: u64,
    pub op: DmaOp,
    pub addr: u16,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrqEvent {
    pub fire_cycle: u64,
    pub vector: u16,
}

/// Piecewise-constant peripheral input: at `cycle` the input register at
/// `addr` starts returning `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpioEvent {
    pub cycle: u64,
    pub addr: u16,
    pub value: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
    DmaRead,
    DmaWrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Allow,
    /// Violation of a hardware access rule: the machine resets this cycle.
    DenyAndReset,
    /// The write lands nowhere (EXEC byte, or ROM).
    Ignore,
}

/// Host-level cycle on behalf of code the simulator does not run through
/// the toy ISA: the untrusted auxiliary software and the trusted ROM
/// routine. Each op costs exactly one cycle and is preempted by scheduled
/// reset/DMA (and IRQ, unless masked) events like any instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostOp {
    /// Shows `pc` on the bus, exercises no other wire.
    Idle { pc: u16 },
    /// One-byte store, as if an instruction at `pc` wrote `value`.
    Store { pc: u16, addr: u16, value: u8 },
    /// Call-style transfer: pushes `ret`, jumps to `target`.
    CallPush { pc: u16, target: u16, ret: u16 },
}

#[derive(Debug, Clone)]
pub struct Machine {
    pc: u16,
    regs: [u16; 4],
    sp: u16,
    cycle: u64,
    halted: bool,
    irq_enabled: bool,
    mem: Vec<u8>,
    pub md: MetadataRegisters,
    layout: MemoryLayout,
    dma: Vec<(DmaEvent, bool)>,
    irqs: Vec<(IrqEvent, bool)>,
    resets: Vec<(u64, bool)>,
    gpio: Vec<GpioEvent>,
    /// Set while the trusted ROM routine runs: scheduled IRQs are consumed
    /// without firing.
    irq_masked: bool,
}

impl Machine {
    pub fn new(layout: MemoryLayout) -> Self {
        Machine {
            pc: 0,
            regs: [0; 4],
            sp: 0,
            cycle: 0,
            halted: false,
            irq_enabled: true,
            mem: vec![0; MEM_SIZE],
            md: MetadataRegisters::default(),
            layout,
            dma: Vec::new(),
            irqs: Vec::new(),
            resets: Vec::new(),
            gpio: Vec::new(),
            irq_masked: false,
        }
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }
    pub fn pc(&self) -> u16 {
        self.pc
    }
    pub fn cycle(&self) -> u64 {
        self.cycle
    }
    pub fn sp(&self) -> u16 {
        self.sp
    }
    pub fn reg(&self, i: usize) -> u16 {
        self.regs[i]
    }
    pub fn halted(&self) -> bool {
        self.halted
    }
    pub fn irq_enabled(&self) -> bool {
        self.irq_enabled
    }

    /// Host-level control transfer; costs no cycle on its own.
    pub fn set_pc(&mut self, pc: u16) {
        self.pc = pc;
    }
    pub fn set_sp(&mut self, sp: u16) {
        self.sp = sp;
    }
    pub fn set_irq_masked(&mut self, masked: bool) {
        self.irq_masked = masked;
    }

    pub fn schedule_dma(&mut self, ev: DmaEvent) {
        self.dma.push((ev, false));
    }
    pub fn schedule_irq(&mut self, ev: IrqEvent) {
        self.irqs.push((ev, false));
    }
    pub fn schedule_reset(&mut self, cycle: u64) {
        self.resets.push((cycle, false));
    }
    pub fn set_gpio_script(&mut self, script: Vec<GpioEvent>) {
        self.gpio = script;
    }

    /// Installs raw bytes without consuming cycles (image pre-load).
    pub fn load_image(&mut self, base: u16, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            let addr = base.wrapping_add(i as u16);
            self.write_routed(addr, *b);
        }
    }

    /// Silent read used by tests and the trusted routine; routes GPIO and
    /// the metadata register file like a bus access but exercises no wire.
    pub fn peek(&self, addr: u16) -> u8 {
        self.read_routed(addr)
    }

    pub fn peek_range(&self, min: u16, max: u16) -> Vec<u8> {
        if min > max {
            return Vec::new();
        }
        (min..=max).map(|a| self.read_routed(a)).collect()
    }

    /// The access-control contract for one byte access.
    pub fn guarded_access(&self, addr: u16, kind: AccessKind) -> AccessOutcome {
        match kind {
            AccessKind::Read | AccessKind::DmaRead => {
                if self.layout.kr.contains(addr) && !self.layout.cr.contains(self.pc) {
                    AccessOutcome::DenyAndReset
                } else {
                    AccessOutcome::Allow
                }
            }
            AccessKind::Write | AccessKind::DmaWrite => {
                if addr == self.layout.exec_addr() {
                    AccessOutcome::Ignore
                } else if self.layout.cr.contains(addr) {
                    // Attestation ROM.
                    AccessOutcome::Ignore
                } else {
                    AccessOutcome::Allow
                }
            }
        }
    }

    fn gpio_value(&self, addr: u16) -> u8 {
        let mut value = 0;
        for ev in &self.gpio {
            if ev.addr == addr && ev.cycle <= self.cycle {
                value = ev.value;
            }
        }
        value
    }

    fn read_routed(&self, addr: u16) -> u8 {
        if self.layout.gpio.contains(addr) {
            self.gpio_value(addr)
        } else if self.layout.metadata.contains(addr) {
            self.md.load_byte(addr - self.layout.metadata.min)
        } else {
            self.mem[addr as usize]
        }
    }

    fn write_routed(&mut self, addr: u16, value: u8) {
        match self.guarded_access(addr, AccessKind::Write) {
            AccessOutcome::Ignore => {}
            _ => {
                if self.layout.metadata.contains(addr) {
                    self.md.store_byte(addr - self.layout.metadata.min, value);
                } else {
                    self.mem[addr as usize] = value;
                }
            }
        }
    }

    fn take_event<T: Copy>(
        events: &mut [(T, bool)],
        cycle: u64,
        get: impl Fn(&T) -> u64,
    ) -> Option<T> {
        for (ev, consumed) in events.iter_mut() {
            if !*consumed && get(ev) == cycle {
                *consumed = true;
                return Some(*ev);
            }
        }
        None
    }

    fn snapshot(&self) -> SignalSnapshot {
        SignalSnapshot::idle(self.cycle, self.pc)
    }

    fn finish(&mut self, snap: SignalSnapshot) -> SignalSnapshot {
        self.cycle += 1;
        snap
    }

    fn reset_cycle(&mut self, mut snap: SignalSnapshot) -> SignalSnapshot {
        snap.reset = 1;
        self.pc = 0;
        self.regs = [0; 4];
        self.sp = 0;
        self.irq_enabled = true;
        self.halted = false;
        self.finish(snap)
    }

    /// External or boot reset: zeroes every register, leaves RAM intact.
    pub fn trigger_reset(&mut self) -> SignalSnapshot {
        self.resets
            .iter_mut()
            .filter(|(c, consumed)| !*consumed && *c == self.cycle)
            .for_each(|(_, consumed)| *consumed = true);
        let snap = self.snapshot();
        self.reset_cycle(snap)
    }

    fn dma_cycle(&mut self, ev: DmaEvent) -> SignalSnapshot {
        let mut snap = self.snapshot();
        snap.dma_en = 1;
        snap.dma_addr = ev.addr;
        match ev.op {
            DmaOp::Read => {
                if self.guarded_access(ev.addr, AccessKind::DmaRead) == AccessOutcome::DenyAndReset
                {
                    return self.reset_cycle(snap);
                }
            }
            DmaOp::Write => {
                // DmaWrite shares the Write guard (EXEC byte and ROM inert).
                self.write_routed(ev.addr, ev.value);
            }
        }
        self.finish(snap)
    }

    fn irq_cycle(&mut self, ev: IrqEvent) -> SignalSnapshot {
        let mut snap = self.snapshot();
        snap.irq = 1;
        let new_sp = self.sp.wrapping_sub(2);
        if !(self.layout.data.contains(new_sp) && self.layout.data.contains(new_sp.wrapping_add(1)))
        {
            return self.reset_cycle(snap);
        }
        snap.w_en = 1;
        snap.d_addr = new_sp;
        let [lo, hi] = self.pc.to_le_bytes();
        self.write_routed(new_sp, lo);
        self.write_routed(new_sp.wrapping_add(1), hi);
        self.sp = new_sp;
        self.pc = ev.vector;
        self.irq_enabled = false;
        self.finish(snap)
    }

    fn pending_irq(&mut self) -> Option<IrqEvent> {
        let ev = Self::take_event(&mut self.irqs, self.cycle, |e| e.fire_cycle)?;
        if self.irq_masked || !self.irq_enabled {
            // Consumed without firing: the line is masked.
            return None;
        }
        Some(ev)
    }

    /// Checks scheduled events for this cycle; returns the snapshot of the
    /// event cycle if one preempted, otherwise None.
    fn preempt(&mut self, masked: bool) -> Option<SignalSnapshot> {
        if Self::take_event(&mut self.resets, self.cycle, |c| *c).is_some() {
            let snap = self.snapshot();
            return Some(self.reset_cycle(snap));
        }
        if let Some(ev) = Self::take_event(&mut self.dma, self.cycle, |e| e.fire_cycle) {
            return Some(self.dma_cycle(ev));
        }
        if !masked {
            if let Some(ev) = self.pending_irq() {
                return Some(self.irq_cycle(ev));
            }
        } else {
            // Consume (and drop) any IRQ scheduled for this cycle.
            let _ = Self::take_event(&mut self.irqs, self.cycle, |e| e.fire_cycle);
        }
        None
    }

    /// Retires one instruction (or one scheduled event) and emits its
    /// snapshot. A decode failure or access violation traps to reset.
    pub fn step(&mut self) -> SignalSnapshot {
        if self.halted {
            let snap = self.snapshot();
            return self.finish(snap);
        }
        if let Some(snap) = self.preempt(self.irq_masked) {
            return snap;
        }
        // Executing out of the key region is a key read outside CR.
        if self.layout.kr.contains(self.pc) && !self.layout.cr.contains(self.pc) {
            let snap = self.snapshot();
            return self.reset_cycle(snap);
        }
        let raw = [
            self.mem[self.pc as usize],
            self.mem[self.pc.wrapping_add(1) as usize],
            self.mem[self.pc.wrapping_add(2) as usize],
            self.mem[self.pc.wrapping_add(3) as usize],
        ];
        let instr = match Instruction::decode(raw) {
            Ok(i) => i,
            Err(_) => {
                let snap = self.snapshot();
                return self.reset_cycle(snap);
            }
        };
        self.execute(instr)
    }

    fn execute(&mut self, instr: Instruction) -> SignalSnapshot {
        let mut snap = self.snapshot();
        let mut next_pc = self.pc.wrapping_add(INSTR_BYTES);
        match instr.op {
            Opcode::Nop => {}
            Opcode::Movi => self.regs[instr.rd as usize] = instr.imm,
            Opcode::Load => {
                snap.r_en = 1;
                snap.d_addr = instr.imm;
                if self.guarded_access(instr.imm, AccessKind::Read) == AccessOutcome::DenyAndReset {
                    return self.reset_cycle(snap);
                }
                self.regs[instr.rd as usize] = self.read_routed(instr.imm) as u16;
            }
            Opcode::Store => {
                snap.w_en = 1;
                snap.d_addr = instr.imm;
                self.write_routed(instr.imm, self.regs[instr.rd as usize] as u8);
            }
            Opcode::Add => {
                self.regs[instr.rd as usize] =
                    self.regs[instr.rd as usize].wrapping_add(self.regs[instr.rs as usize]);
            }
            Opcode::Sub => {
                self.regs[instr.rd as usize] =
                    self.regs[instr.rd as usize].wrapping_sub(self.regs[instr.rs as usize]);
            }
            Opcode::Jmp => next_pc = instr.imm,
            Opcode::Jz => {
                if self.regs[instr.rd as usize] == 0 {
                    next_pc = instr.imm;
                }
            }
            Opcode::Call => {
                let new_sp = self.sp.wrapping_sub(2);
                if !(self.layout.data.contains(new_sp)
                    && self.layout.data.contains(new_sp.wrapping_add(1)))
                {
                    return self.reset_cycle(snap);
                }
                snap.w_en = 1;
                snap.d_addr = new_sp;
                let ret = self.pc.wrapping_add(INSTR_BYTES);
                let [lo, hi] = ret.to_le_bytes();
                self.write_routed(new_sp, lo);
                self.write_routed(new_sp.wrapping_add(1), hi);
                self.sp = new_sp;
                next_pc = instr.imm;
            }
            Opcode::Ret | Opcode::Reti => {
                snap.r_en = 1;
                snap.d_addr = self.sp;
                if self.guarded_access(self.sp, AccessKind::Read) == AccessOutcome::DenyAndReset {
                    return self.reset_cycle(snap);
                }
                let lo = self.read_routed(self.sp);
                let hi = self.read_routed(self.sp.wrapping_add(1));
                next_pc = u16::from_le_bytes([lo, hi]);
                self.sp = self.sp.wrapping_add(2);
                if instr.op == Opcode::Reti {
                    self.irq_enabled = true;
                }
            }
            Opcode::Halt => {
                self.halted = true;
                next_pc = self.pc;
            }
        }
        self.pc = next_pc;
        self.finish(snap)
    }

    /// One host-level cycle (aux software or trusted routine). Scheduled
    /// reset and DMA events preempt it; IRQs preempt unless `masked`.
    /// Returns the snapshot and whether the op actually ran this cycle.
    pub fn host_cycle(&mut self, op: HostOp, masked: bool) -> (SignalSnapshot, bool) {
        if let Some(snap) = self.preempt(masked) {
            return (snap, false);
        }
        let mut snap = self.snapshot();
        match op {
            HostOp::Idle { pc } => {
                self.pc = pc;
                snap.pc = pc;
            }
            HostOp::Store { pc, addr, value } => {
                self.pc = pc;
                snap.pc = pc;
                snap.w_en = 1;
                snap.d_addr = addr;
                self.write_routed(addr, value);
            }
            HostOp::CallPush { pc, target, ret } => {
                self.pc = pc;
                snap.pc = pc;
                let new_sp = self.sp.wrapping_sub(2);
                if !(self.layout.data.contains(new_sp)
                    && self.layout.data.contains(new_sp.wrapping_add(1)))
                {
                    return (self.reset_cycle(snap), false);
                }
                snap.w_en = 1;
                snap.d_addr = new_sp;
                let [lo, hi] = ret.to_le_bytes();
                self.write_routed(new_sp, lo);
                self.write_routed(new_sp.wrapping_add(1), hi);
                self.sp = new_sp;
                self.pc = target;
            }
        }
        (self.finish(snap), true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::MemoryLayout;

    fn machine_with(src: &str, base: u16) -> Machine {
        let layout = MemoryLayout::default();
        let (image, _) = asm::assemble(src, base, &layout).unwrap();
        let mut m = Machine::new(layout);
        m.load_image(base, &image);
        m.set_pc(base);
        m.set_sp(0x8F00);
        m
    }

    #[test]
    fn store_sets_write_wires() {
        let mut m = machine_with("MOVI r0, 7\nSTORE r0, 0x4000", 0xE000);
        let s = m.step();
        assert_eq!((s.r_en, s.w_en), (0, 0));
        let s = m.step();
        assert_eq!((s.w_en, s.d_addr, s.r_en), (1, 0x4000, 0));
        assert_eq!(m.peek(0x4000), 7);
    }

    #[test]
    fn nop_exercises_no_wires() {
        let mut m = machine_with("NOP", 0xE000);
        let s = m.step();
        assert_eq!((s.r_en, s.w_en, s.dma_en, s.irq, s.reset), (0, 0, 0, 0, 0));
        assert_eq!(s.cycle, 0);
        assert_eq!(m.cycle(), 1);
    }

    #[test]
    fn dma_write_event_sets_dma_wires() {
        let mut m = machine_with("NOP\nNOP", 0xE000);
        m.schedule_dma(DmaEvent {
            fire_cycle: 0,
            op: DmaOp::Write,
            addr: 0x5000,
            value: 0xAB,
        });
        let before = m.peek(0x5000);
        let s = m.step();
        assert_eq!((s.dma_en, s.dma_addr), (1, 0x5000));
        assert_eq!(s.pc, 0xE000); // CPU stalled, instruction not retired
        assert_eq!(m.peek(0x5000), 0xAB);
        assert_ne!(before, 0xAB);
        let s = m.step();
        assert_eq!(s.dma_en, 0);
        assert_eq!(s.pc, 0xE000);
    }

    #[test]
    fn reset_zeroes_registers_and_pc() {
        let mut m = machine_with("MOVI r1, 9\nNOP", 0xE000);
        m.step();
        assert_eq!(m.reg(1), 9);
        let s = m.trigger_reset();
        assert_eq!(s.reset, 1);
        assert_eq!((m.pc(), m.reg(1), m.sp()), (0, 0, 0));
        // consecutive resets stay at zero
        let s = m.trigger_reset();
        assert_eq!(s.reset, 1);
        assert_eq!(m.pc(), 0);
    }

    #[test]
    fn irq_pushes_return_address_and_vectors() {
        let mut m = machine_with("NOP\nNOP\nNOP", 0xE000);
        m.schedule_irq(IrqEvent {
            fire_cycle: 1,
            vector: 0x6000,
        });
        m.step();
        let s = m.step();
        assert_eq!(s.irq, 1);
        assert_eq!(s.pc, 0xE004);
        assert_eq!(m.pc(), 0x6000);
        assert!(!m.irq_enabled());
    }

    #[test]
    fn reti_resumes_at_pushed_address() {
        let mut m = machine_with("NOP\nNOP", 0xE000);
        // handler at a prog address
        let layout = *m.layout();
        let (h, _) = asm::assemble("RETI", 0xF000, &layout).unwrap();
        m.load_image(0xF000, &h);
        m.schedule_irq(IrqEvent {
            fire_cycle: 0,
            vector: 0xF000,
        });
        let s = m.step();
        assert_eq!(s.irq, 1);
        let s = m.step(); // RETI
        assert_eq!((s.r_en, s.d_addr), (1, m.sp().wrapping_sub(2)));
        assert_eq!(m.pc(), 0xE000);
        assert!(m.irq_enabled());
    }

    #[test]
    fn kr_read_outside_cr_denies_and_resets() {
        let mut m = machine_with("LOAD r0, 0x9F00", 0xE000);
        let s = m.step();
        assert_eq!((s.r_en, s.d_addr, s.reset), (1, 0x9F00, 1));
        assert_eq!(m.pc(), 0);
    }

    #[test]
    fn kr_read_inside_cr_allowed() {
        let m = Machine::new(MemoryLayout::default());
        let mut m2 = m.clone();
        m2.set_pc(0xA000); // inside cr
        assert_eq!(
            m2.guarded_access(0x9F00, AccessKind::Read),
            AccessOutcome::Allow
        );
        assert_eq!(
            m.guarded_access(0x9F00, AccessKind::Read),
            AccessOutcome::DenyAndReset
        );
    }

    #[test]
    fn exec_byte_store_emits_wire_but_changes_nothing() {
        let layout = MemoryLayout::default();
        let exec_addr = layout.exec_addr();
        let src = format!("MOVI r0, 0xFF\nSTORE r0, {:#06X}", exec_addr);
        let mut m = machine_with(&src, 0xE000);
        m.md.exec = 1;
        m.step();
        let s = m.step();
        assert_eq!((s.w_en, s.d_addr), (1, exec_addr));
        assert_eq!(m.md.exec, 1);
        assert_eq!(m.peek(exec_addr), 1);
    }

    #[test]
    fn metadata_stores_update_register_file() {
        let layout = MemoryLayout::default();
        let base = layout.metadata.min;
        let src = format!(
            "MOVI r0, 0x34\nSTORE r0, {:#06X}\nMOVI r0, 0x12\nSTORE r0, {:#06X}",
            base,
            base + 1
        );
        let mut m = machine_with(&src, 0xE000);
        for _ in 0..4 {
            m.step();
        }
        assert_eq!(m.md.er_min, 0x1234);
    }

    #[test]
    fn invalid_opcode_traps_to_reset() {
        let layout = MemoryLayout::default();
        let mut m = Machine::new(layout);
        m.load_image(0xE000, &[0xFF, 0, 0, 0]);
        m.set_pc(0xE000);
        let s = m.step();
        assert_eq!(s.reset, 1);
        assert_eq!(m.pc(), 0);
    }

    #[test]
    fn call_ret_round_trip() {
        let src = "CALL fn\nHALT\nfn: MOVI r2, 3\nRET";
        let mut m = machine_with(src, 0xE000);
        let s = m.step();
        assert_eq!(s.w_en, 1); // push
        assert_eq!(m.pc(), 0xE008);
        m.step();
        m.step(); // RET
        assert_eq!(m.pc(), 0xE004);
        assert_eq!(m.reg(2), 3);
        let s = m.step(); // HALT
        assert_eq!(s.pc, 0xE004);
        assert!(m.halted());
    }

    #[test]
    fn stack_outside_data_traps() {
        let mut m = machine_with("CALL 0xE008\nNOP\nNOP", 0xE000);
        m.set_sp(0x0002); // push would land outside data
        let s = m.step();
        assert_eq!(s.reset, 1);
    }

    #[test]
    fn gpio_reads_are_scripted() {
        let layout = MemoryLayout::default();
        let port = layout.gpio.min;
        let src = format!("LOAD r0, {port:#06X}\nLOAD r1, {port:#06X}\nLOAD r2, {port:#06X}");
        let mut m = machine_with(&src, 0xE000);
        m.set_gpio_script(vec![
            GpioEvent {
                cycle: 0,
                addr: port,
                value: 5,
            },
            GpioEvent {
                cycle: 2,
                addr: port,
                value: 9,
            },
        ]);
        m.step();
        m.step();
        m.step();
        assert_eq!((m.reg(0), m.reg(1), m.reg(2)), (5, 5, 9));
    }

    #[test]
    fn rom_writes_are_ignored() {
        let mut m = machine_with("MOVI r0, 0xAA\nSTORE r0, 0xA100", 0xE000);
        m.step();
        m.step();
        assert_eq!(m.peek(0xA100), 0);
    }

    #[test]
    fn memory_diffs_are_attributable_to_the_wires() {
        // Every cycle's memory change must be explained by its snapshot:
        // a CPU write touches d_addr (plus the second byte of a pushed
        // return address), a DMA write touches dma_addr, anything else
        // leaves memory untouched.
        let src = "MOVI r0, 0x5A\nSTORE r0, 0x4000\nCALL fn\nNOP\nHALT\nfn: MOVI r1, 1\nRET";
        let mut m = machine_with(src, 0xE000);
        m.schedule_dma(DmaEvent {
            fire_cycle: 3,
            op: DmaOp::Write,
            addr: 0x480A,
            value: 9,
        });
        m.schedule_irq(IrqEvent {
            fire_cycle: 5,
            vector: 0xF000,
        });
        let layout = *m.layout();
        let (h, _) = asm::assemble("RETI", 0xF000, &layout).unwrap();
        m.load_image(0xF000, &h);
        for _ in 0..12 {
            let before = m.peek_range(0x0000, 0xFFFF);
            let snap = m.step();
            let after = m.peek_range(0x0000, 0xFFFF);
            let diff: Vec<u16> = (0..=0xFFFFu16)
                .filter(|&a| before[a as usize] != after[a as usize])
                .collect();
            if snap.w_en == 1 {
                assert!(
                    diff.iter()
                        .all(|a| *a == snap.d_addr || *a == snap.d_addr.wrapping_add(1)),
                    "cycle {}: diff {diff:04X?} vs d_addr {:#06X}",
                    snap.cycle,
                    snap.d_addr
                );
                assert_eq!(after[snap.d_addr as usize], m.peek(snap.d_addr));
            } else if snap.dma_en == 1 {
                assert!(diff.iter().all(|a| *a == snap.dma_addr));
            } else {
                assert!(
                    diff.is_empty(),
                    "cycle {}: unexplained diff {diff:04X?}",
                    snap.cycle
                );
            }
            if m.halted() {
                break;
            }
        }
    }

    #[test]
    fn determinism_identical_runs_identical_traces() {
        let run = || {
            let mut m = machine_with(
                "MOVI r0, 1\nMOVI r1, 2\nADD r0, r1\nSTORE r0, 0x3000\nHALT",
                0xE000,
            );
            m.schedule_dma(DmaEvent {
                fire_cycle: 2,
                op: DmaOp::Write,
                addr: 0x3001,
                value: 7,
            });
            m.schedule_irq(IrqEvent {
                fire_cycle: 100,
                vector: 0xF000,
            });
            let mut t = Vec::new();
            for _ in 0..8 {
                t.push(m.step());
            }
            t
        };
        assert_eq!(run(), run());
    }
}
