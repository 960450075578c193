//! The four-step verifier/prover protocol over a byte-exact wire format:
//! request/verify on the verifier side with challenge freshness, and
//! untrusted installation, atomic execution and proof generation on the
//! prover side.
//!
//! Frames are little-endian, version byte 0x01. The loopback socket mode
//! wraps frames with a 4-byte big-endian length prefix.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::layout::{MemoryLayout, MD_CHAL, MD_ER_MAX, MD_ER_MIN, MD_OR_MAX, MD_OR_MIN};
use crate::ltl::{standard_row, standard_trace, PropTrace};
use crate::machine::{isa::INSTR_BYTES, DmaEvent, GpioEvent, HostOp, IrqEvent, Machine};
use crate::monitor::{MonitorState, OR_BOTTOM};
use crate::swatt::{
    derive_key, hmac_sha256, push_metadata, serialize_attested, AttestationKey, CostModel,
};
use crate::trace::SignalSnapshot;

pub const WIRE_VERSION: u8 = 0x01;
/// Fixed part of a request frame: version + chal + four bounds + s_len.
pub const REQUEST_HEADER: usize = 1 + 32 + 8 + 2;

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub chal: [u8; 32],
    pub er_min: u16,
    pub er_max: u16,
    pub or_min: u16,
    pub or_max: u16,
    /// Executable image to install; `None` runs whatever is pre-installed.
    pub s: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub h: [u8; 32],
    pub o: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("buffer too short: need {need}, have {have}")]
    Short { need: usize, have: usize },
    #[error("unsupported version byte {0:#04x}")]
    BadVersion(u8),
    #[error("declared length {len} overflows remaining {have} bytes")]
    LengthOverflow { len: usize, have: usize },
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let s = self.s.as_deref().unwrap_or(&[]);
        let mut out = Vec::with_capacity(REQUEST_HEADER + s.len());
        out.push(WIRE_VERSION);
        out.extend_from_slice(&self.chal);
        out.extend_from_slice(&self.er_min.to_le_bytes());
        out.extend_from_slice(&self.er_max.to_le_bytes());
        out.extend_from_slice(&self.or_min.to_le_bytes());
        out.extend_from_slice(&self.or_max.to_le_bytes());
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(s);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Request, WireError> {
        if buf.len() < REQUEST_HEADER {
            return Err(WireError::Short {
                need: REQUEST_HEADER,
                have: buf.len(),
            });
        }
        if buf[0] != WIRE_VERSION {
            return Err(WireError::BadVersion(buf[0]));
        }
        let mut chal = [0u8; 32];
        chal.copy_from_slice(&buf[1..33]);
        let u16_at = |i: usize| u16::from_le_bytes([buf[i], buf[i + 1]]);
        let s_len = u16_at(41) as usize;
        let rest = &buf[REQUEST_HEADER..];
        if s_len > rest.len() {
            return Err(WireError::LengthOverflow {
                len: s_len,
                have: rest.len(),
            });
        }
        if rest.len() > s_len {
            return Err(WireError::Trailing(rest.len() - s_len));
        }
        Ok(Request {
            chal,
            er_min: u16_at(33),
            er_max: u16_at(35),
            or_min: u16_at(37),
            or_max: u16_at(39),
            s: (s_len > 0).then(|| rest.to_vec()),
        })
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + self.o.len());
        out.extend_from_slice(&self.h);
        out.extend_from_slice(&(self.o.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.o);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Response, WireError> {
        if buf.len() < 34 {
            return Err(WireError::Short {
                need: 34,
                have: buf.len(),
            });
        }
        let mut h = [0u8; 32];
        h.copy_from_slice(&buf[..32]);
        let o_len = u16::from_le_bytes([buf[32], buf[33]]) as usize;
        let rest = &buf[34..];
        if o_len > rest.len() {
            return Err(WireError::LengthOverflow {
                len: o_len,
                have: rest.len(),
            });
        }
        if rest.len() > o_len {
            return Err(WireError::Trailing(rest.len() - o_len));
        }
        Ok(Response {
            h,
            o: rest.to_vec(),
        })
    }
}

/// Length-prefixed framing for the loopback socket mode: 4-byte big-endian
/// length, then the frame.
pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> std::io::Result<()> {
    w.write_all(&(frame.len() as u32).to_be_bytes())?;
    w.write_all(frame)
}

pub fn read_frame<R: Read>(r: &mut R) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut frame = vec![0u8; u32::from_be_bytes(len) as usize];
    r.read_exact(&mut frame)?;
    Ok(frame)
}

// ---------------------------------------------------------------------------
// Verifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Outstanding,
    Closed,
}

#[derive(Debug, Clone)]
pub struct VerifierSession {
    pub chal: [u8; 32],
    pub expected_s: Vec<u8>,
    pub er_min: u16,
    pub er_max: u16,
    pub or_min: u16,
    pub or_max: u16,
    pub t_req: u64,
    pub state: SessionState,
}

/// What the verifier wants executed. For pre-installed code the verifier
/// still has to know the exact image to recompute the expected token.
#[derive(Debug, Clone)]
pub enum ExecutableSpec {
    /// Ship these bytes in the request and expect them in ER.
    Install(Vec<u8>),
    /// Send no image; expect this pre-installed content in ER.
    PreInstalled(Vec<u8>),
}

impl ExecutableSpec {
    pub fn bytes(&self) -> &[u8] {
        match self {
            ExecutableSpec::Install(b) | ExecutableSpec::PreInstalled(b) => b,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("executable region {0:#06x}..={1:#06x} outside program memory")]
    ErOutsideProg(u16, u16),
    #[error("output region {0:#06x}..={1:#06x} outside data memory")]
    OrOutsideData(u16, u16),
    #[error("executable of {s_len} bytes does not fill region of {span} bytes")]
    SizeMismatch { s_len: usize, span: usize },
    #[error("region bounds inverted")]
    Inverted,
}

#[derive(Debug)]
pub struct Verifier {
    master: AttestationKey,
    layout: MemoryLayout,
    rng: ChaCha8Rng,
    sessions: Vec<VerifierSession>,
    /// Sessions expire this many prover cycles after t_req.
    pub timeout: u64,
}

impl Verifier {
    pub fn new(master: AttestationKey, layout: MemoryLayout, seed: u64) -> Self {
        Verifier {
            master,
            layout,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sessions: Vec::new(),
            timeout: 100_000_000,
        }
    }

    pub fn session(&self, id: SessionId) -> Option<&VerifierSession> {
        self.sessions.get(id.0 as usize)
    }

    /// Builds a request with a fresh random challenge and records the
    /// outstanding session. `or = None` means the executable produces no
    /// output.
    pub fn xrequest(
        &mut self,
        s: ExecutableSpec,
        er: (u16, u16),
        or: Option<(u16, u16)>,
        t_req: u64,
    ) -> Result<(SessionId, Request), RequestError> {
        let (er_min, er_max) = er;
        if er_min > er_max {
            return Err(RequestError::Inverted);
        }
        if !(self.layout.prog.contains(er_min) && self.layout.prog.contains(er_max)) {
            return Err(RequestError::ErOutsideProg(er_min, er_max));
        }
        let span = er_max as usize - er_min as usize + 1;
        if s.bytes().len() != span {
            return Err(RequestError::SizeMismatch {
                s_len: s.bytes().len(),
                span,
            });
        }
        let (or_min, or_max) = match or {
            Some((lo, hi)) => {
                if lo > hi {
                    return Err(RequestError::Inverted);
                }
                if !(self.layout.data.contains(lo) && self.layout.data.contains(hi)) {
                    return Err(RequestError::OrOutsideData(lo, hi));
                }
                (lo, hi)
            }
            None => (OR_BOTTOM, OR_BOTTOM),
        };
        let mut chal = [0u8; 32];
        self.rng.fill_bytes(&mut chal);
        let (expected_s, wire_s) = match s {
            ExecutableSpec::Install(b) => (b.clone(), Some(b)),
            ExecutableSpec::PreInstalled(b) => (b, None),
        };
        let id = SessionId(self.sessions.len() as u64);
        self.sessions.push(VerifierSession {
            chal,
            expected_s,
            er_min,
            er_max,
            or_min,
            or_max,
            t_req,
            state: SessionState::Outstanding,
        });
        let req = Request {
            chal,
            er_min,
            er_max,
            or_min,
            or_max,
            s: wire_s,
        };
        Ok((id, req))
    }

    /// Recomputes the expected token for EXEC = 1 and compares. Any verify
    /// attempt closes the session; replays and late responses score 0.
    pub fn xverify(&mut self, id: SessionId, resp: &Response, t_verif: u64) -> bool {
        let timeout = self.timeout;
        let master = self.master;
        let Some(sess) = self.sessions.get_mut(id.0 as usize) else {
            return false;
        };
        if sess.state == SessionState::Closed {
            return false;
        }
        sess.state = SessionState::Closed;
        if t_verif < sess.t_req || t_verif - sess.t_req > timeout {
            return false;
        }
        let or_span = if sess.or_min == OR_BOTTOM && sess.or_max == OR_BOTTOM {
            0
        } else {
            sess.or_max as usize - sess.or_min as usize + 1
        };
        if resp.o.len() != or_span {
            return false;
        }
        let mut attested = Vec::with_capacity(sess.expected_s.len() + resp.o.len() + 41);
        attested.extend_from_slice(&sess.expected_s);
        attested.extend_from_slice(&resp.o);
        push_metadata(
            &mut attested,
            &sess.chal,
            sess.or_min,
            sess.or_max,
            sess.er_min,
            sess.er_max,
            1,
        );
        let expected = hmac_sha256(&derive_key(&master, &sess.chal), &attested);
        ct_eq(&expected, &resp.h)
    }
}

/// Fixed-shape comparison: runs over every byte regardless of mismatches.
fn ct_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    let mut diff = 0u8;
    for i in 0..32 {
        diff |= a[i] ^ b[i];
    }
    diff == 0
}

// ---------------------------------------------------------------------------
// Prover
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstallError {
    #[error("executable of {s_len} bytes exceeds region of {span} bytes")]
    TooLarge { s_len: usize, span: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecOutcome {
    /// Execution returned to the auxiliary software.
    Returned,
    /// Cycle budget expired with the run still inside ER.
    BudgetExhausted,
    /// The machine trapped (reset) or halted mid-run.
    Stopped,
}

/// The simulated prover device: machine, monitor, trusted key, and the
/// recorded trace with its per-cycle proposition row.
#[derive(Debug)]
pub struct Prover {
    pub machine: Machine,
    pub monitor: MonitorState,
    master: AttestationKey,
    pub cost: CostModel,
    pub trace: Vec<SignalSnapshot>,
    pub props: PropTrace,
    /// Where the untrusted auxiliary software "runs" for host-level steps.
    pub aux_pc: u16,
    stack_top: u16,
}

impl Prover {
    pub fn new(layout: MemoryLayout, master: AttestationKey) -> Self {
        Prover::with_monitor(layout, master, MonitorState::new())
    }

    /// Builds the device around a (possibly sabotaged) monitor.
    pub fn with_monitor(
        layout: MemoryLayout,
        master: AttestationKey,
        monitor: MonitorState,
    ) -> Self {
        let aux_pc = layout.prog.max & !(INSTR_BYTES - 1);
        let stack_top = layout.data.max & !0x00FF;
        let mut machine = Machine::new(layout);
        // Key provisioning is out of band: the key region is born holding K.
        for (i, b) in master.0.iter().enumerate() {
            machine.load_image(layout.kr.min + i as u16, &[*b]);
        }
        let mut p = Prover {
            machine,
            monitor,
            master,
            cost: CostModel::default(),
            trace: Vec::new(),
            props: standard_trace(),
            aux_pc,
            stack_top,
        };
        p.boot();
        p
    }

    fn boot(&mut self) {
        let snap = self.machine.trigger_reset();
        self.commit(snap);
        self.machine.set_sp(self.stack_top);
    }

    /// Ticks the monitor on a snapshot, mirrors EXEC into the register
    /// file, and records both the snapshot and its proposition row.
    fn commit(&mut self, mut snap: SignalSnapshot) -> bool {
        let input = crate::monitor::project(&snap, &self.machine.md, self.machine.layout());
        let exec = self.monitor.tick_input(&input);
        self.machine.md.exec = u8::from(exec);
        snap.exec = u8::from(exec);
        self.trace.push(snap);
        self.props.push_mask(standard_row(&input, exec));
        exec
    }

    pub fn cycle(&self) -> u64 {
        self.machine.cycle()
    }

    pub fn exec_flag(&self) -> bool {
        self.machine.md.exec != 0
    }

    /// One machine instruction (or scheduled event) cycle.
    pub fn step(&mut self) -> SignalSnapshot {
        let snap = self.machine.step();
        self.commit(snap);
        *self.trace.last().unwrap()
    }

    pub fn host_idle(&mut self, pc: u16) {
        let (snap, _) = self.machine.host_cycle(HostOp::Idle { pc }, false);
        self.commit(snap);
    }

    /// One auxiliary-software byte store (one cycle; may be preempted).
    pub fn host_store(&mut self, addr: u16, value: u8) {
        loop {
            let (snap, ran) = self.machine.host_cycle(
                HostOp::Store {
                    pc: self.aux_pc,
                    addr,
                    value,
                },
                false,
            );
            self.commit(snap);
            if ran {
                break;
            }
        }
    }

    /// Call-style transfer from the auxiliary software into `target`
    /// (one cycle; retried if a scheduled event preempts it, unless the
    /// event was a reset).
    fn host_call(&mut self, target: u16) {
        loop {
            let (snap, ran) = self.machine.host_cycle(
                HostOp::CallPush {
                    pc: self.aux_pc,
                    target,
                    ret: self.aux_pc,
                },
                false,
            );
            let reset = snap.reset == 1;
            self.commit(snap);
            if ran || reset {
                break;
            }
        }
    }

    pub fn trigger_reset(&mut self) {
        let snap = self.machine.trigger_reset();
        self.commit(snap);
    }

    pub fn run_cycles(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    pub fn schedule_dma(&mut self, ev: DmaEvent) {
        self.machine.schedule_dma(ev);
    }
    pub fn schedule_irq(&mut self, ev: IrqEvent) {
        self.machine.schedule_irq(ev);
    }
    pub fn schedule_reset(&mut self, cycle: u64) {
        self.machine.schedule_reset(cycle);
    }
    pub fn set_gpio_script(&mut self, script: Vec<GpioEvent>) {
        self.machine.set_gpio_script(script);
    }

    /// Untrusted installation: auxiliary software copies the request's
    /// bounds and challenge into the metadata region, stages the
    /// challenge in the MAC exchange region, and copies the image into
    /// ER, one monitored byte store per cycle. Returns the cycle at which
    /// installation began.
    pub fn install(&mut self, req: &Request) -> Result<u64, InstallError> {
        if let Some(s) = &req.s {
            let span = if req.er_min <= req.er_max {
                req.er_max as usize - req.er_min as usize + 1
            } else {
                0
            };
            if s.len() > span {
                return Err(InstallError::TooLarge {
                    s_len: s.len(),
                    span,
                });
            }
        }
        let t_req = self.machine.cycle();
        let md_base = self.machine.layout().metadata.min;
        let mr_base = self.machine.layout().mr.min;
        let fields = [
            (MD_ER_MIN, req.er_min),
            (MD_ER_MAX, req.er_max),
            (MD_OR_MIN, req.or_min),
            (MD_OR_MAX, req.or_max),
        ];
        for (off, value) in fields {
            let [lo, hi] = value.to_le_bytes();
            self.host_store(md_base + off, lo);
            self.host_store(md_base + off + 1, hi);
        }
        for (i, b) in req.chal.iter().enumerate() {
            self.host_store(md_base + MD_CHAL + i as u16, *b);
            self.host_store(mr_base + i as u16, *b);
        }
        if let Some(s) = &req.s {
            for (i, b) in s.iter().enumerate() {
                self.host_store(req.er_min.wrapping_add(i as u16), *b);
            }
        }
        Ok(t_req)
    }

    /// Runs the installed executable from its first instruction until it
    /// returns to the auxiliary software, the budget expires, or the
    /// machine stops. Returns the outcome plus the output-region bytes.
    pub fn xatomic_exec(&mut self, budget: u64) -> (ExecOutcome, Vec<u8>) {
        let target = self.machine.md.er_min;
        self.call_and_run(target, budget)
    }

    /// Adversarial entry: call into the region `offset` bytes past its
    /// first instruction and run like `xatomic_exec`.
    pub fn enter_er_at_offset(&mut self, offset: u16, budget: u64) -> (ExecOutcome, Vec<u8>) {
        let target = self.machine.md.er_min.wrapping_add(offset);
        self.call_and_run(target, budget)
    }

    fn call_and_run(&mut self, target: u16, budget: u64) -> (ExecOutcome, Vec<u8>) {
        if !self.machine.layout().data.contains(self.machine.sp()) {
            self.machine.set_sp(self.stack_top);
        }
        self.host_call(target);
        let mut outcome = ExecOutcome::BudgetExhausted;
        for _ in 0..budget {
            let snap = self.step();
            if snap.reset == 1 || self.machine.halted() {
                outcome = ExecOutcome::Stopped;
                break;
            }
            if self.machine.pc() == self.aux_pc {
                outcome = ExecOutcome::Returned;
                break;
            }
        }
        (outcome, self.or_bytes())
    }

    pub fn or_bytes(&self) -> Vec<u8> {
        let md = &self.machine.md;
        if md.or_is_bottom() || md.or_min > md.or_max {
            return Vec::new();
        }
        self.machine.peek_range(md.or_min, md.or_max)
    }

    /// Where an interrupt taken during a fresh `xatomic_exec` run stores
    /// its return address: one call frame plus one interrupt frame below
    /// the boot stack top.
    pub fn stack_slot_after_irq(&self) -> u16 {
        self.stack_top - 4
    }

    /// Invokes the trusted ROM routine: jumps to the start of the
    /// attestation ROM, captures the attested serialization (including
    /// the live EXEC value) on entry, sweeps the ROM for the modeled
    /// cycle cost while writing the token into the MAC region, and
    /// returns the token with the output bytes.
    pub fn xprove(&mut self) -> Response {
        let layout = *self.machine.layout();
        let md_now = self.machine.md;
        let n_bytes = {
            let er = if md_now.er_min <= md_now.er_max {
                md_now.er_max as u64 - md_now.er_min as u64 + 1
            } else {
                0
            };
            let or = if !md_now.or_is_bottom() && md_now.or_min <= md_now.or_max {
                md_now.or_max as u64 - md_now.or_min as u64 + 1
            } else {
                0
            };
            er + or
        };
        let sweep = self.cost.cycles(n_bytes).max(33);

        // The call instruction in auxiliary software.
        self.host_idle(self.aux_pc);
        self.machine.set_pc(layout.cr.min);
        self.machine.set_irq_masked(true);

        let cr_instrs = (layout.cr.len() as u64) / INSTR_BYTES as u64;
        let walk = |i: u64| layout.cr.min + ((i % cr_instrs) as u16) * INSTR_BYTES;

        // Entry cycle: the EXEC value the token attests is the monitor's
        // output at this cycle.
        let (snap, _) = self.machine.host_cycle(HostOp::Idle { pc: walk(0) }, true);
        let mut aborted = snap.reset == 1;
        self.commit(snap);
        let h = crate::swatt::hmac_sha256(
            &derive_key(&self.master, &self.machine.md.chal),
            &serialize_attested(&self.machine, &self.machine.md),
        );

        let mut emitted = 1u64;
        if !aborted {
            for (i, byte) in h.iter().enumerate() {
                let op = HostOp::Store {
                    pc: walk(emitted),
                    addr: layout.mr.min + i as u16,
                    value: *byte,
                };
                loop {
                    let (snap, ran) = self.machine.host_cycle(op, true);
                    let reset = snap.reset == 1;
                    self.commit(snap);
                    emitted += 1;
                    if reset {
                        aborted = true;
                        break;
                    }
                    if ran {
                        break;
                    }
                }
                if aborted {
                    break;
                }
            }
        }
        while !aborted && emitted < sweep {
            let (snap, _) = self
                .machine
                .host_cycle(HostOp::Idle { pc: walk(emitted) }, true);
            if snap.reset == 1 {
                aborted = true;
            }
            self.commit(snap);
            emitted += 1;
        }
        self.machine.set_irq_masked(false);
        if !aborted {
            self.machine.set_pc(self.aux_pc);
        }
        // A reset mid-routine leaves a partial token in the MAC region.
        let h_out = if aborted {
            let mut partial = [0u8; 32];
            for (i, b) in partial.iter_mut().enumerate() {
                *b = self.machine.peek(layout.mr.min + i as u16);
            }
            partial
        } else {
            h
        };
        Response {
            h: h_out,
            o: self.or_bytes(),
        }
    }
}
