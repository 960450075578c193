//! Deterministic simulator of a low-end MCU paired with a hardware
//! execution monitor, the verifier/prover proof-of-execution protocol on
//! top of it, a finite-trace LTL engine that checks the monitor's
//! temporal properties, and an adversary harness that plays the security
//! game against the protocol.

pub mod layout;
pub mod ltl;
pub mod machine;
pub mod monitor;
pub mod protocol;
pub mod scenarios;
pub mod swatt;
pub mod trace;
