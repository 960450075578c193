//! Memory map of the simulated device.
//!
//! All ranges are inclusive byte ranges inside the 16-bit address space.
//! The protected regions (attestation ROM, key, MAC exchange, exclusive
//! stack, metadata register file) must be pairwise disjoint and disjoint
//! from installable program/data memory; the constructor enforces this.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inclusive address range `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddrRange {
    pub min: u16,
    pub max: u16,
}

impl AddrRange {
    pub const fn new(min: u16, max: u16) -> Self {
        AddrRange { min, max }
    }

    pub fn contains(&self, addr: u16) -> bool {
        self.min <= addr && addr <= self.max
    }

    pub fn len(&self) -> usize {
        if self.min > self.max {
            0
        } else {
            self.max as usize - self.min as usize + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min > self.max
    }

    pub fn overlaps(&self, other: &AddrRange) -> bool {
        !self.is_empty() && !other.is_empty() && self.min <= other.max && other.min <= self.max
    }
}

/// Number of bytes in the monitor's register file, excluding the challenge
/// slot: er_min(2) + er_max(2) + or_min(2) + or_max(2) + exec(1).
pub const REG_FILE_BYTES: usize = 9;
/// Size of the challenge slot in the metadata region.
pub const CHAL_BYTES: usize = 32;
/// Total metadata region size.
pub const METADATA_BYTES: usize = REG_FILE_BYTES + CHAL_BYTES;

/// Byte offsets of the register-file fields inside the metadata region.
pub const MD_ER_MIN: u16 = 0;
pub const MD_ER_MAX: u16 = 2;
pub const MD_OR_MIN: u16 = 4;
pub const MD_OR_MAX: u16 = 6;
pub const MD_EXEC: u16 = 8;
pub const MD_CHAL: u16 = 9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("range {0} is inverted (min > max)")]
    Inverted(&'static str),
    #[error("regions {0} and {1} overlap")]
    Overlap(&'static str, &'static str),
    #[error("mr must be exactly {CHAL_BYTES} bytes, got {0}")]
    BadMrSize(usize),
    #[error("metadata must be exactly {METADATA_BYTES} bytes, got {0}")]
    BadMetadataSize(usize),
}

/// The device memory map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLayout {
    /// Attestation ROM holding the trusted routine.
    pub cr: AddrRange,
    /// Key region holding the attestation master key.
    pub kr: AddrRange,
    /// Challenge/MAC exchange region.
    pub mr: AddrRange,
    /// Exclusive stack of the trusted routine.
    pub xs: AddrRange,
    /// Monitor register file plus challenge slot.
    pub metadata: AddrRange,
    /// Installable program memory.
    pub prog: AddrRange,
    /// General data memory.
    pub data: AddrRange,
    /// Peripheral-mapped GPIO ports.
    pub gpio: AddrRange,
}

impl MemoryLayout {
    /// Validates disjointness and sizes.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cr: AddrRange,
        kr: AddrRange,
        mr: AddrRange,
        xs: AddrRange,
        metadata: AddrRange,
        prog: AddrRange,
        data: AddrRange,
        gpio: AddrRange,
    ) -> Result<Self, LayoutError> {
        let l = MemoryLayout {
            cr,
            kr,
            mr,
            xs,
            metadata,
            prog,
            data,
            gpio,
        };
        l.validate()?;
        Ok(l)
    }

    /// Re-checks the invariants, e.g. after deserializing.
    pub fn validated(self) -> Result<Self, LayoutError> {
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), LayoutError> {
        let named = [
            ("cr", self.cr),
            ("kr", self.kr),
            ("mr", self.mr),
            ("xs", self.xs),
            ("metadata", self.metadata),
            ("prog", self.prog),
            ("data", self.data),
            ("gpio", self.gpio),
        ];
        for (name, r) in named {
            if r.is_empty() {
                return Err(LayoutError::Inverted(name));
            }
        }
        // cr, kr, mr, xs, metadata and prog/data pairwise disjoint.
        let protected = [
            ("cr", self.cr),
            ("kr", self.kr),
            ("mr", self.mr),
            ("xs", self.xs),
            ("metadata", self.metadata),
        ];
        for i in 0..protected.len() {
            for (name_j, r_j) in &protected[i + 1..] {
                if protected[i].1.overlaps(r_j) {
                    return Err(LayoutError::Overlap(protected[i].0, name_j));
                }
            }
            for (name_j, r_j) in [("prog", self.prog), ("data", self.data)] {
                if protected[i].1.overlaps(&r_j) {
                    return Err(LayoutError::Overlap(protected[i].0, name_j));
                }
            }
        }
        // The GPIO window must not shadow a protected region.
        for (name, r) in protected {
            if self.gpio.overlaps(&r) {
                return Err(LayoutError::Overlap("gpio", name));
            }
        }
        if self.mr.len() != CHAL_BYTES {
            return Err(LayoutError::BadMrSize(self.mr.len()));
        }
        if self.metadata.len() != METADATA_BYTES {
            return Err(LayoutError::BadMetadataSize(self.metadata.len()));
        }
        Ok(())
    }

    /// Absolute address of the hardware-owned EXEC byte.
    pub fn exec_addr(&self) -> u16 {
        self.metadata.min + MD_EXEC
    }
}

impl Default for MemoryLayout {
    fn default() -> Self {
        // 8 KiB of program memory, a 32-byte key, a 32-byte challenge/MAC
        // slot, and GPIO ports at the fire-sensor listing's addresses.
        // The metadata register file sits above the GPIO window so the
        // peripheral never shadows a register byte.
        MemoryLayout::new(
            AddrRange::new(0xA000, 0xBFFF),
            AddrRange::new(0x9F00, 0x9F1F),
            AddrRange::new(0x9E00, 0x9E1F),
            AddrRange::new(0x9C00, 0x9DFF),
            AddrRange::new(0x0040, 0x0068),
            AddrRange::new(0xE000, 0xFFFF),
            AddrRange::new(0x1000, 0x8FFF),
            AddrRange::new(0x001C, 0x001F),
        )
        .expect("default layout is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_valid_and_sized() {
        let l = MemoryLayout::default();
        assert_eq!(l.metadata.len(), 41);
        assert_eq!(l.mr.len(), 32);
        assert_eq!(l.kr.len(), 32);
        assert_eq!(l.prog.len(), 8192);
        assert_eq!(l.exec_addr(), 0x0048);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let l = MemoryLayout::default();
        let bad = MemoryLayout::new(
            l.cr,
            AddrRange::new(0xA010, 0xA02F), // kr inside cr
            l.mr,
            l.xs,
            l.metadata,
            l.prog,
            l.data,
            l.gpio,
        );
        assert_eq!(bad.unwrap_err(), LayoutError::Overlap("cr", "kr"));
    }

    #[test]
    fn inverted_range_rejected() {
        let l = MemoryLayout::default();
        let bad = MemoryLayout::new(
            AddrRange::new(0xBFFF, 0xA000),
            l.kr,
            l.mr,
            l.xs,
            l.metadata,
            l.prog,
            l.data,
            l.gpio,
        );
        assert_eq!(bad.unwrap_err(), LayoutError::Inverted("cr"));
    }

    #[test]
    fn metadata_size_must_be_exact() {
        let l = MemoryLayout::default();
        let bad = MemoryLayout::new(
            l.cr,
            l.kr,
            l.mr,
            l.xs,
            AddrRange::new(0x0040, 0x0070),
            l.prog,
            l.data,
            l.gpio,
        );
        assert!(matches!(bad, Err(LayoutError::BadMetadataSize(49))));
    }
}
