//! The 12-opcode instruction set.
//!
//! Every instruction is 4 bytes and retires in one cycle:
//! byte 0 = opcode, byte 1 = register field (`rd | rs << 4`),
//! bytes 2..4 = 16-bit immediate/address, little-endian.
//! LOAD/STORE move one byte between the low half of a register and memory;
//! CALL/RET/RETI move 16-bit return addresses through the stack.

use std::fmt;

use thiserror::Error;

/// Instruction encoding width in bytes.
pub const INSTR_BYTES: u16 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Nop = 0x00,
    Movi = 0x01,
    Load = 0x02,
    Store = 0x03,
    Add = 0x04,
    Sub = 0x05,
    Jmp = 0x06,
    Jz = 0x07,
    Call = 0x08,
    Ret = 0x09,
    Reti = 0x0A,
    Halt = 0x0B,
}

impl Opcode {
    fn from_byte(b: u8) -> Option<Opcode> {
        use Opcode::*;
        Some(match b {
            0x00 => Nop,
            0x01 => Movi,
            0x02 => Load,
            0x03 => Store,
            0x04 => Add,
            0x05 => Sub,
            0x06 => Jmp,
            0x07 => Jz,
            0x08 => Call,
            0x09 => Ret,
            0x0A => Reti,
            0x0B => Halt,
            _ => return None,
        })
    }

    pub fn mnemonic(&self) -> &'static str {
        use Opcode::*;
        match self {
            Nop => "NOP",
            Movi => "MOVI",
            Load => "LOAD",
            Store => "STORE",
            Add => "ADD",
            Sub => "SUB",
            Jmp => "JMP",
            Jz => "JZ",
            Call => "CALL",
            Ret => "RET",
            Reti => "RETI",
            Halt => "HALT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub op: Opcode,
    /// Destination/source register index (0..4).
    pub rd: u8,
    /// Second register index for ADD/SUB.
    pub rs: u8,
    /// Immediate or absolute address operand.
    pub imm: u16,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("invalid opcode byte {0:#04x}")]
    BadOpcode(u8),
    #[error("register index out of range in {0:#04x}")]
    BadRegister(u8),
}

impl Instruction {
    pub fn new(op: Opcode, rd: u8, rs: u8, imm: u16) -> Self {
        Instruction { op, rd, rs, imm }
    }

    pub fn encode(&self) -> [u8; 4] {
        let [lo, hi] = self.imm.to_le_bytes();
        [self.op as u8, (self.rd & 0x0F) | (self.rs << 4), lo, hi]
    }

    pub fn decode(bytes: [u8; 4]) -> Result<Instruction, DecodeError> {
        let op = Opcode::from_byte(bytes[0]).ok_or(DecodeError::BadOpcode(bytes[0]))?;
        let rd = bytes[1] & 0x0F;
        let rs = bytes[1] >> 4;
        if rd > 3 || rs > 3 {
            return Err(DecodeError::BadRegister(bytes[1]));
        }
        Ok(Instruction {
            op,
            rd,
            rs,
            imm: u16::from_le_bytes([bytes[2], bytes[3]]),
        })
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Opcode::*;
        match self.op {
            Nop | Ret | Reti | Halt => write!(f, "{}", self.op.mnemonic()),
            Movi | Load | Store | Jz => {
                write!(f, "{} r{}, {:#06X}", self.op.mnemonic(), self.rd, self.imm)
            }
            Add | Sub => write!(f, "{} r{}, r{}", self.op.mnemonic(), self.rd, self.rs),
            Jmp | Call => write!(f, "{} {:#06X}", self.op.mnemonic(), self.imm),
        }
    }
}

/// Decodes a whole image back into instructions.
pub fn disassemble(image: &[u8]) -> Result<Vec<Instruction>, DecodeError> {
    assert!(
        image.len().is_multiple_of(INSTR_BYTES as usize),
        "image not 4-aligned"
    );
    image
        .chunks_exact(INSTR_BYTES as usize)
        .map(|c| Instruction::decode([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let instrs = [
            Instruction::new(Opcode::Nop, 0, 0, 0),
            Instruction::new(Opcode::Movi, 2, 0, 0xBEEF),
            Instruction::new(Opcode::Add, 1, 3, 0),
            Instruction::new(Opcode::Store, 0, 0, 0xEEE0),
        ];
        for i in instrs {
            assert_eq!(Instruction::decode(i.encode()).unwrap(), i);
        }
    }

    #[test]
    fn bad_opcode_rejected() {
        assert_eq!(
            Instruction::decode([0x0C, 0, 0, 0]),
            Err(DecodeError::BadOpcode(0x0C))
        );
        assert_eq!(
            Instruction::decode([0x01, 0x04, 0, 0]),
            Err(DecodeError::BadRegister(0x04))
        );
    }
}
