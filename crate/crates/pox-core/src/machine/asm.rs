//! Two-pass assembler and disassembler for the toy ISA.
//!
//! Syntax: one instruction per line, `;` comments, `label:` definitions.
//! Operands are registers `r0..r3`, decimal or `0x` hex immediates, or
//! label names (resolved to absolute addresses in pass two).

use std::collections::BTreeMap;

use thiserror::Error;

use super::isa::{disassemble, Instruction, Opcode, INSTR_BYTES};
use crate::layout::MemoryLayout;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: bad operand `{text}`")]
    BadOperand { line: usize, text: String },
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("image of {size} bytes at base {base:#06X} exceeds the prog region")]
    ImageExceedsProg { size: usize, base: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Operand {
    None,
    Value(u16),
    Label(String),
    RegValue(u8, Value),
    RegReg(u8, u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Literal(u16),
    Label(String),
}

struct Line {
    op: Opcode,
    operand: Operand,
}

fn parse_reg(tok: &str) -> Option<u8> {
    let rest = tok.strip_prefix('r').or_else(|| tok.strip_prefix('R'))?;
    let idx: u8 = rest.parse().ok()?;
    (idx <= 3).then_some(idx)
}

fn parse_value(tok: &str) -> Value {
    let lit = if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        u16::from_str_radix(hex, 16).ok()
    } else {
        tok.parse::<u16>().ok()
    };
    match lit {
        Some(v) => Value::Literal(v),
        None => Value::Label(tok.to_string()),
    }
}

/// Assembles `source` at absolute address `base`, returning the image and
/// the label→address map. The image must fit inside the prog region.
pub fn assemble(
    source: &str,
    base: u16,
    layout: &MemoryLayout,
) -> Result<(Vec<u8>, BTreeMap<String, u16>), AsmError> {
    let mut symbols: BTreeMap<String, u16> = BTreeMap::new();
    let mut lines: Vec<Line> = Vec::new();
    let mut addr = base;

    for (idx, raw) in source.lines().enumerate() {
        let number = idx + 1;
        let mut text = raw;
        if let Some(pos) = text.find(';') {
            text = &text[..pos];
        }
        let mut text = text.trim();
        while let Some(colon) = text.find(':') {
            let label = text[..colon].trim();
            if label.is_empty() || label.contains(char::is_whitespace) {
                return Err(AsmError::BadOperand {
                    line: number,
                    text: text.to_string(),
                });
            }
            if symbols.insert(label.to_string(), addr).is_some() {
                return Err(AsmError::DuplicateLabel(label.to_string()));
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }

        let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
            Some((m, r)) => (m, r.trim()),
            None => (text, ""),
        };
        let op = match mnemonic {
            "NOP" => Opcode::Nop,
            "MOVI" => Opcode::Movi,
            "LOAD" => Opcode::Load,
            "STORE" => Opcode::Store,
            "ADD" => Opcode::Add,
            "SUB" => Opcode::Sub,
            "JMP" => Opcode::Jmp,
            "JZ" => Opcode::Jz,
            "CALL" => Opcode::Call,
            "RET" => Opcode::Ret,
            "RETI" => Opcode::Reti,
            "HALT" => Opcode::Halt,
            other => {
                return Err(AsmError::UnknownMnemonic {
                    line: number,
                    mnemonic: other.to_string(),
                })
            }
        };

        let operand = parse_operand(op, rest, number)?;
        lines.push(Line { op, operand });
        addr = addr.wrapping_add(INSTR_BYTES);
    }

    let size = lines.len() * INSTR_BYTES as usize;
    let prog = layout.prog;
    let fits = size <= prog.len()
        && base >= prog.min
        && (size == 0 || base as usize + size - 1 <= prog.max as usize);
    if !fits {
        return Err(AsmError::ImageExceedsProg { size, base });
    }

    let mut image = Vec::with_capacity(size);
    for line in &lines {
        let instr = resolve(line, &symbols)?;
        image.extend_from_slice(&instr.encode());
    }
    Ok((image, symbols))
}

fn parse_operand(op: Opcode, rest: &str, line: usize) -> Result<Operand, AsmError> {
    let bad = || AsmError::BadOperand {
        line,
        text: rest.to_string(),
    };
    let parts: Vec<&str> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    use Opcode::*;
    let operand = match op {
        Nop | Ret | Reti | Halt => {
            if !parts.is_empty() {
                return Err(bad());
            }
            Operand::None
        }
        Jmp | Call => {
            let [tok] = parts[..] else { return Err(bad()) };
            match parse_value(tok) {
                Value::Literal(v) => Operand::Value(v),
                Value::Label(l) => Operand::Label(l),
            }
        }
        Movi | Load | Store | Jz => {
            let [r, v] = parts[..] else { return Err(bad()) };
            let reg = parse_reg(r).ok_or_else(bad)?;
            Operand::RegValue(reg, parse_value(v))
        }
        Add | Sub => {
            let [a, b] = parts[..] else { return Err(bad()) };
            let ra = parse_reg(a).ok_or_else(bad)?;
            let rb = parse_reg(b).ok_or_else(bad)?;
            Operand::RegReg(ra, rb)
        }
    };
    Ok(operand)
}

fn resolve(line: &Line, symbols: &BTreeMap<String, u16>) -> Result<Instruction, AsmError> {
    let lookup = |value: &Value| -> Result<u16, AsmError> {
        match value {
            Value::Literal(v) => Ok(*v),
            Value::Label(name) => symbols
                .get(name)
                .copied()
                .ok_or_else(|| AsmError::UnresolvedLabel(name.clone())),
        }
    };
    let instr = match &line.operand {
        Operand::None => Instruction::new(line.op, 0, 0, 0),
        Operand::Value(v) => Instruction::new(line.op, 0, 0, *v),
        Operand::Label(name) => {
            Instruction::new(line.op, 0, 0, lookup(&Value::Label(name.clone()))?)
        }
        Operand::RegValue(r, v) => Instruction::new(line.op, *r, 0, lookup(v)?),
        Operand::RegReg(a, b) => Instruction::new(line.op, *a, *b, 0),
    };
    Ok(instr)
}

/// Renders an image back to assembler text, one instruction per line.
pub fn disassemble_text(image: &[u8]) -> Result<String, super::isa::DecodeError> {
    let instrs = disassemble(image)?;
    Ok(instrs
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("\n"))
}
