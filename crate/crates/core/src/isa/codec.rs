// SPDX-License-Identifier: Apache-2.0

//! Binary encoding: little-endian 8-byte slots laid out as
//! `op:8 | src:4 dst:4 | offset:16 | imm:32`. The second slot of `lddw`
//! carries the upper 32 bits of the immediate and is otherwise zero.

use thiserror::Error;

use super::{lookup_opcode, Instruction, Mnemonic, Program, Register, SLOT_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input length {0} is not a multiple of 8")]
    TruncatedInput(usize),
    #[error("unknown opcode {byte:#04x} at slot {position}")]
    UnknownOpcode { byte: u8, position: usize },
    #[error("malformed lddw pair at slot {0}")]
    MalformedLddwPair(usize),
    #[error("register {index} out of range at slot {position}")]
    BadRegister { index: u8, position: usize },
}

fn put_slot(out: &mut Vec<u8>, opcode: u8, dst: u8, src: u8, offset: i16, imm: i32) {
    out.push(opcode);
    out.push((src << 4) | (dst & 0x0f));
    out.extend_from_slice(&offset.to_le_bytes());
    out.extend_from_slice(&imm.to_le_bytes());
}

pub fn encode(program: &Program) -> Vec<u8> {
    let mut out = Vec::with_capacity(program.slot_count() * SLOT_SIZE);
    for insn in &program.instructions {
        let dst = insn.dst.index();
        let src = insn.src.index();
        if insn.op == Mnemonic::Lddw {
            let bits = insn.imm as u64;
            put_slot(&mut out, insn.opcode(), dst, src, insn.offset, bits as u32 as i32);
            put_slot(&mut out, 0, 0, 0, 0, (bits >> 32) as u32 as i32);
        } else {
            put_slot(&mut out, insn.opcode(), dst, src, insn.offset, insn.imm as i32);
        }
    }
    out
}

struct RawSlot {
    opcode: u8,
    dst: u8,
    src: u8,
    offset: i16,
    imm: i32,
}

fn read_slot(bytes: &[u8]) -> RawSlot {
    RawSlot {
        opcode: bytes[0],
        dst: bytes[1] & 0x0f,
        src: bytes[1] >> 4,
        offset: i16::from_le_bytes([bytes[2], bytes[3]]),
        imm: i32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
    }
}

fn register(index: u8, position: usize) -> Result<Register, DecodeError> {
    Register::new(index).map_err(|_| DecodeError::BadRegister { index, position })
}

pub fn decode(bytes: &[u8]) -> Result<Program, DecodeError> {
    if bytes.len() % SLOT_SIZE != 0 {
        return Err(DecodeError::TruncatedInput(bytes.len()));
    }
    let slots: Vec<RawSlot> = bytes.chunks_exact(SLOT_SIZE).map(read_slot).collect();
    let mut instructions = Vec::with_capacity(slots.len());
    let mut position = 0;
    while position < slots.len() {
        let raw = &slots[position];
        let entry = lookup_opcode(raw.opcode, raw.offset).ok_or(DecodeError::UnknownOpcode {
            byte: raw.opcode,
            position,
        })?;
        let mut insn = Instruction::from_entry(entry);
        insn.dst = register(raw.dst, position)?;
        insn.src = register(raw.src, position)?;
        insn.offset = raw.offset;
        insn.imm = raw.imm as i64;
        if entry.mnemonic == Mnemonic::Lddw {
            let high = slots
                .get(position + 1)
                .ok_or(DecodeError::MalformedLddwPair(position))?;
            if high.opcode != 0 || high.dst != 0 || high.src != 0 || high.offset != 0 {
                return Err(DecodeError::MalformedLddwPair(position));
            }
            insn.imm = ((high.imm as u32 as u64) << 32 | raw.imm as u32 as u64) as i64;
            position += 2;
        } else {
            position += 1;
        }
        instructions.push(insn);
    }
    Ok(Program::new(instructions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_asm;

    #[test]
    fn exit_encodes_to_single_slot() {
        let bytes = encode(&parse_asm("exit").unwrap());
        assert_eq!(bytes, vec![0x95, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn field_layout() {
        let bytes = encode(&parse_asm("stxh [%r1-2], %r7").unwrap());
        assert_eq!(bytes, vec![0x6b, 0x71, 0xfe, 0xff, 0, 0, 0, 0]);
        let bytes = encode(&parse_asm("mov32 %r3, -1").unwrap());
        assert_eq!(bytes, vec![0xb4, 0x03, 0, 0, 0xff, 0xff, 0xff, 0xff]);
    }

    #[test]
    fn lddw_splits_immediate() {
        let prog = parse_asm("lddw %r2, 0x1122334455667788").unwrap();
        let bytes = encode(&prog);
        assert_eq!(
            bytes,
            vec![
                0x18, 0x02, 0, 0, 0x88, 0x77, 0x66, 0x55, //
                0, 0, 0, 0, 0x44, 0x33, 0x22, 0x11
            ]
        );
        assert_eq!(decode(&bytes).unwrap(), prog);
    }

    #[test]
    fn decode_empty() {
        assert_eq!(decode(&[]).unwrap(), Program::default());
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode(&[0x95, 0, 0]), Err(DecodeError::TruncatedInput(3)));
        assert_eq!(
            decode(&[0x95, 0, 0, 0, 0, 0, 0, 0, 0xff, 0, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::UnknownOpcode { byte: 0xff, position: 1 })
        );
        assert_eq!(
            decode(&[0x18, 0, 0, 0, 1, 0, 0, 0]),
            Err(DecodeError::MalformedLddwPair(0))
        );
        assert_eq!(
            decode(&[0x18, 0, 0, 0, 1, 0, 0, 0, 0x95, 0, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::MalformedLddwPair(0))
        );
        assert_eq!(
            decode(&[0xb7, 0x0b, 0, 0, 0, 0, 0, 0]),
            Err(DecodeError::BadRegister { index: 11, position: 0 })
        );
    }

    #[test]
    fn every_unassigned_byte_is_reported() {
        let known: std::collections::HashSet<u8> =
            crate::isa::opcode_table().iter().map(|e| e.opcode).collect();
        for byte in 0..=255u8 {
            if known.contains(&byte) {
                continue;
            }
            let err = decode(&[byte, 0, 0, 0, 0, 0, 0, 0]).unwrap_err();
            assert_eq!(err, DecodeError::UnknownOpcode { byte, position: 0 });
        }
    }
}
