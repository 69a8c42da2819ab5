// SPDX-License-Identifier: Apache-2.0

//! Versioned opcode table.
//!
//! Covers the non-atomic eBPF ISA: 15 ALU operations (including `movsx` and
//! the byte-swap `end`), 14 jump operations (including `call` and `exit`),
//! and 5 load/store forms (`lddw`, `ldx`, sign-extending `ldxs`, `st`,
//! `stx`). Signed division and modulo share the `div`/`mod` opcode and are
//! selected by `offset = 1`, exactly as in the encoding.

use std::sync::OnceLock;

use super::{MemSize, Mnemonic, OpClass, Source};

/// Bumped whenever an entry is added, removed or renumbered.
pub const OPCODE_TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpcodeEntry {
    pub opcode: u8,
    pub mnemonic: Mnemonic,
    pub class: OpClass,
    pub source: Source,
    pub size: Option<MemSize>,
}

const ALU_CODES: &[(Mnemonic, u8)] = &[
    (Mnemonic::Add, 0x00),
    (Mnemonic::Sub, 0x10),
    (Mnemonic::Mul, 0x20),
    (Mnemonic::Div, 0x30),
    (Mnemonic::Or, 0x40),
    (Mnemonic::And, 0x50),
    (Mnemonic::Lsh, 0x60),
    (Mnemonic::Rsh, 0x70),
    (Mnemonic::Mod, 0x90),
    (Mnemonic::Xor, 0xa0),
    (Mnemonic::Mov, 0xb0),
    (Mnemonic::Arsh, 0xc0),
];

const COND_JUMP_CODES: &[(Mnemonic, u8)] = &[
    (Mnemonic::Jeq, 0x10),
    (Mnemonic::Jgt, 0x20),
    (Mnemonic::Jge, 0x30),
    (Mnemonic::Jset, 0x40),
    (Mnemonic::Jne, 0x50),
    (Mnemonic::Jsgt, 0x60),
    (Mnemonic::Jsge, 0x70),
    (Mnemonic::Jlt, 0xa0),
    (Mnemonic::Jle, 0xb0),
    (Mnemonic::Jslt, 0xc0),
    (Mnemonic::Jsle, 0xd0),
];

const NEG: u8 = 0x80;
const END: u8 = 0xd0;
const MOV: u8 = 0xb0;
const JA: u8 = 0x00;
const CALL: u8 = 0x80;
const EXIT: u8 = 0x90;
const SRC_X: u8 = 0x08;
const MODE_IMM: u8 = 0x00;
const MODE_MEM: u8 = 0x60;
const MODE_MEMSX: u8 = 0x80;

fn source_bits(source: Source) -> u8 {
    match source {
        Source::K => 0,
        Source::X => SRC_X,
    }
}

fn build() -> Vec<OpcodeEntry> {
    let mut table = Vec::new();
    let mut push = |opcode, mnemonic, class, source, size| {
        table.push(OpcodeEntry {
            opcode,
            mnemonic,
            class,
            source,
            size,
        })
    };

    for class in [OpClass::Alu, OpClass::Alu64] {
        for &(mnemonic, code) in ALU_CODES {
            for source in [Source::K, Source::X] {
                push(code | source_bits(source) | class.bits(), mnemonic, class, source, None);
            }
        }
        push(NEG | class.bits(), Mnemonic::Neg, class, Source::K, None);
        push(MOV | SRC_X | class.bits(), Mnemonic::Movsx, class, Source::X, None);
    }
    // Byte swaps: ALU/K is to-little-endian, ALU/X to-big-endian, ALU64/K an
    // unconditional swap.
    push(END | OpClass::Alu.bits(), Mnemonic::End, OpClass::Alu, Source::K, None);
    push(END | SRC_X | OpClass::Alu.bits(), Mnemonic::End, OpClass::Alu, Source::X, None);
    push(END | OpClass::Alu64.bits(), Mnemonic::End, OpClass::Alu64, Source::K, None);

    for class in [OpClass::Jmp, OpClass::Jmp32] {
        for &(mnemonic, code) in COND_JUMP_CODES {
            for source in [Source::K, Source::X] {
                push(code | source_bits(source) | class.bits(), mnemonic, class, source, None);
            }
        }
    }
    push(JA | OpClass::Jmp.bits(), Mnemonic::Ja, OpClass::Jmp, Source::K, None);
    push(CALL | OpClass::Jmp.bits(), Mnemonic::Call, OpClass::Jmp, Source::K, None);
    push(EXIT | OpClass::Jmp.bits(), Mnemonic::Exit, OpClass::Jmp, Source::K, None);

    push(
        MODE_IMM | MemSize::DW.bits() | OpClass::Ld.bits(),
        Mnemonic::Lddw,
        OpClass::Ld,
        Source::K,
        Some(MemSize::DW),
    );
    for size in [MemSize::W, MemSize::H, MemSize::B, MemSize::DW] {
        push(MODE_MEM | size.bits() | OpClass::Ldx.bits(), Mnemonic::Ldx, OpClass::Ldx, Source::X, Some(size));
        push(MODE_MEM | size.bits() | OpClass::St.bits(), Mnemonic::St, OpClass::St, Source::K, Some(size));
        push(MODE_MEM | size.bits() | OpClass::Stx.bits(), Mnemonic::Stx, OpClass::Stx, Source::X, Some(size));
    }
    for size in [MemSize::W, MemSize::H, MemSize::B] {
        push(MODE_MEMSX | size.bits() | OpClass::Ldx.bits(), Mnemonic::Ldxs, OpClass::Ldx, Source::X, Some(size));
    }
    table
}

pub fn opcode_table() -> &'static [OpcodeEntry] {
    static TABLE: OnceLock<Vec<OpcodeEntry>> = OnceLock::new();
    TABLE.get_or_init(build)
}

pub fn lookup(
    mnemonic: Mnemonic,
    class: OpClass,
    source: Source,
    size: Option<MemSize>,
) -> Option<&'static OpcodeEntry> {
    opcode_table().iter().find(|e| {
        e.mnemonic == mnemonic && e.class == class && e.source == source && e.size == size
    })
}

/// Resolve an opcode byte. `mov` and `movsx` share a byte and are told apart
/// by the offset field.
pub fn lookup_opcode(opcode: u8, offset: i16) -> Option<&'static OpcodeEntry> {
    let mut hits = opcode_table().iter().filter(|e| e.opcode == opcode);
    let first = hits.next()?;
    match hits.next() {
        None => Some(first),
        Some(second) => {
            let (mov, movsx) = if first.mnemonic == Mnemonic::Mov {
                (first, second)
            } else {
                (second, first)
            };
            Some(if offset == 0 { mov } else { movsx })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn every_mnemonic_has_an_entry() {
        for m in Mnemonic::ALL {
            assert!(
                opcode_table().iter().any(|e| e.mnemonic == *m),
                "{m} missing from opcode table"
            );
        }
    }

    #[test]
    fn entries_are_unique_per_class_source_and_size() {
        let mut seen = HashSet::new();
        for e in opcode_table() {
            assert!(seen.insert((e.mnemonic, e.class, e.source, e.size)), "{e:?}");
        }
    }

    #[test]
    fn only_mov_and_movsx_share_opcodes() {
        let mut by_byte = std::collections::HashMap::<u8, Vec<Mnemonic>>::new();
        for e in opcode_table() {
            by_byte.entry(e.opcode).or_default().push(e.mnemonic);
        }
        for (byte, ms) in by_byte {
            if ms.len() > 1 {
                assert_eq!(ms.len(), 2, "{byte:#x}");
                assert!(ms.contains(&Mnemonic::Mov) && ms.contains(&Mnemonic::Movsx));
            }
        }
    }

    #[test]
    fn well_known_opcodes() {
        let op = |m, c, s, z| lookup(m, c, s, z).unwrap().opcode;
        assert_eq!(op(Mnemonic::Exit, OpClass::Jmp, Source::K, None), 0x95);
        assert_eq!(op(Mnemonic::Mov, OpClass::Alu64, Source::K, None), 0xb7);
        assert_eq!(op(Mnemonic::Rsh, OpClass::Alu64, Source::K, None), 0x77);
        assert_eq!(op(Mnemonic::Rsh, OpClass::Alu, Source::X, None), 0x7c);
        assert_eq!(op(Mnemonic::Jset, OpClass::Jmp, Source::X, None), 0x4d);
        assert_eq!(op(Mnemonic::Lddw, OpClass::Ld, Source::K, Some(MemSize::DW)), 0x18);
        assert_eq!(op(Mnemonic::Ldx, OpClass::Ldx, Source::X, Some(MemSize::W)), 0x61);
        assert_eq!(op(Mnemonic::Ldxs, OpClass::Ldx, Source::X, Some(MemSize::B)), 0x91);
        assert_eq!(op(Mnemonic::St, OpClass::St, Source::K, Some(MemSize::DW)), 0x7a);
        assert_eq!(op(Mnemonic::Stx, OpClass::Stx, Source::X, Some(MemSize::H)), 0x6b);
        assert_eq!(op(Mnemonic::Call, OpClass::Jmp, Source::K, None), 0x85);
        assert_eq!(op(Mnemonic::End, OpClass::Alu, Source::X, None), 0xdc);
        assert_eq!(op(Mnemonic::End, OpClass::Alu64, Source::K, None), 0xd7);
    }

    #[test]
    fn movsx_selected_by_offset() {
        assert_eq!(lookup_opcode(0xbf, 0).unwrap().mnemonic, Mnemonic::Mov);
        assert_eq!(lookup_opcode(0xbf, 16).unwrap().mnemonic, Mnemonic::Movsx);
        assert!(lookup_opcode(0xff, 0).is_none());
    }
}
