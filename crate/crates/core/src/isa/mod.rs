// SPDX-License-Identifier: Apache-2.0

//! eBPF instruction model.
//!
//! An [`Instruction`] keeps the raw encoding fields (`dst`, `src`, `offset`,
//! `imm`) alongside the decoded operation, so encoding is a pure function of
//! the struct and decoding never loses information. A [`Program`] is an
//! ordered list of instructions whose jump offsets count 8-byte encoding
//! slots; `lddw` occupies two slots.

mod asm;
mod codec;
mod opcodes;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asm::{
    asm_mnemonics, format_asm, format_instruction, mnemonic_for_asm_name, parse_asm, scan_mnemonics,
    AsmError,
};
pub use codec::{decode, encode, DecodeError};
pub use opcodes::{lookup, lookup_opcode, opcode_table, OpcodeEntry, OPCODE_TABLE_VERSION};

/// Size of one encoding slot in bytes.
pub const SLOT_SIZE: usize = 8;

/// Highest valid register index (`r10`, the read-only frame pointer).
pub const MAX_REGISTER: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Register(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid register index {0} (expected 0..=10)")]
pub struct InvalidRegister(pub u32);

impl Register {
    pub const R0: Register = Register(0);
    pub const R1: Register = Register(1);
    pub const R2: Register = Register(2);
    pub const FP: Register = Register(10);

    pub fn new(index: u8) -> Result<Self, InvalidRegister> {
        if index > MAX_REGISTER {
            Err(InvalidRegister(index as u32))
        } else {
            Ok(Register(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Register> {
        (0..=MAX_REGISTER).map(Register)
    }
}

impl TryFrom<u8> for Register {
    type Error = InvalidRegister;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Register::new(value)
    }
}

impl From<Register> for u8 {
    fn from(r: Register) -> u8 {
        r.0
    }
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%r{}", self.0)
    }
}

/// Instruction class, the low three bits of the opcode byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpClass {
    Ld,
    Ldx,
    St,
    Stx,
    Alu,
    Jmp,
    Jmp32,
    Alu64,
}

impl OpClass {
    pub fn bits(self) -> u8 {
        match self {
            OpClass::Ld => 0x00,
            OpClass::Ldx => 0x01,
            OpClass::St => 0x02,
            OpClass::Stx => 0x03,
            OpClass::Alu => 0x04,
            OpClass::Jmp => 0x05,
            OpClass::Jmp32 => 0x06,
            OpClass::Alu64 => 0x07,
        }
    }

    pub fn is_alu(self) -> bool {
        matches!(self, OpClass::Alu | OpClass::Alu64)
    }

    pub fn is_jump(self) -> bool {
        matches!(self, OpClass::Jmp | OpClass::Jmp32)
    }
}

/// Source operand selector: immediate (`K`) or register (`X`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    K,
    X,
}

/// Access width of a load or store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MemSize {
    B,
    H,
    W,
    DW,
}

impl MemSize {
    pub fn bytes(self) -> usize {
        match self {
            MemSize::B => 1,
            MemSize::H => 2,
            MemSize::W => 4,
            MemSize::DW => 8,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            MemSize::W => 0x00,
            MemSize::H => 0x08,
            MemSize::B => 0x10,
            MemSize::DW => 0x18,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            MemSize::B => "b",
            MemSize::H => "h",
            MemSize::W => "w",
            MemSize::DW => "dw",
        }
    }
}

macro_rules! mnemonics {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// The supported instruction set, one entry per ISA operation.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "UPPERCASE")]
        pub enum Mnemonic {
            $($variant),*
        }

        impl Mnemonic {
            pub const ALL: &'static [Mnemonic] = &[$(Mnemonic::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Mnemonic::$variant => $name),*
                }
            }

            /// Case-insensitive lookup by ISA name (`"rsh"`, `"RSH"`).
            pub fn from_name(name: &str) -> Option<Mnemonic> {
                let upper = name.trim().to_ascii_uppercase();
                match upper.as_str() {
                    $($name => Some(Mnemonic::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

mnemonics! {
    Add => "ADD",
    Sub => "SUB",
    Mul => "MUL",
    Div => "DIV",
    Or => "OR",
    And => "AND",
    Lsh => "LSH",
    Rsh => "RSH",
    Neg => "NEG",
    Mod => "MOD",
    Xor => "XOR",
    Mov => "MOV",
    Movsx => "MOVSX",
    Arsh => "ARSH",
    End => "END",
    Ja => "JA",
    Jeq => "JEQ",
    Jgt => "JGT",
    Jge => "JGE",
    Jset => "JSET",
    Jne => "JNE",
    Jsgt => "JSGT",
    Jsge => "JSGE",
    Call => "CALL",
    Exit => "EXIT",
    Jlt => "JLT",
    Jle => "JLE",
    Jslt => "JSLT",
    Jsle => "JSLE",
    Lddw => "LDDW",
    Ldx => "LDX",
    Ldxs => "LDXS",
    St => "ST",
    Stx => "STX",
}

impl Mnemonic {
    /// Conditional jumps: everything in the jump classes except `ja`, `call`
    /// and `exit`.
    pub fn is_conditional_jump(self) -> bool {
        matches!(
            self,
            Mnemonic::Jeq
                | Mnemonic::Jgt
                | Mnemonic::Jge
                | Mnemonic::Jset
                | Mnemonic::Jne
                | Mnemonic::Jsgt
                | Mnemonic::Jsge
                | Mnemonic::Jlt
                | Mnemonic::Jle
                | Mnemonic::Jslt
                | Mnemonic::Jsle
        )
    }

    /// Whether the `offset` field is a jump displacement.
    pub fn is_branch(self) -> bool {
        self == Mnemonic::Ja || self.is_conditional_jump()
    }

    /// Macro token an implementation typically uses for this operation, e.g.
    /// `BPF_RSH`. Used for lexical pre-filtering of source files.
    pub fn opcode_macro(self) -> &'static str {
        use Mnemonic::*;
        match self {
            Add => "BPF_ADD",
            Sub => "BPF_SUB",
            Mul => "BPF_MUL",
            Div => "BPF_DIV",
            Or => "BPF_OR",
            And => "BPF_AND",
            Lsh => "BPF_LSH",
            Rsh => "BPF_RSH",
            Neg => "BPF_NEG",
            Mod => "BPF_MOD",
            Xor => "BPF_XOR",
            Mov => "BPF_MOV",
            Movsx => "BPF_MOVSX",
            Arsh => "BPF_ARSH",
            End => "BPF_END",
            Ja => "BPF_JA",
            Jeq => "BPF_JEQ",
            Jgt => "BPF_JGT",
            Jge => "BPF_JGE",
            Jset => "BPF_JSET",
            Jne => "BPF_JNE",
            Jsgt => "BPF_JSGT",
            Jsge => "BPF_JSGE",
            Call => "BPF_CALL",
            Exit => "BPF_EXIT",
            Jlt => "BPF_JLT",
            Jle => "BPF_JLE",
            Jslt => "BPF_JSLT",
            Jsle => "BPF_JSLE",
            Lddw => "BPF_DW",
            Ldx => "BPF_LDX",
            Ldxs => "BPF_MEMSX",
            St => "BPF_ST",
            Stx => "BPF_STX",
        }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One decoded instruction.
///
/// `imm` is 64 bits wide so `lddw` fits; every other operation stores a
/// sign-extended 32-bit value. For `div`/`mod` an `offset` of 1 selects the
/// signed variant, for `movsx` it is the source width in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub class: OpClass,
    pub op: Mnemonic,
    pub source: Source,
    pub size: Option<MemSize>,
    pub dst: Register,
    pub src: Register,
    pub offset: i16,
    pub imm: i64,
}

impl Instruction {
    /// Build an instruction for an opcode-table entry with all operand
    /// fields zeroed.
    pub fn from_entry(entry: &OpcodeEntry) -> Instruction {
        Instruction {
            class: entry.class,
            op: entry.mnemonic,
            source: entry.source,
            size: entry.size,
            dst: Register::R0,
            src: Register::R0,
            offset: 0,
            imm: 0,
        }
    }

    pub fn exit() -> Instruction {
        Instruction::from_entry(lookup(Mnemonic::Exit, OpClass::Jmp, Source::K, None).unwrap())
    }

    pub fn opcode(&self) -> u8 {
        self.entry().opcode
    }

    pub fn entry(&self) -> &'static OpcodeEntry {
        lookup(self.op, self.class, self.source, self.size)
            .expect("instruction built from a table entry")
    }

    /// Number of 8-byte slots the instruction occupies.
    pub fn slots(&self) -> usize {
        if self.op == Mnemonic::Lddw {
            2
        } else {
            1
        }
    }

    pub fn is_32bit(&self) -> bool {
        matches!(self.class, OpClass::Alu | OpClass::Jmp32)
    }

    /// Registers named by the instruction's assembly form.
    pub fn registers_used(&self) -> Vec<Register> {
        use Mnemonic::*;
        let mut regs = Vec::with_capacity(2);
        match self.op {
            Exit | Call | Ja => {}
            Neg | End | Lddw => regs.push(self.dst),
            St => regs.push(self.dst),
            Ldx | Ldxs | Stx | Movsx => {
                regs.push(self.dst);
                regs.push(self.src);
            }
            _ => {
                regs.push(self.dst);
                if self.source == Source::X {
                    regs.push(self.src);
                }
            }
        }
        regs.dedup();
        regs
    }

    /// `(base, displacement)` of the memory operand, if any.
    pub fn memory_operand(&self) -> Option<(Register, i16)> {
        match self.op {
            Mnemonic::Ldx | Mnemonic::Ldxs => Some((self.src, self.offset)),
            Mnemonic::St | Mnemonic::Stx => Some((self.dst, self.offset)),
            _ => None,
        }
    }

    /// Immediate value written in the assembly form, if any. Widths of
    /// byte-swaps and helper ids are part of the operation, not values.
    pub fn immediate_operand(&self) -> Option<i64> {
        match self.op {
            Mnemonic::Lddw | Mnemonic::St => Some(self.imm),
            Mnemonic::End | Mnemonic::Call | Mnemonic::Exit | Mnemonic::Ja => None,
            Mnemonic::Neg | Mnemonic::Movsx | Mnemonic::Ldx | Mnemonic::Ldxs | Mnemonic::Stx => {
                None
            }
            _ if self.source == Source::K => Some(self.imm),
            _ => None,
        }
    }
}

/// An ordered instruction sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instruction {index} jumps to slot {target}, outside [0, {slots}] or into an lddw pair")]
pub struct JumpOutOfRange {
    pub index: usize,
    pub target: i64,
    pub slots: usize,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Program {
        Program { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Total number of encoding slots.
    pub fn slot_count(&self) -> usize {
        self.instructions.iter().map(Instruction::slots).sum()
    }

    /// Slot index at which each instruction starts.
    pub fn slot_starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.instructions
            .iter()
            .map(|insn| {
                let start = acc;
                acc += insn.slots();
                start
            })
            .collect()
    }

    /// Checks that every branch lands on an instruction boundary within
    /// `[0, slot_count]`.
    pub fn check_jumps(&self) -> Result<(), JumpOutOfRange> {
        let starts = self.slot_starts();
        let slots = self.slot_count();
        for (index, insn) in self.instructions.iter().enumerate() {
            if !insn.op.is_branch() {
                continue;
            }
            let target = starts[index] as i64 + 1 + insn.offset as i64;
            let on_boundary = target == slots as i64
                || (target >= 0 && starts.binary_search(&(target as usize)).is_ok());
            if !on_boundary {
                return Err(JumpOutOfRange {
                    index,
                    target,
                    slots,
                });
            }
        }
        Ok(())
    }

    pub fn has_exit(&self) -> bool {
        self.instructions.iter().any(|i| i.op == Mnemonic::Exit)
    }

    /// Distinct mnemonics in first-occurrence order.
    pub fn mnemonics(&self) -> Vec<Mnemonic> {
        let mut seen = Vec::new();
        for insn in &self.instructions {
            if !seen.contains(&insn.op) {
                seen.push(insn.op);
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_bounds() {
        assert!(Register::new(10).is_ok());
        assert_eq!(Register::new(11), Err(InvalidRegister(11)));
        assert_eq!(Register::all().count(), 11);
    }

    #[test]
    fn thirty_four_mnemonics() {
        assert_eq!(Mnemonic::ALL.len(), 34);
        for m in Mnemonic::ALL {
            assert_eq!(Mnemonic::from_name(&m.name().to_lowercase()), Some(*m));
        }
        assert_eq!(Mnemonic::from_name("SHR"), None);
    }

    #[test]
    fn registers_used_follow_operand_form() {
        let prog = parse_asm("ldxw %r0, [%r1]\nexit").unwrap();
        assert_eq!(prog.instructions[0].registers_used(), vec![Register::R0, Register::R1]);
        assert!(prog.instructions[1].registers_used().is_empty());
        let prog = parse_asm("mov %r0, 5").unwrap();
        assert_eq!(prog.instructions[0].registers_used(), vec![Register::R0]);
        assert_eq!(prog.instructions[0].immediate_operand(), Some(5));
    }

    #[test]
    fn jump_check_counts_lddw_slots() {
        // ja over the two-slot lddw lands on exit.
        let prog = parse_asm("ja +2\nlddw %r0, 1\nexit").unwrap();
        assert!(prog.check_jumps().is_ok());
        let mut bad = prog.clone();
        bad.instructions[0].offset = 1;
        assert!(bad.check_jumps().is_err());
    }
}
