// SPDX-License-Identifier: Apache-2.0

//! Profile-parameterised eBPF interpreter.
//!
//! Entry state follows the conformance-suite convention: `r1` points at the
//! input memory, `r2` holds its length and `r10` points one past the top of a
//! 512-byte zeroed stack. All other registers start uninitialised and read
//! according to the profile's [`UninitPolicy`].

use crate::isa::{Instruction, MemSize, Mnemonic, OpClass, Program, Source};

use super::profile::{FramePointerPolicy, SemanticsProfile, ShiftImmPolicy, UninitPolicy};
use super::ExecutionResponse;

/// Virtual address of the first input-memory byte.
pub const INPUT_BASE: u64 = 0x1_0000_0000;
/// Virtual address of the lowest stack byte.
pub const STACK_BASE: u64 = 0x2_0000_0000;
pub const STACK_SIZE: usize = 512;
/// Code carried by every interpreter runtime error.
pub const ERROR_CODE: i32 = 1;

/// Stable leading phrases of interpreter error messages.
const ERROR_CLASSES: &[&str] = &[
    "use of uninitialized register",
    "write to read-only register",
    "out-of-bounds memory access",
    "shift immediate",
    "invalid",
    "jump",
    "execution ran past the end",
];

/// Coarse class of an interpreter error message, suitable as an expected
/// `-- error` text: it is a substring of every message in the class.
pub fn error_class(message: &str) -> &str {
    ERROR_CLASSES
        .iter()
        .find(|c| message.starts_with(*c))
        .copied()
        .unwrap_or(message)
}

const FP: usize = 10;
const HELPER_CLOBBERED: std::ops::RangeInclusive<usize> = 1..=5;

enum Stop {
    Error(String),
    Unsupported(String),
    Timeout,
}

type Step<T> = Result<T, Stop>;

fn fail<T>(msg: impl Into<String>) -> Step<T> {
    Err(Stop::Error(msg.into()))
}

struct Machine<'a> {
    profile: &'a SemanticsProfile,
    regs: [u64; 11],
    init: [bool; 11],
    input: Vec<u8>,
    stack: [u8; STACK_SIZE],
}

impl Machine<'_> {
    fn read(&self, r: usize) -> Step<u64> {
        if self.init[r] {
            return Ok(self.regs[r]);
        }
        match self.profile.uninitialized_register_policy {
            UninitPolicy::ZeroInit => Ok(0),
            UninitPolicy::Sentinel(v) => Ok(v),
            UninitPolicy::RejectUse => fail(format!("use of uninitialized register r{r}")),
        }
    }

    fn write(&mut self, r: usize, value: u64) -> Step<()> {
        if r == FP && self.profile.frame_pointer_write_policy == FramePointerPolicy::Reject {
            return fail("write to read-only register r10");
        }
        self.regs[r] = value;
        self.init[r] = true;
        Ok(())
    }

    fn region(&mut self, addr: u64, len: usize) -> Step<&mut [u8]> {
        let end = addr.checked_add(len as u64);
        let within = |base: u64, size: usize| {
            addr >= base && end.is_some_and(|e| e <= base + size as u64)
        };
        if within(INPUT_BASE, self.input.len()) {
            let start = (addr - INPUT_BASE) as usize;
            Ok(&mut self.input[start..start + len])
        } else if within(STACK_BASE, STACK_SIZE) {
            let start = (addr - STACK_BASE) as usize;
            Ok(&mut self.stack[start..start + len])
        } else {
            fail(format!("out-of-bounds memory access of {len} bytes at {addr:#x}"))
        }
    }

    fn load(&mut self, addr: u64, size: MemSize) -> Step<u64> {
        let bytes = self.region(addr, size.bytes())?;
        let mut buf = [0u8; 8];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(u64::from_le_bytes(buf))
    }

    fn store(&mut self, addr: u64, size: MemSize, value: u64) -> Step<()> {
        let n = size.bytes();
        let bytes = self.region(addr, n)?;
        bytes.copy_from_slice(&value.to_le_bytes()[..n]);
        Ok(())
    }
}

fn size_mask(size: MemSize) -> u64 {
    match size {
        MemSize::DW => u64::MAX,
        s => (1u64 << (s.bytes() * 8)) - 1,
    }
}

fn sign_extend(value: u64, bits: u32) -> u64 {
    let shift = 64 - bits;
    (((value << shift) as i64) >> shift) as u64
}

fn shift_amount(profile: &SemanticsProfile, insn: &Instruction, raw: u64, width: u32) -> Step<u32> {
    if insn.source == Source::K
        && profile.shift_imm_policy == ShiftImmPolicy::RejectOverWidth
        && !(0..width as i64).contains(&insn.imm)
    {
        return fail(format!("shift immediate {} out of range", insn.imm));
    }
    Ok((raw & (width as u64 - 1)) as u32)
}

fn alu(m: &mut Machine<'_>, insn: &Instruction) -> Step<()> {
    let is64 = insn.class == OpClass::Alu64;
    let width: u32 = if is64 { 64 } else { 32 };
    let dst = insn.dst.index() as usize;
    let src_value = || -> Step<u64> {
        match insn.source {
            Source::K => Ok(insn.imm as u64),
            Source::X => m.read(insn.src.index() as usize),
        }
    };
    let trunc = |v: u64| if is64 { v } else { v & 0xffff_ffff };

    let result = match insn.op {
        Mnemonic::Mov => trunc(src_value()?),
        Mnemonic::Movsx => {
            let bits = match insn.offset {
                8 | 16 => insn.offset as u32,
                32 if is64 => 32,
                o => return fail(format!("invalid movsx width {o}")),
            };
            trunc(sign_extend(m.read(insn.src.index() as usize)?, bits))
        }
        Mnemonic::End => {
            let bits = match insn.imm {
                16 | 32 | 64 => insn.imm as u32,
                w => return fail(format!("invalid byte-swap width {w}")),
            };
            let v = m.read(dst)?;
            let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
            let swap = !(insn.class == OpClass::Alu && insn.source == Source::K);
            if swap {
                v.swap_bytes() >> (64 - bits)
            } else {
                v & mask
            }
        }
        Mnemonic::Neg => trunc(m.read(dst)?.wrapping_neg()),
        op => {
            let a = trunc(m.read(dst)?);
            let b = trunc(src_value()?);
            let signed = insn.offset == 1;
            if matches!(op, Mnemonic::Div | Mnemonic::Mod) && insn.offset > 1 {
                return fail(format!("invalid {} offset {}", op, insn.offset));
            }
            let sa = |v: u64| if is64 { v as i64 } else { v as u32 as i32 as i64 };
            match op {
                Mnemonic::Add => trunc(a.wrapping_add(b)),
                Mnemonic::Sub => trunc(a.wrapping_sub(b)),
                Mnemonic::Mul => trunc(a.wrapping_mul(b)),
                Mnemonic::Or => a | b,
                Mnemonic::And => a & b,
                Mnemonic::Xor => a ^ b,
                Mnemonic::Div if b == 0 => 0,
                Mnemonic::Div if signed && is64 => (sa(a).wrapping_div(sa(b))) as u64,
                Mnemonic::Div if signed => trunc((sa(a) as i32).wrapping_div(sa(b) as i32) as u32 as u64),
                Mnemonic::Div => a / b,
                Mnemonic::Mod if b == 0 => a,
                Mnemonic::Mod if signed && is64 => (sa(a).wrapping_rem(sa(b))) as u64,
                Mnemonic::Mod if signed => trunc((sa(a) as i32).wrapping_rem(sa(b) as i32) as u32 as u64),
                Mnemonic::Mod => a % b,
                Mnemonic::Lsh => trunc(a << shift_amount(m.profile, insn, b, width)?),
                Mnemonic::Rsh => {
                    let n = shift_amount(m.profile, insn, b, width)?;
                    if n == 0 && m.profile.rsh_zero_shift_bug {
                        0
                    } else {
                        a >> n
                    }
                }
                Mnemonic::Arsh => {
                    let n = shift_amount(m.profile, insn, b, width)?;
                    trunc((sa(a) >> n) as u64)
                }
                other => return fail(format!("{other} is not an ALU operation")),
            }
        }
    };
    m.write(dst, result)
}

fn condition(m: &Machine<'_>, insn: &Instruction) -> Step<bool> {
    let is32 = insn.class == OpClass::Jmp32;
    let a = m.read(insn.dst.index() as usize)?;
    let b = match insn.source {
        Source::K => insn.imm as u64,
        Source::X => m.read(insn.src.index() as usize)?,
    };
    let (ua, ub, sa, sb) = if is32 {
        let (x, y) = (a as u32, b as u32);
        (x as u64, y as u64, x as i32 as i64, y as i32 as i64)
    } else {
        (a, b, a as i64, b as i64)
    };
    Ok(match insn.op {
        Mnemonic::Jeq => ua == ub,
        Mnemonic::Jne => ua != ub,
        Mnemonic::Jgt => ua > ub,
        Mnemonic::Jge => ua >= ub,
        Mnemonic::Jlt => ua < ub,
        Mnemonic::Jle => ua <= ub,
        Mnemonic::Jset => ua & ub != 0,
        Mnemonic::Jsgt => sa > sb,
        Mnemonic::Jsge => sa >= sb,
        Mnemonic::Jslt => sa < sb,
        Mnemonic::Jsle => sa <= sb,
        other => return fail(format!("{other} is not a conditional jump")),
    })
}

/// Run `program` on `mem` under `profile`. Pure: the input is copied.
pub fn interpret(program: &Program, mem: &[u8], profile: &SemanticsProfile) -> ExecutionResponse {
    if program.is_empty() {
        return ExecutionResponse::Unsupported("empty program".into());
    }
    let starts = program.slot_starts();
    let slots = program.slot_count();
    let mut slot_to_index = vec![None; slots];
    for (i, &s) in starts.iter().enumerate() {
        slot_to_index[s] = Some(i);
    }

    let mut m = Machine {
        profile,
        regs: [0; 11],
        init: [false; 11],
        input: mem.to_vec(),
        stack: [0; STACK_SIZE],
    };
    m.regs[1] = INPUT_BASE;
    m.regs[2] = mem.len() as u64;
    m.regs[FP] = STACK_BASE + STACK_SIZE as u64;
    for r in [1, 2, FP] {
        m.init[r] = true;
    }

    match run(&mut m, program, &starts, &slot_to_index) {
        Ok(v) => ExecutionResponse::Returned(v),
        Err(Stop::Error(msg)) => ExecutionResponse::RuntimeError {
            code: ERROR_CODE,
            message: msg,
        },
        Err(Stop::Unsupported(reason)) => ExecutionResponse::Unsupported(reason),
        Err(Stop::Timeout) => ExecutionResponse::Timeout,
    }
}

fn run(
    m: &mut Machine<'_>,
    program: &Program,
    starts: &[usize],
    slot_to_index: &[Option<usize>],
) -> Step<u64> {
    let mut pc: usize = 0;
    let mut steps: u64 = 0;
    loop {
        if steps >= m.profile.step_limit {
            return Err(Stop::Timeout);
        }
        steps += 1;
        let index = match slot_to_index.get(pc) {
            Some(Some(i)) => *i,
            Some(None) => return fail(format!("jump into the middle of lddw at slot {pc}")),
            None => return fail("execution ran past the end of the program"),
        };
        let insn = &program.instructions[index];
        let mut next = starts[index] + insn.slots();
        let jump_to = |off: i16, short: bool| -> Step<usize> {
            let base = starts[index] as i64 + if short { 0 } else { 1 };
            let target = base + off as i64;
            if target < 0 {
                return fail(format!("jump to negative slot {target}"));
            }
            Ok(target as usize)
        };

        match insn.class {
            OpClass::Alu | OpClass::Alu64 => alu(m, insn)?,
            OpClass::Jmp | OpClass::Jmp32 => match insn.op {
                Mnemonic::Exit => return m.read(0),
                Mnemonic::Ja => next = jump_to(insn.offset, false)?,
                Mnemonic::Call => {
                    if insn.src.index() != 0 {
                        return Err(Stop::Unsupported("calls to local functions".into()));
                    }
                    let id = insn.imm as i32;
                    if !m.profile.supported_helpers.contains(&id) {
                        return Err(Stop::Unsupported(format!("helper function {id}")));
                    }
                    m.write(0, 0)?;
                    for r in HELPER_CLOBBERED {
                        m.init[r] = false;
                    }
                }
                _ => {
                    if condition(m, insn)? {
                        next = jump_to(insn.offset, m.profile.jump_offset_bug)?;
                    }
                }
            },
            OpClass::Ld => {
                if insn.src.index() != 0 {
                    return Err(Stop::Unsupported("lddw with a pseudo source".into()));
                }
                m.write(insn.dst.index() as usize, insn.imm as u64)?;
            }
            OpClass::Ldx => {
                let size = insn.size.expect("loads carry a size");
                let addr = m.read(insn.src.index() as usize)?.wrapping_add(insn.offset as i64 as u64);
                let loaded = m.load(addr, size)?;
                let dst = insn.dst.index() as usize;
                let value = if insn.op == Mnemonic::Ldxs {
                    sign_extend(loaded, (size.bytes() * 8) as u32)
                } else if m.profile.narrow_load_leaks_upper && size != MemSize::DW {
                    (m.read(dst)? & !size_mask(size)) | loaded
                } else {
                    loaded
                };
                m.write(dst, value)?;
            }
            OpClass::St | OpClass::Stx => {
                let size = insn.size.expect("stores carry a size");
                let addr = m.read(insn.dst.index() as usize)?.wrapping_add(insn.offset as i64 as u64);
                let value = if insn.class == OpClass::St {
                    insn.imm as u64
                } else {
                    m.read(insn.src.index() as usize)?
                };
                m.store(addr, size, value)?;
            }
        }
        pc = next;
    }
}
