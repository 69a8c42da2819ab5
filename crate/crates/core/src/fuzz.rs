// SPDX-License-Identifier: Apache-2.0

//! Grammar-aware random program generator.
//!
//! Programs are drawn from the opcode table with ChaCha8 seeded from a `u64`,
//! so a corpus depends only on `(seed, count, max_len)` and
//! [`OPCODE_TABLE_VERSION`](crate::isa::OPCODE_TABLE_VERSION). Expected values
//! come from the reference interpreter.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::corpus::{Corpus, Expectation, Provenance, TestCase};
use crate::isa::{format_asm, opcode_table, Instruction, Mnemonic, OpClass, Program, Register, Source};
use crate::runtime::{error_class, interpret, ExecutionResponse, SemanticsProfile};

pub const DEFAULT_MAX_LEN: usize = 8;

/// Longest input memory attached to a fuzzed test.
pub const MAX_MEM_BYTES: usize = 32;

/// Immediates that sit on interesting edges: zero, shift widths, sign
/// boundaries.
const BOUNDARY_IMMS: &[i64] = &[
    0,
    1,
    -1,
    7,
    8,
    15,
    16,
    31,
    32,
    33,
    63,
    64,
    i32::MAX as i64,
    i32::MIN as i64,
    0x7fff,
    -0x8000,
];

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn new(seed: u64) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `0..n` by rejection, so results do not depend on any
    /// library's range-sampling algorithm.
    fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.below(items.len() as u64) as usize]
    }

    fn register(&mut self) -> Register {
        Register::new(self.below(11) as u8).expect("in range")
    }

    fn imm32(&mut self) -> i64 {
        if self.below(4) == 0 {
            self.pick(BOUNDARY_IMMS)
        } else {
            self.rng.next_u32() as i32 as i64
        }
    }

    fn mem_offset(&mut self) -> i16 {
        if self.below(4) == 0 {
            self.rng.next_u32() as u16 as i16
        } else {
            self.below(33) as i16 - 16
        }
    }
}

fn random_instruction(g: &mut Gen) -> Instruction {
    let table = opcode_table();
    let entry = loop {
        let e = g.pick(table);
        if e.mnemonic != Mnemonic::Exit {
            break e;
        }
    };
    let mut insn = Instruction::from_entry(&entry);
    insn.dst = g.register();
    insn.src = g.register();
    match insn.op {
        Mnemonic::Lddw => insn.imm = g.rng.next_u64() as i64,
        Mnemonic::End => insn.imm = g.pick(&[16, 32, 64]),
        Mnemonic::Call => insn.imm = 1 + g.below(5) as i64,
        Mnemonic::Movsx => {
            insn.offset = if insn.class == OpClass::Alu64 {
                g.pick(&[8, 16, 32])
            } else {
                g.pick(&[8, 16])
            }
        }
        Mnemonic::Div | Mnemonic::Mod => {
            insn.offset = g.below(2) as i16;
            insn.imm = g.imm32();
        }
        Mnemonic::Ldx | Mnemonic::Ldxs | Mnemonic::Stx => insn.offset = g.mem_offset(),
        Mnemonic::Ja => {}
        Mnemonic::St => {
            insn.offset = g.mem_offset();
            insn.imm = g.imm32();
        }
        _ => insn.imm = g.imm32(),
    }
    // Fields the assembly form cannot express stay zero.
    if insn.source == Source::K {
        insn.src = Register::R0;
    } else if insn.op != Mnemonic::End {
        insn.imm = 0;
    }
    match insn.op {
        Mnemonic::Ja => {
            insn.dst = Register::R0;
            insn.imm = 0;
        }
        Mnemonic::Call => insn.dst = Register::R0,
        Mnemonic::Neg => insn.imm = 0,
        _ => {}
    }
    insn
}

/// Point every branch at a forward instruction boundary or the end.
fn assign_jumps(g: &mut Gen, program: &mut Program) {
    let starts = program.slot_starts();
    let total = program.slot_count();
    for (i, insn) in program.instructions.iter_mut().enumerate() {
        if !insn.op.is_branch() {
            continue;
        }
        let next = starts[i] + 1;
        let mut targets: Vec<usize> = starts[i + 1..].to_vec();
        targets.push(total);
        let target = g.pick(&targets);
        insn.offset = (target - next) as i16;
    }
}

/// Random program of `1..=max_len` instructions followed by `exit`.
fn program(g: &mut Gen, max_len: usize) -> Program {
    let n = 1 + g.below(max_len.max(1) as u64) as usize;
    let mut insns: Vec<Instruction> = (0..n).map(|_| random_instruction(g)).collect();
    insns.push(Instruction::exit());
    let mut p = Program::new(insns);
    assign_jumps(g, &mut p);
    p
}

/// Expected outcome under the reference interpreter.
pub fn reference_expectation(program: &Program, mem: &[u8]) -> Expectation {
    match interpret(program, mem, &SemanticsProfile::reference()) {
        ExecutionResponse::Returned(v) => Expectation::Result(v),
        ExecutionResponse::RuntimeError { message, .. } => {
            Expectation::Error(error_class(&message).to_string())
        }
        ExecutionResponse::Timeout => Expectation::Error("timeout".into()),
        ExecutionResponse::Unsupported(_) => Expectation::Error("unsupported".into()),
        ExecutionResponse::PluginCrash(_) => Expectation::Error("crash".into()),
    }
}

fn one_test(g: &mut Gen, seed: u64, index: usize, max_len: usize) -> TestCase {
    let p = program(g, max_len);
    let mem_len = g.below(MAX_MEM_BYTES as u64 + 1) as usize;
    let mut mem = vec![0u8; mem_len];
    g.rng.fill_bytes(&mut mem);
    let expected = reference_expectation(&p, &mem);
    let mut t = TestCase::new(format!("fuzz_{seed}_{index}"), format_asm(&p), expected);
    t.mem = (!mem.is_empty()).then_some(mem);
    t.provenance = Provenance::Fuzzed { seed };
    t
}

/// `count` tests from one seed stream.
pub fn fuzz(seed: u64, count: usize, max_len: usize) -> Corpus {
    let mut g = Gen::new(seed);
    let tests = (0..count).map(|i| one_test(&mut g, seed, i, max_len)).collect();
    Corpus::new(tests).expect("fuzzed names are unique")
}

/// Keep generating until `budget` elapses (at least one test). The output is
/// a prefix of the count-mode stream for the same seed.
pub fn fuzz_for(seed: u64, budget: Duration, max_len: usize) -> Corpus {
    let started = Instant::now();
    let mut g = Gen::new(seed);
    let mut tests = Vec::new();
    while tests.is_empty() || started.elapsed() < budget {
        let i = tests.len();
        tests.push(one_test(&mut g, seed, i, max_len));
    }
    Corpus::new(tests).expect("fuzzed names are unique")
}
