// SPDX-License-Identifier: Apache-2.0

//! Acceptance checks. Runs without the libtest harness and prints one line
//! per criterion:
//!
//!     ACCEPT <n> <PASS|FAIL> <title> (<detail>)
//!
//! The process exits nonzero when any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bpfdiff_core::context::{extract_all, load_bug_reports, read_tree, ExtractInputs};
use bpfdiff_core::corpus::{serialize_test_file, Corpus, Expectation, TestCase};
use bpfdiff_core::fuzz::fuzz;
use bpfdiff_core::generation::{run_ablation, AblationConfig, AblationId, CampaignInputs, Guidelines};
use bpfdiff_core::harness::{classify, find_differentials, pairwise_counts, run_matrix, DiffReport, Outcome};
use bpfdiff_core::isa::{
    decode, encode, format_asm, opcode_table, parse_asm, Instruction, Mnemonic, OpClass, Program, Register, Source,
};
use bpfdiff_core::llm::scripted::SCRIPTED_MODEL;
use bpfdiff_core::llm::{ClientConfig, HttpResponse, LlmClient, ProviderError, Transport};
use bpfdiff_core::metrics::{complexity, diversity};
use bpfdiff_core::runtime::{interpret, ExecutionResponse, Runtime, SemanticsProfile};

// Pinned limits.
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const BRUTE_FORCE_MIN_CASES: usize = 1_000;
const DIVERGENCE_BUDGET: Duration = Duration::from_secs(60);
const DIVERGENCE_FUZZ_SEED: u64 = 2024;
const DIVERGENCE_FUZZ_COUNT: usize = 1_000;
const FUZZ_VALIDITY_COUNT: usize = 10_000;
const FUZZ_VALIDITY_SEED: u64 = 11;
const SEEDED_PROFILES: [&str; 5] = [
    "rsh-zero-bug",
    "jump-offset-bug",
    "uninit-sentinel",
    "fp-write-allow",
    "tiny-step-limit",
];

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        ok,
        detail: detail.into(),
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    root().join("fixtures")
}

fn human_corpus() -> Corpus {
    Corpus::load_dir(&fixtures().join("corpus")).expect("fixture corpus")
}

// ---- 1. ISA round trip -------------------------------------------------

const REGS: [u8; 4] = [0, 1, 9, 10];
const IMM32: [i64; 5] = [0, 1, -1, i32::MIN as i64, i32::MAX as i64];
const OFFSETS: [i16; 5] = [0, 1, -1, i16::MIN, i16::MAX];
const IMM64: [i64; 6] = [0, -1, i64::MIN, i64::MAX, i32::MIN as i64, u32::MAX as i64];

fn reg(i: u8) -> Register {
    Register::new(i).unwrap()
}

/// Every opcode-table entry with boundary values in each operand it has.
fn round_trip_cases() -> Vec<Instruction> {
    let mut out = Vec::new();
    for e in opcode_table() {
        let base = Instruction::from_entry(e);
        let with = |f: &dyn Fn(&mut Instruction)| {
            let mut i = base;
            f(&mut i);
            i
        };
        match e.mnemonic {
            Mnemonic::Exit => out.push(base),
            Mnemonic::Ja => out.extend(OFFSETS.map(|o| with(&|i| i.offset = o))),
            Mnemonic::Call => out.extend([0i64, 1, 5, i32::MAX as i64].map(|v| with(&|i| i.imm = v))),
            Mnemonic::Neg => out.extend(REGS.map(|r| with(&|i| i.dst = reg(r)))),
            Mnemonic::End => {
                for r in REGS {
                    for w in [16, 32, 64] {
                        out.push(with(&|i| {
                            i.dst = reg(r);
                            i.imm = w
                        }));
                    }
                }
            }
            Mnemonic::Movsx => {
                let widths: &[i16] = if e.class == OpClass::Alu { &[8, 16] } else { &[8, 16, 32] };
                for d in REGS {
                    for s in REGS {
                        for &w in widths {
                            out.push(with(&|i| {
                                i.dst = reg(d);
                                i.src = reg(s);
                                i.offset = w
                            }));
                        }
                    }
                }
            }
            Mnemonic::Lddw => {
                for d in REGS {
                    for v in IMM64 {
                        out.push(with(&|i| {
                            i.dst = reg(d);
                            i.imm = v
                        }));
                    }
                }
            }
            Mnemonic::Ldx | Mnemonic::Ldxs | Mnemonic::Stx => {
                for d in REGS {
                    for s in REGS {
                        for o in OFFSETS {
                            out.push(with(&|i| {
                                i.dst = reg(d);
                                i.src = reg(s);
                                i.offset = o
                            }));
                        }
                    }
                }
            }
            Mnemonic::St => {
                for d in REGS {
                    for o in OFFSETS {
                        for v in IMM32 {
                            out.push(with(&|i| {
                                i.dst = reg(d);
                                i.offset = o;
                                i.imm = v
                            }));
                        }
                    }
                }
            }
            m => {
                let offsets: Vec<i16> = if m.is_conditional_jump() {
                    OFFSETS.to_vec()
                } else if matches!(m, Mnemonic::Div | Mnemonic::Mod) {
                    vec![0, 1]
                } else {
                    vec![0]
                };
                for d in REGS {
                    for &o in &offsets {
                        match e.source {
                            Source::K => {
                                for v in IMM32 {
                                    out.push(with(&|i| {
                                        i.dst = reg(d);
                                        i.offset = o;
                                        i.imm = v
                                    }));
                                }
                            }
                            Source::X => {
                                for s in REGS {
                                    out.push(with(&|i| {
                                        i.dst = reg(d);
                                        i.src = reg(s);
                                        i.offset = o
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn criterion_round_trip() -> Verdict {
    let started = Instant::now();
    let cases = round_trip_cases();
    let mnemonics: BTreeSet<Mnemonic> = cases.iter().map(|i| i.op).collect();
    let mut sources = BTreeSet::new();
    let mut failures = Vec::new();
    // Jumps are only well-formed with their target inside the program, so
    // they share one program padded on both sides by the full offset range.
    let (jumps, others): (Vec<Instruction>, Vec<Instruction>) =
        cases.iter().partition(|i| i.op == Mnemonic::Ja || i.op.is_conditional_jump());
    let pad = vec![Instruction::exit(); 1 << 15];
    let mut padded = pad.clone();
    padded.extend(&jumps);
    padded.extend(&pad);
    let programs = others
        .iter()
        .map(|i| Program::new(vec![*i]))
        .chain(std::iter::once(Program::new(padded)));
    for insn in &cases {
        sources.insert((insn.op, insn.source));
    }
    for p in programs {
        let insn = &p.instructions[0];
        let bytes = encode(&p);
        if decode(&bytes).as_ref() != Ok(&p) {
            failures.push(format!("decode {insn:?} ({} instructions)", p.len()));
        }
        let text = format_asm(&p);
        match parse_asm(&text) {
            Ok(q) if q == p => {}
            Ok(_) => failures.push(format!("parse of {} instructions differs", p.len())),
            Err(e) => failures.push(format!("parse failed: {e}")),
        }
    }
    let both_modes = [
        Mnemonic::Add,
        Mnemonic::Mov,
        Mnemonic::Rsh,
        Mnemonic::Jeq,
        Mnemonic::Jset,
    ]
    .iter()
    .all(|m| sources.contains(&(*m, Source::K)) && sources.contains(&(*m, Source::X)));
    let elapsed = started.elapsed();
    let ok = failures.is_empty() && mnemonics.len() == 34 && both_modes && elapsed < ROUND_TRIP_BUDGET;
    if let Some(f) = failures.first() {
        eprintln!("  first failure: {f}");
    }
    verdict(
        ok,
        format!(
            "{} programs, {} mnemonics, {} failures, {:.2}s (limit {}s)",
            cases.len(),
            mnemonics.len(),
            failures.len(),
            elapsed.as_secs_f64(),
            ROUND_TRIP_BUDGET.as_secs()
        ),
    )
}

// ---- 2. Interpreter oracle ---------------------------------------------

const VALUES: [u64; 17] = [
    0,
    1,
    2,
    7,
    31,
    32,
    63,
    64,
    0x7fff_ffff,
    0x8000_0000,
    0xffff_ffff,
    0x1_0000_0000,
    0x1234_5678,
    0x8000_0000_0000_0000,
    0x7fff_ffff_ffff_ffff,
    u64::MAX,
    (-5i64) as u64,
];

fn sext(v: u64, bits: u32) -> u64 {
    let shift = 64 - bits;
    (((v << shift) as i64) >> shift) as u64
}

/// ALU semantics written out per the ISA text, independently of the
/// interpreter. `b` is the already-resolved source operand.
fn eval_alu(m: Mnemonic, is32: bool, offset: i16, a: u64, b: u64, imm: i64) -> u64 {
    let bits = if is32 { 32 } else { 64 };
    let mask = if is32 { 0xffff_ffff } else { u64::MAX };
    let (a, b) = (a & mask, b & mask);
    let signed = |v: u64| sext(v, bits) as i64;
    let r = match m {
        Mnemonic::Add => a.wrapping_add(b),
        Mnemonic::Sub => a.wrapping_sub(b),
        Mnemonic::Mul => a.wrapping_mul(b),
        Mnemonic::Div if offset == 1 => {
            if b == 0 {
                0
            } else {
                signed(a).wrapping_div(signed(b)) as u64
            }
        }
        Mnemonic::Div => a.checked_div(b).unwrap_or(0),
        Mnemonic::Mod if offset == 1 => {
            if b == 0 {
                a
            } else {
                signed(a).wrapping_rem(signed(b)) as u64
            }
        }
        Mnemonic::Mod => a.checked_rem(b).unwrap_or(a),
        Mnemonic::Or => a | b,
        Mnemonic::And => a & b,
        Mnemonic::Xor => a ^ b,
        Mnemonic::Lsh => a << (b & (bits as u64 - 1)),
        Mnemonic::Rsh => a >> (b & (bits as u64 - 1)),
        Mnemonic::Arsh => (signed(a) >> (b & (bits as u64 - 1))) as u64,
        Mnemonic::Mov => b,
        Mnemonic::Neg => (signed(a).wrapping_neg()) as u64,
        Mnemonic::Movsx => sext(b, offset as u32),
        Mnemonic::End => unreachable!("handled by eval_end {imm}"),
        other => unreachable!("{other:?} is not ALU"),
    };
    r & mask
}

fn eval_end(class: OpClass, source: Source, width: u32, a: u64) -> u64 {
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let v = a & mask;
    let to_le = class == OpClass::Alu && source == Source::K;
    if to_le {
        // Little-endian host: conversion is truncation.
        v
    } else {
        match width {
            16 => (v as u16).swap_bytes() as u64,
            32 => (v as u32).swap_bytes() as u64,
            _ => v.swap_bytes(),
        }
    }
}

fn eval_jump(m: Mnemonic, is32: bool, a: u64, b: u64) -> bool {
    let (ua, ub, sa, sb) = if is32 {
        (a as u32 as u64, b as u32 as u64, a as u32 as i32 as i64, b as u32 as i32 as i64)
    } else {
        (a, b, a as i64, b as i64)
    };
    match m {
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
        other => unreachable!("{other:?} is not a conditional jump"),
    }
}

fn lddw(dst: u8, v: u64) -> Instruction {
    let mut i = Instruction::from_entry(bpfdiff_core::isa::lookup(Mnemonic::Lddw, OpClass::Ld, Source::K, Some(bpfdiff_core::isa::MemSize::DW)).unwrap());
    i.dst = reg(dst);
    i.imm = v as i64;
    i
}

fn mov_r0(src: Option<u8>, imm: i64) -> Instruction {
    let source = if src.is_some() { Source::X } else { Source::K };
    let mut i = Instruction::from_entry(bpfdiff_core::isa::lookup(Mnemonic::Mov, OpClass::Alu64, source, None).unwrap());
    if let Some(s) = src {
        i.src = reg(s);
    }
    i.imm = imm;
    i
}

/// One generated single-instruction case: program and the evaluator's
/// expected r0.
fn brute_force_cases() -> Vec<(Program, u64)> {
    let mut out = Vec::new();
    for e in opcode_table() {
        let is32 = matches!(e.class, OpClass::Alu | OpClass::Jmp32);
        let variants: Vec<(i16, i64)> = match e.mnemonic {
            Mnemonic::Div | Mnemonic::Mod => vec![(0, 0), (1, 0)],
            Mnemonic::Movsx if is32 => vec![(8, 0), (16, 0)],
            Mnemonic::Movsx => vec![(8, 0), (16, 0), (32, 0)],
            Mnemonic::End => vec![(0, 16), (0, 32), (0, 64)],
            m if e.class.is_alu() || m.is_conditional_jump() => vec![(0, 0)],
            _ => continue,
        };
        for (offset, width) in variants {
            for (ai, &a) in VALUES.iter().enumerate() {
                for (bi, &b) in VALUES.iter().enumerate() {
                    // Unary operations need one operand.
                    let unary = matches!(e.mnemonic, Mnemonic::Neg | Mnemonic::End);
                    if unary && bi > 0 {
                        continue;
                    }
                    // Immediate forms: keep the low 32 bits; the operand is
                    // their sign extension.
                    let imm = b as u32 as i32 as i64;
                    let operand = match e.source {
                        Source::X => b,
                        Source::K => imm as u64,
                    };
                    let mut op = Instruction::from_entry(e);
                    op.dst = reg(3);
                    op.offset = offset;
                    if e.source == Source::X && !unary {
                        op.src = reg(4);
                    } else if e.mnemonic == Mnemonic::End {
                        op.imm = width;
                    } else if !unary {
                        op.imm = imm;
                    }
                    let mut insns = vec![lddw(3, a), lddw(4, b)];
                    let expected = if e.mnemonic.is_conditional_jump() {
                        op.offset = 2;
                        insns.push(op);
                        insns.extend([mov_r0(None, 0), Instruction::exit(), mov_r0(None, 1), Instruction::exit()]);
                        eval_jump(e.mnemonic, is32, a, operand) as u64
                    } else {
                        insns.push(op);
                        insns.extend([mov_r0(Some(3), 0), Instruction::exit()]);
                        if e.mnemonic == Mnemonic::End {
                            eval_end(e.class, e.source, width as u32, a)
                        } else {
                            eval_alu(e.mnemonic, is32, offset, a, operand, imm)
                        }
                    };
                    let _ = ai;
                    out.push((Program::new(insns), expected));
                }
            }
        }
    }
    out
}

fn criterion_interpreter() -> Verdict {
    let reference = SemanticsProfile::reference();
    let run = |asm: &str, mem: &[u8]| interpret(&parse_asm(asm).unwrap(), mem, &reference);
    let listing = run("mov %r0, 0x12345678\nrsh %r0, 0\nexit", &[]);
    let ldxw = run("ldxw %r0, [%r1]\nexit", &[0, 0, 0, 0]);
    let jset = run(
        "mov %r1, 5\njset %r1, %r1, lbl1\nmov %r0, 0\nexit\nlbl1: mov %r0, 1\nexit",
        &[],
    );
    let known_ok = listing == ExecutionResponse::Returned(0x1234_5678)
        && ldxw == ExecutionResponse::Returned(0)
        && jset == ExecutionResponse::Returned(1);

    let cases = brute_force_cases();
    let mut mismatches = 0;
    for (p, expected) in &cases {
        let got = interpret(p, &[], &reference);
        if got != ExecutionResponse::Returned(*expected) {
            if mismatches == 0 {
                eprintln!("  first mismatch: {}\n  got {got:?}, expected {expected:#x}", format_asm(p));
            }
            mismatches += 1;
        }
    }
    verdict(
        known_ok && mismatches == 0 && cases.len() >= BRUTE_FORCE_MIN_CASES,
        format!(
            "listing/ldxw/jset {}; {} brute-force cases (min {}), {} mismatches",
            if known_ok { "exact" } else { "WRONG" },
            cases.len(),
            BRUTE_FORCE_MIN_CASES,
            mismatches
        ),
    )
}

// ---- 3. Seeded divergences ---------------------------------------------

fn divergence_corpus() -> Corpus {
    let mut tests = human_corpus().tests;
    tests.extend(fuzz(DIVERGENCE_FUZZ_SEED, DIVERGENCE_FUZZ_COUNT, 8).tests);
    Corpus::new(tests).unwrap()
}

fn matrix_findings(corpus: &Corpus, a: (&str, &str), b: (&str, &str)) -> DiffReport {
    let rts = [Runtime::builtin(a.0, a.1).unwrap(), Runtime::builtin(b.0, b.1).unwrap()];
    find_differentials(&run_matrix(corpus, &rts, 4).unwrap())
}

fn criterion_divergence(reports: &mut Vec<DiffReport>) -> Verdict {
    let started = Instant::now();
    let corpus = divergence_corpus();
    let mut parts = Vec::new();
    let mut ok = true;
    for profile in SEEDED_PROFILES {
        let variant = matrix_findings(&corpus, ("ref", "reference"), ("var", profile));
        let same = matrix_findings(&corpus, ("a", "reference"), ("b", "reference"));
        ok &= !variant.findings.is_empty() && same.findings.is_empty();
        parts.push(format!("{profile}={}", variant.findings.len()));
        reports.push(variant);
        reports.push(same);
    }
    let elapsed = started.elapsed();
    ok &= elapsed < DIVERGENCE_BUDGET;
    verdict(
        ok,
        format!(
            "{} tests; findings {}; ref-vs-ref 0 required; {:.1}s (limit {}s)",
            corpus.len(),
            parts.join(" "),
            elapsed.as_secs_f64(),
            DIVERGENCE_BUDGET.as_secs()
        ),
    )
}

// ---- 4. Classification table -------------------------------------------

fn criterion_classification() -> Verdict {
    let result_test = TestCase::new("r", "exit", Expectation::Result(7));
    let error_test = TestCase::new("e", "exit", Expectation::Error("Division".into()));
    let err = |m: &str| ExecutionResponse::RuntimeError {
        code: 1,
        message: m.into(),
    };
    let crash = |m: &str| Outcome::Crash { message: m.into() };
    let skip = |r: &str| Outcome::Skip {
        reason: format!("contains unsupported instructions: {r}"),
    };
    let rows: Vec<(ExecutionResponse, &TestCase, Outcome)> = vec![
        (ExecutionResponse::Returned(7), &result_test, Outcome::Pass),
        (ExecutionResponse::Returned(8), &result_test, Outcome::Fail { actual: 8, expected: Some(7) }),
        (err("division by zero"), &result_test, Outcome::Error { code: 1, message: "division by zero".into() }),
        (ExecutionResponse::Timeout, &result_test, crash("timed out")),
        (ExecutionResponse::PluginCrash("sig 11".into()), &result_test, crash("sig 11")),
        (ExecutionResponse::Unsupported("xadd".into()), &result_test, skip("xadd")),
        (ExecutionResponse::Returned(7), &error_test, Outcome::Fail { actual: 7, expected: None }),
        (ExecutionResponse::Returned(0), &error_test, Outcome::Fail { actual: 0, expected: None }),
        // Expected error text is matched as a case-insensitive substring.
        (err("DIVISION by zero"), &error_test, Outcome::Pass),
        (ExecutionResponse::Timeout, &error_test, crash("timed out")),
        (ExecutionResponse::PluginCrash("sig 6".into()), &error_test, crash("sig 6")),
        (ExecutionResponse::Unsupported("xadd".into()), &error_test, skip("xadd")),
    ];
    let mut wrong = 0;
    for (response, test, want) in &rows {
        let got = classify(response, test);
        if &got != want {
            eprintln!("  {response:?} vs {:?}: got {got:?}, want {want:?}", test.expected);
            wrong += 1;
        }
    }
    let unmatched = classify(&err("out of bounds"), &error_test);
    let unmatched_ok = matches!(unmatched, Outcome::Error { .. });
    verdict(
        wrong == 0 && rows.len() == 12 && unmatched_ok,
        format!("{} combinations, {} wrong; unmatched error text -> ERROR: {}", rows.len(), wrong, unmatched_ok),
    )
}

// ---- 5. Fuzzer validity ------------------------------------------------

fn criterion_fuzzer() -> Verdict {
    let a = fuzz(FUZZ_VALIDITY_SEED, FUZZ_VALIDITY_COUNT, 8);
    let b = fuzz(FUZZ_VALIDITY_SEED, FUZZ_VALIDITY_COUNT, 8);
    let text = |c: &Corpus| c.tests.iter().map(serialize_test_file).collect::<String>();
    let identical = text(&a) == text(&b);
    let mut valid = 0;
    for t in &a.tests {
        let reparsed = bpfdiff_core::corpus::parse_test_file(&t.name, &serialize_test_file(t));
        let ok = reparsed.is_ok()
            && parse_asm(&t.asm).is_ok_and(|p| decode(&encode(&p)).is_ok_and(|q| q == p));
        valid += ok as usize;
    }
    let pct = 100.0 * valid as f64 / a.len() as f64;
    verdict(
        valid == FUZZ_VALIDITY_COUNT && identical,
        format!(
            "{valid}/{} parse, assemble and decode ({pct:.1}%); same seed identical: {identical}",
            a.len()
        ),
    )
}

// ---- 6. Replay determinism ---------------------------------------------

struct CountingRefusal(AtomicUsize);

impl Transport for CountingRefusal {
    fn post(&self, _url: &str, _key: Option<&str>, _body: &str) -> Result<HttpResponse, ProviderError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(ProviderError::Transport("network access attempted".into()))
    }
}

fn bpfdiff(args: &[&str]) -> bool {
    let status = Command::new(env!("CARGO_BIN_EXE_bpfdiff"))
        .current_dir(root())
        .arg("--campaign")
        .arg("fixtures/campaign.toml")
        .args(args)
        .env_remove("DIFFHARNESS_API_KEY")
        .stderr(std::process::Stdio::null())
        .status()
        .expect("spawn bpfdiff");
    status.success()
}

/// The full CLI pipeline into `dir`; returns report.json bytes.
fn cli_pipeline(dir: &Path) -> Option<Vec<u8>> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 5] = [
        vec!["extract".into(), "--out".into(), p("ctx")],
        vec![
            "generate".into(),
            "--config".into(),
            "bug-guided-code-diff".into(),
            "--context".into(),
            p("ctx"),
            "--out".into(),
            p("gen"),
        ],
        vec!["run".into(), "--corpus".into(), p("gen"), "--out".into(), p("records.jsonl")],
        vec!["diff".into(), "--records".into(), p("records.jsonl"), "--out".into(), p("findings.json")],
        vec![
            "report".into(),
            "--records".into(),
            p("records.jsonl"),
            "--findings".into(),
            p("findings.json"),
            "--corpus".into(),
            p("gen"),
            "--campaign-stats".into(),
            p("gen/campaign.json"),
            "--out".into(),
            p("report"),
        ],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        if !bpfdiff(&args) {
            eprintln!("  bpfdiff {} failed", args[0]);
            return None;
        }
    }
    std::fs::read(dir.join("report/report.json")).ok()
}

/// Extraction and generation in-process with a transport that counts and
/// refuses every request.
fn library_replay() -> (usize, Option<Corpus>) {
    let f = fixtures();
    let transport = Arc::new(CountingRefusal(AtomicUsize::new(0)));
    let llm = LlmClient::new(ClientConfig::replay(f.join("llm")), transport.clone());
    let spec = std::fs::read_to_string(f.join("isa/bpf-isa.md")).unwrap();
    let trees = vec![
        read_tree("linux", &f.join("trees/linux-arm")).unwrap(),
        read_tree("ubpf", &f.join("trees/ubpf")).unwrap(),
    ];
    let bugs = load_bug_reports(&f.join("bugs/bug_reports.json")).unwrap();
    let corpus = human_corpus();
    let inputs = ExtractInputs {
        spec: &spec,
        trees: &trees,
        bug_reports: &bugs,
        corpus: &corpus,
    };
    let Ok(x) = extract_all(&inputs, &llm, SCRIPTED_MODEL) else {
        return (transport.0.load(Ordering::SeqCst), None);
    };
    let guidelines = Guidelines::parse(&std::fs::read_to_string(f.join("guidelines.txt")).unwrap());
    let config = AblationConfig::new(AblationId::BugGuidedCodeDiff).with_descriptions_per_prompt(2);
    let campaign = run_ablation(
        &config,
        &x.bundles,
        &CampaignInputs {
            spec: &spec,
            corpus: &corpus,
            guidelines: Some(&guidelines),
            seed: 7,
        },
        &llm,
        SCRIPTED_MODEL,
    );
    let complete = campaign.stats.provider_errors.is_empty();
    (transport.0.load(Ordering::SeqCst), complete.then_some(campaign.corpus))
}

fn criterion_replay() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (Some(first), Some(second)) = (cli_pipeline(a.path()), cli_pipeline(b.path())) else {
        return verdict(false, "CLI pipeline failed");
    };
    let golden = std::fs::read(fixtures().join("golden/report.json")).unwrap_or_default();
    let (calls, lib_corpus) = library_replay();
    let cli_corpus = Corpus::load_dir(&a.path().join("gen")).ok();
    let same_corpus = lib_corpus.is_some() && lib_corpus == cli_corpus;
    let ok = first == second && first == golden && calls == 0 && same_corpus;
    verdict(
        ok,
        format!(
            "two runs identical: {}; matches committed golden: {}; network calls: {calls}; in-process corpus equal: {same_corpus}",
            first == second,
            first == golden
        ),
    )
}

// ---- 7. Metrics --------------------------------------------------------

fn criterion_metrics(reports: &[DiffReport]) -> Verdict {
    let corpus = human_corpus();
    let d = diversity(&corpus);
    let c = complexity(&corpus);
    let total_lines: usize = c.lines.iter().map(|(_, n)| n).sum();
    // Hand counts over fixtures/corpus (20 files).
    let counts_ok = corpus.len() == 20
        && (d.unique_instructions, d.unique_registers, d.unique_addresses, d.unique_immediates) == (30, 5, 4, 21)
        && total_lines == 76
        && (c.min, c.max, c.median) == (Some(2), Some(7), Some(4.0));
    let mut matrices = 0;
    let mut broken = 0;
    for r in reports {
        matrices += 1;
        let pairs = pairwise_counts(r);
        let max = pairs.values().copied().max().unwrap_or(0);
        let sum: usize = pairs.values().sum();
        if !(r.total() >= max && r.total() <= sum) {
            broken += 1;
        }
    }
    verdict(
        counts_ok && broken == 0 && matrices > 0,
        format!(
            "diversity {}/{}/{}/{} lines {total_lines}: {}; Total within [max pair, sum of pairs] on {}/{} matrices",
            d.unique_instructions,
            d.unique_registers,
            d.unique_addresses,
            d.unique_immediates,
            if counts_ok { "hand counts match" } else { "MISMATCH" },
            matrices - broken,
            matrices
        ),
    )
}

fn fixture_matrices() -> Vec<DiffReport> {
    // A three-runtime matrix over the human corpus, as in the shipped campaign.
    let rts = [
        Runtime::builtin("linux", "narrow-load-leak").unwrap(),
        Runtime::builtin("ubpf", "rsh-zero-bug").unwrap(),
        Runtime::builtin("windows", "jump-offset-bug").unwrap(),
    ];
    vec![find_differentials(&run_matrix(&human_corpus(), &rts, 2).unwrap())]
}

// ---- 8. Plugin protocol ------------------------------------------------

#[cfg(unix)]
fn criterion_plugin() -> Verdict {
    use bpfdiff_core::runtime::{plugin_stdin, run_external_plugin};
    let plugin = fixtures().join("plugins/modes.sh");
    let golden = |n: &str| std::fs::read_to_string(fixtures().join("golden/plugin").join(n)).unwrap_or_default();
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("stdin.txt");
    std::env::set_var("BPFDIFF_TRANSCRIPT", &transcript);
    let prog = |asm: &str| encode(&parse_asm(asm).unwrap());
    let call = |asm: &str, mem: Option<&[u8]>, timeout| run_external_plugin(&plugin, &prog(asm), mem, timeout).unwrap();

    let mut ok = true;
    let success = call("mov %r0, 42\nexit", None, 5_000);
    ok &= success == ExecutionResponse::Returned(0x2a);
    let seen = std::fs::read_to_string(&transcript).unwrap_or_default();
    ok &= seen == golden("success.stdin") && plugin_stdin(&prog("mov %r0, 42\nexit"), None) == seen;
    ok &= golden("success.stdout") == "0x2a\n";

    let mem = [1u8, 0, 0, 0];
    let error = call("ldxw %r0, [%r1]\nexit", Some(&mem), 5_000);
    ok &= error
        == ExecutionResponse::RuntimeError {
            code: 1,
            message: golden("error.stderr").trim().to_string(),
        };
    let seen = std::fs::read_to_string(&transcript).unwrap_or_default();
    ok &= seen == golden("error.stdin");

    let crash = call("exit", Some(&[2]), 5_000);
    ok &= matches!(crash, ExecutionResponse::PluginCrash(_));
    let timeout = call("exit", Some(&[3]), 300);
    ok &= timeout == ExecutionResponse::Timeout;
    std::env::remove_var("BPFDIFF_TRANSCRIPT");
    let kind = |r: &ExecutionResponse| match r {
        ExecutionResponse::Returned(_) => "Returned",
        ExecutionResponse::RuntimeError { .. } => "RuntimeError",
        ExecutionResponse::PluginCrash(_) => "PluginCrash",
        ExecutionResponse::Timeout => "Timeout",
        ExecutionResponse::Unsupported(_) => "Unsupported",
    };
    verdict(
        ok,
        format!(
            "success/error/crash/timeout -> {}/{}/{}/{}; stdin matches golden transcripts",
            kind(&success),
            kind(&error),
            kind(&crash),
            kind(&timeout)
        ),
    )
}

#[cfg(not(unix))]
fn criterion_plugin() -> Verdict {
    verdict(false, "fixture plugins are POSIX shell scripts; not run on this platform")
}

fn main() {
    // libtest-style arguments (filters, --nocapture) are accepted and ignored.
    let mut results = Vec::new();
    let mut matrices = Vec::new();
    let mut record = |n: u32, title: &str, v: Verdict| {
        println!(
            "ACCEPT {n} {} {title} ({})",
            if v.ok { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push(v.ok);
    };
    record(1, "ISA round trip", criterion_round_trip());
    record(2, "interpreter oracle", criterion_interpreter());
    record(3, "seeded-divergence detection", criterion_divergence(&mut matrices));
    record(4, "outcome classification table", criterion_classification());
    record(5, "fuzzer validity and determinism", criterion_fuzzer());
    record(6, "end-to-end replay determinism", criterion_replay());
    matrices.extend(fixture_matrices());
    record(7, "metrics correctness", criterion_metrics(&matrices));
    record(8, "plugin protocol conformance", criterion_plugin());
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
