// SPDX-License-Identifier: Apache-2.0

//! Text assembler and disassembler for the conformance-suite dialect:
//!
//! ```text
//! mov %r0, 0x12345678      # 64-bit ALU, immediate source
//! rsh32 %r0, %r1           # 32-bit ALU, register source
//! ldxw %r0, [%r1+4]
//! stxdw [%r10-8], %r2
//! jset %r1, %r1, lbl1      # label or +N/-N slot offset
//! lbl1: exit
//! ```
//!
//! Labels are resolved to slot offsets while parsing, so a parsed
//! [`Program`] carries numeric offsets only and formats back with `+N`/`-N`.

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use super::{
    lookup, opcode_table, Instruction, MemSize, Mnemonic, OpClass, OpcodeEntry, Program,
    Register, Source, MAX_REGISTER,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: invalid register index {index}")]
    BadRegister { line: usize, index: u64 },
    #[error("line {line}: value `{value}` out of range")]
    ImmediateOutOfRange { line: usize, value: String },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: jump target slot {target} is out of range")]
    JumpOutOfRange { line: usize, target: i64 },
    #[error("line {line}: {message}")]
    SyntaxError { line: usize, message: String },
}

impl AsmError {
    pub fn line(&self) -> usize {
        match self {
            AsmError::UnknownMnemonic { line, .. }
            | AsmError::BadRegister { line, .. }
            | AsmError::ImmediateOutOfRange { line, .. }
            | AsmError::UnresolvedLabel { line, .. }
            | AsmError::JumpOutOfRange { line, .. }
            | AsmError::SyntaxError { line, .. } => *line,
        }
    }
}

/// Operand layout of an assembly mnemonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    /// `op %dst, %src|imm`
    Binary,
    /// `op %dst`
    Unary,
    /// `movsxNM %dst, %src`
    RegReg,
    /// `jxx %dst, %src|imm, target`
    CondJump,
    /// `ja target`
    Ja,
    /// `call imm`
    Call,
    Exit,
    /// `lddw %dst, imm64`
    Lddw,
    /// `ldxS %dst, [%src+off]`
    Load,
    /// `stS [%dst+off], imm`
    StoreImm,
    /// `stxS [%dst+off], %src`
    StoreReg,
}

#[derive(Debug, Clone, Copy)]
struct AsmSpec {
    mnemonic: Mnemonic,
    class: OpClass,
    size: Option<MemSize>,
    /// Fixed source mode; `None` when chosen by the operand.
    source: Option<Source>,
    offset: i16,
    imm: Option<i64>,
    form: Form,
}

/// Assembly name of an instruction. Only meaningful for instructions whose
/// variant fields (`offset` for div/mod/movsx, `imm` for end) are canonical.
fn asm_name(insn: &Instruction) -> String {
    use Mnemonic::*;
    let suffix32 = if insn.is_32bit() { "32" } else { "" };
    match insn.op {
        Div | Mod if insn.offset == 1 => {
            format!("s{}{}", insn.op.name().to_ascii_lowercase(), suffix32)
        }
        Movsx => format!("movsx{}{}", insn.offset, if insn.is_32bit() { 32 } else { 64 }),
        End => {
            let prefix = match (insn.class, insn.source) {
                (OpClass::Alu, Source::K) => "le",
                (OpClass::Alu, Source::X) => "be",
                _ => "bswap",
            };
            format!("{prefix}{}", insn.imm)
        }
        Lddw => "lddw".to_string(),
        Ldx | Ldxs | St | Stx => format!(
            "{}{}",
            insn.op.name().to_ascii_lowercase(),
            insn.size.map(MemSize::suffix).unwrap_or_default()
        ),
        Exit | Call | Ja => insn.op.name().to_ascii_lowercase(),
        _ => format!("{}{}", insn.op.name().to_ascii_lowercase(), suffix32),
    }
}

fn form_of(entry: &OpcodeEntry) -> Form {
    use Mnemonic::*;
    match entry.mnemonic {
        Neg | End => Form::Unary,
        Movsx => Form::RegReg,
        Ja => Form::Ja,
        Call => Form::Call,
        Exit => Form::Exit,
        Lddw => Form::Lddw,
        Ldx | Ldxs => Form::Load,
        St => Form::StoreImm,
        Stx => Form::StoreReg,
        m if m.is_conditional_jump() => Form::CondJump,
        _ => Form::Binary,
    }
}

fn asm_specs() -> &'static HashMap<String, AsmSpec> {
    static SPECS: OnceLock<HashMap<String, AsmSpec>> = OnceLock::new();
    SPECS.get_or_init(|| {
        let mut map = HashMap::new();
        for entry in opcode_table() {
            let form = form_of(entry);
            let operand_source = matches!(form, Form::Binary | Form::CondJump);
            let mut variants: Vec<(i16, Option<i64>)> = vec![(0, None)];
            match entry.mnemonic {
                Mnemonic::Div | Mnemonic::Mod => variants.push((1, None)),
                Mnemonic::Movsx => {
                    variants = if entry.class == OpClass::Alu {
                        vec![(8, None), (16, None)]
                    } else {
                        vec![(8, None), (16, None), (32, None)]
                    }
                }
                Mnemonic::End => variants = vec![(0, Some(16)), (0, Some(32)), (0, Some(64))],
                _ => {}
            }
            for (offset, imm) in variants {
                // Binary/conditional forms register once per mnemonic; the
                // source comes from the operand.
                if operand_source && entry.source == Source::X {
                    continue;
                }
                let mut probe = Instruction::from_entry(entry);
                probe.offset = offset;
                probe.imm = imm.unwrap_or(0);
                let spec = AsmSpec {
                    mnemonic: entry.mnemonic,
                    class: entry.class,
                    size: entry.size,
                    source: if operand_source { None } else { Some(entry.source) },
                    offset,
                    imm,
                    form,
                };
                map.insert(asm_name(&probe), spec);
            }
        }
        map
    })
}

/// Every assembly mnemonic the dialect accepts, sorted.
pub fn asm_mnemonics() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = asm_specs().keys().map(String::as_str).collect();
    names.sort_unstable();
    names
}

/// Operation named by an assembly mnemonic (`"rsh32"` -> `RSH`).
pub fn mnemonic_for_asm_name(name: &str) -> Option<Mnemonic> {
    asm_specs()
        .get(&name.to_ascii_lowercase())
        .map(|spec| spec.mnemonic)
}

/// Operations named on each line of `text`, in order, without assembling.
/// Lines whose first word is not a known mnemonic are skipped, so this works
/// on programs that fail to parse.
pub fn scan_mnemonics(text: &str) -> Vec<Mnemonic> {
    let mut found = Vec::new();
    for line in text.lines() {
        let mut rest = strip_comment(line).trim();
        if let Some(colon) = rest.rfind(':') {
            rest = rest[colon + 1..].trim();
        }
        let word = rest.split_whitespace().next().unwrap_or("");
        if let Some(m) = mnemonic_for_asm_name(word) {
            if !found.contains(&m) {
                found.push(m);
            }
        }
    }
    found
}

fn strip_comment(line: &str) -> &str {
    let mut end = line.len();
    for marker in ["//", "#", ";"] {
        if let Some(pos) = line.find(marker) {
            end = end.min(pos);
        }
    }
    &line[..end]
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

pub(crate) fn parse_int(text: &str) -> Option<i128> {
    let t = text.trim();
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 20 {
            return None;
        }
        i128::from_str_radix(hex, 16).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) || body.len() > 24 {
            return None;
        }
        body.parse::<i128>().ok()?
    };
    Some(if negative { -magnitude } else { magnitude })
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn syntax(&self, message: impl Into<String>) -> AsmError {
        AsmError::SyntaxError {
            line: self.line,
            message: message.into(),
        }
    }

    fn register(&self, token: &str) -> Result<Register, AsmError> {
        let t = token.trim();
        let digits = t
            .strip_prefix("%r")
            .ok_or_else(|| self.syntax(format!("expected register, found `{t}`")))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.syntax(format!("expected register, found `{t}`")));
        }
        let index: u64 = digits.parse().unwrap_or(u64::MAX);
        if index > MAX_REGISTER as u64 {
            return Err(AsmError::BadRegister {
                line: self.line,
                index,
            });
        }
        Ok(Register::new(index as u8).expect("checked"))
    }

    fn value(&self, token: &str, min: i128, max: i128) -> Result<i128, AsmError> {
        let t = token.trim();
        let v = parse_int(t).ok_or_else(|| self.syntax(format!("expected number, found `{t}`")))?;
        if v < min || v > max {
            return Err(AsmError::ImmediateOutOfRange {
                line: self.line,
                value: t.to_string(),
            });
        }
        Ok(v)
    }

    /// 32-bit immediate: any signed value or a 32-bit two's-complement pattern.
    fn imm32(&self, token: &str) -> Result<i64, AsmError> {
        let v = self.value(token, i32::MIN as i128, u32::MAX as i128)?;
        Ok(v as u32 as i32 as i64)
    }

    fn imm64(&self, token: &str) -> Result<i64, AsmError> {
        let v = self.value(token, i64::MIN as i128, u64::MAX as i128)?;
        Ok(v as u64 as i64)
    }

    fn offset(&self, token: &str) -> Result<i16, AsmError> {
        Ok(self.value(token, i16::MIN as i128, i16::MAX as i128)? as i16)
    }

    fn is_register(token: &str) -> bool {
        token.trim().starts_with('%')
    }

    /// `[%rN]`, `[%rN+off]` or `[%rN-off]`.
    fn memory(&self, token: &str) -> Result<(Register, i16), AsmError> {
        let inner = token
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| self.syntax(format!("expected memory operand, found `{}`", token.trim())))?
            .trim();
        let split = inner.find(['+', '-']);
        match split {
            None => Ok((self.register(inner)?, 0)),
            Some(pos) => {
                let reg = self.register(&inner[..pos])?;
                let sign = &inner[pos..pos + 1];
                let rest = inner[pos + 1..].trim();
                let off = self.offset(&format!("{sign}{rest}"))?;
                Ok((reg, off))
            }
        }
    }
}

enum Target {
    Offset(i16),
    Label(String),
}

struct Pending {
    insn: Instruction,
    target: Option<Target>,
    line: usize,
}

fn expect_operands<'a>(
    ctx: &LineCtx,
    name: &str,
    operands: &'a [&'a str],
    count: usize,
) -> Result<&'a [&'a str], AsmError> {
    if operands.len() != count {
        return Err(ctx.syntax(format!(
            "`{name}` takes {count} operand(s), found {}",
            operands.len()
        )));
    }
    Ok(operands)
}

fn parse_target(ctx: &LineCtx, token: &str) -> Result<Target, AsmError> {
    let t = token.trim();
    if t.starts_with(['+', '-']) || t.bytes().next().is_some_and(|b| b.is_ascii_digit()) {
        Ok(Target::Offset(ctx.offset(t)?))
    } else if is_label_name(t) {
        Ok(Target::Label(t.to_string()))
    } else {
        Err(ctx.syntax(format!("invalid jump target `{t}`")))
    }
}

fn parse_instruction(ctx: &LineCtx, text: &str) -> Result<(Instruction, Option<Target>), AsmError> {
    let (name, rest) = match text.find(char::is_whitespace) {
        Some(pos) => (&text[..pos], text[pos..].trim()),
        None => (text, ""),
    };
    let lower = name.to_ascii_lowercase();
    let spec = asm_specs().get(&lower).ok_or_else(|| AsmError::UnknownMnemonic {
        line: ctx.line,
        mnemonic: name.to_string(),
    })?;
    let operands: Vec<&str> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };

    let entry_for = |source: Source| {
        lookup(spec.mnemonic, spec.class, source, spec.size).expect("spec derived from table")
    };
    let mut insn = Instruction::from_entry(entry_for(spec.source.unwrap_or(Source::K)));
    insn.offset = spec.offset;
    insn.imm = spec.imm.unwrap_or(0);
    let mut target = None;

    match spec.form {
        Form::Binary => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            let dst = ctx.register(ops[0])?;
            if LineCtx::is_register(ops[1]) {
                insn = Instruction {
                    src: ctx.register(ops[1])?,
                    ..Instruction::from_entry(entry_for(Source::X))
                };
                insn.offset = spec.offset;
            } else {
                insn.imm = ctx.imm32(ops[1])?;
            }
            insn.dst = dst;
        }
        Form::Unary => {
            let ops = expect_operands(ctx, name, &operands, 1)?;
            insn.dst = ctx.register(ops[0])?;
        }
        Form::RegReg => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            insn.dst = ctx.register(ops[0])?;
            insn.src = ctx.register(ops[1])?;
        }
        Form::CondJump => {
            let ops = expect_operands(ctx, name, &operands, 3)?;
            let dst = ctx.register(ops[0])?;
            if LineCtx::is_register(ops[1]) {
                insn = Instruction::from_entry(entry_for(Source::X));
                insn.src = ctx.register(ops[1])?;
            } else {
                insn.imm = ctx.imm32(ops[1])?;
            }
            insn.dst = dst;
            target = Some(parse_target(ctx, ops[2])?);
        }
        Form::Ja => {
            let ops = expect_operands(ctx, name, &operands, 1)?;
            target = Some(parse_target(ctx, ops[0])?);
        }
        Form::Call => {
            let ops = expect_operands(ctx, name, &operands, 1)?;
            insn.imm = ctx.imm32(ops[0])?;
        }
        Form::Exit => {
            expect_operands(ctx, name, &operands, 0)?;
        }
        Form::Lddw => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            insn.dst = ctx.register(ops[0])?;
            insn.imm = ctx.imm64(ops[1])?;
        }
        Form::Load => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            insn.dst = ctx.register(ops[0])?;
            let (base, off) = ctx.memory(ops[1])?;
            insn.src = base;
            insn.offset = off;
        }
        Form::StoreImm => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            let (base, off) = ctx.memory(ops[0])?;
            insn.dst = base;
            insn.offset = off;
            insn.imm = ctx.imm32(ops[1])?;
        }
        Form::StoreReg => {
            let ops = expect_operands(ctx, name, &operands, 2)?;
            let (base, off) = ctx.memory(ops[0])?;
            insn.dst = base;
            insn.offset = off;
            insn.src = ctx.register(ops[1])?;
        }
    }
    Ok((insn, target))
}

/// Parse assembly text into a [`Program`], resolving labels to slot offsets.
pub fn parse_asm(text: &str) -> Result<Program, AsmError> {
    let mut pending: Vec<Pending> = Vec::new();
    // label -> (instruction index it precedes, defining line)
    let mut labels: HashMap<String, usize> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let ctx = LineCtx { line: idx + 1 };
        let mut rest = strip_comment(raw_line).trim();
        while let Some(colon) = rest.find(':') {
            let label = rest[..colon].trim();
            if !is_label_name(label) {
                return Err(ctx.syntax(format!("invalid label `{label}`")));
            }
            if labels.insert(label.to_string(), pending.len()).is_some() {
                return Err(ctx.syntax(format!("duplicate label `{label}`")));
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let (insn, target) = parse_instruction(&ctx, rest)?;
        pending.push(Pending {
            insn,
            target,
            line: ctx.line,
        });
    }

    let mut starts = Vec::with_capacity(pending.len() + 1);
    let mut acc = 0usize;
    for p in &pending {
        starts.push(acc);
        acc += p.insn.slots();
    }
    starts.push(acc);
    let total_slots = acc;

    let mut instructions = Vec::with_capacity(pending.len());
    for (index, p) in pending.into_iter().enumerate() {
        let mut insn = p.insn;
        if let Some(target) = p.target {
            let here = starts[index] as i64;
            let offset: i64 = match target {
                Target::Offset(off) => off as i64,
                Target::Label(label) => {
                    let dest = labels.get(&label).ok_or(AsmError::UnresolvedLabel {
                        line: p.line,
                        label: label.clone(),
                    })?;
                    starts[*dest] as i64 - here - 1
                }
            };
            let dest_slot = here + 1 + offset;
            let on_boundary = dest_slot >= 0
                && dest_slot <= total_slots as i64
                && starts.binary_search(&(dest_slot as usize)).is_ok();
            if !on_boundary || offset < i16::MIN as i64 || offset > i16::MAX as i64 {
                return Err(AsmError::JumpOutOfRange {
                    line: p.line,
                    target: dest_slot,
                });
            }
            insn.offset = offset as i16;
        }
        instructions.push(insn);
    }
    Ok(Program::new(instructions))
}

fn fmt_imm32(v: i64) -> String {
    if (-1024..=1024).contains(&v) {
        v.to_string()
    } else {
        format!("{:#x}", v as u32)
    }
}

fn fmt_imm64(v: i64) -> String {
    if (-1024..=1024).contains(&v) {
        v.to_string()
    } else {
        format!("{:#x}", v as u64)
    }
}

fn fmt_mem(base: Register, off: i16) -> String {
    match off {
        0 => format!("[{base}]"),
        o if o > 0 => format!("[{base}+{o}]"),
        o => format!("[{base}-{}]", -(o as i32)),
    }
}

fn fmt_offset(off: i16) -> String {
    if off >= 0 {
        format!("+{off}")
    } else {
        off.to_string()
    }
}

pub fn format_instruction(insn: &Instruction) -> String {
    use Mnemonic::*;
    let name = asm_name(insn);
    let src_operand = || match insn.source {
        Source::X => insn.src.to_string(),
        Source::K => fmt_imm32(insn.imm),
    };
    match insn.op {
        Exit => name,
        Ja => format!("{name} {}", fmt_offset(insn.offset)),
        Call => format!("{name} {}", insn.imm),
        Neg | End => format!("{name} {}", insn.dst),
        Movsx => format!("{name} {}, {}", insn.dst, insn.src),
        Lddw => format!("{name} {}, {}", insn.dst, fmt_imm64(insn.imm)),
        Ldx | Ldxs => format!("{name} {}, {}", insn.dst, fmt_mem(insn.src, insn.offset)),
        St => format!("{name} {}, {}", fmt_mem(insn.dst, insn.offset), fmt_imm32(insn.imm)),
        Stx => format!("{name} {}, {}", fmt_mem(insn.dst, insn.offset), insn.src),
        m if m.is_conditional_jump() => format!(
            "{name} {}, {}, {}",
            insn.dst,
            src_operand(),
            fmt_offset(insn.offset)
        ),
        _ => format!("{name} {}, {}", insn.dst, src_operand()),
    }
}

/// One instruction per line, numeric jump offsets, no trailing newline.
pub fn format_asm(program: &Program) -> String {
    program
        .instructions
        .iter()
        .map(format_instruction)
        .collect::<Vec<_>>()
        .join("\n")
}
