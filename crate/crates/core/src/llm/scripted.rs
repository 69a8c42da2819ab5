// SPDX-License-Identifier: Apache-2.0

//! Offline rule-based stand-in for a chat model.
//!
//! [`ScriptedModel`] answers every prompt kind in [`crate::prompts`] from the
//! prompt text alone, deterministically: any pseudo-random choice is seeded
//! from a digest of the user message. It exists so the pipeline can run and
//! fixtures can be recorded without network access or an API key. It is not
//! meant to be clever; it reads tables, greps code, and writes tests from a
//! fixed catalog of scenarios, with a controlled rate of mistakes that
//! guidelines suppress.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{HttpResponse, ProviderError, Transport};
use crate::corpus::{serialize_test_file, Expectation, TestCase};
use crate::isa::{parse_asm, scan_mnemonics, Mnemonic};
use crate::prompts::{extract_tags, first_tag, kind_of, PromptKind};
use crate::runtime::{error_class, interpret, ExecutionResponse, SemanticsProfile};

/// Model name the scripted transport reports.
pub const SCRIPTED_MODEL: &str = "scripted-v1";

/// Endpoint value that selects the scripted transport instead of HTTP.
pub const SCRIPTED_ENDPOINT: &str = "scripted";

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedModel;

impl Transport for ScriptedModel {
    fn post(&self, _url: &str, _api_key: Option<&str>, body: &str) -> Result<HttpResponse, ProviderError> {
        let bad = |msg: &str| HttpResponse {
            status: 400,
            body: json!({ "error": { "message": msg } }).to_string(),
        };
        let Ok(v) = serde_json::from_str::<Value>(body) else {
            return Ok(bad("body is not JSON"));
        };
        let message = |role: &str| {
            v["messages"]
                .as_array()
                .and_then(|ms| ms.iter().find(|m| m["role"] == role))
                .and_then(|m| m["content"].as_str())
                .map(String::from)
        };
        let (Some(system), Some(user)) = (message("system"), message("user")) else {
            return Ok(bad("expected a system and a user message"));
        };
        match ScriptedModel.reply(&system, &user) {
            Some(content) => Ok(HttpResponse {
                status: 200,
                body: json!({
                    "model": SCRIPTED_MODEL,
                    "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }]
                })
                .to_string(),
            }),
            None => Ok(bad("unrecognised task")),
        }
    }
}

impl ScriptedModel {
    /// Completion text for one prompt, or `None` for an unknown task.
    pub fn reply(&self, system: &str, user: &str) -> Option<String> {
        let kind = kind_of(system)?;
        Some(match kind {
            PromptKind::ExtractInstructions => extract_instructions(user),
            PromptKind::ExtractConstraints => extract_constraints(user),
            PromptKind::ExtractSnippet => extract_snippet(user),
            PromptKind::DescribeCode => describe_code(user),
            PromptKind::DiffCode => diff_code(user),
            PromptKind::DiffDescriptions => diff_descriptions(user),
            PromptKind::CategorizeBugs => categorize_bugs(user),
            PromptKind::MapTests => map_tests(user),
            PromptKind::SelectSection => select_section(user),
            PromptKind::GenerateDescriptions => generate_descriptions(user),
            PromptKind::GenerateTest => generate_test(user),
        })
    }
}

struct Dice(ChaCha8Rng);

impl Dice {
    fn new(text: &str, salt: &str) -> Dice {
        let mut h = Sha256::new();
        h.update(salt.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        Dice(ChaCha8Rng::from_seed(h.finalize().into()))
    }

    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.below(items.len())]
    }

    fn chance(&mut self, percent: usize) -> bool {
        self.below(100) < percent
    }

    fn u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

fn numbered<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}\n", i + 1, s.as_ref()))
        .collect()
}

fn has_word(line: &str, word: &str) -> bool {
    line.match_indices(word).any(|(at, _)| {
        let before = line[..at].chars().next_back();
        let after = line[at + word.len()..].chars().next();
        let boundary = |c: Option<char>| !c.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_');
        boundary(before) && boundary(after)
    })
}

fn table_cells(line: &str) -> Option<Vec<String>> {
    let t = line.trim();
    if !t.starts_with('|') {
        return None;
    }
    let cells: Vec<String> = t
        .trim_matches('|')
        .split('|')
        .map(|c| c.trim().trim_matches('`').trim().to_string())
        .collect();
    if cells.iter().all(|c| c.chars().all(|ch| ch == '-' || ch == ':' || ch == ' ')) {
        return None;
    }
    Some(cells)
}

fn extract_instructions(user: &str) -> String {
    let doc = first_tag(user, "spec").unwrap_or_default();
    let mut names: Vec<String> = Vec::new();
    for line in doc.lines() {
        let Some(cells) = table_cells(line) else { continue };
        let first = &cells[0];
        let looks_like_mnemonic = (2..=6).contains(&first.len())
            && first.starts_with(|c: char| c.is_ascii_uppercase())
            && first.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if looks_like_mnemonic && !names.contains(first) {
            names.push(first.clone());
        }
    }
    if names.is_empty() {
        return "I could not find any instructions in the document.".into();
    }
    format!("The document defines these instructions:\n\n{}", numbered(&names))
}

fn extract_constraints(user: &str) -> String {
    let m = first_tag(user, "instruction").unwrap_or_default();
    let doc = first_tag(user, "spec").unwrap_or_default();
    let mut rules: Vec<String> = Vec::new();
    for line in doc.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || !has_word(t, &m) {
            continue;
        }
        let rule = match table_cells(t) {
            Some(cells) => {
                let rest: Vec<&str> = cells[1..].iter().map(String::as_str).filter(|c| !c.is_empty()).collect();
                format!("{}: {}", cells[0], rest.join("; "))
            }
            None => t.trim_start_matches(['-', '*', ' ']).to_string(),
        };
        if !rules.contains(&rule) {
            rules.push(rule);
        }
        if rules.len() == 12 {
            break;
        }
    }
    if rules.is_empty() {
        return "The document does not state any rules for this instruction.".into();
    }
    numbered(&rules)
}

/// Patterns that locate the handler for an instruction, most specific first.
fn snippet_patterns(m: Mnemonic) -> Vec<&'static str> {
    match m {
        Mnemonic::Lddw => vec!["BPF_LD | BPF_IMM | BPF_DW", "BPF_DW"],
        Mnemonic::Ldx => vec!["BPF_LDX | BPF_MEM", "BPF_LDX"],
        Mnemonic::St => vec!["BPF_ST | BPF_MEM", "BPF_ST"],
        Mnemonic::Stx => vec!["BPF_STX | BPF_MEM", "BPF_STX"],
        _ => vec![m.opcode_macro()],
    }
}

fn is_label(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("case ") || t.starts_with("default:")
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// The case group containing line `at` and its body, up to the first
/// body-level `break`/`return`/`goto` or the next label.
fn excerpt(lines: &[&str], at: usize) -> String {
    let mut start = at;
    while start > 0 && lines[start - 1].trim_start().starts_with("case ") {
        start -= 1;
    }
    let mut end = at + 1;
    while end < lines.len() && lines[end].trim_start().starts_with("case ") {
        end += 1;
    }
    let label_indent = indent_of(lines[at]);
    let body_indent = lines[end..]
        .iter()
        .find(|l| !l.trim().is_empty())
        .map_or(label_indent + 1, |l| indent_of(l));
    while end < lines.len() && end - start < 40 {
        let line = lines[end];
        let t = line.trim();
        let indent = indent_of(line);
        if (is_label(line) && indent <= label_indent) || (t == "}" && indent < label_indent) {
            break;
        }
        end += 1;
        if indent <= body_indent && (t == "break;" || t.starts_with("return") || t.starts_with("goto ")) {
            break;
        }
    }
    lines[start..end].join("\n")
}

fn extract_snippet(user: &str) -> String {
    let Some(m) = first_tag(user, "instruction").and_then(|s| Mnemonic::from_name(&s)) else {
        return "Which instruction?".into();
    };
    let files = extract_tags(user, "file");
    for pattern in snippet_patterns(m) {
        for labels_only in [true, false] {
            for f in &files {
                let lines: Vec<&str> = f.body.lines().collect();
                let hit = lines
                    .iter()
                    .position(|l| has_word(l, pattern) && (!labels_only || l.trim_start().starts_with("case ")));
                if let Some(at) = hit {
                    let path = f.attr.as_ref().map(|a| a.1.as_str()).unwrap_or("?");
                    return format!(
                        "The handling of {m} is in `{path}`:\n\n```c\n{}\n```\n",
                        excerpt(&lines, at)
                    );
                }
            }
        }
    }
    format!("None of the files handle {m}.")
}

struct Feature {
    title: &'static str,
    says: &'static str,
    patterns: &'static [&'static str],
}

const FEATURES: &[Feature] = &[
    Feature {
        title: "Immediate range check",
        says: "rejects immediate shift amounts at or above the operand width with -EINVAL",
        patterns: [">= 32", "> 31", ">= 64", "> 63"].as_slice(),
    },
    Feature {
        title: "Shift amount masking",
        says: "masks the shift amount to the operand width",
        patterns: ["& 31", "& 63", "& 0x1f", "& 0x3f"].as_slice(),
    },
    Feature {
        title: "Zero shift",
        says: "special-cases a shift amount of zero",
        patterns: ["imm == 0", "!imm", "if (imm)", "shift == 0", "sh == 0"].as_slice(),
    },
    Feature {
        title: "Upper half on 32-bit operations",
        says: "zero-extends 32-bit results into the upper half of the destination",
        patterns: ["(uint32_t)", "(u32)", "zext"].as_slice(),
    },
    Feature {
        title: "Division by zero",
        says: "handles a zero divisor without trapping",
        patterns: ["== 0 ?", "src == 0", "divisor == 0", "if (!src", "inst.imm ?"].as_slice(),
    },
    Feature {
        title: "Signed operands",
        says: "interprets the operands as signed values",
        patterns: ["(int64_t)", "(s64)", "(int32_t)", "(s32)", "sdiv", "smod"].as_slice(),
    },
    Feature {
        title: "Frame pointer writes",
        says: "rejects writes to the read-only frame pointer register %r10",
        patterns: ["bpf_reg_fp", "== 10", "frame_pointer"].as_slice(),
    },
    Feature {
        title: "Byte order",
        says: "reverses the byte order for the requested width",
        patterns: ["bswap", "swab", "rev16", "rev32", "htobe", "htole", "cpu_to_be", "cpu_to_le"].as_slice(),
    },
    Feature {
        title: "Sign extension",
        says: "sign-extends the narrower source value",
        patterns: ["(int8_t)", "(int16_t)", "(s8)", "(s16)", "sxtb", "sxth", "sxtw", "sign_extend"].as_slice(),
    },
    Feature {
        title: "Memory bounds",
        says: "checks the accessed address against the memory region bounds",
        patterns: ["bounds_check", "check_mem", "out of bounds"].as_slice(),
    },
    Feature {
        title: "Branch target",
        says: "computes the branch target relative to the next instruction",
        patterns: ["off + 1", "offset + 1", "pc + 1 +"].as_slice(),
    },
    Feature {
        title: "Branch target",
        says: "computes the branch target relative to the current instruction",
        patterns: ["pc += inst.offset;", "pc + off;", "pc += off;"].as_slice(),
    },
    Feature {
        title: "Instruction budget",
        says: "stops execution after a fixed instruction budget so loops cannot hang the runtime",
        patterns: ["max_insns", "insn_budget", "step_limit", "insn_cnt"].as_slice(),
    },
    Feature {
        title: "Helper dispatch",
        says: "dispatches helper calls through a fixed table and fails on unknown helper ids",
        patterns: ["helper", "ext_funcs"].as_slice(),
    },
    Feature {
        title: "Register initialisation",
        says: "clears every register to zero before execution",
        patterns: ["memset(reg", "regs[i] = 0", "reg[11] = {0}"].as_slice(),
    },
    Feature {
        title: "Invalid encodings",
        says: "returns -EINVAL for encodings it does not handle",
        patterns: ["-einval"].as_slice(),
    },
];

fn features(snippet: &str) -> Vec<&'static Feature> {
    let lower = snippet.to_lowercase();
    FEATURES
        .iter()
        .filter(|f| f.patterns.iter().any(|p| lower.contains(&p.to_lowercase())))
        .collect()
}

fn describe_code(user: &str) -> String {
    let m = first_tag(user, "instruction").unwrap_or_default();
    let snippet = first_tag(user, "snippet").unwrap_or_default();
    let found = features(&snippet);
    let mut s = format!("The code implements {m}.");
    if found.is_empty() {
        s.push_str(" It computes the result directly on the destination register and has no special cases.");
    }
    for f in found {
        s.push_str(&format!(" It {}.", f.says));
    }
    s
}

fn pair(user: &str, tag: &str) -> Option<((String, String), (String, String))> {
    let mut items = extract_tags(user, tag).into_iter().map(|t| {
        let id = t.attr.map(|a| a.1).unwrap_or_default();
        (id, t.body)
    });
    Some((items.next()?, items.next()?))
}

fn diff_code(user: &str) -> String {
    let Some(((a, sa), (b, sb))) = pair(user, "snippet") else {
        return "No differences.".into();
    };
    let (fa, fb) = (features(&sa), features(&sb));
    let mut items = Vec::new();
    for f in &fa {
        if !fb.iter().any(|g| std::ptr::eq(*f, *g)) {
            items.push(format!("{}: {a} {}, while {b} does not.", f.title, f.says));
        }
    }
    for f in &fb {
        if !fa.iter().any(|g| std::ptr::eq(*f, *g)) {
            items.push(format!("{}: {b} {}, while {a} does not.", f.title, f.says));
        }
    }
    if items.is_empty() {
        return "No differences.".into();
    }
    numbered(&items)
}

fn sentences(text: &str) -> Vec<String> {
    text.split(". ")
        .map(|s| s.trim().trim_end_matches('.').to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn diff_descriptions(user: &str) -> String {
    let Some(((a, da), (b, db))) = pair(user, "description") else {
        return "No differences.".into();
    };
    let (sa, sb) = (sentences(&da), sentences(&db));
    let mut items = Vec::new();
    for (who, other, mine, theirs) in [(&a, &b, &sa, &sb), (&b, &a, &sb, &sa)] {
        for s in mine {
            if !theirs.contains(s) {
                let s = s.strip_prefix("It ").unwrap_or(s);
                items.push(format!("{who}: {s}, while {other} is not described as doing so."));
            }
        }
    }
    if items.is_empty() {
        return "No differences.".into();
    }
    numbered(&items)
}

/// Bug categories the scripted model knows, with the words that place a
/// report in them. Order is the order of the reply.
const CATEGORIES: &[(&str, &str, &[&str])] = &[
    (
        "Instruction Encoding",
        "Incorrect assembly code generation by the eBPF JIT compiler, involving incorrect opcodes, registers, or misinterpreting eBPF instructions.",
        &["encod", "opcode", "emit", "immediate"],
    ),
    (
        "Stack Layout",
        "Incorrect stack frame setup or teardown, causing memory corruption.",
        &["stack", "frame"],
    ),
    (
        "Shift Operation",
        "Incorrect handling of shift operations, e.g. shift by 0 errors, leading to unexpected results, or hanging the kernel.",
        &["shift", "lsh", "rsh", "arsh"],
    ),
    (
        "Register Handling",
        "Incorrect usage, saving, or restoration of CPU registers.",
        &["register", "clobber", "uninit", "callee"],
    ),
    (
        "Endianness Conversion",
        "Incorrect conversions from big and little endian representations.",
        &["endian", "byte swap", "bswap", "be16", "be32", "le16"],
    ),
    (
        "Jump Handling",
        "Incorrect branch offsets or loop handling, sending control flow to the wrong instruction or never terminating.",
        &["jump", "branch", "loop", "jmp"],
    ),
];

/// Categories tried in this order when assigning a report; the most specific
/// vocabulary wins.
const ASSIGN_ORDER: &[usize] = &[2, 4, 1, 5, 3, 0];

fn categorize_bugs(user: &str) -> String {
    let mut counts = [0usize; CATEGORIES.len()];
    for r in extract_tags(user, "report") {
        let title = r.attr.map(|a| a.1).unwrap_or_default();
        let text = format!("{title} {}", r.body).to_lowercase();
        if let Some(&c) = ASSIGN_ORDER
            .iter()
            .find(|&&c| CATEGORIES[c].2.iter().any(|k| text.contains(k)))
        {
            counts[c] += 1;
        }
    }
    let items: Vec<String> = CATEGORIES
        .iter()
        .zip(counts)
        .filter(|(_, n)| *n > 0)
        .map(|((name, desc, _), _)| format!("**{name}** - {desc}"))
        .collect();
    if items.is_empty() {
        return "The reports do not share any categories.".into();
    }
    numbered(&items)
}

fn map_tests(user: &str) -> String {
    let mut out = String::new();
    for t in extract_tags(user, "test") {
        let name = t.attr.map(|a| a.1).unwrap_or_default();
        let names: Vec<&str> = scan_mnemonics(&t.body).iter().map(|m| m.name()).collect();
        out.push_str(&format!("{name}: {}\n", names.join(", ")));
    }
    out
}

fn family_words(m: Mnemonic) -> &'static [&'static str] {
    use Mnemonic::*;
    match m {
        End => &["byte swap", "endian"],
        Lddw => &["64-bit immediate", "load"],
        Ldx | Ldxs => &["load"],
        St | Stx => &["store"],
        Ja | Call | Exit => &["jump"],
        m if m.is_conditional_jump() => &["jump"],
        _ => &["arithmetic"],
    }
}

fn select_section(user: &str) -> String {
    let m = first_tag(user, "instruction").and_then(|s| Mnemonic::from_name(&s));
    let headings = first_tag(user, "headings").unwrap_or_default();
    let headings: Vec<&str> = headings
        .lines()
        .map(|h| h.trim().trim_start_matches("- ").trim())
        .filter(|h| !h.is_empty())
        .collect();
    let words = m.map(family_words).unwrap_or(&[]);
    headings
        .iter()
        .find(|h| {
            let lower = h.to_lowercase();
            words.iter().any(|w| lower.contains(w))
        })
        .or(headings.first())
        .map(|h| h.to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scenario {
    Basic,
    ZeroShift,
    OverWidth,
    Alu32,
    RegSource,
    Boundary,
    Negative,
    DivZero,
    Uninit,
    FpWrite,
    Stack,
    MemInput,
    NarrowLoad,
    ByteSwap,
    Taken,
    NotTaken,
    Jmp32,
    Loop,
    Helper,
    Wide,
}

use Scenario as S;

/// Checked in this order when reading a description back, so the longer
/// markers win over substrings of them.
const SCENARIOS: &[Scenario] = &[
    S::ZeroShift,
    S::OverWidth,
    S::DivZero,
    S::Uninit,
    S::FpWrite,
    S::NarrowLoad,
    S::Stack,
    S::MemInput,
    S::ByteSwap,
    S::NotTaken,
    S::Taken,
    S::Jmp32,
    S::Loop,
    S::Helper,
    S::Wide,
    S::Alu32,
    S::RegSource,
    S::Boundary,
    S::Negative,
    S::Basic,
];

impl Scenario {
    fn marker(self) -> &'static str {
        match self {
            S::Basic => "basic behaviour",
            S::ZeroShift => "shift count is zero",
            S::OverWidth => "larger than the operand width",
            S::Alu32 => "32-bit form",
            S::RegSource => "register source",
            S::Boundary => "boundary operands",
            S::Negative => "negative operands",
            S::DivZero => "zero divisor",
            S::Uninit => "never written",
            S::FpWrite => "frame pointer",
            S::Stack => "through the stack",
            S::MemInput => "input memory",
            S::NarrowLoad => "narrow load",
            S::ByteSwap => "byte pattern",
            S::Taken => "taken branch",
            S::NotTaken => "not taken",
            S::Jmp32 => "low 32 bits",
            S::Loop => "backward jump",
            S::Helper => "helper call",
            S::Wide => "64-bit immediate",
        }
    }

    fn text(self, m: Mnemonic) -> String {
        match self {
            S::Basic => format!("Check the basic behaviour of {m} with small operands and the result in %r0"),
            S::ZeroShift => "Check for edge cases where the shift count is zero; the source value should remain unchanged".into(),
            S::OverWidth => format!("Use {m} with a shift amount larger than the operand width and check how it is reduced"),
            S::Alu32 => format!("Use the 32-bit form of {m} on a value with nonzero upper bits and check that the upper half is cleared"),
            S::RegSource => format!("Use the register source form of {m} with the second operand held in another register"),
            S::Boundary => format!("Exercise {m} with boundary operands such as 0x7fffffff, 0x80000000, 0 and -1"),
            S::Negative => format!("Exercise {m} with negative operands to check sign handling"),
            S::DivZero => format!("Use {m} with a zero divisor, which the ISA defines instead of trapping"),
            S::Uninit => format!("Use {m} on a register that was never written before reading it"),
            S::FpWrite => format!("Use {m} with the frame pointer %r10 as destination, which must be rejected"),
            S::Stack => format!("Move a value through the stack with {m} at an offset below %r10 and read it back"),
            S::MemInput => format!("Use {m} on the input memory addressed by %r1 at several offsets"),
            S::NarrowLoad => format!("Do a narrow load with {m} into %r0 without setting its upper bits first"),
            S::ByteSwap => format!("Apply {m} to a known byte pattern at each width and compare the swapped value"),
            S::Taken => format!("Check that a taken branch of {m} lands exactly on its label"),
            S::NotTaken => format!("Check that {m} falls through when the branch is not taken"),
            S::Jmp32 => format!("Use the 32-bit variant of {m} so only the low 32 bits of the operands are compared"),
            S::Loop => format!("Build a counted loop with a backward jump using {m} and check the iteration count"),
            S::Helper => format!("Make a helper call with {m} and check the value returned in %r0"),
            S::Wide => format!("Load a 64-bit immediate with {m} whose upper and lower halves differ"),
        }
    }
}

fn is_shift(m: Mnemonic) -> bool {
    matches!(m, Mnemonic::Lsh | Mnemonic::Rsh | Mnemonic::Arsh)
}

fn is_signed_jump(m: Mnemonic) -> bool {
    matches!(m, Mnemonic::Jsgt | Mnemonic::Jsge | Mnemonic::Jslt | Mnemonic::Jsle)
}

/// Scenarios that make sense for `m`, in the order a plain request uses them.
fn applicable(m: Mnemonic) -> Vec<Scenario> {
    use Mnemonic::*;
    match m {
        Lsh | Rsh | Arsh => vec![S::ZeroShift, S::Basic, S::OverWidth, S::Alu32, S::RegSource, S::Boundary, S::Uninit, S::FpWrite],
        Div | Mod => vec![S::Basic, S::DivZero, S::Negative, S::Alu32, S::RegSource, S::Boundary, S::Uninit, S::FpWrite],
        Add | Sub | Mul | Or | And | Xor | Mov => {
            vec![S::Basic, S::Boundary, S::Alu32, S::RegSource, S::Negative, S::Uninit, S::FpWrite]
        }
        Neg => vec![S::Basic, S::Boundary, S::Alu32, S::Negative, S::Uninit, S::FpWrite],
        Movsx => vec![S::Basic, S::Negative, S::Alu32, S::Boundary, S::Uninit],
        End => vec![S::ByteSwap, S::Basic, S::Uninit],
        Ja => vec![S::Taken, S::Loop],
        Call => vec![S::Helper, S::Basic],
        Exit => vec![S::Basic, S::Uninit],
        Lddw => vec![S::Wide, S::Basic, S::Boundary],
        Ldx | Ldxs => vec![S::MemInput, S::NarrowLoad, S::Stack, S::Boundary],
        St | Stx => vec![S::Stack, S::MemInput, S::Boundary],
        _ => {
            let mut v = vec![S::Taken, S::NotTaken, S::Jmp32, S::Loop, S::RegSource, S::Uninit];
            if is_signed_jump(m) {
                v.insert(2, S::Negative);
            }
            v
        }
    }
}

/// Scenarios a piece of context points at.
fn suggested(context: &str) -> Vec<Scenario> {
    const KEYWORDS: &[(&str, &[Scenario])] = &[
        ("zero", &[S::ZeroShift, S::DivZero]),
        ("shift", &[S::ZeroShift, S::OverWidth, S::Alu32]),
        ("immediate", &[S::OverWidth, S::Wide, S::Boundary]),
        ("width", &[S::OverWidth, S::Alu32, S::ByteSwap]),
        ("32-bit", &[S::Alu32, S::Jmp32, S::NarrowLoad]),
        ("upper half", &[S::Alu32, S::NarrowLoad]),
        ("frame pointer", &[S::FpWrite, S::Stack]),
        ("stack", &[S::Stack, S::FpWrite]),
        ("register", &[S::Uninit, S::RegSource, S::FpWrite]),
        ("initialis", &[S::Uninit]),
        ("endian", &[S::ByteSwap]),
        ("byte order", &[S::ByteSwap]),
        ("branch", &[S::Taken, S::NotTaken, S::Loop]),
        ("jump", &[S::Taken, S::Loop]),
        ("loop", &[S::Loop]),
        ("budget", &[S::Loop]),
        ("sign", &[S::Negative, S::Boundary]),
        ("bounds", &[S::MemInput, S::Boundary]),
        ("memory", &[S::MemInput, S::NarrowLoad, S::Stack]),
        ("helper", &[S::Helper]),
        ("opcode", &[S::Alu32, S::RegSource, S::Jmp32]),
        ("encod", &[S::Alu32, S::RegSource, S::Boundary]),
        ("divisor", &[S::DivZero]),
    ];
    let lower = context.to_lowercase();
    let mut out = Vec::new();
    for (word, scenarios) in KEYWORDS {
        if lower.contains(word) {
            for s in *scenarios {
                if !out.contains(s) {
                    out.push(*s);
                }
            }
        }
    }
    out
}

fn generate_descriptions(user: &str) -> String {
    let Some(m) = first_tag(user, "instruction").and_then(|s| Mnemonic::from_name(&s)) else {
        return "Which instruction?".into();
    };
    let count: usize = first_tag(user, "count").and_then(|c| c.trim().parse().ok()).unwrap_or(10);
    let category = extract_tags(user, "bug_category").into_iter().next();
    let diff = first_tag(user, "code_difference").or_else(|| first_tag(user, "description_difference"));
    let mut context = String::new();
    if let Some(c) = &category {
        context.push_str(&c.body);
        context.push(' ');
        context.push_str(&c.attr.as_ref().map(|a| a.1.clone()).unwrap_or_default());
    }
    if let Some(d) = &diff {
        context.push(' ');
        context.push_str(d);
    }
    for d in extract_tags(user, "code_description") {
        context.push(' ');
        context.push_str(&d.body);
    }
    let allowed = applicable(m);
    let mut pool: Vec<Scenario> = suggested(&context).into_iter().filter(|s| allowed.contains(s)).collect();
    for s in allowed {
        if !pool.contains(&s) {
            pool.push(s);
        }
    }
    let reason = match (&category, &diff) {
        (_, Some(d)) => {
            let title = d.split_once(':').map(|(t, _)| t).unwrap_or(d);
            format!(" (targets the difference in {})", title.trim().to_lowercase())
        }
        (Some(c), None) => format!(
            " (targets {} bugs)",
            c.attr.as_ref().map(|a| a.1.to_lowercase()).unwrap_or_default()
        ),
        (None, None) => String::new(),
    };
    let items: Vec<String> = (0..count)
        .map(|i| {
            let s = pool[i % pool.len()];
            let round = i / pool.len();
            let again = if round > 0 { format!(", using different operand values (round {})", round + 1) } else { String::new() };
            format!("{}{again}{reason}.", s.text(m))
        })
        .collect();
    format!("Here are {count} test descriptions for {m}:\n\n{}", numbered(&items))
}

/// A test under construction. `dst` is where the computed value ends up;
/// anything other than 0 means the model forgot to move it into %r0.
struct Draft {
    asm: Vec<String>,
    mem: Option<Vec<u8>>,
    dst: u8,
}

impl Draft {
    fn new(dst: u8) -> Draft {
        Draft {
            asm: Vec::new(),
            mem: None,
            dst,
        }
    }

    fn line(&mut self, text: impl Into<String>) -> &mut Draft {
        self.asm.push(text.into());
        self
    }
}

fn alu_name(m: Mnemonic) -> &'static str {
    use Mnemonic::*;
    match m {
        Add => "add",
        Sub => "sub",
        Mul => "mul",
        Div => "div",
        Mod => "mod",
        Or => "or",
        And => "and",
        Lsh => "lsh",
        Rsh => "rsh",
        Arsh => "arsh",
        Xor => "xor",
        Mov => "mov",
        Neg => "neg",
        Jeq => "jeq",
        Jgt => "jgt",
        Jge => "jge",
        Jset => "jset",
        Jne => "jne",
        Jsgt => "jsgt",
        Jsge => "jsge",
        Jlt => "jlt",
        Jle => "jle",
        Jslt => "jslt",
        Jsle => "jsle",
        _ => "mov",
    }
}

const SMALL: &[i64] = &[1, 2, 3, 5, 7, 10, 12, 42, 100, 255, 0x1234, 0x7f];
const EDGES: &[i64] = &[0x7fffffff, -0x80000000, 0, -1, 1];
const NEGATIVE: &[i64] = &[-1, -2, -7, -100, -0x8000, -0x7fffffff];

fn hex(v: i64) -> String {
    if v < 0 {
        format!("-{:#x}", v.unsigned_abs())
    } else {
        format!("{v:#x}")
    }
}

/// A 64-bit value whose halves differ.
fn wide(d: &mut Dice) -> u64 {
    let v = d.u64();
    if (v >> 32) as u32 == v as u32 {
        v ^ 0x8000_0000_0000_0000
    } else {
        v
    }
}

fn alu_draft(m: Mnemonic, sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    let op = alu_name(m);
    let shift = is_shift(m);
    let divides = matches!(m, Mnemonic::Div | Mnemonic::Mod);
    let operand = |d: &mut Dice| {
        if shift {
            1 + d.below(31) as i64
        } else {
            d.pick(SMALL)
        }
    };
    let mut t = Draft::new(r);
    match sc {
        S::ZeroShift => match d.below(3) {
            0 => {
                t.line(format!("mov %r{r}, 0x12345678")).line(format!("{op} %r{r}, 0"));
            }
            1 => {
                let s = if r == 1 { 2 } else { 1 };
                t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL) << 8)))
                    .line(format!("mov %r{s}, 0"))
                    .line(format!("{op} %r{r}, %r{s}"));
            }
            _ => {
                t.line(format!("lddw %r{r}, {:#x}", wide(d))).line(format!("{op}32 %r{r}, 0"));
            }
        },
        S::OverWidth => {
            let is32 = d.chance(50);
            let amount = if is32 { d.pick(&[32, 33, 40, 63]) } else { d.pick(&[64, 65, 100, 127]) };
            t.line(format!("lddw %r{r}, {:#x}", wide(d)))
                .line(format!("{op}{} %r{r}, {amount}", if is32 { "32" } else { "" }));
        }
        S::Alu32 => {
            t.line(format!("lddw %r{r}, {:#x}", wide(d)));
            if m == Mnemonic::Neg {
                t.line(format!("neg32 %r{r}"));
            } else {
                t.line(format!("{op}32 %r{r}, {}", hex(operand(d))));
            }
        }
        S::RegSource => {
            let s = 1 + d.below(9) as u8;
            let s = if s == r { s % 9 + 1 } else { s };
            t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL) * 3)))
                .line(format!("mov %r{s}, {}", hex(operand(d))))
                .line(format!("{op} %r{r}, %r{s}"));
        }
        S::Boundary | S::Negative => {
            let pool = if sc == S::Boundary { EDGES } else { NEGATIVE };
            let a = d.pick(pool);
            let mut b = if shift { d.pick(&[0, 1, 31, 32, 63]) } else { d.pick(pool) };
            if divides && b == 0 {
                b = -1;
            }
            let signed = divides && sc == S::Negative;
            let name = match (signed, m) {
                (true, Mnemonic::Div) => "sdiv",
                (true, _) => "smod",
                _ => op,
            };
            t.line(format!("mov %r{r}, {}", hex(a)));
            if m == Mnemonic::Neg {
                t.line(format!("neg %r{r}"));
            } else {
                t.line(format!("{name} %r{r}, {}", hex(b)));
            }
        }
        S::DivZero => {
            let w = if d.chance(50) { "32" } else { "" };
            t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL))));
            if d.chance(50) {
                t.line(format!("{op}{w} %r{r}, 0"));
            } else {
                t.line("mov %r2, 0").line(format!("{op}{w} %r{r}, %r2"));
            }
        }
        S::Uninit => {
            let u = 6 + d.below(4) as u8;
            if m == Mnemonic::Neg {
                t.line(format!("neg %r{r}"));
            } else if m == Mnemonic::Mov {
                t.line(format!("mov %r{r}, %r{u}"));
            } else {
                t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL))))
                    .line(format!("{op} %r{r}, %r{u}"));
            }
        }
        S::FpWrite => {
            t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL))));
            if m == Mnemonic::Neg {
                t.line("neg %r10");
            } else {
                t.line(format!("{op} %r10, {}", hex(operand(d))));
            }
        }
        _ => {
            t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL) * 16)));
            if m == Mnemonic::Neg {
                t.line(format!("neg %r{r}"));
            } else {
                t.line(format!("{op} %r{r}, {}", hex(operand(d))));
            }
        }
    }
    t
}

fn movsx_draft(sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    let mut t = Draft::new(r);
    let s = if r == 3 { 4 } else { 3 };
    let name = match sc {
        S::Alu32 => d.pick(&["movsx832", "movsx1632"]),
        _ => d.pick(&["movsx864", "movsx1664", "movsx3264", "movsx832", "movsx1632"]),
    };
    match sc {
        S::Uninit => {
            t.line(format!("{name} %r{r}, %r7"));
        }
        S::Negative | S::Boundary => {
            let v = d.pick(&[0x80u64, 0xff, 0x8000, 0xffff, 0x8000_0000, 0xffff_ff80]);
            t.line(format!("lddw %r{s}, {v:#x}")).line(format!("{name} %r{r}, %r{s}"));
        }
        _ => {
            t.line(format!("lddw %r{s}, {:#x}", wide(d))).line(format!("{name} %r{r}, %r{s}"));
        }
    }
    t
}

fn end_draft(sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    let mut t = Draft::new(r);
    let name = d.pick(&["be16", "be32", "be64", "le16", "le32", "le64", "bswap16", "bswap32", "bswap64"]);
    match sc {
        S::Uninit => {
            t.line(format!("{name} %r{r}"));
        }
        S::Basic => {
            t.line(format!("mov %r{r}, {}", hex(d.pick(SMALL) * 0x101))).line(format!("{name} %r{r}"));
        }
        _ => {
            let other = wide(d);
            let v = d.pick(&[0x0123_4567_89ab_cdefu64, 0x1122_3344_5566_7788, other]);
            t.line(format!("lddw %r{r}, {v:#x}")).line(format!("{name} %r{r}"));
        }
    }
    t
}

/// Result of running `t` with the computed value copied into %r0.
fn model_belief(t: &Draft) -> Option<ExecutionResponse> {
    let mut lines = t.asm.clone();
    if t.dst != 0 {
        lines.insert(lines.len() - 1, format!("mov %r0, %r{}", t.dst));
    }
    let p = parse_asm(&lines.join("\n")).ok()?;
    Some(interpret(&p, t.mem.as_deref().unwrap_or(&[]), &SemanticsProfile::reference()))
}

fn returns(asm: &[String], mem: &[u8]) -> Option<u64> {
    let p = parse_asm(&asm.join("\n")).ok()?;
    match interpret(&p, mem, &SemanticsProfile::reference()) {
        ExecutionResponse::Returned(v) => Some(v),
        _ => None,
    }
}

fn branch_draft(m: Mnemonic, sc: Scenario, d: &mut Dice) -> Draft {
    let op = alu_name(m);
    let mut t = Draft::new(0);
    if m == Mnemonic::Ja {
        if sc == S::Loop {
            let n = 10 + d.below(40);
            t.line("mov %r0, 0")
                .line(format!("mov %r1, {n}"))
                .line("loop: jeq %r1, 0, done")
                .line("add %r0, 1")
                .line("sub %r1, 1")
                .line("ja loop")
                .line("done: exit");
        } else {
            t.line("mov %r0, 1").line("ja skip").line("mov %r0, 2").line("skip: exit");
        }
        return t;
    }
    if sc == S::Loop {
        let n = 10 + d.below(40) as i64;
        let templates: [(&str, &str, Vec<i64>); 2] = [
            ("mov %r1, {n}", "sub %r1, 1", vec![0, 1, -1]),
            ("mov %r1, 0", "add %r1, 1", vec![n, n - 1]),
        ];
        for (init, step, bounds) in templates {
            for b in bounds {
                let lines: Vec<String> = vec![
                    "mov %r0, 0".into(),
                    init.replace("{n}", &n.to_string()),
                    "loop: add %r0, 1".into(),
                    step.into(),
                    format!("{op} %r1, {b}, loop"),
                    "exit".into(),
                ];
                if returns(&lines, &[]) == Some(n as u64) {
                    t.asm = lines;
                    return t;
                }
            }
        }
    }
    if sc == S::Uninit {
        let u = 6 + d.below(4);
        t.line("mov %r0, 1")
            .line(format!("{op} %r{u}, 0, lbl"))
            .line("exit")
            .line("lbl: mov %r0, 2")
            .line("exit");
        return t;
    }
    let want_taken = sc != S::NotTaken;
    let wide_cmp = sc == S::Jmp32;
    let suffix = if wide_cmp { "32" } else { "" };
    let pool: &[i64] = if sc == S::Negative { NEGATIVE } else { SMALL };
    for _ in 0..64 {
        let a = d.pick(pool);
        let b = if d.chance(30) { a } else { d.pick(pool) };
        let mut lines: Vec<String> = vec!["mov %r0, 0".into()];
        if wide_cmp {
            lines.push(format!("lddw %r1, {:#x}", ((d.below(0xff) as u64 + 1) << 32) | (a as u32 as u64)));
        } else {
            lines.push(format!("mov %r1, {}", hex(a)));
        }
        if sc == S::RegSource {
            lines.push(format!("mov %r2, {}", hex(b)));
            lines.push(format!("{op}{suffix} %r1, %r2, lbl"));
        } else {
            lines.push(format!("{op}{suffix} %r1, {}, lbl", hex(b)));
        }
        lines.extend(["mov %r0, 1".into(), "exit".into(), "lbl: mov %r0, 2".into(), "exit".into()]);
        let taken = returns(&lines, &[]) == Some(2);
        if taken == want_taken {
            t.asm = lines;
            return t;
        }
    }
    t.line("mov %r0, 0").line(format!("{op} %r0, 0, lbl")).line("exit").line("lbl: mov %r0, 2").line("exit");
    t
}

fn mem_bytes(d: &mut Dice, n: usize) -> Vec<u8> {
    (0..n).map(|_| d.below(256) as u8).collect()
}

fn load_draft(m: Mnemonic, sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    let mut t = Draft::new(r);
    let sizes: &[(&str, i64)] = if m == Mnemonic::Ldxs {
        &[("sb", 1), ("sh", 2), ("sw", 4)]
    } else {
        &[("b", 1), ("h", 2), ("w", 4), ("dw", 8)]
    };
    let (sz, width) = d.pick(sizes);
    let name = format!("ldx{sz}");
    match sc {
        S::NarrowLoad => {
            let (sz, width) = d.pick(&sizes[..sizes.len().min(3)]);
            let mut mem = vec![0u8; width as usize];
            if d.chance(50) {
                mem = mem_bytes(d, width as usize);
            }
            t.mem = Some(mem);
            t.line(format!("ldx{sz} %r{r}, [%r1]"));
        }
        S::Stack => {
            let off = -8 * (1 + d.below(8) as i64);
            t.line(format!("lddw %r2, {:#x}", wide(d)))
                .line(format!("stxdw [%r10{off}], %r2"))
                .line(format!("{name} %r{r}, [%r10{off}]"));
        }
        S::Boundary => {
            let len = 8 + 8 * d.below(3);
            t.mem = Some(mem_bytes(d, len));
            let off = if d.chance(50) { len as i64 - width } else { len as i64 - width + 1 };
            t.line(format!("{name} %r{r}, [%r1+{off}]"));
        }
        _ => {
            let len = 16;
            t.mem = Some(mem_bytes(d, len));
            let off = width * d.below((len as i64 / width) as usize) as i64;
            t.line(format!("{name} %r{r}, [%r1+{off}]"));
        }
    }
    t
}

fn store_draft(m: Mnemonic, sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    let mut t = Draft::new(r);
    let (sz, width) = d.pick(&[("b", 1i64), ("h", 2), ("w", 4), ("dw", 8)]);
    let value = if sc == S::Boundary { d.pick(EDGES) } else { d.pick(SMALL) * 0x111 };
    let (base, off) = match sc {
        S::MemInput => {
            t.mem = Some(mem_bytes(d, 16));
            ("%r1".to_string(), width * d.below((16 / width) as usize) as i64)
        }
        _ => ("%r10".to_string(), -8 * (1 + d.below(8) as i64)),
    };
    let at = if off < 0 { format!("[{base}{off}]") } else { format!("[{base}+{off}]") };
    if m == Mnemonic::St {
        t.line(format!("st{sz} {at}, {}", hex(value)));
    } else {
        t.line(format!("mov %r3, {}", hex(value))).line(format!("stx{sz} {at}, %r3"));
    }
    t.line(format!("ldxdw %r{r}, {at}"));
    t
}

fn draft(m: Mnemonic, sc: Scenario, d: &mut Dice, r: u8) -> Draft {
    use Mnemonic::*;
    let mut t = match m {
        Movsx => movsx_draft(sc, d, r),
        End => end_draft(sc, d, r),
        Lddw => {
            let mut t = Draft::new(r);
            let v = match sc {
                S::Boundary => d.pick(&[0x8000_0000_0000_0000u64, u64::MAX, 0xffff_ffff, 0x7fff_ffff_8000_0000]),
                S::Basic => d.pick(SMALL) as u64,
                _ => wide(d),
            };
            t.line(format!("lddw %r{r}, {v:#x}"));
            t
        }
        Ldx | Ldxs => load_draft(m, sc, d, r),
        St | Stx => store_draft(m, sc, d, r),
        Call => {
            let mut t = Draft::new(0);
            t.line(format!("mov %r1, {}", hex(d.pick(SMALL))))
                .line(format!("call {}", 1 + d.below(5)));
            t
        }
        Exit => {
            let mut t = Draft::new(0);
            if sc != S::Uninit {
                t.line(format!("mov %r0, {}", hex(d.pick(SMALL))));
            }
            t
        }
        m if m.is_branch() => branch_draft(m, sc, d),
        _ => alu_draft(m, sc, d, r),
    };
    if t.asm.last().map(String::as_str) != Some("exit") && !t.asm.last().is_some_and(|l| l.ends_with(": exit")) {
        t.line("exit");
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flaw {
    MissingResult,
    BadRegister,
    ResultNotInR0,
    UnknownHelper,
    UnknownMnemonic,
    EndlessLoop,
}

impl Flaw {
    const ALL: &'static [Flaw] = &[
        Flaw::MissingResult,
        Flaw::BadRegister,
        Flaw::ResultNotInR0,
        Flaw::UnknownHelper,
        Flaw::UnknownMnemonic,
        Flaw::EndlessLoop,
    ];

    /// Guideline wording that makes the model avoid this mistake.
    fn avoided_by(self) -> &'static str {
        match self {
            Flaw::MissingResult => "-- result",
            Flaw::BadRegister => "%r10",
            Flaw::ResultNotInR0 => "output is in %r0",
            Flaw::UnknownHelper => "helper",
            Flaw::UnknownMnemonic => "only instructions",
            Flaw::EndlessLoop => "terminate",
        }
    }
}

fn generate_test(user: &str) -> String {
    let Some(m) = first_tag(user, "instruction").and_then(|s| Mnemonic::from_name(&s)) else {
        return "Which instruction?".into();
    };
    let mut d = Dice::new(user, "generate-test");
    let description = first_tag(user, "description");
    let guidelines = first_tag(user, "guidelines").unwrap_or_default().to_lowercase();
    let scenario = match &description {
        Some(text) => {
            let lower = text.to_lowercase();
            SCENARIOS
                .iter()
                .copied()
                .find(|s| lower.contains(s.marker()))
                .unwrap_or(S::Basic)
        }
        None => applicable(m)[0],
    };
    let single_phase = description.is_none();
    let flaw_rate = if single_phase { 30 } else { 55 };
    let flaw = if d.chance(flaw_rate) {
        let f = d.pick(Flaw::ALL);
        (!guidelines.contains(f.avoided_by())).then_some(f)
    } else {
        None
    };
    let r = if flaw == Some(Flaw::ResultNotInR0) { 2 + d.below(4) as u8 } else { 0 };
    let mut t = draft(m, scenario, &mut d, r);
    let expected = match model_belief(&t) {
        Some(ExecutionResponse::Returned(v)) => Expectation::Result(v),
        Some(ExecutionResponse::RuntimeError { message, .. }) => Expectation::Error(error_class(&message).to_string()),
        _ => Expectation::Result(0),
    };
    match flaw {
        Some(Flaw::BadRegister) => t.asm.insert(0, "mov %r11, 1".into()),
        Some(Flaw::UnknownHelper) => {
            let at = t.asm.len() - 1;
            t.asm.insert(at, "call 0x99".into());
        }
        Some(Flaw::UnknownMnemonic) => t.asm.insert(0, "xadd [%r10-8], %r0".into()),
        Some(Flaw::EndlessLoop) => t.asm.insert(0, "spin: ja spin".into()),
        _ => {}
    }
    let mut test = TestCase::new("generated", t.asm.join("\n"), expected);
    test.mem = t.mem;
    let mut text = serialize_test_file(&test);
    if flaw == Some(Flaw::MissingResult) {
        if let Some(cut) = text.find("-- result").or_else(|| text.find("-- error")) {
            text.truncate(cut);
        }
    }
    let intro = match &description {
        Some(_) => format!("Here is a test for {m} following the description:"),
        None => format!("Here is a test for {m}:"),
    };
    format!("{intro}\n\n```\n{}```\n", text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::parse_generated_test;
    use crate::prompts::UserPrompt;

    fn ask(kind: PromptKind, user: &str) -> String {
        ScriptedModel.reply(&kind.system_text(), user).unwrap()
    }

    #[test]
    fn unknown_task_is_refused() {
        assert!(ScriptedModel.reply("Task: nothing", "").is_none());
        let r = ScriptedModel.post("x", None, "{}").unwrap();
        assert_eq!(r.status, 400);
    }

    #[test]
    fn reads_instruction_tables() {
        let doc = "| Mnemonic | code |\n|---|---|\n| `ADD` | 0x0 |\n| RSH | 0x7 |\n| ADD | dup |";
        let reply = ask(PromptKind::ExtractInstructions, &UserPrompt::new().tag("spec", doc).build());
        assert!(reply.contains("1. ADD\n2. RSH\n"));
    }

    #[test]
    fn zero_shift_description_comes_first_for_shifts() {
        let user = UserPrompt::new()
            .tag("instruction", "RSH")
            .tag("constraints", "1. RSH shifts right")
            .tag("count", "3")
            .build();
        let reply = ask(PromptKind::GenerateDescriptions, &user);
        let items = crate::prompts::list_items(&reply);
        assert_eq!(items.len(), 3);
        assert!(items[0].starts_with("Check for edge cases where the shift count is zero"));
    }

    #[test]
    fn tests_with_guidelines_parse() {
        let guidelines = "1. Ensure that the output is in %r0\n2. Use only registers %r0 to %r10\n3. End with -- result or -- error\n4. Call only helper functions 1 to 5\n5. Use only instructions from the ISA\n6. Loops must terminate";
        for m in Mnemonic::ALL {
            for s in applicable(*m) {
                for round in 0..4 {
                    let user = UserPrompt::new()
                        .tag("instruction", m.name())
                        .tag("description", &format!("{} {round}", s.text(*m)))
                        .tag("guidelines", guidelines)
                        .build();
                    let reply = ask(PromptKind::GenerateTest, &user);
                    let t = parse_generated_test("t", &reply).unwrap_or_else(|e| panic!("{m} {s:?}: {e}\n{reply}"));
                    assert!(scan_mnemonics(&t.asm).contains(m), "{m} {s:?}\n{reply}");
                }
            }
        }
    }

    #[test]
    fn transport_wraps_reply() {
        let body = json!({
            "model": SCRIPTED_MODEL,
            "messages": [
                {"role": "system", "content": PromptKind::MapTests.system_text()},
                {"role": "user", "content": UserPrompt::new().tag_attr("test", "name", "t1", "mov %r0, 1\nexit").build()},
            ]
        });
        let r = ScriptedModel.post("scripted", None, &body.to_string()).unwrap();
        assert_eq!(r.status, 200);
        let v: Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(v["choices"][0]["message"]["content"], "t1: MOV, EXIT\n");
    }
}
