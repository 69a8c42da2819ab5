// SPDX-License-Identifier: Apache-2.0

//! Conformance test file format.
//!
//! ```text
//! // free-form description lines
//! -- asm
//! ldxw %r0, [%r1]
//! exit
//! -- mem
//! 00 00 00 00
//! -- result
//! 0x0
//! ```
//!
//! Exactly one of `-- result` and `-- error` must be present. Header comment
//! lines (`//` or `#`) before the first section form the description; a
//! `// provenance: ...` header line records where a test came from.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{parse_asm, AsmError, Program};

/// Mem bytes per serialized line.
const MEM_BYTES_PER_LINE: usize = 16;
const PROVENANCE_TAG: &str = "provenance:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestFileError {
    #[error("missing `-- asm` section")]
    MissingAsmSection,
    #[error("both `-- result` and `-- error` present")]
    BothResultAndError,
    #[error("neither `-- result` nor `-- error` present")]
    NeitherResultNorError,
    #[error("line {line}: bad mem byte `{token}`")]
    BadMemHex { line: usize, token: String },
    #[error("line {line}: bad result literal `{text}`")]
    BadResultLiteral { line: usize, text: String },
    #[error("line {line}: unknown section `{section}`")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: duplicate section `{section}`")]
    DuplicateSection { line: usize, section: String },
    #[error("line {line}: text outside any section")]
    StrayText { line: usize },
    #[error("line {line}: bad provenance `{text}`")]
    BadProvenance { line: usize, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Result(u64),
    Error(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Human,
    Generated {
        config: String,
        mnemonic: String,
        prompt_hash: String,
    },
    Fuzzed {
        seed: u64,
    },
}

impl Provenance {
    fn header(&self) -> Option<String> {
        match self {
            Provenance::Human => None,
            Provenance::Generated {
                config,
                mnemonic,
                prompt_hash,
            } => Some(format!(
                "generated config={config} mnemonic={mnemonic} prompt={prompt_hash}"
            )),
            Provenance::Fuzzed { seed } => Some(format!("fuzzed seed={seed}")),
        }
    }

    fn parse(text: &str) -> Option<Provenance> {
        let mut words = text.split_whitespace();
        let kind = words.next()?;
        let fields: Vec<(&str, &str)> = words.map(|w| w.split_once('=')).collect::<Option<_>>()?;
        let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        match kind {
            "human" if fields.is_empty() => Some(Provenance::Human),
            "generated" if fields.len() == 3 => Some(Provenance::Generated {
                config: get("config")?.to_string(),
                mnemonic: get("mnemonic")?.to_string(),
                prompt_hash: get("prompt")?.to_string(),
            }),
            "fuzzed" if fields.len() == 1 => Some(Provenance::Fuzzed {
                seed: get("seed")?.parse().ok()?,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    /// Header comment lines, marker stripped.
    pub description: Vec<String>,
    pub asm: String,
    pub mem: Option<Vec<u8>>,
    pub expected: Expectation,
    pub provenance: Provenance,
}

impl TestCase {
    pub fn new(name: impl Into<String>, asm: impl Into<String>, expected: Expectation) -> TestCase {
        TestCase {
            name: name.into(),
            description: Vec::new(),
            asm: asm.into(),
            mem: None,
            expected,
            provenance: Provenance::Human,
        }
    }

    pub fn program(&self) -> Result<Program, AsmError> {
        parse_asm(&self.asm)
    }

    pub fn expected_result(&self) -> Option<u64> {
        match self.expected {
            Expectation::Result(v) => Some(v),
            Expectation::Error(_) => None,
        }
    }

    pub fn expected_error(&self) -> Option<&str> {
        match &self.expected {
            Expectation::Result(_) => None,
            Expectation::Error(e) => Some(e),
        }
    }

    /// Non-blank lines of the asm section.
    pub fn asm_line_count(&self) -> usize {
        self.asm.lines().filter(|l| !l.trim().is_empty()).count()
    }

    pub fn mem_bytes(&self) -> &[u8] {
        self.mem.as_deref().unwrap_or(&[])
    }
}

/// Whether a runtime error message satisfies an expected `-- error` text.
/// Case-insensitive substring match.
pub fn error_matches(expected: &str, actual: &str) -> bool {
    actual
        .to_lowercase()
        .contains(expected.trim().to_lowercase().as_str())
}

fn parse_u64_literal(text: &str) -> Option<u64> {
    let t = text.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
        t.parse().ok()
    } else {
        None
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Header,
    Asm,
    Mem,
    Result,
    Error,
}

fn join_trimmed(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Parse one test file. `name` is normally the file stem.
///
/// Trailing whitespace on every line and blank lines at the edges of each
/// section are dropped; everything else is kept verbatim.
pub fn parse_test_file(name: &str, text: &str) -> Result<TestCase, TestFileError> {
    let mut description = Vec::new();
    let mut provenance = Provenance::Human;
    let mut asm: Option<Vec<&str>> = None;
    let mut mem: Option<(usize, Vec<&str>)> = None;
    let mut result: Option<(usize, Vec<&str>)> = None;
    let mut error: Option<Vec<&str>> = None;
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if let Some(marker) = line.strip_prefix("--") {
            let label = marker.trim().to_ascii_lowercase();
            let (next, present) = match label.as_str() {
                "asm" => (Section::Asm, asm.is_some()),
                "mem" => (Section::Mem, mem.is_some()),
                "result" => (Section::Result, result.is_some()),
                "error" => (Section::Error, error.is_some()),
                _ => {
                    return Err(TestFileError::UnknownSection {
                        line: line_no,
                        section: marker.trim().to_string(),
                    })
                }
            };
            if present {
                return Err(TestFileError::DuplicateSection {
                    line: line_no,
                    section: label,
                });
            }
            match next {
                Section::Asm => asm = Some(Vec::new()),
                Section::Mem => mem = Some((line_no, Vec::new())),
                Section::Result => result = Some((line_no, Vec::new())),
                Section::Error => error = Some(Vec::new()),
                Section::Header => unreachable!(),
            }
            section = next;
            continue;
        }
        match section {
            Section::Header => {
                let trimmed = line.trim_start();
                let comment = trimmed
                    .strip_prefix("//")
                    .or_else(|| trimmed.strip_prefix('#'));
                match comment {
                    Some(c) => {
                        let c = c.strip_prefix(' ').unwrap_or(c);
                        if let Some(p) = c.trim_start().strip_prefix(PROVENANCE_TAG) {
                            provenance =
                                Provenance::parse(p).ok_or_else(|| TestFileError::BadProvenance {
                                    line: line_no,
                                    text: p.trim().to_string(),
                                })?;
                        } else {
                            description.push(c.to_string());
                        }
                    }
                    None if trimmed.is_empty() => {}
                    None => return Err(TestFileError::StrayText { line: line_no }),
                }
            }
            Section::Asm => asm.as_mut().unwrap().push(line),
            Section::Mem => mem.as_mut().unwrap().1.push(line),
            Section::Result => result.as_mut().unwrap().1.push(line),
            Section::Error => error.as_mut().unwrap().push(line),
        }
    }

    let asm = asm.ok_or(TestFileError::MissingAsmSection)?;
    let expected = match (result, error) {
        (Some(_), Some(_)) => return Err(TestFileError::BothResultAndError),
        (None, None) => return Err(TestFileError::NeitherResultNorError),
        (Some((start, lines)), None) => {
            let text = join_trimmed(&lines);
            let value = parse_u64_literal(&text).ok_or_else(|| TestFileError::BadResultLiteral {
                line: start + 1,
                text: text.clone(),
            })?;
            Expectation::Result(value)
        }
        (None, Some(lines)) => Expectation::Error(join_trimmed(&lines)),
    };
    let mem = match mem {
        None => None,
        Some((start, lines)) => {
            let mut bytes = Vec::new();
            for (offset, line) in lines.iter().enumerate() {
                for token in line.split_whitespace() {
                    let ok = token.len() == 2 && token.bytes().all(|b| b.is_ascii_hexdigit());
                    if !ok {
                        return Err(TestFileError::BadMemHex {
                            line: start + 1 + offset,
                            token: token.to_string(),
                        });
                    }
                    bytes.push(u8::from_str_radix(token, 16).expect("validated"));
                }
            }
            Some(bytes)
        }
    };

    Ok(TestCase {
        name: name.to_string(),
        description,
        asm: join_trimmed(&asm),
        mem,
        expected,
        provenance,
    })
}

/// Inverse of [`parse_test_file`]. Mem is re-emitted as lowercase byte pairs,
/// 16 per line; results as lowercase hex.
pub fn serialize_test_file(test: &TestCase) -> String {
    let mut out = String::new();
    for line in &test.description {
        if line.is_empty() {
            out.push_str("//\n");
        } else {
            let _ = writeln!(out, "// {line}");
        }
    }
    if let Some(p) = test.provenance.header() {
        let _ = writeln!(out, "// {PROVENANCE_TAG} {p}");
    }
    out.push_str("-- asm\n");
    if !test.asm.is_empty() {
        out.push_str(&test.asm);
        out.push('\n');
    }
    if let Some(mem) = &test.mem {
        out.push_str("-- mem\n");
        for chunk in mem.chunks(MEM_BYTES_PER_LINE) {
            let line: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    match &test.expected {
        Expectation::Result(v) => {
            let _ = writeln!(out, "-- result\n{v:#x}");
        }
        Expectation::Error(e) => {
            out.push_str("-- error\n");
            if !e.is_empty() {
                out.push_str(e);
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LDXW: &str = "-- asm\nldxw %r0, [%r1]\nexit\n-- mem\n00 00 00 00\n-- result\n0x0\n";

    #[test]
    fn ldxw_memory_test() {
        let t = parse_test_file("ldxw", LDXW).unwrap();
        assert_eq!(t.asm, "ldxw %r0, [%r1]\nexit");
        assert_eq!(t.mem, Some(vec![0, 0, 0, 0]));
        assert_eq!(t.expected, Expectation::Result(0));
        assert_eq!(serialize_test_file(&t), LDXW);
    }

    #[test]
    fn minimal() {
        let t = parse_test_file("min", "-- asm\nexit\n-- result\n0x0").unwrap();
        assert_eq!(t.asm, "exit");
        assert_eq!(t.mem, None);
        assert_eq!(parse_test_file("min", &serialize_test_file(&t)).unwrap(), t);
    }

    #[test]
    fn section_errors() {
        assert_eq!(
            parse_test_file("t", "-- asm\nexit\n-- result\n0x0\n-- error\nbad"),
            Err(TestFileError::BothResultAndError)
        );
        assert_eq!(
            parse_test_file("t", "-- asm\nexit\n"),
            Err(TestFileError::NeitherResultNorError)
        );
        assert_eq!(
            parse_test_file("t", "-- result\n0x0\n"),
            Err(TestFileError::MissingAsmSection)
        );
        assert_eq!(
            parse_test_file("t", "-- asm\nexit\n-- mem\n00 0g\n-- result\n1"),
            Err(TestFileError::BadMemHex { line: 4, token: "0g".into() })
        );
        assert_eq!(
            parse_test_file("t", "-- asm\nexit\n-- result\nzero"),
            Err(TestFileError::BadResultLiteral { line: 4, text: "zero".into() })
        );
        assert!(matches!(
            parse_test_file("t", "-- raw\n95\n"),
            Err(TestFileError::UnknownSection { line: 1, .. })
        ));
        assert!(matches!(
            parse_test_file("t", "Here is the test:\n-- asm\nexit\n-- result\n0"),
            Err(TestFileError::StrayText { line: 1 })
        ));
    }

    #[test]
    fn description_and_provenance_round_trip() {
        let text = "// Test with a zero-shift count.\n//\n// provenance: generated config=code-diff mnemonic=RSH prompt=ab12\n-- asm\nmov %r0, 0x12345678\nrsh %r0, 0\nexit\n-- result\n0x12345678\n";
        let t = parse_test_file("g", text).unwrap();
        assert_eq!(t.description, vec!["Test with a zero-shift count.".to_string(), String::new()]);
        assert_eq!(
            t.provenance,
            Provenance::Generated {
                config: "code-diff".into(),
                mnemonic: "RSH".into(),
                prompt_hash: "ab12".into()
            }
        );
        assert_eq!(serialize_test_file(&t), text);
    }

    #[test]
    fn decimal_result_and_error_section() {
        let t = parse_test_file("d", "-- asm\nexit\n-- result\n42\n").unwrap();
        assert_eq!(t.expected_result(), Some(42));
        let t = parse_test_file("e", "# upstream comment\n-- asm\nmov %r10, 1\nexit\n-- error\nInvalid  register\n").unwrap();
        assert_eq!(t.expected_error(), Some("Invalid  register"));
        assert_eq!(t.description, vec!["upstream comment".to_string()]);
    }

    #[test]
    fn error_match_is_case_insensitive_substring() {
        assert!(error_matches("invalid register", "Plugin: INVALID REGISTER r10"));
        assert!(!error_matches("division", "invalid register"));
        assert!(error_matches("", "anything"));
    }

    #[test]
    fn asm_line_count_ignores_blanks() {
        let t = TestCase::new("x", "mov %r0, 1\n\nexit", Expectation::Result(1));
        assert_eq!(t.asm_line_count(), 2);
    }
}
