// SPDX-License-Identifier: Apache-2.0

//! Prompt templates and completion parsing.
//!
//! Every system prompt starts with a `Task: <kind>` line. User prompts wrap
//! each input in XML-style tags (`<spec>...</spec>`). Recorded fixtures are
//! keyed on the exact bytes produced here, so any wording change must bump
//! [`PROMPT_VERSION`] and re-record.

use std::fmt::Write as _;

use crate::llm::PromptRequest;

pub const PROMPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    ExtractInstructions,
    ExtractConstraints,
    ExtractSnippet,
    DescribeCode,
    DiffCode,
    DiffDescriptions,
    CategorizeBugs,
    MapTests,
    SelectSection,
    GenerateDescriptions,
    GenerateTest,
}

impl PromptKind {
    pub const ALL: &'static [PromptKind] = &[
        PromptKind::ExtractInstructions,
        PromptKind::ExtractConstraints,
        PromptKind::ExtractSnippet,
        PromptKind::DescribeCode,
        PromptKind::DiffCode,
        PromptKind::DiffDescriptions,
        PromptKind::CategorizeBugs,
        PromptKind::MapTests,
        PromptKind::SelectSection,
        PromptKind::GenerateDescriptions,
        PromptKind::GenerateTest,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PromptKind::ExtractInstructions => "extract-instructions",
            PromptKind::ExtractConstraints => "extract-constraints",
            PromptKind::ExtractSnippet => "extract-snippet",
            PromptKind::DescribeCode => "describe-code",
            PromptKind::DiffCode => "diff-code",
            PromptKind::DiffDescriptions => "diff-descriptions",
            PromptKind::CategorizeBugs => "categorize-bugs",
            PromptKind::MapTests => "map-tests",
            PromptKind::SelectSection => "select-section",
            PromptKind::GenerateDescriptions => "generate-descriptions",
            PromptKind::GenerateTest => "generate-test",
        }
    }

    pub fn from_id(id: &str) -> Option<PromptKind> {
        PromptKind::ALL.iter().copied().find(|k| k.id() == id)
    }

    fn instructions(self) -> &'static str {
        match self {
            PromptKind::ExtractInstructions => {
                "You read instruction set specifications. List every instruction \
                 the document defines, one mnemonic per numbered line, uppercase, \
                 without opcode values or commentary."
            }
            PromptKind::ExtractConstraints => {
                "You read instruction set specifications. For the instruction named \
                 in <instruction>, list every semantic rule, operand constraint and \
                 edge case the document states, as a numbered list. Quote formulas \
                 exactly as written."
            }
            PromptKind::ExtractSnippet => {
                "You read interpreter and JIT source code. Using the constraints as a \
                 guide, copy the code that implements the instruction from the files \
                 provided. Reply with one fenced code block containing an exact, \
                 unmodified excerpt."
            }
            PromptKind::DescribeCode => {
                "Describe in plain prose what the code in <snippet> does for the \
                 instruction, including how it treats operands, immediates and edge \
                 cases."
            }
            PromptKind::DiffCode => {
                "Two implementations of the same instruction are given. List the \
                 behavioural differences between them as a numbered list, each item \
                 starting with a short title followed by a colon. Reply \
                 `No differences.` if they behave the same."
            }
            PromptKind::DiffDescriptions => {
                "Two descriptions of implementations of the same instruction are \
                 given. List the behavioural differences between them as a numbered \
                 list. Reply `No differences.` if there are none."
            }
            PromptKind::CategorizeBugs => {
                "Group the bug reports into high-level categories. Reply with a \
                 numbered list where each item is `Category name - description`."
            }
            PromptKind::MapTests => {
                "For each test, list the instructions it exercises. Reply with one \
                 line per test: `test_name: MNEMONIC, MNEMONIC`."
            }
            PromptKind::SelectSection => {
                "Pick the specification section most relevant to the instruction. \
                 Reply with the section heading exactly as written and nothing else."
            }
            PromptKind::GenerateDescriptions => {
                "You write test plans for conformance testing of instruction set \
                 runtimes. Using the context given, write descriptions of tests for \
                 the instruction, as a numbered list. Each description says what the \
                 test checks and why it may expose differences between \
                 implementations."
            }
            PromptKind::GenerateTest => {
                "You write conformance tests in the format of the examples: `-- asm` \
                 followed by assembly, optional `-- mem` with hex bytes, then \
                 `-- result` with the expected value of %r0 or `-- error`. Reply with \
                 one fenced code block containing exactly one test."
            }
        }
    }

    pub fn system_text(self) -> String {
        format!("Task: {}\n{}", self.id(), self.instructions())
    }
}

/// Kind named on the first line of a system prompt.
pub fn kind_of(system: &str) -> Option<PromptKind> {
    let first = system.lines().next()?;
    PromptKind::from_id(first.strip_prefix("Task: ")?.trim())
}

pub fn request(model: &str, kind: PromptKind, user: String) -> PromptRequest {
    PromptRequest::new(model, kind.system_text(), user)
}

/// Incrementally built user prompt.
#[derive(Default)]
pub struct UserPrompt(String);

impl UserPrompt {
    pub fn new() -> UserPrompt {
        UserPrompt::default()
    }

    pub fn tag(mut self, name: &str, body: &str) -> UserPrompt {
        let _ = write!(self.0, "<{name}>\n{}\n</{name}>\n", body.trim_end());
        self
    }

    pub fn tag_attr(mut self, name: &str, attr: &str, value: &str, body: &str) -> UserPrompt {
        let _ = write!(
            self.0,
            "<{name} {attr}=\"{value}\">\n{}\n</{name}>\n",
            body.trim_end()
        );
        self
    }

    pub fn text(mut self, line: &str) -> UserPrompt {
        self.0.push_str(line);
        self.0.push('\n');
        self
    }

    pub fn build(self) -> String {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagged {
    pub attr: Option<(String, String)>,
    pub body: String,
}

/// Bodies of every `<name>` / `<name attr="v">` element, in order.
pub fn extract_tags(text: &str, name: &str) -> Vec<Tagged> {
    let close = format!("</{name}>");
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let Some(open_at) = find_open(rest, name) else { break };
        let after_name = &rest[open_at + 1 + name.len()..];
        let Some(gt) = after_name.find('>') else { break };
        let attr_text = after_name[..gt].trim();
        let body_start = &after_name[gt + 1..];
        let Some(end) = body_start.find(&close) else { break };
        let body = body_start[..end]
            .strip_prefix('\n')
            .unwrap_or(&body_start[..end]);
        let body = body.strip_suffix('\n').unwrap_or(body);
        let attr = attr_text.split_once('=').map(|(k, v)| {
            (k.trim().to_string(), v.trim().trim_matches('"').to_string())
        });
        out.push(Tagged {
            attr,
            body: body.to_string(),
        });
        rest = &body_start[end + close.len()..];
    }
    out
}

fn find_open(text: &str, name: &str) -> Option<usize> {
    let needle = format!("<{name}");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        match text[at + needle.len()..].chars().next() {
            Some('>') | Some(' ') => return Some(at),
            _ => from = at + needle.len(),
        }
    }
    None
}

pub fn first_tag(text: &str, name: &str) -> Option<String> {
    extract_tags(text, name).into_iter().next().map(|t| t.body)
}

fn strip_enumerator(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Some(rest);
        }
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && digits <= 3 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r);
        }
    }
    None
}

/// Split a completion into list items on line-leading enumerators (`1.`,
/// `2)`, `-`, `*`). Indented lines continue the previous item; prose before
/// the first item is dropped. Markdown bold markers are removed.
pub fn list_items(text: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut in_item = false;
    for line in text.lines() {
        if let Some(body) = strip_enumerator(line) {
            items.push(body.trim().to_string());
            in_item = true;
        } else if line.trim().is_empty() {
            in_item = false;
        } else if in_item && line.starts_with([' ', '\t']) {
            let last = items.last_mut().expect("in_item implies an item");
            last.push(' ');
            last.push_str(line.trim());
        } else {
            in_item = false;
        }
    }
    items
        .into_iter()
        .map(|s| s.replace("**", ""))
        .filter(|s| !s.is_empty())
        .collect()
}

/// True for completions that say there is nothing to report.
pub fn says_no_differences(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
    t == "no differences" || t == "none"
}

/// Contents of fenced code blocks (```lang ... ```), in order.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => blocks.push(lines.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_system_text() {
        for k in PromptKind::ALL {
            assert_eq!(kind_of(&k.system_text()), Some(*k));
        }
        assert_eq!(kind_of("hello"), None);
    }

    #[test]
    fn tags() {
        let p = UserPrompt::new()
            .tag("instruction", "RSH")
            .tag_attr("file", "path", "a/b.c", "int x;\n")
            .tag_attr("file", "path", "c.c", "<fileish>")
            .build();
        assert_eq!(first_tag(&p, "instruction").as_deref(), Some("RSH"));
        let files = extract_tags(&p, "file");
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].attr, Some(("path".into(), "a/b.c".into())));
        assert_eq!(files[0].body, "int x;");
        assert_eq!(files[1].body, "<fileish>");
        assert!(extract_tags(&p, "fil").is_empty());
    }

    #[test]
    fn list_parsing() {
        let text = "Here are the rules:\n\n1. **First** rule\n   continues here\n2) Second\n- third\n\nThat is all.";
        assert_eq!(
            list_items(text),
            vec!["First rule continues here", "Second", "third"]
        );
        assert!(list_items("No differences.").is_empty());
        assert!(says_no_differences(" No differences.\n"));
    }

    #[test]
    fn fences() {
        let text = "Sure:\n```c\ncase X:\n  y();\n```\nand\n```\nz\n```";
        assert_eq!(fenced_blocks(text), vec!["case X:\n  y();", "z"]);
    }
}
