// SPDX-License-Identifier: Apache-2.0

//! Per-instruction context: constraints from the ISA document, code excerpts
//! and their differences from implementation trees, bug categories from
//! historical reports, and mapped example tests.

mod sources;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{coverage_gaps, map_tests_to_instructions, Corpus};
use crate::isa::Mnemonic;
use crate::llm::{CompletionProvider, ProviderError};
use crate::prompts::{self, fenced_blocks, list_items, says_no_differences, PromptKind, UserPrompt};
use crate::util::{to_json_pretty, write_atomic};

pub use sources::{
    candidate_files, load_bug_reports, read_tree, BugReport, SourceFile, SourceTree,
    CANDIDATE_BYTES_CAP,
};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("the model returned nothing usable for {0}")]
    EmptyExtraction(String),
    #[error("`{0}` is not in the extracted instruction list")]
    UnknownInstruction(String),
    #[error("no file in tree `{tree}` mentions {token}")]
    NoCandidateFiles { tree: String, token: String },
    #[error("excerpt for {mnemonic} from tree `{tree}` does not occur verbatim in any file")]
    HallucinatedExcerpt { tree: String, mnemonic: Mnemonic },
    #[error("cannot compare an empty snippet")]
    EmptySnippet,
    #[error("no bug reports given")]
    NoBugReports,
    #[error("bug categories reply has no `name - description` items")]
    UnparseableCategories,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    BadInput { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BugCategory {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub mnemonic: String,
    pub constraints: Vec<String>,
    /// Runtime id to verbatim excerpt.
    pub code_snippets: BTreeMap<String, String>,
    pub code_descriptions: BTreeMap<String, String>,
    pub code_diffs: Vec<String>,
    pub desc_diffs: Vec<String>,
    pub bug_categories: Vec<BugCategory>,
    pub example_tests: Vec<String>,
    /// Non-fatal extraction problems (missing snippets and the like).
    pub notes: Vec<String>,
}

impl ContextBundle {
    pub fn mnemonic(&self) -> Option<Mnemonic> {
        Mnemonic::from_name(&self.mnemonic)
    }
}

fn ask(llm: &dyn CompletionProvider, model: &str, kind: PromptKind, user: UserPrompt) -> Result<String, ProviderError> {
    llm.complete(&prompts::request(model, kind, user.build()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionList {
    pub mnemonics: Vec<Mnemonic>,
    /// Names the model produced that are not in the opcode table.
    pub unknown: Vec<String>,
}

fn clean_word(item: &str) -> String {
    let first = item
        .split(|c: char| c.is_whitespace() || c == ':' || c == '(' || c == ',')
        .find(|w| !w.is_empty())
        .unwrap_or("");
    first
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .to_ascii_uppercase()
}

pub fn extract_instructions(doc: &str, llm: &dyn CompletionProvider, model: &str) -> Result<InstructionList, ContextError> {
    if doc.trim().is_empty() {
        return Err(ContextError::EmptyExtraction("instructions".into()));
    }
    let reply = ask(llm, model, PromptKind::ExtractInstructions, UserPrompt::new().tag("spec", doc))?;
    let mut known = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for item in list_items(&reply) {
        let word = clean_word(&item);
        if word.is_empty() {
            continue;
        }
        match Mnemonic::from_name(&word) {
            Some(m) => {
                known.insert(m);
            }
            None => {
                unknown.insert(word);
            }
        }
    }
    if known.is_empty() {
        return Err(ContextError::EmptyExtraction("instructions".into()));
    }
    Ok(InstructionList {
        mnemonics: known.into_iter().collect(),
        unknown: unknown.into_iter().collect(),
    })
}

pub fn extract_constraints(
    doc: &str,
    mnemonic: Mnemonic,
    instructions: &InstructionList,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<Vec<String>, ContextError> {
    if !instructions.mnemonics.contains(&mnemonic) {
        return Err(ContextError::UnknownInstruction(mnemonic.to_string()));
    }
    let user = UserPrompt::new()
        .tag("instruction", mnemonic.name())
        .tag("spec", doc);
    let items = list_items(&ask(llm, model, PromptKind::ExtractConstraints, user)?);
    if items.is_empty() {
        return Err(ContextError::EmptyExtraction(format!("{mnemonic} constraints")));
    }
    Ok(items)
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Trim surrounding blank lines and trailing whitespace.
fn normalize_excerpt(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let start = lines.iter().position(|l| !l.is_empty()).unwrap_or(lines.len());
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(start, |e| e + 1);
    lines[start..end].join("\n")
}

fn occurs_verbatim(excerpt: &str, files: &[&SourceFile]) -> bool {
    files.iter().any(|f| {
        let normalized: String = f.text.lines().map(str::trim_end).collect::<Vec<_>>().join("\n");
        normalized.contains(excerpt)
    })
}

pub fn extract_code_snippet(
    tree: &SourceTree,
    constraints: &[String],
    mnemonic: Mnemonic,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<String, ContextError> {
    let token = mnemonic.opcode_macro();
    let candidates = candidate_files(tree, token);
    if candidates.is_empty() {
        return Err(ContextError::NoCandidateFiles {
            tree: tree.id.clone(),
            token: token.into(),
        });
    }
    let mut user = UserPrompt::new()
        .tag("instruction", mnemonic.name())
        .tag("constraints", &numbered(constraints));
    for (file, chunk) in &candidates {
        user = user.tag_attr("file", "path", &file.path, chunk);
    }
    let reply = ask(llm, model, PromptKind::ExtractSnippet, user)?;
    let raw = fenced_blocks(&reply).into_iter().next().unwrap_or(reply);
    let excerpt = normalize_excerpt(&raw);
    let files: Vec<&SourceFile> = candidates.iter().map(|(f, _)| *f).collect();
    if excerpt.is_empty() || !occurs_verbatim(&excerpt, &files) {
        return Err(ContextError::HallucinatedExcerpt {
            tree: tree.id.clone(),
            mnemonic,
        });
    }
    Ok(excerpt)
}

fn diff_items(reply: &str) -> Vec<String> {
    if says_no_differences(reply) {
        return Vec::new();
    }
    list_items(reply)
        .into_iter()
        .filter(|i| !says_no_differences(i))
        .collect()
}

pub fn diff_code(
    a: (&str, &str),
    b: (&str, &str),
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<Vec<String>, ContextError> {
    if a.1.trim().is_empty() || b.1.trim().is_empty() {
        return Err(ContextError::EmptySnippet);
    }
    if a.1 == b.1 {
        return Ok(Vec::new());
    }
    let user = UserPrompt::new()
        .tag_attr("snippet", "runtime", a.0, a.1)
        .tag_attr("snippet", "runtime", b.0, b.1);
    Ok(diff_items(&ask(llm, model, PromptKind::DiffCode, user)?))
}

pub fn describe_code(
    mnemonic: Mnemonic,
    snippet: &str,
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<String, ContextError> {
    if snippet.trim().is_empty() {
        return Err(ContextError::EmptySnippet);
    }
    let user = UserPrompt::new()
        .tag("instruction", mnemonic.name())
        .tag("snippet", snippet);
    let reply = ask(llm, model, PromptKind::DescribeCode, user)?;
    let text = reply.trim();
    if text.is_empty() {
        return Err(ContextError::EmptyExtraction(format!("{mnemonic} description")));
    }
    Ok(text.to_string())
}

pub fn diff_descriptions(
    a: (&str, &str),
    b: (&str, &str),
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<Vec<String>, ContextError> {
    if a.1.trim().is_empty() || b.1.trim().is_empty() {
        return Err(ContextError::EmptySnippet);
    }
    if a.1 == b.1 {
        return Ok(Vec::new());
    }
    let user = UserPrompt::new()
        .tag_attr("description", "runtime", a.0, a.1)
        .tag_attr("description", "runtime", b.0, b.1);
    Ok(diff_items(&ask(llm, model, PromptKind::DiffDescriptions, user)?))
}

/// `Name - description`, also accepting an en dash or a colon.
fn parse_category(item: &str) -> Option<BugCategory> {
    let (name, description) = [" - ", " – ", ": "]
        .iter()
        .find_map(|sep| item.split_once(sep))?;
    let name = name.trim().trim_matches(|c: char| c == '*' || c == '_' || c == '`');
    let description = description.trim();
    (!name.is_empty() && !description.is_empty()).then(|| BugCategory {
        name: name.to_string(),
        description: description.to_string(),
    })
}

pub fn categorize_bugs(reports: &[BugReport], llm: &dyn CompletionProvider, model: &str) -> Result<Vec<BugCategory>, ContextError> {
    if reports.is_empty() {
        return Err(ContextError::NoBugReports);
    }
    let mut user = UserPrompt::new();
    for r in reports {
        user = user.tag_attr("report", "title", &r.title.replace('"', "'"), &r.body);
    }
    let reply = ask(llm, model, PromptKind::CategorizeBugs, user)?;
    let cats: Vec<BugCategory> = list_items(&reply).iter().filter_map(|i| parse_category(i)).collect();
    if cats.is_empty() {
        return Err(ContextError::UnparseableCategories);
    }
    Ok(cats)
}

/// Everything extraction reads.
pub struct ExtractInputs<'a> {
    pub spec: &'a str,
    pub trees: &'a [SourceTree],
    pub bug_reports: &'a [BugReport],
    pub corpus: &'a Corpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub prompt_version: u32,
    pub model: String,
    pub instructions: Vec<Mnemonic>,
    pub unknown_mnemonics: Vec<String>,
    pub runtimes: Vec<String>,
    pub bug_categories: Vec<BugCategory>,
    pub mapping_lexical_only: bool,
    /// Instructions without any mapped human test.
    pub untested_instructions: Vec<Mnemonic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub manifest: Manifest,
    pub bundles: Vec<ContextBundle>,
}

fn pairs<T>(items: &[T]) -> impl Iterator<Item = (&T, &T)> {
    items
        .iter()
        .enumerate()
        .flat_map(move |(i, a)| items[i + 1..].iter().map(move |b| (a, b)))
}

fn push_unique(into: &mut Vec<String>, items: Vec<String>) {
    for i in items {
        if !into.contains(&i) {
            into.push(i);
        }
    }
}

fn bundle_for(
    m: Mnemonic,
    inputs: &ExtractInputs<'_>,
    instructions: &InstructionList,
    categories: &[BugCategory],
    examples: &[String],
    llm: &dyn CompletionProvider,
    model: &str,
) -> Result<ContextBundle, ContextError> {
    let mut b = ContextBundle {
        mnemonic: m.name().to_string(),
        bug_categories: categories.to_vec(),
        example_tests: examples.to_vec(),
        ..ContextBundle::default()
    };
    match extract_constraints(inputs.spec, m, instructions, llm, model) {
        Ok(c) => b.constraints = c,
        Err(ContextError::EmptyExtraction(what)) => b.notes.push(format!("empty extraction: {what}")),
        Err(e) => return Err(e),
    }
    for tree in inputs.trees {
        match extract_code_snippet(tree, &b.constraints, m, llm, model) {
            Ok(s) => {
                b.code_snippets.insert(tree.id.clone(), s);
            }
            Err(e @ (ContextError::NoCandidateFiles { .. } | ContextError::HallucinatedExcerpt { .. })) => {
                b.notes.push(e.to_string())
            }
            Err(e) => return Err(e),
        }
    }
    let snippets: Vec<(String, String)> = b.code_snippets.clone().into_iter().collect();
    for (id, s) in &snippets {
        let d = describe_code(m, s, llm, model)?;
        b.code_descriptions.insert(id.clone(), d);
    }
    for ((ia, sa), (ib, sb)) in pairs(&snippets) {
        push_unique(&mut b.code_diffs, diff_code((ia, sa), (ib, sb), llm, model)?);
    }
    let descs: Vec<(String, String)> = b.code_descriptions.clone().into_iter().collect();
    for ((ia, da), (ib, db)) in pairs(&descs) {
        push_unique(&mut b.desc_diffs, diff_descriptions((ia, da), (ib, db), llm, model)?);
    }
    Ok(b)
}

/// Run the whole extraction. Per-instruction work runs in parallel; the
/// provider bounds in-flight requests. Bundles come back sorted by mnemonic.
pub fn extract_all(inputs: &ExtractInputs<'_>, llm: &dyn CompletionProvider, model: &str) -> Result<Extraction, ContextError> {
    let instructions = extract_instructions(inputs.spec, llm, model)?;
    let categories = if inputs.bug_reports.is_empty() {
        Vec::new()
    } else {
        categorize_bugs(inputs.bug_reports, llm, model)?
    };
    let map = map_tests_to_instructions(inputs.corpus, Some(llm), model)?;
    let bundles = instructions
        .mnemonics
        .par_iter()
        .map(|&m| {
            bundle_for(m, inputs, &instructions, &categories, map.tests_for(m), llm, model)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        prompt_version: prompts::PROMPT_VERSION,
        model: model.to_string(),
        untested_instructions: coverage_gaps(&map, &instructions.mnemonics),
        instructions: instructions.mnemonics,
        unknown_mnemonics: instructions.unknown,
        runtimes: inputs.trees.iter().map(|t| t.id.clone()).collect(),
        bug_categories: categories,
        mapping_lexical_only: map.lexical_only,
    };
    Ok(Extraction { manifest, bundles })
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ContextError + '_ {
    move |source| ContextError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One `<MNEMONIC>.json` per bundle plus `manifest.json`, each written
/// atomically.
pub fn write_context_dir(dir: &Path, extraction: &Extraction) -> Result<(), ContextError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for b in &extraction.bundles {
        let path = dir.join(format!("{}.json", b.mnemonic));
        write_atomic(&path, to_json_pretty(b).as_bytes()).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    write_atomic(&path, to_json_pretty(&extraction.manifest).as_bytes()).map_err(io_err(&path))
}

pub fn read_context_dir(dir: &Path) -> Result<Extraction, ContextError> {
    let read_json = |path: &Path| -> Result<serde_json::Value, ContextError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ContextError::BadInput {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_value(read_json(&manifest_path)?).map_err(|e| ContextError::BadInput {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut bundles = Vec::new();
    for m in &manifest.instructions {
        let path = dir.join(format!("{}.json", m.name()));
        let b = serde_json::from_value(read_json(&path)?).map_err(|e| ContextError::BadInput {
            path: path.clone(),
            message: e.to_string(),
        })?;
        bundles.push(b);
    }
    Ok(Extraction { manifest, bundles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::PromptRequest;
    use std::sync::Mutex;

    /// Answers every prompt with a fixed reply and keeps the requests.
    struct Canned {
        reply: String,
        seen: Mutex<Vec<PromptRequest>>,
    }

    impl Canned {
        fn new(reply: &str) -> Canned {
            Canned {
                reply: reply.into(),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl CompletionProvider for Canned {
        fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
            self.seen.lock().unwrap().push(request.clone());
            Ok(self.reply.clone())
        }
    }

    fn tree(files: &[(&str, &str)]) -> SourceTree {
        SourceTree {
            id: "t".into(),
            root: PathBuf::from("/x"),
            files: files
                .iter()
                .map(|(p, t)| SourceFile {
                    path: p.to_string(),
                    text: t.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn instructions_are_validated() {
        let llm = Canned::new("1. RSH\n2. **MOV**\n3. XADD\n4. rsh");
        let l = extract_instructions("doc", &llm, "m").unwrap();
        assert_eq!(l.mnemonics, vec![Mnemonic::Rsh, Mnemonic::Mov]);
        assert_eq!(l.unknown, vec!["XADD".to_string()]);
        assert!(matches!(
            extract_instructions("  \n", &llm, "m"),
            Err(ContextError::EmptyExtraction(_))
        ));
        assert!(matches!(
            extract_instructions("doc", &Canned::new("1. XADD"), "m"),
            Err(ContextError::EmptyExtraction(_))
        ));
    }

    #[test]
    fn constraints_need_a_listed_instruction() {
        let llm = Canned::new("1. {RSH, K, ALU} means dst = (u32)(dst >> imm)");
        let list = InstructionList {
            mnemonics: vec![Mnemonic::Rsh],
            unknown: vec![],
        };
        let c = extract_constraints("doc", Mnemonic::Rsh, &list, &llm, "m").unwrap();
        assert!(c[0].contains("dst >> imm"));
        assert!(matches!(
            extract_constraints("doc", Mnemonic::Exit, &list, &llm, "m"),
            Err(ContextError::UnknownInstruction(_))
        ));
    }

    #[test]
    fn snippets_must_be_verbatim() {
        let t = tree(&[("a.c", "int x;\ncase BPF_ALU | BPF_RSH | BPF_K:\n  dst >>= imm;   \n  break;\n")]);
        let ok = Canned::new("Here:\n```c\ncase BPF_ALU | BPF_RSH | BPF_K:\n  dst >>= imm;\n```");
        let s = extract_code_snippet(&t, &[], Mnemonic::Rsh, &ok, "m").unwrap();
        assert!(s.contains("BPF_ALU | BPF_RSH"));
        let made_up = Canned::new("```c\ncase BPF_RSH: dst = 0;\n```");
        assert!(matches!(
            extract_code_snippet(&t, &[], Mnemonic::Rsh, &made_up, "m"),
            Err(ContextError::HallucinatedExcerpt { .. })
        ));
        assert!(matches!(
            extract_code_snippet(&t, &[], Mnemonic::Arsh, &ok, "m"),
            Err(ContextError::NoCandidateFiles { .. })
        ));
    }

    #[test]
    fn diffs() {
        let llm = Canned::new("1. Immediate check: a rejects imm > 31, b does not perform this check.");
        assert!(diff_code(("a", "x"), ("b", "x"), &llm, "m").unwrap().is_empty());
        assert!(llm.seen.lock().unwrap().is_empty());
        assert_eq!(diff_code(("a", "x"), ("b", "y"), &llm, "m").unwrap().len(), 1);
        assert!(matches!(diff_code(("a", ""), ("b", "y"), &llm, "m"), Err(ContextError::EmptySnippet)));
        let none = Canned::new("No differences.");
        assert!(diff_descriptions(("a", "x"), ("b", "y"), &none, "m").unwrap().is_empty());
    }

    #[test]
    fn bug_categories() {
        let r = [BugReport {
            title: "t".into(),
            body: "b".into(),
        }];
        let llm = Canned::new("1. **Shift Operation** - Incorrect handling of shift operations.\n2. Stack Layout: bad frames");
        let cats = categorize_bugs(&r, &llm, "m").unwrap();
        assert_eq!(cats[0].name, "Shift Operation");
        assert_eq!(cats[1].description, "bad frames");
        assert!(matches!(
            categorize_bugs(&r, &Canned::new("Shift stuff happens"), "m"),
            Err(ContextError::UnparseableCategories)
        ));
        assert!(matches!(categorize_bugs(&[], &llm, "m"), Err(ContextError::NoBugReports)));
    }
}
