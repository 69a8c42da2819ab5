// SPDX-License-Identifier: Apache-2.0

//! Implementation source trees and bug-report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ContextError;

/// Upper bound on source text sent in one snippet prompt.
pub const CANDIDATE_BYTES_CAP: usize = 48 * 1024;
/// Files larger than this are skipped when reading a tree.
const MAX_FILE_BYTES: u64 = 1 << 20;
/// Lines kept either side of the first mention when a file must be cut.
const WINDOW_LINES: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    /// Path relative to the tree root, `/`-separated.
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTree {
    pub id: String,
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<SourceFile>) -> Result<(), ContextError> {
    let io = |source| ContextError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| ContextError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        let meta = e.metadata().map_err(|source| ContextError::Io {
            path: path.clone(),
            source,
        })?;
        if meta.is_dir() {
            walk(root, &path, out)?;
        } else if meta.is_file() && meta.len() <= MAX_FILE_BYTES {
            // Binary files are skipped.
            if let Ok(text) = std::fs::read_to_string(&path) {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                out.push(SourceFile { path: rel, text });
            }
        }
    }
    Ok(())
}

/// Read every text file under `root`, sorted by path.
pub fn read_tree(id: &str, root: &Path) -> Result<SourceTree, ContextError> {
    let mut files = Vec::new();
    walk(root, root, &mut files)?;
    Ok(SourceTree {
        id: id.to_string(),
        root: root.to_path_buf(),
        files,
    })
}

fn contains_token(text: &str, token: &str) -> usize {
    text.match_indices(token)
        .filter(|(at, _)| {
            let next = text[at + token.len()..].chars().next();
            !next.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        })
        .count()
}

fn window(text: &str, token: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let first = lines
        .iter()
        .position(|l| contains_token(l, token) > 0)
        .unwrap_or(0);
    let start = first.saturating_sub(WINDOW_LINES);
    let end = (first + WINDOW_LINES).min(lines.len());
    lines[start..end].join("\n")
}

/// Files mentioning `token` as a whole word, most mentions first, each
/// paired with the text to send. Files are added whole until the byte cap;
/// a file too large for the remaining budget is cut to a window around its
/// first mention.
pub fn candidate_files<'t>(tree: &'t SourceTree, token: &str) -> Vec<(&'t SourceFile, String)> {
    let mut hits: Vec<(usize, &SourceFile)> = tree
        .files
        .iter()
        .map(|f| (contains_token(&f.text, token), f))
        .filter(|(n, _)| *n > 0)
        .collect();
    hits.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.path.cmp(&b.1.path)));
    let mut budget = CANDIDATE_BYTES_CAP;
    let mut out = Vec::new();
    for (_, f) in hits {
        let chunk = if f.text.len() <= budget {
            f.text.clone()
        } else {
            window(&f.text, token)
        };
        if chunk.len() > budget && !out.is_empty() {
            break;
        }
        budget = budget.saturating_sub(chunk.len());
        out.push((f, chunk));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub title: String,
    pub body: String,
}

/// A JSON array of `{title, body}` objects.
pub fn load_bug_reports(path: &Path) -> Result<Vec<BugReport>, ContextError> {
    let text = std::fs::read_to_string(path).map_err(|source| ContextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ContextError::BadInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
