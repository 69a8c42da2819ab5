// SPDX-License-Identifier: Apache-2.0

//! Conformance test files and corpora.

mod format;
mod mapping;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Mnemonic;

pub use format::{
    error_matches, parse_test_file, serialize_test_file, Expectation, Provenance, TestCase,
    TestFileError,
};
pub use mapping::{coverage_gaps, lexical_mapping, map_tests_to_instructions, MAPPING_BATCH};

/// File extension of test files inside a corpus directory.
pub const TEST_FILE_EXTENSION: &str = "data";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate test name `{0}`")]
    DuplicateName(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: TestFileError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> CorpusError {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Mnemonic to test names, plus how the mapping was obtained.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionMap {
    pub map: BTreeMap<Mnemonic, Vec<String>>,
    /// Set when no provider contributed and the map is purely lexical.
    pub lexical_only: bool,
    /// Entries the provider returned that were dropped: unknown test names
    /// or unknown mnemonics.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored: Vec<String>,
}

impl InstructionMap {
    pub fn tests_for(&self, mnemonic: Mnemonic) -> &[String] {
        self.map.get(&mnemonic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub(crate) fn add(&mut self, mnemonic: Mnemonic, test: &str) {
        let names = self.map.entry(mnemonic).or_default();
        if !names.iter().any(|n| n == test) {
            names.push(test.to_string());
        }
    }

    fn sort(&mut self) {
        for names in self.map.values_mut() {
            names.sort();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub tests: Vec<TestCase>,
    pub instruction_map: InstructionMap,
}

impl Corpus {
    pub fn new(tests: Vec<TestCase>) -> Result<Corpus, CorpusError> {
        let mut seen = HashSet::new();
        for t in &tests {
            if !seen.insert(t.name.as_str()) {
                return Err(CorpusError::DuplicateName(t.name.clone()));
            }
        }
        Ok(Corpus {
            tests,
            instruction_map: InstructionMap::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TestCase> {
        self.tests.iter().find(|t| t.name == name)
    }

    /// Load every `*.data` file in `dir`, sorted by file name. The test name
    /// is the file stem.
    pub fn load_dir(dir: &Path) -> Result<Corpus, CorpusError> {
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
            let path = entry.map_err(|e| CorpusError::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(TEST_FILE_EXTENSION) {
                paths.push(path);
            }
        }
        paths.sort();
        let mut tests = Vec::with_capacity(paths.len());
        for path in paths {
            let text = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let test = parse_test_file(stem, &text).map_err(|source| CorpusError::Parse {
                path: path.clone(),
                source,
            })?;
            tests.push(test);
        }
        Corpus::new(tests)
    }

    /// Write one file per test into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        for t in &self.tests {
            let path = dir.join(format!("{}.{TEST_FILE_EXTENSION}", t.name));
            crate::util::write_atomic(&path, serialize_test_file(t).as_bytes())
                .map_err(|e| CorpusError::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let t = TestCase::new("a", "exit", Expectation::Result(0));
        assert!(matches!(
            Corpus::new(vec![t.clone(), t]),
            Err(CorpusError::DuplicateName(n)) if n == "a"
        ));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = TestCase::new("b", "mov %r0, 1\nexit", Expectation::Result(1));
        b.mem = Some((0..20).collect());
        let a = TestCase::new("a", "exit", Expectation::Error("bad".into()));
        let corpus = Corpus::new(vec![b, a]).unwrap();
        corpus.write_dir(dir.path()).unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let loaded = Corpus::load_dir(dir.path()).unwrap();
        let names: Vec<&str> = loaded.tests.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(loaded.get("b"), corpus.get("b"));
    }
}
