// SPDX-License-Identifier: Apache-2.0

//! Instruction to test mapping.

use crate::isa::{mnemonic_for_asm_name, scan_mnemonics, Mnemonic};
use crate::llm::{CompletionProvider, ProviderError};
use crate::prompts::{self, PromptKind, UserPrompt};

use super::{Corpus, InstructionMap};

/// Tests per mapping prompt.
pub const MAPPING_BATCH: usize = 20;

/// Every mnemonic named in each test's asm, parse errors tolerated.
pub fn lexical_mapping(corpus: &Corpus) -> InstructionMap {
    let mut map = InstructionMap {
        lexical_only: true,
        ..InstructionMap::default()
    };
    for test in &corpus.tests {
        for m in scan_mnemonics(&test.asm) {
            map.add(m, &test.name);
        }
    }
    map.sort();
    map
}

fn parse_mnemonic(word: &str) -> Option<Mnemonic> {
    let w = word.trim().trim_matches(|c: char| c == '`' || c == '*' || c == '.');
    Mnemonic::from_name(w).or_else(|| mnemonic_for_asm_name(w))
}

/// LLM mapping unioned with [`lexical_mapping`]. With no provider, or a
/// provider whose answer names nothing usable, the result is flagged
/// `lexical_only`.
pub fn map_tests_to_instructions(
    corpus: &Corpus,
    provider: Option<&dyn CompletionProvider>,
    model: &str,
) -> Result<InstructionMap, ProviderError> {
    let mut map = lexical_mapping(corpus);
    let Some(provider) = provider else {
        return Ok(map);
    };
    let mut contributed = false;
    for batch in corpus.tests.chunks(MAPPING_BATCH) {
        let mut user = UserPrompt::new();
        for t in batch {
            user = user.tag_attr("test", "name", &t.name, &t.asm);
        }
        let request = prompts::request(model, PromptKind::MapTests, user.build());
        let reply = provider.complete(&request)?;
        for line in reply.lines() {
            let Some((name, list)) = line.split_once(':') else {
                continue;
            };
            let name = name.trim().trim_start_matches(['-', '*', ' ']).trim_matches('`');
            if corpus.get(name).is_none() {
                map.ignored.push(line.trim().to_string());
                continue;
            }
            for word in list.split(',') {
                match parse_mnemonic(word) {
                    Some(m) => {
                        map.add(m, name);
                        contributed = true;
                    }
                    None if word.trim().is_empty() => {}
                    None => map.ignored.push(format!("{name}: {}", word.trim())),
                }
            }
        }
    }
    map.lexical_only = !contributed;
    map.sort();
    Ok(map)
}

/// Mnemonics in `universe` with no mapped test.
pub fn coverage_gaps(map: &InstructionMap, universe: &[Mnemonic]) -> Vec<Mnemonic> {
    universe
        .iter()
        .copied()
        .filter(|m| map.tests_for(*m).is_empty())
        .collect()
}
