// SPDX-License-Identifier: Apache-2.0

//! The shipped human corpus: every test passes on the reference runtime, and
//! the metrics match counts taken by hand from the files.

use std::path::PathBuf;

use bpfdiff_core::corpus::Corpus;
use bpfdiff_core::harness::classify;
use bpfdiff_core::harness::Outcome;
use bpfdiff_core::metrics::{complexity, diversity};
use bpfdiff_core::runtime::Runtime;

fn fixture_corpus() -> Corpus {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus");
    Corpus::load_dir(&dir).unwrap()
}

#[test]
fn reference_passes_every_human_test() {
    let corpus = fixture_corpus();
    assert_eq!(corpus.len(), 20);
    let rt = Runtime::builtin("ref", "reference").unwrap();
    for t in &corpus.tests {
        let outcome = classify(&rt.execute(t), t);
        assert_eq!(outcome, Outcome::Pass, "{}", t.name);
    }
}

#[test]
fn diversity_matches_hand_count() {
    let d = diversity(&fixture_corpus());
    // 30 opcodes; r0 r1 r2 r6 r10; [r1] [r1+4] [r10-4] [r10-8]; 21 values.
    assert_eq!(d.unique_instructions, 30);
    assert_eq!(d.unique_registers, 5);
    assert_eq!(d.unique_addresses, 4);
    assert_eq!(d.unique_immediates, 21);
    assert_eq!(d.unparseable, 0);
}

#[test]
fn complexity_matches_hand_count() {
    let c = complexity(&fixture_corpus());
    let total: usize = c.lines.iter().map(|(_, n)| n).sum();
    assert_eq!(total, 76);
    assert_eq!(c.min, Some(2));
    assert_eq!(c.max, Some(7));
    assert_eq!(c.median, Some(4.0));
    assert_eq!(c.mean, Some(3.8));
    let jset = c.lines.iter().find(|(n, _)| n == "jset_taken").unwrap();
    assert_eq!(jset.1, 6);
    let rsh = c.lines.iter().find(|(n, _)| n == "rsh_zero_shift").unwrap();
    assert_eq!(rsh.1, 3);
}
