// SPDX-License-Identifier: Apache-2.0

//! Differential detection over a completed matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::outcome::{Outcome, OutcomeClass};
use super::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// PASS on one runtime, FAIL on another; also any crash against a valid
    /// outcome.
    OutcomeClassDiffers,
    /// Two FAILs returning different values.
    ReturnValuesDiffer,
    /// ERROR on one runtime, PASS or FAIL on another.
    ErrorVsValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferentialFinding {
    pub test_name: String,
    pub outcomes: BTreeMap<String, Outcome>,
    pub divergence_kinds: BTreeSet<DivergenceKind>,
    /// Divergent runtime pairs, each ordered by id.
    pub runtime_pairs: Vec<(String, String)>,
    /// Some runtime crashed on this test; such findings are leads but not
    /// valid differentiating tests.
    pub involves_crash: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub findings: Vec<DifferentialFinding>,
    /// Tests left out because some runtime skipped them.
    pub skipped_tests: Vec<String>,
    /// Runtime ids seen in the records, sorted.
    pub runtimes: Vec<String>,
}

impl DiffReport {
    /// Findings where every runtime produced PASS, FAIL or ERROR.
    pub fn valid_findings(&self) -> impl Iterator<Item = &DifferentialFinding> {
        self.findings.iter().filter(|f| !f.involves_crash)
    }

    pub fn total(&self) -> usize {
        self.valid_findings().count()
    }
}

/// `a-b` with ids in sorted order.
pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}-{b}")
    } else {
        format!("{b}-{a}")
    }
}

fn pair_kind(a: &Outcome, b: &Outcome) -> Option<DivergenceKind> {
    use OutcomeClass::*;
    match (a.class(), b.class()) {
        (Crash, Crash) => None,
        (Crash, _) | (_, Crash) => Some(DivergenceKind::OutcomeClassDiffers),
        (Error, Pass) | (Error, Fail) | (Pass, Error) | (Fail, Error) => {
            Some(DivergenceKind::ErrorVsValue)
        }
        (Pass, Fail) | (Fail, Pass) => Some(DivergenceKind::OutcomeClassDiffers),
        (Fail, Fail) => match (a, b) {
            (Outcome::Fail { actual: x, .. }, Outcome::Fail { actual: y, .. }) if x != y => {
                Some(DivergenceKind::ReturnValuesDiffer)
            }
            _ => None,
        },
        _ => None,
    }
}

/// Group records by test and report every test whose runtimes disagree.
///
/// Tests with a SKIP on any runtime are excluded and listed separately.
/// Tests that crash everywhere are ignored. Output is sorted by test name
/// and independent of record order.
pub fn find_differentials(records: &[RunRecord]) -> DiffReport {
    let mut by_test: BTreeMap<&str, BTreeMap<String, Outcome>> = BTreeMap::new();
    let mut runtimes = BTreeSet::new();
    for r in records {
        runtimes.insert(r.runtime_id.clone());
        by_test
            .entry(r.test_name.as_str())
            .or_default()
            .insert(r.runtime_id.clone(), r.outcome.clone());
    }

    let mut report = DiffReport {
        runtimes: runtimes.into_iter().collect(),
        ..DiffReport::default()
    };
    for (test, outcomes) in by_test {
        if outcomes.values().any(|o| o.class() == OutcomeClass::Skip) {
            report.skipped_tests.push(test.to_string());
            continue;
        }
        let entries: Vec<(&String, &Outcome)> = outcomes.iter().collect();
        let mut kinds = BTreeSet::new();
        let mut pairs = Vec::new();
        for (i, (ida, a)) in entries.iter().enumerate() {
            for (idb, b) in &entries[i + 1..] {
                if let Some(kind) = pair_kind(a, b) {
                    kinds.insert(kind);
                    pairs.push(((*ida).clone(), (*idb).clone()));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let involves_crash = outcomes.values().any(|o| o.class() == OutcomeClass::Crash);
        report.findings.push(DifferentialFinding {
            test_name: test.to_string(),
            outcomes,
            divergence_kinds: kinds,
            runtime_pairs: pairs,
            involves_crash,
        });
    }
    report
}

/// Valid findings per runtime pair (every pair listed, zeros included).
pub fn pairwise_counts(report: &DiffReport) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for (i, a) in report.runtimes.iter().enumerate() {
        for b in &report.runtimes[i + 1..] {
            counts.insert(pair_key(a, b), 0);
        }
    }
    for f in report.valid_findings() {
        for (a, b) in &f.runtime_pairs {
            *counts.entry(pair_key(a, b)).or_insert(0) += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::ExecutionResponse;

    fn rec(test: &str, rt: &str, outcome: Outcome) -> RunRecord {
        RunRecord {
            test_name: test.into(),
            runtime_id: rt.into(),
            outcome,
            response: ExecutionResponse::Timeout,
            wall_time_ms: 0,
        }
    }

    fn fail(actual: u64) -> Outcome {
        Outcome::Fail {
            actual,
            expected: Some(1),
        }
    }

    fn error() -> Outcome {
        Outcome::Error {
            code: 1,
            message: "e".into(),
        }
    }

    #[test]
    fn pass_pass_fail() {
        let r = find_differentials(&[
            rec("t", "windows", Outcome::Pass),
            rec("t", "ubpf", Outcome::Pass),
            rec("t", "linux", fail(0xffff8b09dc604100)),
        ]);
        assert_eq!(r.findings.len(), 1);
        let f = &r.findings[0];
        assert_eq!(f.divergence_kinds, BTreeSet::from([DivergenceKind::OutcomeClassDiffers]));
        assert_eq!(
            f.runtime_pairs,
            vec![("linux".into(), "ubpf".into()), ("linux".into(), "windows".into())]
        );
        let counts = pairwise_counts(&r);
        assert_eq!(counts["linux-ubpf"], 1);
        assert_eq!(counts["ubpf-windows"], 0);
        assert_eq!(r.total(), 1);
    }

    #[test]
    fn fail_fail_error() {
        let r = find_differentials(&[
            rec("t", "windows", fail(0)),
            rec("t", "ubpf", fail(0x7ffff338a820)),
            rec("t", "linux", error()),
        ]);
        assert_eq!(
            r.findings[0].divergence_kinds,
            BTreeSet::from([DivergenceKind::ReturnValuesDiffer, DivergenceKind::ErrorVsValue])
        );
        assert_eq!(r.findings[0].runtime_pairs.len(), 3);
    }

    #[test]
    fn agreement_and_exclusions() {
        let r = find_differentials(&[
            rec("same", "a", Outcome::Pass),
            rec("same", "b", Outcome::Pass),
            rec("errs", "a", error()),
            rec("errs", "b", Outcome::Error { code: 2, message: "other".into() }),
            rec("skip", "a", Outcome::Skip { reason: "x".into() }),
            rec("skip", "b", Outcome::Pass),
            rec("dead", "a", Outcome::Crash { message: "x".into() }),
            rec("dead", "b", Outcome::Crash { message: "y".into() }),
        ]);
        assert!(r.findings.is_empty());
        assert_eq!(r.skipped_tests, vec!["skip".to_string()]);
    }

    #[test]
    fn crash_against_pass_is_flagged() {
        let r = find_differentials(&[
            rec("loop", "a", Outcome::Pass),
            rec("loop", "b", Outcome::Crash { message: "timed out".into() }),
        ]);
        assert_eq!(r.findings.len(), 1);
        assert!(r.findings[0].involves_crash);
        assert_eq!(r.total(), 0);
        assert_eq!(pairwise_counts(&r)["a-b"], 0);
    }
}
