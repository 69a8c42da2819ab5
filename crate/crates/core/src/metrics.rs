// SPDX-License-Identifier: Apache-2.0

//! Validity, diversity and complexity metrics, and the report bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Provenance, TestCase};
use crate::harness::{is_valid, pairwise_counts, DiffReport, OutcomeClass, RunRecord};
use crate::isa::{scan_mnemonics, Mnemonic};
use crate::util::{to_json_pretty, write_atomic};

/// Bumped when the layout of `report.json` or `per_instruction.csv` changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BUCKET: usize = 5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no record for test `{test}` on runtime `{runtime}`")]
    IncompleteMatrix { test: String, runtime: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn runtime_ids(records: &[RunRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.runtime_id.as_str()).collect()
}

fn outcomes_by_test(records: &[RunRecord]) -> BTreeMap<&str, BTreeMap<&str, &RunRecord>> {
    let mut m: BTreeMap<&str, BTreeMap<&str, &RunRecord>> = BTreeMap::new();
    for r in records {
        m.entry(&r.test_name).or_default().insert(&r.runtime_id, r);
    }
    m
}

/// Number of valid tests: PASS, FAIL or ERROR on every runtime.
pub fn valid_count(corpus: &Corpus, records: &[RunRecord]) -> Result<usize, MetricsError> {
    let runtimes = runtime_ids(records);
    let by_test = outcomes_by_test(records);
    let mut valid = 0;
    for t in &corpus.tests {
        let missing = |runtime: &str| MetricsError::IncompleteMatrix {
            test: t.name.clone(),
            runtime: runtime.to_string(),
        };
        let row = by_test.get(t.name.as_str()).ok_or_else(|| missing("any"))?;
        if let Some(rt) = runtimes.iter().find(|rt| !row.contains_key(*rt)) {
            return Err(missing(rt));
        }
        if is_valid(row.values().map(|r| &r.outcome)) {
            valid += 1;
        }
    }
    Ok(valid)
}

/// Fraction of valid tests; 0 for an empty corpus.
pub fn validity_rate(corpus: &Corpus, records: &[RunRecord]) -> Result<f64, MetricsError> {
    let valid = valid_count(corpus, records)?;
    if corpus.is_empty() {
        return Ok(0.0);
    }
    Ok(valid as f64 / corpus.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diversity {
    /// Distinct opcode-table entries.
    pub unique_instructions: usize,
    pub unique_registers: usize,
    /// Distinct `(base register, displacement)` memory operands.
    pub unique_addresses: usize,
    pub unique_immediates: usize,
    /// Tests whose assembly does not parse; excluded from the counts.
    pub unparseable: usize,
}

pub fn diversity(corpus: &Corpus) -> Diversity {
    let mut opcodes = BTreeSet::new();
    let mut registers = BTreeSet::new();
    let mut addresses = BTreeSet::new();
    let mut immediates = BTreeSet::new();
    let mut unparseable = 0;
    for t in &corpus.tests {
        let Ok(p) = t.program() else {
            unparseable += 1;
            continue;
        };
        for insn in &p.instructions {
            let e = insn.entry();
            opcodes.insert((e.mnemonic, e.class, e.source, e.size));
            registers.extend(insn.registers_used());
            if let Some(a) = insn.memory_operand() {
                addresses.insert(a);
            }
            if let Some(v) = insn.immediate_operand() {
                immediates.insert(v);
            }
        }
    }
    Diversity {
        unique_instructions: opcodes.len(),
        unique_registers: registers.len(),
        unique_addresses: addresses.len(),
        unique_immediates: immediates.len(),
        unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bucket {
    /// Inclusive lower bound.
    pub lo: usize,
    /// Exclusive upper bound.
    pub hi: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Complexity {
    /// Asm line count per test, in corpus order.
    pub lines: Vec<(String, usize)>,
    pub min: Option<usize>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<usize>,
    pub histogram: Vec<Bucket>,
}

pub fn complexity(corpus: &Corpus) -> Complexity {
    let lines: Vec<(String, usize)> = corpus
        .tests
        .iter()
        .map(|t| (t.name.clone(), t.asm_line_count()))
        .collect();
    if lines.is_empty() {
        return Complexity::default();
    }
    let mut sorted: Vec<usize> = lines.iter().map(|(_, n)| *n).collect();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in &sorted {
        *counts.entry(v / HISTOGRAM_BUCKET).or_default() += 1;
    }
    let histogram = counts
        .into_iter()
        .map(|(b, count)| Bucket {
            lo: b * HISTOGRAM_BUCKET,
            hi: (b + 1) * HISTOGRAM_BUCKET,
            count,
        })
        .collect();
    Complexity {
        min: sorted.first().copied(),
        median: Some(median),
        mean: Some(mean),
        max: sorted.last().copied(),
        lines,
        histogram,
    }
}

/// Mnemonics a test is attributed to: the target of a generated test, or
/// every mnemonic appearing in its assembly.
pub fn test_mnemonics(test: &TestCase) -> Vec<Mnemonic> {
    if let Provenance::Generated { mnemonic, .. } = &test.provenance {
        if let Some(m) = Mnemonic::from_name(mnemonic) {
            return vec![m];
        }
    }
    scan_mnemonics(&test.asm)
}

/// Outcome counts per (mnemonic, runtime).
pub type OutcomeDistribution = BTreeMap<(Mnemonic, String), BTreeMap<OutcomeClass, usize>>;

pub fn per_instruction(corpus: &Corpus, records: &[RunRecord]) -> OutcomeDistribution {
    let mut dist = OutcomeDistribution::new();
    let by_name: BTreeMap<&str, &TestCase> =
        corpus.tests.iter().map(|t| (t.name.as_str(), t)).collect();
    for r in records {
        let Some(t) = by_name.get(r.test_name.as_str()) else {
            continue;
        };
        for m in test_mnemonics(t) {
            *dist
                .entry((m, r.runtime_id.clone()))
                .or_default()
                .entry(r.outcome.class())
                .or_default() += 1;
        }
    }
    dist
}

/// Rate as a percentage with one decimal place.
fn pct(rate: f64) -> f64 {
    (rate * 1000.0).round() / 10.0
}

fn one_decimal(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferentialCounts {
    pub pairs: BTreeMap<String, usize>,
    /// Distinct valid differentiating tests.
    pub total: usize,
    /// Findings that involve a crash, reported separately.
    pub crash_leads: usize,
    pub skipped_tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexitySummary {
    pub min: Option<usize>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<usize>,
    pub histogram: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validity {
    pub valid: usize,
    pub tests: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: BTreeMap<String, String>,
    pub runtimes: Vec<String>,
    pub validity: Validity,
    pub differentials: DifferentialCounts,
    pub diversity: Diversity,
    pub complexity: ComplexitySummary,
    pub outcomes: BTreeMap<String, BTreeMap<OutcomeClass, usize>>,
}

pub fn build_report(
    corpus: &Corpus,
    records: &[RunRecord],
    findings: &DiffReport,
    config: BTreeMap<String, String>,
) -> Result<Report, MetricsError> {
    let valid = valid_count(corpus, records)?;
    let rate = validity_rate(corpus, records)?;
    let c = complexity(corpus);
    let mut outcomes: BTreeMap<String, BTreeMap<OutcomeClass, usize>> = BTreeMap::new();
    for r in records {
        let row = outcomes.entry(r.runtime_id.clone()).or_default();
        for class in OutcomeClass::ALL {
            row.entry(class).or_default();
        }
        *row.entry(r.outcome.class()).or_default() += 1;
    }
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        config,
        runtimes: runtime_ids(records).into_iter().map(String::from).collect(),
        validity: Validity {
            valid,
            tests: corpus.len(),
            percent: pct(rate),
        },
        differentials: DifferentialCounts {
            pairs: pairwise_counts(findings),
            total: findings.total(),
            crash_leads: findings.findings.len() - findings.total(),
            skipped_tests: findings.skipped_tests.len(),
        },
        diversity: diversity(corpus),
        complexity: ComplexitySummary {
            min: c.min,
            median: c.median.map(one_decimal),
            mean: c.mean.map(one_decimal),
            max: c.max,
            histogram: c.histogram,
        },
        outcomes,
    })
}

/// Fig. 3 style table: one row per (mnemonic, runtime).
pub fn per_instruction_csv(dist: &OutcomeDistribution) -> String {
    let mut out = String::from("mnemonic,runtime,PASS,FAIL,SKIP,ERROR,CRASH,tests\n");
    for ((m, rt), counts) in dist {
        let cells: Vec<usize> = OutcomeClass::ALL
            .iter()
            .map(|c| counts.get(c).copied().unwrap_or(0))
            .collect();
        let total: usize = cells.iter().sum();
        let joined: Vec<String> = cells.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{m},{rt},{},{total}", joined.join(","));
    }
    out
}

/// Histogram in gnuplot's whitespace-separated layout.
pub fn complexity_dat(c: &Complexity) -> String {
    let mut out = String::from("# lo hi count\n");
    for b in &c.histogram {
        let _ = writeln!(out, "{} {} {}", b.lo, b.hi, b.count);
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

pub fn summary_markdown(report: &Report) -> String {
    let mut s = String::from("# Differential testing report\n\n");
    for (k, v) in &report.config {
        let _ = writeln!(s, "- {k}: {v}");
    }
    if !report.config.is_empty() {
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "Valid tests: {} of {} ({:.1}%)\n",
        report.validity.valid, report.validity.tests, report.validity.percent
    );
    s.push_str("## Differentiating tests\n\n| pair | count |\n|---|---|\n");
    for (pair, n) in &report.differentials.pairs {
        let _ = writeln!(s, "| {pair} | {n} |");
    }
    let _ = writeln!(s, "| Total | {} |\n", report.differentials.total);
    let _ = writeln!(
        s,
        "Crash leads: {}. Tests skipped by some runtime: {}.\n",
        report.differentials.crash_leads, report.differentials.skipped_tests
    );
    let d = &report.diversity;
    s.push_str("## Diversity\n\n| Instr. | Reg. | Addr. | Imm. |\n|---|---|---|---|\n");
    let _ = writeln!(
        s,
        "| {} | {} | {} | {} |\n",
        d.unique_instructions, d.unique_registers, d.unique_addresses, d.unique_immediates
    );
    let c = &report.complexity;
    s.push_str("## Complexity (asm lines)\n\n");
    let _ = writeln!(
        s,
        "min {} / median {} / mean {} / max {}\n",
        opt(c.min),
        opt(c.median),
        opt(c.mean),
        opt(c.max)
    );
    s.push_str("## Outcomes\n\n| runtime | PASS | FAIL | SKIP | ERROR | CRASH |\n|---|---|---|---|---|---|\n");
    for (rt, counts) in &report.outcomes {
        let cells: Vec<String> = OutcomeClass::ALL
            .iter()
            .map(|c| counts.get(c).copied().unwrap_or(0).to_string())
            .collect();
        let _ = writeln!(s, "| {rt} | {} |", cells.join(" | "));
    }
    s
}

/// Write `report.json`, `per_instruction.csv`, `summary.md` and
/// `complexity.dat` into `dir`.
pub fn write_report_bundle(
    dir: &Path,
    corpus: &Corpus,
    records: &[RunRecord],
    report: &Report,
) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("report.json"), to_json_pretty(report).as_bytes())?;
    let dist = per_instruction(corpus, records);
    write_atomic(&dir.join("per_instruction.csv"), per_instruction_csv(&dist).as_bytes())?;
    write_atomic(&dir.join("summary.md"), summary_markdown(report).as_bytes())?;
    write_atomic(&dir.join("complexity.dat"), complexity_dat(&complexity(corpus)).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Expectation;
    use crate::harness::Outcome;
    use crate::runtime::ExecutionResponse;

    fn listing() -> TestCase {
        TestCase::new(
            "listing",
            "mov %r0, 0x12345678\nrsh %r0, 0\nexit",
            Expectation::Result(0x12345678),
        )
    }

    fn jset() -> TestCase {
        TestCase::new(
            "jset",
            "mov %r1, 5\njset %r1, %r1, lbl1\nmov %r0, 0\nexit\nlbl1: mov %r0, 1\nexit",
            Expectation::Result(1),
        )
    }

    fn ldxw() -> TestCase {
        let mut t = TestCase::new("ldxw", "ldxw %r0, [%r1]\nexit", Expectation::Result(0));
        t.mem = Some(vec![0; 4]);
        t
    }

    fn rec(test: &str, rt: &str, outcome: Outcome) -> RunRecord {
        RunRecord {
            test_name: test.into(),
            runtime_id: rt.into(),
            outcome,
            response: ExecutionResponse::Returned(0),
            wall_time_ms: 0,
        }
    }

    #[test]
    fn listing_diversity() {
        let d = diversity(&Corpus::new(vec![listing()]).unwrap());
        assert_eq!(
            d,
            Diversity {
                unique_instructions: 3,
                unique_registers: 1,
                unique_addresses: 0,
                unique_immediates: 2,
                unparseable: 0,
            }
        );
        assert_eq!(diversity(&Corpus::default()), Diversity::default());
        let both = diversity(&Corpus::new(vec![ldxw(), jset()]).unwrap());
        assert_eq!(both.unique_registers, 2);
        assert_eq!(both.unique_addresses, 1);
    }

    #[test]
    fn line_counts() {
        let c = complexity(&Corpus::new(vec![listing(), jset()]).unwrap());
        assert_eq!(c.lines, vec![("listing".into(), 3), ("jset".into(), 6)]);
        assert_eq!((c.min, c.max, c.median), (Some(3), Some(6), Some(4.5)));
        assert_eq!(c.histogram.iter().map(|b| b.count).sum::<usize>(), 2);
        assert_eq!(complexity(&Corpus::default()), Complexity::default());
    }

    #[test]
    fn validity_counts() {
        let c = Corpus::new(vec![listing(), jset(), ldxw(), {
            let mut t = listing();
            t.name = "x".into();
            t
        }])
        .unwrap();
        let skip = || Outcome::Skip { reason: "r".into() };
        let mut records = Vec::new();
        for (t, o) in [("listing", Outcome::Pass), ("jset", skip()), ("ldxw", Outcome::Pass), ("x", skip())] {
            records.push(rec(t, "a", o));
            records.push(rec(t, "b", Outcome::Pass));
        }
        assert_eq!(validity_rate(&c, &records).unwrap(), 0.5);
        records.pop();
        assert!(matches!(
            validity_rate(&c, &records),
            Err(MetricsError::IncompleteMatrix { .. })
        ));
        assert_eq!(validity_rate(&Corpus::default(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn rates_have_one_decimal() {
        assert_eq!(pct(0.694), 69.4);
        assert_eq!(pct(2.0 / 3.0), 66.7);
    }
}
