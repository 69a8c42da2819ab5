// SPDX-License-Identifier: Apache-2.0

//! Corpus x runtime execution matrix and outcome classification.

mod diff;
mod outcome;

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::runtime::{ExecutionResponse, Runtime};

pub use diff::{
    find_differentials, pair_key, pairwise_counts, DiffReport, DifferentialFinding, DivergenceKind,
};
pub use outcome::{classify, is_valid, Outcome, OutcomeClass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub test_name: String,
    pub runtime_id: String,
    pub outcome: Outcome,
    pub response: ExecutionResponse,
    pub wall_time_ms: u64,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("at least two runtimes are required, got {0}")]
    TooFewRuntimes(usize),
    #[error("duplicate runtime id `{0}`")]
    DuplicateRuntime(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Execute every test on every runtime using `jobs` worker threads.
///
/// Records come back ordered by corpus position, then runtime position,
/// whatever the scheduling.
pub fn run_matrix(corpus: &Corpus, runtimes: &[Runtime], jobs: usize) -> Result<Vec<RunRecord>, HarnessError> {
    if runtimes.len() < 2 {
        return Err(HarnessError::TooFewRuntimes(runtimes.len()));
    }
    let mut ids = HashSet::new();
    for rt in runtimes {
        if !ids.insert(rt.id.as_str()) {
            return Err(HarnessError::DuplicateRuntime(rt.id.clone()));
        }
    }
    let cells: Vec<(usize, usize)> = (0..corpus.tests.len())
        .flat_map(|t| (0..runtimes.len()).map(move |r| (t, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let records = pool.install(|| {
        cells
            .par_iter()
            .map(|&(t, r)| {
                let test = &corpus.tests[t];
                let runtime = &runtimes[r];
                let started = Instant::now();
                let response = runtime.execute(test);
                let wall_time_ms = started.elapsed().as_millis() as u64;
                RunRecord {
                    test_name: test.name.clone(),
                    runtime_id: runtime.id.clone(),
                    outcome: classify(&response, test),
                    response,
                    wall_time_ms,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(records)
}

/// One JSON object per line.
pub fn write_records<W: Write>(mut out: W, records: &[RunRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| HarnessError::BadRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
