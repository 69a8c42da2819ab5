// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::corpus::{error_matches, Expectation, TestCase};
use crate::runtime::ExecutionResponse;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    /// `expected` is `None` when the test expected an error but a value was
    /// returned.
    Fail { actual: u64, expected: Option<u64> },
    Skip { reason: String },
    Error { code: i32, message: String },
    Crash { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OutcomeClass {
    Pass,
    Fail,
    Skip,
    Error,
    Crash,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 5] = [
        OutcomeClass::Pass,
        OutcomeClass::Fail,
        OutcomeClass::Skip,
        OutcomeClass::Error,
        OutcomeClass::Crash,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Pass => "PASS",
            OutcomeClass::Fail => "FAIL",
            OutcomeClass::Skip => "SKIP",
            OutcomeClass::Error => "ERROR",
            OutcomeClass::Crash => "CRASH",
        }
    }

    pub fn is_valid(self) -> bool {
        matches!(self, OutcomeClass::Pass | OutcomeClass::Fail | OutcomeClass::Error)
    }
}

impl Outcome {
    pub fn class(&self) -> OutcomeClass {
        match self {
            Outcome::Pass => OutcomeClass::Pass,
            Outcome::Fail { .. } => OutcomeClass::Fail,
            Outcome::Skip { .. } => OutcomeClass::Skip,
            Outcome::Error { .. } => OutcomeClass::Error,
            Outcome::Crash { .. } => OutcomeClass::Crash,
        }
    }

    /// One-line rendering in the conformance runner's style.
    pub fn describe(&self) -> String {
        match self {
            Outcome::Pass => "PASS: Test succeeded".into(),
            Outcome::Fail {
                actual,
                expected: Some(e),
            } => format!("FAIL: Plugin returned incorrect return value {actual:x} expected {e:x}"),
            Outcome::Fail {
                actual,
                expected: None,
            } => format!("FAIL: Plugin returned value {actual:x} but an error was expected"),
            Outcome::Skip { reason } => format!("SKIP: {reason}"),
            Outcome::Error { code, message } => {
                format!("ERROR: Plugin returned error code {code} and output {message}")
            }
            Outcome::Crash { message } => format!("CRASH: {message}"),
        }
    }
}

/// Map a runtime response to an outcome against the test's oracle. Total.
pub fn classify(response: &ExecutionResponse, test: &TestCase) -> Outcome {
    match (response, &test.expected) {
        (ExecutionResponse::Returned(v), Expectation::Result(e)) if v == e => Outcome::Pass,
        (ExecutionResponse::Returned(v), Expectation::Result(e)) => Outcome::Fail {
            actual: *v,
            expected: Some(*e),
        },
        (ExecutionResponse::Returned(v), Expectation::Error(_)) => Outcome::Fail {
            actual: *v,
            expected: None,
        },
        (ExecutionResponse::RuntimeError { message, .. }, Expectation::Error(want))
            if error_matches(want, message) =>
        {
            Outcome::Pass
        }
        (ExecutionResponse::RuntimeError { code, message }, _) => Outcome::Error {
            code: *code,
            message: message.clone(),
        },
        (ExecutionResponse::Unsupported(reason), _) => Outcome::Skip {
            reason: format!("contains unsupported instructions: {reason}"),
        },
        (ExecutionResponse::Timeout, _) => Outcome::Crash {
            message: "timed out".into(),
        },
        (ExecutionResponse::PluginCrash(msg), _) => Outcome::Crash {
            message: msg.clone(),
        },
    }
}

/// A test is valid when every runtime produced PASS, FAIL or ERROR.
pub fn is_valid<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> bool {
    outcomes.into_iter().all(|o| o.class().is_valid())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        let t = TestCase::new("t", "ldxw %r0, [%r1]\nexit", Expectation::Result(0));
        assert_eq!(classify(&ExecutionResponse::Returned(0), &t), Outcome::Pass);
        assert_eq!(
            classify(&ExecutionResponse::Returned(0xffff8b09dc604100), &t),
            Outcome::Fail {
                actual: 0xffff8b09dc604100,
                expected: Some(0)
            }
        );
        let err = ExecutionResponse::RuntimeError {
            code: 1,
            message: "x".into(),
        };
        assert_eq!(classify(&err, &t).class(), OutcomeClass::Error);
        assert_eq!(classify(&ExecutionResponse::Timeout, &t).class(), OutcomeClass::Crash);
    }

    #[test]
    fn validity() {
        let pass = Outcome::Pass;
        let fail = Outcome::Fail {
            actual: 1,
            expected: Some(2),
        };
        let error = Outcome::Error {
            code: 1,
            message: String::new(),
        };
        let skip = Outcome::Skip {
            reason: String::new(),
        };
        assert!(is_valid([&pass, &fail, &error]));
        assert!(!is_valid([&pass, &skip]));
        assert!(is_valid([]));
    }

    #[test]
    fn describe_matches_runner_wording() {
        let f = Outcome::Fail {
            actual: 0xffff8b09dc604100,
            expected: Some(0),
        };
        assert_eq!(
            f.describe(),
            "FAIL: Plugin returned incorrect return value ffff8b09dc604100 expected 0"
        );
    }
}
