// SPDX-License-Identifier: Apache-2.0

//! Execution back ends: the built-in interpreter under a [`SemanticsProfile`]
//! and external plugins.

mod interp;
mod plugin;
mod profile;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TestCase;
use crate::isa::encode;

pub use interp::{error_class, interpret, ERROR_CODE, INPUT_BASE, STACK_BASE, STACK_SIZE};
pub use plugin::{parse_plugin_stdout, plugin_stdin, run_external_plugin, PluginError};
pub use profile::{
    FramePointerPolicy, SemanticsProfile, ShiftImmPolicy, UninitPolicy, BUILTIN_PROFILES,
    DEFAULT_STEP_LIMIT, DIVERGENCE_PROFILES, TINY_STEP_LIMIT, UNINIT_SENTINEL,
};

pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ExecutionResponse {
    Returned(u64),
    RuntimeError { code: i32, message: String },
    Timeout,
    PluginCrash(String),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuntimeKind {
    Builtin { profile_name: String, profile: SemanticsProfile },
    Plugin { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Runtime {
    pub id: String,
    pub kind: RuntimeKind,
    /// Wall-clock limit for plugins; builtins are bounded by their step limit.
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeSpecError {
    #[error("runtime spec `{0}` must look like <id>=builtin:<profile> or <id>=plugin:<path>")]
    Malformed(String),
    #[error("unknown builtin profile `{0}` (known: {known})", known = BUILTIN_PROFILES.join(", "))]
    UnknownProfile(String),
}

impl Runtime {
    pub fn builtin(id: &str, profile_name: &str) -> Result<Runtime, RuntimeSpecError> {
        let profile = SemanticsProfile::builtin(profile_name)
            .ok_or_else(|| RuntimeSpecError::UnknownProfile(profile_name.to_string()))?;
        Ok(Runtime {
            id: id.to_string(),
            kind: RuntimeKind::Builtin {
                profile_name: profile_name.to_string(),
                profile,
            },
            timeout_ms: DEFAULT_TIMEOUT_MS,
        })
    }

    pub fn plugin(id: &str, path: impl Into<PathBuf>, timeout_ms: u64) -> Runtime {
        Runtime {
            id: id.to_string(),
            kind: RuntimeKind::Plugin { path: path.into() },
            timeout_ms,
        }
    }

    /// Parse `<id>=builtin:<profile>` or `<id>=plugin:<path>`.
    pub fn parse_spec(spec: &str, timeout_ms: u64) -> Result<Runtime, RuntimeSpecError> {
        let malformed = || RuntimeSpecError::Malformed(spec.to_string());
        let (id, target) = spec.split_once('=').ok_or_else(malformed)?;
        if id.is_empty() {
            return Err(malformed());
        }
        if let Some(profile) = target.strip_prefix("builtin:") {
            let mut rt = Runtime::builtin(id, profile)?;
            rt.timeout_ms = timeout_ms;
            Ok(rt)
        } else if let Some(path) = target.strip_prefix("plugin:") {
            if path.is_empty() {
                return Err(malformed());
            }
            Ok(Runtime::plugin(id, path, timeout_ms))
        } else {
            Err(malformed())
        }
    }

    /// Execute one test. Tests whose assembly does not parse are reported as
    /// unsupported; plugin launch failures as crashes.
    pub fn execute(&self, test: &TestCase) -> ExecutionResponse {
        let program = match test.program() {
            Ok(p) => p,
            Err(e) => return ExecutionResponse::Unsupported(format!("assembly rejected: {e}")),
        };
        match &self.kind {
            RuntimeKind::Builtin { profile, .. } => interpret(&program, test.mem_bytes(), profile),
            RuntimeKind::Plugin { path } => {
                match run_external_plugin(path, &encode(&program), test.mem.as_deref(), self.timeout_ms) {
                    Ok(r) => r,
                    Err(e) => ExecutionResponse::PluginCrash(e.to_string()),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Expectation;

    #[test]
    fn spec_parsing() {
        let r = Runtime::parse_spec("ref=builtin:reference", 10).unwrap();
        assert_eq!(r.id, "ref");
        assert!(matches!(r.kind, RuntimeKind::Builtin { ref profile_name, .. } if profile_name == "reference"));
        let p = Runtime::parse_spec("k=plugin:/bin/x", 10).unwrap();
        assert_eq!(p.kind, RuntimeKind::Plugin { path: "/bin/x".into() });
        assert!(matches!(Runtime::parse_spec("bad", 1), Err(RuntimeSpecError::Malformed(_))));
        assert!(matches!(Runtime::parse_spec("=builtin:reference", 1), Err(RuntimeSpecError::Malformed(_))));
        assert!(matches!(Runtime::parse_spec("a=builtin:nope", 1), Err(RuntimeSpecError::UnknownProfile(_))));
    }

    #[test]
    fn unparseable_test_is_unsupported() {
        let rt = Runtime::builtin("r", "reference").unwrap();
        let t = TestCase::new("t", "mov %r11, 1\nexit", Expectation::Result(0));
        assert!(matches!(rt.execute(&t), ExecutionResponse::Unsupported(_)));
    }

    #[test]
    fn missing_plugin_is_a_crash() {
        let rt = Runtime::plugin("p", "/nonexistent/plugin", 100);
        let t = TestCase::new("t", "exit", Expectation::Result(0));
        assert!(matches!(rt.execute(&t), ExecutionResponse::PluginCrash(_)));
    }
}
