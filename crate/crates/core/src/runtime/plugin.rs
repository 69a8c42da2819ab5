// SPDX-License-Identifier: Apache-2.0

//! External runtime plugins.
//!
//! Wire format: the plugin reads two lines from stdin, the program bytes as
//! lowercase hex and the input memory as lowercase hex (empty line when there
//! is none). On success it prints `0x<hex>` (the value of r0) and exits 0.
//! A nonzero exit is a runtime error whose message is stderr. The plugin is
//! killed once `timeout_ms` elapses.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

use super::ExecutionResponse;

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("plugin not found: {0}")]
    PluginNotFound(String),
    #[error("failed to spawn plugin {path}: {source}")]
    SpawnFailure {
        path: String,
        source: std::io::Error,
    },
}

/// Exact bytes written to the plugin's stdin.
pub fn plugin_stdin(program: &[u8], mem: Option<&[u8]>) -> String {
    format!("{}\n{}\n", hex::encode(program), mem.map(hex::encode).unwrap_or_default())
}

/// Parse the success line: `0x` followed by up to 16 hex digits.
pub fn parse_plugin_stdout(stdout: &str) -> Option<u64> {
    let t = stdout.trim();
    let digits = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X"))?;
    if digits.is_empty() || digits.len() > 16 {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

fn drain<R: Read + Send + 'static>(source: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut s) = source {
            let _ = s.read_to_end(&mut buf);
        }
        buf
    })
}

pub fn run_external_plugin(
    plugin: &Path,
    program: &[u8],
    mem: Option<&[u8]>,
    timeout_ms: u64,
) -> Result<ExecutionResponse, PluginError> {
    if !plugin.is_file() {
        return Err(PluginError::PluginNotFound(plugin.display().to_string()));
    }
    let mut child = Command::new(plugin)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| PluginError::SpawnFailure {
            path: plugin.display().to_string(),
            source,
        })?;

    let input = plugin_stdin(program, mem);
    let stdin = child.stdin.take();
    // Written from a thread so a plugin that never reads cannot block us
    // past the timeout.
    let writer = thread::spawn(move || {
        if let Some(mut s) = stdin {
            // A plugin may exit without reading; a broken pipe is fine.
            let _ = s.write_all(input.as_bytes());
        }
    });
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());

    let status = match child.wait_timeout(Duration::from_millis(timeout_ms)) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecutionResponse::Timeout);
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecutionResponse::PluginCrash(format!("wait failed: {e}")));
        }
    };
    let _ = writer.join();
    let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();

    Ok(match status.code() {
        Some(0) => match parse_plugin_stdout(&stdout) {
            Some(v) => ExecutionResponse::Returned(v),
            None => ExecutionResponse::PluginCrash(format!(
                "unparseable plugin output: {:?}",
                stdout.trim()
            )),
        },
        Some(code) => ExecutionResponse::RuntimeError {
            code,
            message: stderr.trim().to_string(),
        },
        None => ExecutionResponse::PluginCrash(describe_signal(&status)),
    })
}

#[cfg(unix)]
fn describe_signal(status: &std::process::ExitStatus) -> String {
    use std::os::unix::process::ExitStatusExt;
    match status.signal() {
        Some(sig) => format!("plugin terminated by signal {sig}"),
        None => "plugin terminated abnormally".into(),
    }
}

#[cfg(not(unix))]
fn describe_signal(_status: &std::process::ExitStatus) -> String {
    "plugin terminated abnormally".into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stdin_format() {
        assert_eq!(plugin_stdin(&[0x95, 0, 0, 0, 0, 0, 0, 0], None), "9500000000000000\n\n");
        assert_eq!(plugin_stdin(&[0xb7], Some(&[0xAB, 0x01])), "b7\nab01\n");
    }

    #[test]
    fn stdout_format() {
        assert_eq!(parse_plugin_stdout("0x2a\n"), Some(42));
        assert_eq!(parse_plugin_stdout("0xffffffffffffffff"), Some(u64::MAX));
        assert_eq!(parse_plugin_stdout("42"), None);
        assert_eq!(parse_plugin_stdout("0x"), None);
        assert_eq!(parse_plugin_stdout("0x10000000000000000"), None);
    }

    #[test]
    fn missing_plugin() {
        let err = run_external_plugin(Path::new("/nonexistent/plugin"), &[], None, 100).unwrap_err();
        assert!(matches!(err, PluginError::PluginNotFound(_)));
    }
}
