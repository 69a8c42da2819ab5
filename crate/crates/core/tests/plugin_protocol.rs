// SPDX-License-Identifier: Apache-2.0

//! External plugin protocol against the shipped fixture scripts and golden
//! transcripts.
#![cfg(unix)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use bpfdiff_core::corpus::{Expectation, TestCase};
use bpfdiff_core::harness::{classify, Outcome};
use bpfdiff_core::isa::{encode, parse_asm};
use bpfdiff_core::runtime::{plugin_stdin, run_external_plugin, ExecutionResponse, Runtime};

// BPFDIFF_TRANSCRIPT is process-wide.
static ENV: Mutex<()> = Mutex::new(());

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn modes() -> PathBuf {
    fixtures().join("plugins/modes.sh")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("golden/plugin").join(name)).unwrap()
}

fn program(asm: &str) -> Vec<u8> {
    encode(&parse_asm(asm).unwrap())
}

/// Run the modes plugin and return its response and the stdin it saw.
fn transcript(asm: &str, mem: Option<&[u8]>, timeout_ms: u64) -> (ExecutionResponse, String) {
    let _guard = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stdin.txt");
    std::env::set_var("BPFDIFF_TRANSCRIPT", &path);
    let r = run_external_plugin(&modes(), &program(asm), mem, timeout_ms).unwrap();
    std::env::remove_var("BPFDIFF_TRANSCRIPT");
    let seen = std::fs::read_to_string(&path).unwrap_or_default();
    (r, seen)
}

#[test]
fn success_path_matches_golden() {
    let asm = "mov %r0, 42\nexit";
    let (r, seen) = transcript(asm, None, 5_000);
    assert_eq!(r, ExecutionResponse::Returned(42));
    assert_eq!(seen, golden("success.stdin"));
    assert_eq!(plugin_stdin(&program(asm), None), golden("success.stdin"));
    assert_eq!(golden("success.stdout"), "0x2a\n");
}

#[test]
fn error_exit_matches_golden() {
    let asm = "ldxw %r0, [%r1]\nexit";
    let mem = [1, 0, 0, 0];
    let (r, seen) = transcript(asm, Some(&mem), 5_000);
    assert_eq!(
        r,
        ExecutionResponse::RuntimeError {
            code: 1,
            message: golden("error.stderr").trim().to_string()
        }
    );
    assert_eq!(seen, golden("error.stdin"));
    assert_eq!(plugin_stdin(&program(asm), Some(&mem)), golden("error.stdin"));
}

#[test]
fn signal_is_a_crash() {
    let (r, _) = transcript("exit", Some(&[2]), 5_000);
    assert!(matches!(r, ExecutionResponse::PluginCrash(ref m) if m.contains("signal")), "{r:?}");
}

#[test]
fn garbage_output_is_a_crash() {
    let (r, _) = transcript("exit", Some(&[4]), 5_000);
    assert!(matches!(r, ExecutionResponse::PluginCrash(_)), "{r:?}");
}

#[test]
fn hang_is_a_timeout() {
    let started = std::time::Instant::now();
    let (r, _) = transcript("exit", Some(&[3]), 300);
    assert_eq!(r, ExecutionResponse::Timeout);
    assert!(started.elapsed().as_secs() < 10);
}

#[test]
fn outcomes_through_the_runtime() {
    let _guard = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let rt = Runtime::plugin("p", modes(), 300);
    let case = |mem: Option<Vec<u8>>| {
        let mut t = TestCase::new("t", "mov %r0, 42\nexit", Expectation::Result(42));
        t.mem = mem;
        classify(&rt.execute(&t), &t)
    };
    assert_eq!(case(None), Outcome::Pass);
    assert!(matches!(case(Some(vec![1])), Outcome::Error { code: 1, .. }));
    assert!(matches!(case(Some(vec![2])), Outcome::Crash { .. }));
    assert!(matches!(case(Some(vec![3])), Outcome::Crash { .. }));
}

fn write_script(dir: &Path, name: &str, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    p
}

#[test]
fn adapter_bridges_to_argument_style_plugins() {
    let _guard = ENV.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    // Prints the length of the --program argument, in hex, without 0x.
    let fake = write_script(
        dir.path(),
        "fake_plugin.sh",
        "#!/bin/sh\n[ \"$1\" = --program ] || exit 9\ncat >/dev/null\nprintf '%x\\n' ${#2}\n",
    );
    std::env::set_var("BPF_CONFORMANCE_PLUGIN", &fake);
    let adapter = fixtures().join("plugins/bpf_conformance_adapter.sh");
    let r = run_external_plugin(&adapter, &program("mov %r0, 1\nexit"), None, 5_000).unwrap();
    assert_eq!(r, ExecutionResponse::Returned(32));
    std::env::remove_var("BPF_CONFORMANCE_PLUGIN");
}
