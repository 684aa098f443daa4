//! Runs an external filter: bytes in on stdin, bytes out on stdout.
//!
//! The command line is handed to `sh -c`, so templates may use pipes and
//! redirections. A nonzero exit status or a timeout is an error.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub fn run_filter(command: &str, input: &[u8], timeout: Duration) -> Result<Vec<u8>> {
    if command.trim().is_empty() {
        return Err(Error::Config("external command is empty".into()));
    }
    let fail = |reason: String| Error::External {
        command: command.to_string(),
        reason,
    };

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(format!("spawn: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let payload = input.to_vec();

    let writer = thread::spawn(move || {
        // A filter may legitimately exit before consuming all input.
        match stdin.write_all(&payload) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e),
            _ => Ok(()),
        }
    });
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let start = Instant::now();
    let status = loop {
        match child.try_wait().map_err(|e| fail(format!("wait: {e}")))? {
            Some(status) => break status,
            None if start.elapsed() > timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(format!("timed out after {:.1} s", timeout.as_secs_f64())));
            }
            None => thread::sleep(Duration::from_millis(2)),
        }
    };

    let write_result = writer.join().expect("stdin writer panicked");
    let output = reader.join().expect("stdout reader panicked");
    let stderr_text = err_reader.join().unwrap_or_default();

    if !status.success() {
        let code = status
            .code()
            .map_or_else(|| "signal".to_string(), |c| c.to_string());
        return Err(fail(format!(
            "exit status {code}: {}",
            stderr_text.trim()
        )));
    }
    write_result.map_err(|e| fail(format!("writing stdin: {e}")))?;
    output.map_err(|e| fail(format!("reading stdout: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: Duration = Duration::from_secs(10);

    #[test]
    fn echo_round_trip() {
        let out = run_filter("cat", b"hello", T).unwrap();
        assert_eq!(out, b"hello");
    }

    #[test]
    fn nonzero_exit_reports_status() {
        let err = run_filter("cat >/dev/null; exit 3", b"x", T).unwrap_err();
        assert!(err.to_string().contains("exit status 3"), "{err}");
    }

    #[test]
    fn timeout_kills_child() {
        let err = run_filter("sleep 5", b"", Duration::from_millis(100)).unwrap_err();
        assert!(err.to_string().contains("timed out"), "{err}");
    }

    #[test]
    fn empty_command_rejected() {
        assert!(matches!(run_filter("  ", b"", T), Err(Error::Config(_))));
    }
}
