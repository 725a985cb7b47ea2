//! Child process runner with wall-clock timeout, CPU rlimit, and output caps.

use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

const POLL: Duration = Duration::from_millis(5);
/// Hard cap on captured stdout bytes, so a program printing one endless line
/// is treated like any other flood.
const MAX_STDOUT_BYTES: usize = 64 << 20;

#[derive(Debug)]
pub(crate) struct RawRun {
    pub stdout_lines: Vec<String>,
    pub stderr: String,
    pub status: ExitStatus,
    pub timed_out: bool,
    pub flooded: bool,
    pub duration: Duration,
}

pub(crate) struct Spec<'a> {
    pub program: &'a Path,
    pub args: &'a [String],
    pub cwd: &'a Path,
    pub stdin: Vec<u8>,
    pub timeout: Duration,
    pub max_lines: usize,
    pub stderr_cap: usize,
}

fn kill_group(pgid: i32) {
    // SAFETY: plain syscall; a stale group id only yields ESRCH.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

pub(crate) fn run(spec: Spec<'_>) -> io::Result<RawRun> {
    let mut cmd = Command::new(spec.program);
    cmd.args(spec.args)
        .current_dir(spec.cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let cpu_secs = spec.timeout.as_secs() + 2;
    // SAFETY: setrlimit is async-signal-safe and touches no parent state.
    unsafe {
        cmd.pre_exec(move || {
            let limit = libc::rlimit {
                rlim_cur: cpu_secs as libc::rlim_t,
                rlim_max: (cpu_secs + 1) as libc::rlim_t,
            };
            libc::setrlimit(libc::RLIMIT_CPU, &limit);
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;
    let flooded = Arc::new(AtomicBool::new(false));

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = spec.stdin;
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });

    let mut stdout = child.stdout.take().expect("piped stdout");
    let max_lines = spec.max_lines;
    let flood_flag = Arc::clone(&flooded);
    let out_reader = thread::spawn(move || {
        let mut lines: Vec<String> = Vec::new();
        let mut current: Vec<u8> = Vec::new();
        let mut total = 0usize;
        let mut chunk = [0u8; 8192];
        loop {
            let n = match stdout.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            total += n;
            let mut over = total > MAX_STDOUT_BYTES;
            for &byte in &chunk[..n] {
                if byte == b'\n' {
                    lines.push(String::from_utf8_lossy(&current).into_owned());
                    current.clear();
                    if lines.len() > max_lines {
                        over = true;
                        break;
                    }
                } else {
                    current.push(byte);
                }
            }
            if over {
                flood_flag.store(true, Ordering::SeqCst);
                kill_group(pgid);
                lines.truncate(max_lines);
                return lines;
            }
        }
        if !current.is_empty() {
            lines.push(String::from_utf8_lossy(&current).into_owned());
        }
        if lines.len() > max_lines {
            flood_flag.store(true, Ordering::SeqCst);
            lines.truncate(max_lines);
        }
        lines
    });

    let mut stderr = child.stderr.take().expect("piped stderr");
    let cap = spec.stderr_cap;
    let err_reader = thread::spawn(move || {
        let mut kept = Vec::new();
        let mut chunk = [0u8; 8192];
        let mut truncated = false;
        loop {
            match stderr.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&chunk[..n.min(room)]);
                    truncated |= n > room;
                }
            }
        }
        let mut text = String::from_utf8_lossy(&kept).into_owned();
        if truncated {
            text.push_str("...");
        }
        text
    });

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= spec.timeout {
            timed_out = true;
            kill_group(pgid);
            break child.wait()?;
        }
        thread::sleep(POLL);
    };
    let duration = started.elapsed();
    // Descendants that outlive the leader would keep the pipes open.
    kill_group(pgid);

    let _ = writer.join();
    let stdout_lines = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(RawRun {
        stdout_lines,
        stderr,
        status,
        timed_out,
        flooded: flooded.load(Ordering::SeqCst),
        duration,
    })
}
