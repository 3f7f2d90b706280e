//! Child-process hooks speaking newline-delimited JSON over stdin/stdout.
//!
//! Used to swap in an external affect decoder, planner or audio backbone.
//! Each request is one line of canonical JSON; each response is one line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HookError {
    #[error("failed to spawn hook `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("hook timed out after {0:?}")]
    Timeout(Duration),
    #[error("hook exited or closed stdout")]
    Closed,
    #[error("hook io: {0}")]
    Io(#[from] std::io::Error),
    #[error("hook sent invalid JSON: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HookCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    2000
}

impl HookCommand {
    pub fn new(program: impl Into<String>, args: &[&str]) -> Self {
        Self {
            program: program.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            timeout_ms: default_timeout_ms(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

pub struct JsonLineProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    timeout: Duration,
}

impl JsonLineProcess {
    pub fn spawn(cmd: &HookCommand) -> Result<Self, HookError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| HookError::Spawn { command: cmd.program.clone(), source })?;
        let stdin = child.stdin.take().ok_or(HookError::Closed)?;
        let stdout = child.stdout.take().ok_or(HookError::Closed)?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines: rx, timeout: cmd.timeout() })
    }

    /// Sends one request and waits for one response line.
    ///
    /// Lines that arrive late for an earlier, timed-out request are dropped
    /// before sending.
    pub fn request<Req: Serialize, Resp: DeserializeOwned>(
        &mut self,
        req: &Req,
    ) -> Result<Resp, HookError> {
        while self.lines.try_recv().is_ok() {}
        let line = crate::canonical::to_string(req).map_err(|e| HookError::Protocol(e.to_string()))?;
        writeln!(self.stdin, "{line}")?;
        self.stdin.flush()?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(resp) => serde_json::from_str(&resp).map_err(|e| HookError::Protocol(format!("{e}: {resp}"))),
            Err(RecvTimeoutError::Timeout) => Err(HookError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(HookError::Closed),
        }
    }
}

impl Drop for JsonLineProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
