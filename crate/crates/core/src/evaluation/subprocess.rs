//! External trainers run as child processes through `sh -c`.
//!
//! Stateless mode starts one process per evaluation: write the request, close
//! stdin, read one line. Session mode keeps a process alive across
//! evaluations after a successful `hello` handshake, and falls back to
//! stateless when the trainer declines. Every child runs in its own process
//! group and the whole group is killed and reaped when an evaluation ends
//! (stateless), times out, or violates the protocol.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{
    hello_line, parse_hello, parse_response, shutdown_line, EvaluateRequest, Response,
};
use super::{EvalRequest, EvalStatus, EvaluationBudget, EvaluationResult, Evaluator};
use crate::complexity::InputShape;
use crate::space::Genotype;

const STDERR_TAIL: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerMode {
    #[default]
    Stateless,
    Session,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerEndpoint {
    /// Shell command line starting the trainer.
    pub command: String,
    #[serde(default)]
    pub mode: TrainerMode,
    /// Per-evaluation limit in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Passed through to the trainer untouched.
    #[serde(default)]
    pub dataset: String,
}

fn default_timeout() -> f64 {
    3600.0
}

impl TrainerEndpoint {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            mode: TrainerMode::Stateless,
            timeout_secs: default_timeout(),
            dataset: String::new(),
        }
    }

    fn timeout(&self) -> Duration {
        Duration::try_from_secs_f64(self.timeout_secs).unwrap_or(Duration::MAX)
    }
}

struct Running {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    stderr_reader: Option<thread::JoinHandle<()>>,
}

enum Wait {
    Line(String),
    Timeout,
    Closed,
}

impl Running {
    fn spawn(command: &str) -> std::io::Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn()?;
        let stdout = child.stdout.take().expect("piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let mut err_pipe = child.stderr.take().expect("piped");
        let stderr_reader = thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().expect("stderr lock");
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > 2 * STDERR_TAIL {
                    let mut cut = s.len() - STDERR_TAIL;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });
        let stdin = child.stdin.take();
        Ok(Self {
            child,
            stdin,
            lines,
            stderr,
            stderr_reader: Some(stderr_reader),
        })
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or(std::io::ErrorKind::BrokenPipe)?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    fn close_stdin(&mut self) {
        self.stdin = None;
    }

    fn wait_line(&self, timeout: Duration) -> Wait {
        match self.lines.recv_timeout(timeout) {
            Ok(line) => Wait::Line(line),
            Err(RecvTimeoutError::Timeout) => Wait::Timeout,
            Err(RecvTimeoutError::Disconnected) => Wait::Closed,
        }
    }

    fn tail(s: &str) -> String {
        let s = s.trim_end();
        let mut start = s.len().saturating_sub(STDERR_TAIL);
        while !s.is_char_boundary(start) {
            start += 1;
        }
        s[start..].to_owned()
    }

    /// Kills the process group and reaps the child.
    fn kill(mut self) -> Option<ExitStatus> {
        self.stdin = None;
        #[cfg(unix)]
        if let Ok(pid) = i32::try_from(self.child.id()) {
            // SAFETY: plain syscall on a process group we created
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        self.child.wait().ok()
    }

    /// Lets the child exit on its own for up to `grace`, then kills it.
    /// Returns the exit status and the tail of stderr.
    fn finish(mut self, grace: Duration) -> (Option<ExitStatus>, String) {
        self.stdin = None;
        let deadline = Instant::now() + grace;
        let mut status = None;
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(s)) => {
                    status = Some(s);
                    break;
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(_) => break,
            }
        }
        let stderr = Arc::clone(&self.stderr);
        let reader = self.stderr_reader.take();
        let killed = self.kill();
        // the group is gone, so the pipe is closed
        if let Some(r) = reader {
            let _ = r.join();
        }
        let tail = Running::tail(&stderr.lock().expect("stderr lock"));
        (status.or(killed), tail)
    }
}

fn exit_failure(
    status: Option<ExitStatus>,
    stderr: String,
    raw: Option<String>,
) -> EvaluationResult {
    let code = status.and_then(|s| s.code());
    let detail = if stderr.is_empty() {
        String::new()
    } else {
        format!(": {stderr}")
    };
    match code {
        Some(126) | Some(127) => EvaluationResult::failed(
            EvalStatus::SpawnFailed,
            format!("trainer could not start{detail}"),
            raw,
        ),
        _ => EvaluationResult::failed(
            EvalStatus::ProtocolViolation,
            format!(
                "trainer exited ({}) without a response{detail}",
                code.map_or("signal".into(), |c| c.to_string())
            ),
            raw,
        ),
    }
}

fn to_result(line: String, trial_id: u64, max_epochs: u32) -> EvaluationResult {
    match parse_response(&line, trial_id, max_epochs) {
        Ok(Response::Ok {
            metrics,
            flops,
            epochs_ran,
            ..
        }) => EvaluationResult {
            status: EvalStatus::Ok,
            objective: Some(metrics.cross_entropy),
            metrics: Some(metrics),
            flops,
            epochs_ran: Some(epochs_ran),
            message: None,
            raw: None,
        },
        Ok(Response::Error { message, .. }) => {
            EvaluationResult::failed(EvalStatus::TrainerError, message, Some(line))
        }
        Err(e) => EvaluationResult::failed(EvalStatus::ProtocolViolation, e.0, Some(line)),
    }
}

fn timeout_result(endpoint: &TrainerEndpoint) -> EvaluationResult {
    EvaluationResult::failed(
        EvalStatus::Timeout,
        format!("no response within {} s", endpoint.timeout_secs),
        None,
    )
}

/// Evaluates `g` in a fresh trainer process.
pub fn evaluate_external(
    endpoint: &TrainerEndpoint,
    input_shape: &InputShape,
    trial_id: u64,
    g: &Genotype,
    budget: &EvaluationBudget,
) -> EvaluationResult {
    let request = EvaluateRequest::new(
        trial_id,
        g.clone(),
        input_shape.clone(),
        budget,
        endpoint.dataset.clone(),
    );
    let mut proc = match Running::spawn(&endpoint.command) {
        Ok(p) => p,
        Err(e) => return EvaluationResult::failed(EvalStatus::SpawnFailed, e.to_string(), None),
    };
    // a trainer that exits early closes the pipe; its output decides the outcome
    let _ = proc.send(&request.to_line());
    proc.close_stdin();
    match proc.wait_line(endpoint.timeout()) {
        Wait::Line(line) => {
            proc.kill();
            to_result(line, trial_id, budget.max_epochs)
        }
        Wait::Timeout => {
            proc.kill();
            timeout_result(endpoint)
        }
        Wait::Closed => {
            let (status, stderr) = proc.finish(Duration::from_secs(1));
            exit_failure(status, stderr, None)
        }
    }
}

/// A trainer endpoint bound to an input shape, usable as an [`Evaluator`].
/// In session mode the process persists between evaluations.
pub struct TrainerSession {
    endpoint: TrainerEndpoint,
    input_shape: InputShape,
    running: Option<Running>,
    /// Set once the trainer declines or fails the handshake.
    stateless: bool,
}

impl TrainerSession {
    pub fn new(endpoint: TrainerEndpoint, input_shape: InputShape) -> Self {
        let stateless = endpoint.mode == TrainerMode::Stateless;
        Self {
            endpoint,
            input_shape,
            running: None,
            stateless,
        }
    }

    pub fn is_persistent(&self) -> bool {
        !self.stateless
    }

    fn start(&mut self) -> Result<(), EvaluationResult> {
        let mut proc = Running::spawn(&self.endpoint.command)
            .map_err(|e| EvaluationResult::failed(EvalStatus::SpawnFailed, e.to_string(), None))?;
        if proc.send(&hello_line()).is_ok() {
            if let Wait::Line(line) = proc.wait_line(self.endpoint.timeout()) {
                if parse_hello(&line) == Some(true) {
                    self.running = Some(proc);
                    return Ok(());
                }
            }
        }
        log::warn!("trainer did not accept a session; evaluating one process per trial");
        proc.kill();
        self.stateless = true;
        Ok(())
    }

    pub fn evaluate_genotype(
        &mut self,
        trial_id: u64,
        g: &Genotype,
        budget: &EvaluationBudget,
    ) -> EvaluationResult {
        if !self.stateless && self.running.is_none() {
            if let Err(r) = self.start() {
                return r;
            }
        }
        let Some(proc) = self.running.as_mut() else {
            return evaluate_external(&self.endpoint, &self.input_shape, trial_id, g, budget);
        };
        let request = EvaluateRequest::new(
            trial_id,
            g.clone(),
            self.input_shape.clone(),
            budget,
            self.endpoint.dataset.clone(),
        );
        let sent = proc.send(&request.to_line());
        let wait = if sent.is_ok() {
            proc.wait_line(self.endpoint.timeout())
        } else {
            Wait::Closed
        };
        let proc = self.running.take().expect("running");
        match wait {
            Wait::Line(line) => {
                let result = to_result(line, trial_id, budget.max_epochs);
                if result.status == EvalStatus::ProtocolViolation {
                    // the stream can no longer be trusted
                    proc.kill();
                } else {
                    self.running = Some(proc);
                }
                result
            }
            Wait::Timeout => {
                proc.kill();
                timeout_result(&self.endpoint)
            }
            Wait::Closed => {
                let (status, stderr) = proc.finish(Duration::from_secs(1));
                exit_failure(status, stderr, None)
            }
        }
    }
}

impl Drop for TrainerSession {
    fn drop(&mut self) {
        if let Some(mut proc) = self.running.take() {
            let _ = proc.send(shutdown_line());
            proc.finish(Duration::from_secs(2));
        }
    }
}

impl Evaluator for TrainerSession {
    fn evaluate(&mut self, request: &EvalRequest) -> EvaluationResult {
        self.evaluate_genotype(request.trial_id, &request.genotype, &request.budget)
    }
}
