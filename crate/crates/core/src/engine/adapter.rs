//! External engines: long-lived subprocesses speaking newline-delimited JSON
//! over stdin/stdout.
//!
//! The framework sends `{"id":"0","op":"hello"}` first and expects the adapter
//! to announce its kind. Every later request carries a fresh numeric id and the
//! reply must echo it.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EngineKind;
use crate::error::{Error, Result};

const STDERR_TAIL: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub id: String,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum RequestBody {
    Hello,
    Tts { text: String, out: String },
    Asr { audio: String },
    Fit { data: Vec<LabeledText> },
    Predict { texts: Vec<String> },
}

impl RequestBody {
    fn op(&self) -> &'static str {
        match self {
            RequestBody::Hello => "hello",
            RequestBody::Tts { .. } => "tts",
            RequestBody::Asr { .. } => "asr",
            RequestBody::Fit { .. } => "fit",
            RequestBody::Predict { .. } => "predict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<EngineKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A running adapter process.
pub struct AdapterProcess {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    next_id: u64,
    timeout: Duration,
    broken: bool,
}

impl AdapterProcess {
    /// Starts `exec` and performs the handshake, checking the announced kind.
    pub fn spawn(name: &str, exec: &[String], kind: EngineKind, timeout: Duration) -> Result<Self> {
        let (program, args) = exec
            .split_first()
            .ok_or_else(|| Error::config(format!("engines.{name}.exec"), "empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::engine(name, "0", format!("cannot start `{program}`: {e}")))?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let stderr = Arc::new(Mutex::new(String::new()));
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap_or_else(|p| p.into_inner());
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_TAIL {
                    let mut cut = s.len() - STDERR_TAIL;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });

        let mut process = AdapterProcess {
            name: name.to_string(),
            stdin: child.stdin.take(),
            child,
            replies,
            stderr,
            next_id: 1,
            timeout,
            broken: false,
        };
        let hello = process.exchange("0".into(), RequestBody::Hello)?;
        match hello.kind {
            Some(k) if k == kind => Ok(process),
            other => Err(process.fail(
                "0",
                format!("handshake announced kind {other:?}, expected {kind:?}"),
            )),
        }
    }

    /// Sends one request and waits for its reply. `ok:false` replies surface
    /// as engine errors carrying the adapter's message.
    pub fn call(&mut self, body: RequestBody) -> Result<AdapterResponse> {
        let id = self.next_id.to_string();
        self.next_id += 1;
        self.exchange(id, body)
    }

    fn exchange(&mut self, id: String, body: RequestBody) -> Result<AdapterResponse> {
        let op = body.op();
        let request = AdapterRequest {
            id: id.clone(),
            body,
        };
        let mut line = serde_json::to_string(&request).map_err(|e| Error::Internal(e.to_string()))?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::engine(&self.name, &id, "adapter stdin closed"))?;
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            return Err(self.fail(&id, format!("write failed: {e}")));
        }

        let reply = match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(&id, format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(&id, format!("no reply to `{op}` within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                return Err(self.fail(&id, format!("adapter exited ({status:?})")));
            }
        };
        let response: AdapterResponse = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(&id, format!("malformed reply {reply:?}: {e}"))),
        };
        if response.id != id {
            return Err(self.fail(
                &id,
                format!("reply id {:?} does not match request id {id:?}", response.id),
            ));
        }
        if !response.ok {
            let message = response.error.unwrap_or_else(|| "adapter reported failure".into());
            return Err(self.report(&id, message));
        }
        Ok(response)
    }

    /// True once the request/reply stream can no longer be trusted.
    pub fn is_broken(&self) -> bool {
        self.broken
    }

    fn fail(&mut self, id: &str, message: String) -> Error {
        self.broken = true;
        self.report(id, message)
    }

    fn report(&self, id: &str, message: String) -> Error {
        let stderr = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        Error::Engine {
            engine: self.name.clone(),
            request_id: id.to_string(),
            message,
            stderr,
        }
    }
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        // Closing stdin is the shutdown signal.
        self.stdin.take();
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
