//! Client side of the embedding adapter protocol: newline-delimited JSON
//! over a child process's stdin/stdout, one request in flight.
//!
//! ```txt
//! -> {"op":"hello"}
//! <- {"ok":true,"dim":512,"model":"..."}
//! -> {"op":"embed","id":1,"texts":["a","b"]}
//! <- {"ok":true,"id":1,"vectors":[[...],[...]]}
//! <- {"ok":false,"id":1,"error":"..."}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use coalition_core::provider::{ProviderError, ProviderErrorKind};
use coalition_core::textual::Embedder;
use coalition_core::Point;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    /// Program and arguments, e.g. `["python3", "-m", "embed_adapter", "--model", "..."]`.
    pub command: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Reply {
    ok: bool,
    #[serde(default)]
    id: Option<u64>,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    vectors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

fn malformed(msg: impl Into<String>) -> ProviderError {
    ProviderError::new(ProviderErrorKind::Malformed, msg)
}

fn transport(msg: impl Into<String>) -> ProviderError {
    ProviderError::new(ProviderErrorKind::Transport, msg)
}

pub struct AdapterEmbedder<R, W> {
    reader: R,
    writer: W,
    dimension: usize,
    model: String,
    next_id: u64,
    child: Option<Child>,
}

impl<R: BufRead, W: Write> AdapterEmbedder<R, W> {
    /// Performs the hello exchange on an already-open channel.
    pub fn handshake(reader: R, writer: W) -> Result<Self, ProviderError> {
        let mut a = AdapterEmbedder {
            reader,
            writer,
            dimension: 0,
            model: String::new(),
            next_id: 1,
            child: None,
        };
        let r = a.exchange(&json!({"op": "hello"}))?;
        if !r.ok {
            return Err(transport(format!(
                "adapter refused hello: {}",
                r.error.unwrap_or_default()
            )));
        }
        a.dimension = r
            .dim
            .filter(|d| *d > 0)
            .ok_or_else(|| malformed("hello reply lacks a positive dim"))?;
        a.model = r.model.unwrap_or_default();
        Ok(a)
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn exchange(&mut self, request: &Value) -> Result<Reply, ProviderError> {
        let mut line = serde_json::to_string(request).expect("json");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| transport(format!("adapter write: {e}")))?;
        let mut buf = String::new();
        let n = self
            .reader
            .read_line(&mut buf)
            .map_err(|e| transport(format!("adapter read: {e}")))?;
        if n == 0 {
            return Err(transport("adapter closed its output"));
        }
        serde_json::from_str(buf.trim_end()).map_err(|e| malformed(format!("adapter reply: {e}")))
    }
}

impl AdapterEmbedder<BufReader<ChildStdout>, ChildStdin> {
    /// Launches the adapter and performs the handshake.
    pub fn spawn(command: &[String]) -> Result<Self, ProviderError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| transport("adapter command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(format!("cannot start adapter {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        match Self::handshake(stdout, stdin) {
            Ok(mut a) => {
                a.child = Some(child);
                Ok(a)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }
}

impl<R, W> Drop for AdapterEmbedder<R, W> {
    fn drop(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl<R: BufRead, W: Write> Embedder for AdapterEmbedder<R, W> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        let id = self.next_id;
        self.next_id += 1;
        let r = self.exchange(&json!({"op": "embed", "id": id, "texts": texts}))?;
        if r.id != Some(id) {
            return Err(malformed(format!("reply id {:?} for request {id}", r.id)));
        }
        if !r.ok {
            return Err(ProviderError::new(
                ProviderErrorKind::Rejected,
                format!("adapter: {}", r.error.unwrap_or_default()),
            ));
        }
        let vectors = r.vectors.ok_or_else(|| malformed("embed reply lacks vectors"))?;
        if vectors.len() != texts.len() {
            return Err(malformed(format!(
                "{} texts but {} vectors",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(ProviderError::new(
                        ProviderErrorKind::Dimension,
                        format!("declared {}, got {}", self.dimension, v.len()),
                    ));
                }
                Point::new(v).map_err(|e| malformed(e.to_string()))
            })
            .collect()
    }
}
