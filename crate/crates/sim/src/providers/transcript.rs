//! Recording live provider traffic to JSONL and serving it back offline.
//!
//! Every record carries a fingerprint of the request (role, system message,
//! prompt and parameters) and the run it belongs to. Replay serves replies
//! per run in recorded order; a request with no remaining reply is an error.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use coalition_core::provider::{ChatRequest, ProviderError, ProviderErrorKind};
use coalition_core::textual::{Embedder, Generator};
use coalition_core::Point;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generate,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reply {
    Text(String),
    Vectors(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub fingerprint: String,
    pub run_id: String,
    pub timestamp: u64,
    pub role: Role,
    pub system: String,
    pub prompt: String,
    pub params: Value,
    pub reply: Reply,
}

#[derive(Serialize)]
struct Fingerprinted<'a> {
    role: Role,
    system: &'a str,
    prompt: &'a str,
    params: &'a Value,
}

pub fn fingerprint(role: Role, system: &str, prompt: &str, params: &Value) -> String {
    let canonical = serde_json::to_vec(&Fingerprinted {
        role,
        system,
        prompt,
        params,
    })
    .expect("plain json");
    hex::encode(Sha256::digest(&canonical))
}

struct Keyed {
    role: Role,
    system: String,
    prompt: String,
    params: Value,
}

impl Keyed {
    fn generation(req: &ChatRequest) -> Self {
        Keyed {
            role: Role::Generate,
            system: req.system.clone(),
            prompt: req.prompt.clone(),
            params: json!({
                "model": req.model,
                "temperature": req.temperature,
                "word_limit": req.word_limit,
            }),
        }
    }

    fn embedding(texts: &[String], dimension: usize) -> Self {
        Keyed {
            role: Role::Embed,
            system: String::new(),
            prompt: serde_json::to_string(texts).expect("strings serialize"),
            params: json!({ "dimension": dimension }),
        }
    }

    fn fingerprint(&self) -> String {
        fingerprint(self.role, &self.system, &self.prompt, &self.params)
    }
}

fn io_error(e: std::io::Error) -> ProviderError {
    ProviderError::new(ProviderErrorKind::Transport, format!("transcript: {e}"))
}

/// Appends records to a JSONL file, one whole line per write.
pub struct TranscriptWriter {
    file: Mutex<File>,
}

impl TranscriptWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TranscriptWriter {
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &TranscriptRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line)?;
        f.flush()
    }

    fn record(&self, run_id: &str, key: Keyed, reply: Reply) -> Result<(), ProviderError> {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.append(&TranscriptRecord {
            fingerprint: key.fingerprint(),
            run_id: run_id.to_owned(),
            timestamp,
            role: key.role,
            system: key.system,
            prompt: key.prompt,
            params: key.params,
            reply,
        })
        .map_err(io_error)
    }
}

/// Wraps a live provider and appends every exchange to a transcript.
pub struct Recording<P> {
    inner: P,
    writer: Arc<TranscriptWriter>,
    run_id: String,
}

impl<P> Recording<P> {
    pub fn new(inner: P, writer: Arc<TranscriptWriter>, run_id: impl Into<String>) -> Self {
        Recording {
            inner,
            writer,
            run_id: run_id.into(),
        }
    }
}

impl<G: Generator> Generator for Recording<G> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        let reply = self.inner.complete(request)?;
        self.writer.record(
            &self.run_id,
            Keyed::generation(request),
            Reply::Text(reply.clone()),
        )?;
        Ok(reply)
    }
}

impl<E: Embedder> Embedder for Recording<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        let vectors = self.inner.embed_batch(texts)?;
        let raw = vectors.iter().map(|v| v.coords().to_vec()).collect();
        self.writer.record(
            &self.run_id,
            Keyed::embedding(texts, self.inner.dimension()),
            Reply::Vectors(raw),
        )?;
        Ok(vectors)
    }
}

type Queues = HashMap<String, VecDeque<Reply>>;

/// A loaded transcript, indexed by run and fingerprint.
#[derive(Debug, Default)]
pub struct Transcript {
    runs: HashMap<String, HashMap<Role, Queues>>,
    dimension: Option<usize>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let file = File::open(path).map_err(io_error)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, ProviderError> {
        let mut t = Transcript::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_error)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| {
                ProviderError::new(
                    ProviderErrorKind::Malformed,
                    format!("transcript line {}: {e}", i + 1),
                )
            })?;
            if rec.role == Role::Embed && t.dimension.is_none() {
                t.dimension = rec.params["dimension"].as_u64().map(|d| d as usize);
            }
            t.runs
                .entry(rec.run_id)
                .or_default()
                .entry(rec.role)
                .or_default()
                .entry(rec.fingerprint)
                .or_default()
                .push_back(rec.reply);
        }
        Ok(t)
    }

    /// Declared embedding width of the recorded embedder.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn generator(&self, run_id: &str) -> ReplayGenerator {
        ReplayGenerator {
            run_id: run_id.to_owned(),
            queues: self.queues(run_id, Role::Generate),
        }
    }

    pub fn embedder(&self, run_id: &str) -> ReplayEmbedder {
        ReplayEmbedder {
            run_id: run_id.to_owned(),
            dimension: self.dimension.unwrap_or(0),
            queues: self.queues(run_id, Role::Embed),
        }
    }

    fn queues(&self, run_id: &str, role: Role) -> Queues {
        self.runs
            .get(run_id)
            .and_then(|r| r.get(&role))
            .cloned()
            .unwrap_or_default()
    }
}

fn miss(run_id: &str, key: &Keyed) -> ProviderError {
    let what = match key.role {
        Role::Generate => "generation",
        Role::Embed => "embedding",
    };
    ProviderError::new(
        ProviderErrorKind::ReplayMiss,
        format!(
            "no recorded {what} reply for run {run_id} (fingerprint {})",
            &key.fingerprint()[..16]
        ),
    )
}

pub struct ReplayGenerator {
    run_id: String,
    queues: Queues,
}

impl Generator for ReplayGenerator {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        let key = Keyed::generation(request);
        match self.queues.get_mut(&key.fingerprint()).and_then(VecDeque::pop_front) {
            Some(Reply::Text(s)) => Ok(s),
            Some(Reply::Vectors(_)) => Err(ProviderError::new(
                ProviderErrorKind::Malformed,
                "generation record holds vectors",
            )),
            None => Err(miss(&self.run_id, &key)),
        }
    }
}

pub struct ReplayEmbedder {
    run_id: String,
    dimension: usize,
    queues: Queues,
}

impl Embedder for ReplayEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        let key = Keyed::embedding(texts, self.dimension);
        match self.queues.get_mut(&key.fingerprint()).and_then(VecDeque::pop_front) {
            Some(Reply::Vectors(vs)) => vs
                .into_iter()
                .map(|v| {
                    Point::new(v).map_err(|e| {
                        ProviderError::new(ProviderErrorKind::Malformed, e.to_string())
                    })
                })
                .collect(),
            Some(Reply::Text(_)) => Err(ProviderError::new(
                ProviderErrorKind::Malformed,
                "embedding record holds text",
            )),
            None => Err(miss(&self.run_id, &key)),
        }
    }
}
