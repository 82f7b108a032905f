//! Generation and embedding backends, and per-run sessions over them.

pub mod adapter;
pub mod mock;
pub mod openai;
pub mod transcript;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use coalition_core::provider::{ProviderError, ProviderErrorKind};
use coalition_core::textual::{Embedder, Generator};
use serde::{Deserialize, Serialize};

use adapter::{AdapterEmbedder, AdapterSettings};
use mock::{MockEmbedder, MockGenerator, MockSettings};
use openai::{OpenAiGenerator, OpenAiSettings};
use transcript::{Recording, Transcript, TranscriptWriter};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub mock: MockSettings,
    pub openai: OpenAiSettings,
    pub adapter: AdapterSettings,
}

/// Which backends a run talks to.
///
/// `mock` uses the offline generator and embedder, `adapter` keeps the mock
/// generator but embeds through the adapter process, `openai` generates via
/// the chat endpoint and embeds through the adapter, and `replay:<path>`
/// serves both from a transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderChoice {
    Mock,
    Adapter,
    OpenAi,
    Replay(PathBuf),
}

impl FromStr for ProviderChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock" => Ok(ProviderChoice::Mock),
            "adapter" => Ok(ProviderChoice::Adapter),
            "openai" => Ok(ProviderChoice::OpenAi),
            _ => match s.strip_prefix("replay:") {
                Some(p) if !p.is_empty() => Ok(ProviderChoice::Replay(p.into())),
                _ => Err(format!(
                    "unknown provider {s:?}; expected mock, adapter, openai or replay:<path>"
                )),
            },
        }
    }
}

impl fmt::Display for ProviderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderChoice::Mock => f.write_str("mock"),
            ProviderChoice::Adapter => f.write_str("adapter"),
            ProviderChoice::OpenAi => f.write_str("openai"),
            ProviderChoice::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

pub type BoxedGenerator = Box<dyn Generator + Send>;
pub type BoxedEmbedder = Box<dyn Embedder + Send>;

/// Hands out independent generator/embedder pairs, one per run.
pub struct Providers {
    choice: ProviderChoice,
    settings: ProviderSettings,
    transcript: Option<Arc<Transcript>>,
    recorder: Option<Arc<TranscriptWriter>>,
}

impl Providers {
    pub fn new(choice: ProviderChoice, settings: ProviderSettings) -> Result<Self, ProviderError> {
        let transcript = match &choice {
            ProviderChoice::Replay(p) => Some(Arc::new(Transcript::load(p)?)),
            _ => None,
        };
        Ok(Providers {
            choice,
            settings,
            transcript,
            recorder: None,
        })
    }

    pub fn mock(settings: MockSettings) -> Self {
        Providers {
            choice: ProviderChoice::Mock,
            settings: ProviderSettings {
                mock: settings,
                ..ProviderSettings::default()
            },
            transcript: None,
            recorder: None,
        }
    }

    /// Appends every exchange of every session to `writer`.
    pub fn record_to(mut self, writer: Arc<TranscriptWriter>) -> Self {
        self.recorder = Some(writer);
        self
    }

    pub fn choice(&self) -> &ProviderChoice {
        &self.choice
    }

    pub fn session(
        &self,
        run_id: &str,
        run_seed: u64,
    ) -> Result<(BoxedGenerator, BoxedEmbedder), ProviderError> {
        let (g, e): (BoxedGenerator, BoxedEmbedder) = match &self.choice {
            ProviderChoice::Mock => (
                Box::new(MockGenerator::new(run_seed)),
                Box::new(MockEmbedder::new(self.settings.mock)),
            ),
            ProviderChoice::Adapter => (
                Box::new(MockGenerator::new(run_seed)),
                Box::new(AdapterEmbedder::spawn(&self.settings.adapter.command)?),
            ),
            ProviderChoice::OpenAi => (
                Box::new(OpenAiGenerator::from_env(self.settings.openai.clone())?),
                Box::new(AdapterEmbedder::spawn(&self.settings.adapter.command)?),
            ),
            ProviderChoice::Replay(_) => {
                let t = self.transcript.as_ref().expect("loaded in new");
                if t.dimension().is_none() {
                    return Err(ProviderError::new(
                        ProviderErrorKind::ReplayMiss,
                        "transcript holds no embedding records",
                    ));
                }
                (Box::new(t.generator(run_id)), Box::new(t.embedder(run_id)))
            }
        };
        Ok(match &self.recorder {
            Some(w) => (
                Box::new(Recording::new(g, w.clone(), run_id)),
                Box::new(Recording::new(e, w.clone(), run_id)),
            ),
            None => (g, e),
        })
    }
}
