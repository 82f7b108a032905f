//! Sentences as points: generated ideal sentences, candidate compromises and
//! their selection in an embedding space.
//!
//! A coalition's point is the embedding of its sentence. To merge two
//! coalitions the generator is asked for candidate sentences blending the
//! two; every candidate is embedded in one batch and the one closest (by
//! squared sqrt-cosine distance) to the size-weighted, unnormalized average
//! of the two coalition embeddings wins.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Agent, Coalition};
use crate::mediator::{Compromise, CompromiseSource, MediatorError};
use crate::metric::{weighted_mean, Distance, MetricError, Point};
use crate::provider::{ChatRequest, ProviderError, ProviderErrorKind, Task};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextualError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("wanted {wanted} sentences, reply held {got}")]
    ShortParse { wanted: usize, got: usize },
    #[error("no candidate sentences")]
    NoCandidates,
    #[error("coalition {0} carries no sentence")]
    MissingText(usize),
    #[error("invalid textual configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub word_count: usize,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = text.split_whitespace().count();
        Sentence { text, word_count }
    }
}

/// The five ways of asking for a compromise sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MediatorOption {
    /// Ten aggregations, pick the best.
    Aggregate,
    /// Ten blends into one coherent idea.
    Blend,
    /// Ten unified combinations.
    Unify,
    /// A single aggregation, no selection.
    SingleShot,
    /// One random sentence unrelated to either coalition.
    Random,
}

impl MediatorOption {
    pub const ALL: [MediatorOption; 5] = [
        MediatorOption::Aggregate,
        MediatorOption::Blend,
        MediatorOption::Unify,
        MediatorOption::SingleShot,
        MediatorOption::Random,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl TryFrom<u8> for MediatorOption {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1..=5 => Ok(MediatorOption::ALL[v as usize - 1]),
            _ => Err(alloc::format!("mediator option must be 1..=5, got {v}")),
        }
    }
}

impl From<MediatorOption> for u8 {
    fn from(o: MediatorOption) -> u8 {
        o.number()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextualConfig {
    pub topic: String,
    pub agent_count: usize,
    pub word_limit: usize,
    pub mediator_option: MediatorOption,
    pub temperature: f64,
    pub model_id: String,
    pub candidates_per_call: usize,
    pub max_retries: usize,
    pub noisy_init: bool,
    /// Drop candidates over the word limit, unless that would leave none.
    pub strict_word_limit: bool,
    /// The status-quo sentence agents compare proposals against.
    pub status_quo: String,
}

impl Default for TextualConfig {
    fn default() -> Self {
        TextualConfig {
            topic: "global warming".into(),
            agent_count: 10,
            word_limit: 15,
            mediator_option: MediatorOption::Aggregate,
            temperature: 0.75,
            model_id: "gpt-3.5-turbo-1106".into(),
            candidates_per_call: 10,
            max_retries: 3,
            noisy_init: false,
            strict_word_limit: false,
            status_quo: "Keep every current policy exactly as it is today.".into(),
        }
    }
}

impl TextualConfig {
    pub fn validate(&self) -> Result<(), TextualError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(TextualError::InvalidConfig("temperature must be >= 0"));
        }
        if self.candidates_per_call == 0 {
            return Err(TextualError::InvalidConfig("candidates_per_call must be >= 1"));
        }
        if self.agent_count == 0 {
            return Err(TextualError::InvalidConfig("agent_count must be >= 1"));
        }
        Ok(())
    }

    fn request(&self, template: &PromptTemplate, vars: &[(&str, &str)], task: Task) -> ChatRequest {
        ChatRequest {
            system: template.render_system(vars),
            prompt: template.render_prompt(vars),
            model: self.model_id.clone(),
            temperature: self.temperature,
            word_limit: self.word_limit,
            task,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub prompt: String,
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (k, v) in vars {
        out = out.replace(&alloc::format!("{{{k}}}"), v);
    }
    out
}

impl PromptTemplate {
    fn render_system(&self, vars: &[(&str, &str)]) -> String {
        render(&self.system, vars)
    }

    fn render_prompt(&self, vars: &[(&str, &str)]) -> String {
        render(&self.prompt, vars)
    }
}

/// Prompt and system-message templates. Placeholders: `{count}`,
/// `{word_limit}`, `{topic}`, `{sentence}`, `{sentence_a}`, `{sentence_b}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub ideal: PromptTemplate,
    pub noisy: PromptTemplate,
    pub mediators: BTreeMap<String, PromptTemplate>,
}

const BUILTIN_PROMPTS: &str = include_str!("../prompts/prompts.json");

impl PromptSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PROMPTS).expect("bundled prompts parse")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let set: PromptSet = serde_json::from_str(s).map_err(|e| e.to_string())?;
        for o in MediatorOption::ALL {
            if !set.mediators.contains_key(&o.number().to_string()) {
                return Err(alloc::format!("missing template for mediator {}", o.number()));
            }
        }
        Ok(set)
    }

    pub fn mediator(&self, option: MediatorOption) -> &PromptTemplate {
        &self.mediators[&option.number().to_string()]
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

/// A text generation backend.
pub trait Generator {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<G: Generator + ?Sized> Generator for &mut G {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// A sentence embedding backend with a fixed output width.
pub trait Embedder {
    fn dimension(&self) -> usize;
    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError>;
}

impl<E: Embedder + ?Sized> Embedder for &mut E {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        (**self).embed_batch(texts)
    }
}

/// Embeds and checks that the backend kept its promises on count and width.
pub fn embed_checked<E: Embedder + ?Sized>(
    embedder: &mut E,
    texts: &[String],
) -> Result<Vec<Point>, ProviderError> {
    let vectors = embedder.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::new(
            ProviderErrorKind::Malformed,
            alloc::format!("{} texts but {} vectors", texts.len(), vectors.len()),
        ));
    }
    let dim = embedder.dimension();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(ProviderError::new(
            ProviderErrorKind::Dimension,
            alloc::format!("declared {dim}, got {}", v.dim()),
        ));
    }
    Ok(vectors)
}

fn strip_marker(line: &str) -> Option<&str> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    rest.strip_prefix(')').or_else(|| rest.strip_prefix('.'))
}

fn clean(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(s)
        .trim()
}

/// Extracts `1) ...` / `1. ...` items in order. Replies without any
/// numbered line fall back to their nonempty lines.
pub fn parse_numbered_list(reply: &str) -> Vec<Sentence> {
    let numbered: Vec<Sentence> = reply
        .lines()
        .filter_map(|l| strip_marker(l.trim_start()))
        .map(clean)
        .filter(|s| !s.is_empty())
        .map(Sentence::new)
        .collect();
    if !numbered.is_empty() {
        return numbered;
    }
    reply
        .lines()
        .map(clean)
        .filter(|s| !s.is_empty())
        .map(Sentence::new)
        .collect()
}

fn retrying<T>(
    attempts: usize,
    mut f: impl FnMut() -> Result<T, TextualError>,
) -> Result<T, TextualError> {
    let mut last = None;
    for _ in 0..attempts.max(1) {
        match f() {
            Ok(v) => return Ok(v),
            Err(e @ (TextualError::ShortParse { .. } | TextualError::NoCandidates)) => {
                last = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Asks for `cfg.agent_count` ideal sentences on `cfg.topic` in one call,
/// re-asking when the reply parses short.
pub fn generate_ideal_sentences<G: Generator + ?Sized>(
    cfg: &TextualConfig,
    prompts: &PromptSet,
    generator: &mut G,
) -> Result<Vec<Sentence>, TextualError> {
    let count = cfg.agent_count.to_string();
    let limit = cfg.word_limit.to_string();
    let req = cfg.request(
        &prompts.ideal,
        &[("count", &count), ("topic", &cfg.topic), ("word_limit", &limit)],
        Task::IdealSentences {
            count: cfg.agent_count,
            topic: cfg.topic.clone(),
        },
    );
    retrying(cfg.max_retries + 1, || {
        let mut parsed = parse_numbered_list(&generator.complete(&req)?);
        if parsed.len() < cfg.agent_count {
            return Err(TextualError::ShortParse {
                wanted: cfg.agent_count,
                got: parsed.len(),
            });
        }
        parsed.truncate(cfg.agent_count);
        Ok(parsed)
    })
}

/// A sentence resembling `ideal`, used as the agent's starting coalition
/// sentence. Returns `ideal` itself when noisy initialisation is off.
pub fn generate_noisy_variant<G: Generator + ?Sized>(
    ideal: &Sentence,
    cfg: &TextualConfig,
    prompts: &PromptSet,
    generator: &mut G,
) -> Result<Sentence, TextualError> {
    if !cfg.noisy_init {
        return Ok(ideal.clone());
    }
    let limit = cfg.word_limit.to_string();
    let req = cfg.request(
        &prompts.noisy,
        &[("sentence", &ideal.text), ("word_limit", &limit)],
        Task::NoisyVariant {
            sentence: ideal.text.clone(),
        },
    );
    retrying(cfg.max_retries + 1, || {
        parse_numbered_list(&generator.complete(&req)?)
            .into_iter()
            .next()
            .ok_or(TextualError::ShortParse { wanted: 1, got: 0 })
    })
}

/// Candidate compromises for two sentences, with the raw reply.
pub fn generate_candidates<G: Generator + ?Sized>(
    a: &Sentence,
    b: &Sentence,
    cfg: &TextualConfig,
    prompts: &PromptSet,
    generator: &mut G,
) -> Result<(String, Vec<Sentence>), TextualError> {
    let option = cfg.mediator_option;
    let count = match option {
        MediatorOption::SingleShot | MediatorOption::Random => 1,
        _ => cfg.candidates_per_call,
    };
    let count_s = count.to_string();
    let limit = cfg.word_limit.to_string();
    let vars = [
        ("count", count_s.as_str()),
        ("word_limit", limit.as_str()),
        ("topic", cfg.topic.as_str()),
        ("sentence_a", a.text.as_str()),
        ("sentence_b", b.text.as_str()),
    ];
    let task = if option == MediatorOption::Random {
        Task::RandomSentence
    } else {
        Task::Aggregate {
            option: option.number(),
            count,
            sentence_a: a.text.clone(),
            sentence_b: b.text.clone(),
        }
    };
    let req = cfg.request(prompts.mediator(option), &vars, task);
    retrying(cfg.max_retries + 1, || {
        let raw = generator.complete(&req)?;
        let mut parsed = parse_numbered_list(&raw);
        if parsed.is_empty() {
            return Err(TextualError::NoCandidates);
        }
        parsed.truncate(count);
        Ok((raw, parsed))
    })
}

/// The candidate list of one compromise step, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub raw_reply: String,
    pub parsed: Vec<Sentence>,
    /// Per candidate: over the word limit.
    pub overlong: Vec<bool>,
    pub target: Point,
    pub embeddings: Vec<Point>,
    /// Squared sqrt-cosine distance of each embedding to `target`.
    pub distances: Vec<f64>,
    pub chosen_index: usize,
}

impl CandidateSet {
    pub fn chosen(&self) -> (&Sentence, &Point) {
        (
            &self.parsed[self.chosen_index],
            &self.embeddings[self.chosen_index],
        )
    }
}

/// Embeds every candidate in one batch and keeps the one nearest the
/// size-weighted average of `p_i` and `p_j`; lowest index wins ties.
#[allow(clippy::too_many_arguments)]
pub fn select_candidate<E: Embedder + ?Sized, D: Distance + ?Sized>(
    raw_reply: String,
    candidates: Vec<Sentence>,
    word_limit: Option<usize>,
    size_i: usize,
    p_i: &Point,
    size_j: usize,
    p_j: &Point,
    embedder: &mut E,
    metric: &D,
) -> Result<CandidateSet, TextualError> {
    if candidates.is_empty() {
        return Err(TextualError::NoCandidates);
    }
    let target = weighted_mean(
        &[p_i.clone(), p_j.clone()],
        &[size_i as f64, size_j as f64],
    )?;
    let limit = word_limit.unwrap_or(usize::MAX);
    let overlong: Vec<bool> = candidates.iter().map(|c| c.word_count > limit).collect();
    let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    let embeddings = embed_checked(embedder, &texts)?;
    let distances = embeddings
        .iter()
        .map(|e| metric.dist(e, &target).map(|d| d * d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut chosen_index = 0;
    for (i, d) in distances.iter().enumerate() {
        if *d < distances[chosen_index] {
            chosen_index = i;
        }
    }
    Ok(CandidateSet {
        raw_reply,
        parsed: candidates,
        overlong,
        target,
        embeddings,
        distances,
        chosen_index,
    })
}

/// Compromise source that asks a generator for candidate sentences and
/// picks one with an embedder.
pub struct TextualCompromise<G, E> {
    pub config: TextualConfig,
    pub prompts: PromptSet,
    pub generator: G,
    pub embedder: E,
}

impl<G: Generator, E: Embedder> TextualCompromise<G, E> {
    pub fn new(config: TextualConfig, prompts: PromptSet, generator: G, embedder: E) -> Self {
        TextualCompromise {
            config,
            prompts,
            generator,
            embedder,
        }
    }

    fn candidates_for(
        &mut self,
        first: &Coalition,
        second: &Coalition,
        metric: &dyn Distance,
    ) -> Result<CandidateSet, TextualError> {
        let a = Sentence::new(first.text.clone().ok_or(TextualError::MissingText(first.id))?);
        let b = Sentence::new(second.text.clone().ok_or(TextualError::MissingText(second.id))?);
        let (raw, mut parsed) =
            generate_candidates(&a, &b, &self.config, &self.prompts, &mut self.generator)?;
        let limit = self.config.word_limit;
        if self.config.strict_word_limit && parsed.iter().any(|s| s.word_count <= limit) {
            parsed.retain(|s| s.word_count <= limit);
        }
        select_candidate(
            raw,
            parsed,
            Some(limit),
            first.size(),
            &first.point,
            second.size(),
            &second.point,
            &mut self.embedder,
            metric,
        )
    }
}

impl<G: Generator, E: Embedder> CompromiseSource for TextualCompromise<G, E> {
    fn compromise(
        &mut self,
        first: &Coalition,
        second: &Coalition,
        metric: &dyn Distance,
    ) -> Result<Compromise, MediatorError> {
        let set = self
            .candidates_for(first, second, metric)
            .map_err(|source| MediatorError::Textual {
                first: first.id,
                second: second.id,
                source,
            })?;
        let (sentence, point) = set.chosen();
        Ok(Compromise {
            point: point.clone(),
            text: Some(sentence.text.clone()),
            candidates: Some(set),
        })
    }
}

/// Everything a textual run starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextualInstance {
    pub ideal_sentences: Vec<Sentence>,
    pub agents: Vec<Agent>,
    /// Initial singleton coalition point and sentence, per agent.
    pub starts: Vec<(Point, Option<String>)>,
    pub status_quo: Point,
}

/// Generates ideal sentences, optional noisy starting sentences and the
/// status quo, and embeds them all.
pub fn build_textual_instance<G: Generator + ?Sized, E: Embedder + ?Sized>(
    cfg: &TextualConfig,
    sigma: f64,
    prompts: &PromptSet,
    generator: &mut G,
    embedder: &mut E,
) -> Result<TextualInstance, TextualError> {
    cfg.validate()?;
    let ideal = generate_ideal_sentences(cfg, prompts, generator)?;
    let starts: Vec<Sentence> = ideal
        .iter()
        .map(|s| generate_noisy_variant(s, cfg, prompts, generator))
        .collect::<Result<_, _>>()?;

    let mut texts: Vec<String> = ideal.iter().map(|s| s.text.clone()).collect();
    texts.push(cfg.status_quo.clone());
    let mut vectors = embed_checked(embedder, &texts)?;
    let status_quo = vectors.pop().expect("status quo embedded");
    let start_points = if cfg.noisy_init {
        let texts: Vec<String> = starts.iter().map(|s| s.text.clone()).collect();
        embed_checked(embedder, &texts)?
    } else {
        vectors.clone()
    };

    let agents = vectors
        .into_iter()
        .enumerate()
        .map(|(id, ideal)| Agent { id, ideal, sigma })
        .collect();
    let starts = start_points
        .into_iter()
        .zip(starts)
        .map(|(p, s)| (p, Some(s.text)))
        .collect();
    Ok(TextualInstance {
        ideal_sentences: ideal,
        agents,
        starts,
        status_quo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;
    use alloc::vec;

    /// Replies from a fixed queue and records requests.
    struct Canned {
        replies: Vec<String>,
        seen: Vec<ChatRequest>,
    }

    impl Canned {
        fn new(replies: &[&str]) -> Self {
            Canned {
                replies: replies.iter().rev().map(|s| (*s).into()).collect(),
                seen: Vec::new(),
            }
        }
    }

    impl Generator for Canned {
        fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
            self.seen.push(request.clone());
            Ok(self.replies.pop().unwrap_or_default())
        }
    }

    /// Embeds by looking the text up in a table.
    struct Lookup(Vec<(String, Point)>, usize);

    impl Embedder for Lookup {
        fn dimension(&self) -> usize {
            self.1
        }

        fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
            Ok(texts
                .iter()
                .map(|t| {
                    self.0
                        .iter()
                        .find(|(k, _)| k == t)
                        .map(|(_, p)| p.clone())
                        .unwrap()
                })
                .collect())
        }
    }

    #[test]
    fn parse_examples() {
        let texts = |v: Vec<Sentence>| v.into_iter().map(|s| s.text).collect::<Vec<_>>();
        assert_eq!(texts(parse_numbered_list("1) A\n2) B")), ["A", "B"]);
        assert_eq!(texts(parse_numbered_list("1. A\n\n2. B")), ["A", "B"]);
        assert_eq!(
            texts(parse_numbered_list("no numbering, one line")),
            ["no numbering, one line"]
        );
        assert_eq!(
            texts(parse_numbered_list("Here you go:\n  10) \"Quoted\" \n11)   spaced  ")),
            ["Quoted", "spaced"]
        );
        assert!(parse_numbered_list("\n  \n").is_empty());
    }

    #[test]
    fn sentence_counts_words() {
        assert_eq!(Sentence::new("  plant   more trees ").word_count, 3);
    }

    #[test]
    fn builtin_prompts_render_verbatim() {
        let p = PromptSet::builtin();
        let cfg = TextualConfig::default();
        let a = Sentence::new("Tax carbon.");
        let b = Sentence::new("Plant trees.");
        let mut g = Canned::new(&["1) x"]);
        generate_candidates(&a, &b, &cfg, &p, &mut g).unwrap();
        let req = &g.seen[0];
        assert!(req.prompt.starts_with(
            "Generate 10 possible different well-structured sentences that aggregate the \
             following two sentences. Make sure each sentence has at most 15 words."
        ));
        assert!(req.prompt.ends_with("Sentence 1: Tax carbon.\nSentence 2: Plant trees."));
        assert!(req
            .system
            .starts_with("You are a mediator trying to find agreed wording for how to deal with global warming"));
        assert_eq!(req.temperature, 0.75);
    }

    #[test]
    fn ideal_sentences_from_numbered_reply() {
        let cfg = TextualConfig {
            agent_count: 3,
            ..TextualConfig::default()
        };
        let mut g = Canned::new(&["1) a\n2) b\n3) c"]);
        let s = generate_ideal_sentences(&cfg, &PromptSet::builtin(), &mut g).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(
            g.seen[0].prompt,
            "Give me 3 different sentences that are well structured about how to deal with \
             global warming with at most of 15 words"
        );
        assert_eq!(g.seen[0].system, "");
    }

    #[test]
    fn ideal_sentences_retry_then_fail() {
        let cfg = TextualConfig {
            agent_count: 3,
            max_retries: 2,
            ..TextualConfig::default()
        };
        let mut g = Canned::new(&["", "1) a", "1) a\n2) b\n3) c"]);
        assert_eq!(
            generate_ideal_sentences(&cfg, &PromptSet::builtin(), &mut g)
                .unwrap()
                .len(),
            3
        );
        let mut empty = Canned::new(&[]);
        assert_eq!(
            generate_ideal_sentences(&cfg, &PromptSet::builtin(), &mut empty),
            Err(TextualError::ShortParse { wanted: 3, got: 0 })
        );
        assert_eq!(empty.seen.len(), 3);
    }

    #[test]
    fn noisy_variant_is_identity_when_off() {
        let s = Sentence::new("Use less coal.");
        let mut g = Canned::new(&[]);
        let cfg = TextualConfig::default();
        assert_eq!(
            generate_noisy_variant(&s, &cfg, &PromptSet::builtin(), &mut g).unwrap(),
            s
        );
        assert!(g.seen.is_empty());

        let on = TextualConfig {
            noisy_init: true,
            ..cfg
        };
        let mut g = Canned::new(&["Use much less coal."]);
        let v = generate_noisy_variant(&s, &on, &PromptSet::builtin(), &mut g).unwrap();
        assert_eq!(v.text, "Use much less coal.");
        assert_eq!(
            g.seen[0].prompt,
            "Give me a well-structured sentence with a maximum of 15 words, resembling this \
             sentence: Use less coal."
        );
    }

    #[test]
    fn option_counts() {
        let p = PromptSet::builtin();
        let a = Sentence::new("a");
        let b = Sentence::new("b");
        let ten: String = (1..=10).map(|i| alloc::format!("{i}) s{i}\n")).collect();
        let cfg = TextualConfig::default();
        let (_, c) = generate_candidates(&a, &b, &cfg, &p, &mut Canned::new(&[&ten])).unwrap();
        assert_eq!(c.len(), 10);

        let four = TextualConfig {
            mediator_option: MediatorOption::SingleShot,
            ..cfg.clone()
        };
        let mut g = Canned::new(&[&ten]);
        let (_, c) = generate_candidates(&a, &b, &four, &p, &mut g).unwrap();
        assert_eq!(c.len(), 1);
        assert!(g.seen[0].prompt.starts_with("Generate 1 possible"));

        let five = TextualConfig {
            mediator_option: MediatorOption::Random,
            ..cfg
        };
        let mut g = Canned::new(&["The moon is bright."]);
        let (_, c) = generate_candidates(&a, &b, &five, &p, &mut g).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(g.seen[0].task, Task::RandomSentence);
        assert!(!g.seen[0].prompt.contains("Sentence 1"));
    }

    #[test]
    fn no_candidates_is_an_error() {
        let cfg = TextualConfig {
            max_retries: 1,
            ..TextualConfig::default()
        };
        let r = generate_candidates(
            &Sentence::new("a"),
            &Sentence::new("b"),
            &cfg,
            &PromptSet::builtin(),
            &mut Canned::new(&[]),
        );
        assert_eq!(r, Err(TextualError::NoCandidates));
    }

    fn v(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn single_candidate_wins() {
        let mut e = Lookup(vec![("only".into(), v(&[0.0, 1.0]))], 2);
        let set = select_candidate(
            String::new(),
            vec![Sentence::new("only")],
            None,
            1,
            &v(&[1.0, 0.0]),
            1,
            &v(&[1.0, 0.2]),
            &mut e,
            &Metric::sqrt_cosine(2),
        )
        .unwrap();
        assert_eq!(set.chosen_index, 0);
    }

    #[test]
    fn exact_target_is_chosen() {
        // target = (3*(1,0) + 1*(0,4)) / 4 = (0.75, 1)
        let mut e = Lookup(
            vec![
                ("far".into(), v(&[-1.0, 0.0])),
                ("hit".into(), v(&[1.5, 2.0])),
                ("near".into(), v(&[1.0, 1.0])),
            ],
            2,
        );
        let set = select_candidate(
            String::new(),
            vec![Sentence::new("far"), Sentence::new("hit"), Sentence::new("near")],
            None,
            3,
            &v(&[1.0, 0.0]),
            1,
            &v(&[0.0, 4.0]),
            &mut e,
            &Metric::sqrt_cosine(2),
        )
        .unwrap();
        assert_eq!(set.chosen_index, 1);
        assert!(set.distances[1] < 1e-15);
        assert_eq!(set.target, v(&[0.75, 1.0]));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mut e = Lookup(
            vec![("x".into(), v(&[0.0, 1.0])), ("y".into(), v(&[0.0, 2.0]))],
            2,
        );
        let set = select_candidate(
            String::new(),
            vec![Sentence::new("x"), Sentence::new("y")],
            None,
            1,
            &v(&[1.0, 0.0]),
            1,
            &v(&[1.0, 0.0]),
            &mut e,
            &Metric::sqrt_cosine(2),
        )
        .unwrap();
        assert_eq!(set.chosen_index, 0);
    }

    #[test]
    fn dimension_violation_is_reported() {
        let mut e = Lookup(vec![("x".into(), v(&[0.0, 1.0, 2.0]))], 2);
        let err = select_candidate(
            String::new(),
            vec![Sentence::new("x")],
            None,
            1,
            &v(&[1.0, 0.0]),
            1,
            &v(&[1.0, 0.0]),
            &mut e,
            &Metric::sqrt_cosine(2),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            TextualError::Provider(ProviderError {
                kind: ProviderErrorKind::Dimension,
                ..
            })
        ));
    }

    #[test]
    fn missing_text_is_reported_with_pair() {
        let mut src = TextualCompromise::new(
            TextualConfig::default(),
            PromptSet::builtin(),
            Canned::new(&[]),
            Lookup(vec![], 2),
        );
        let c = |id| Coalition {
            id,
            members: vec![id],
            point: v(&[1.0, 0.0]),
            text: None,
        };
        let err = src.compromise(&c(0), &c(1), &Metric::sqrt_cosine(2)).unwrap_err();
        assert_eq!(
            err,
            MediatorError::Textual {
                first: 0,
                second: 1,
                source: TextualError::MissingText(0)
            }
        );
    }

    #[test]
    fn strict_limit_drops_overlong_unless_empty() {
        let long = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen";
        let cfg = TextualConfig {
            strict_word_limit: true,
            ..TextualConfig::default()
        };
        let reply = alloc::format!("1) {long}\n2) short one");
        let mut src = TextualCompromise::new(
            cfg.clone(),
            PromptSet::builtin(),
            Canned::new(&[&reply]),
            Lookup(
                vec![(long.into(), v(&[1.0, 0.0])), ("short one".into(), v(&[0.0, 1.0]))],
                2,
            ),
        );
        let coalition = |id, text: &str| Coalition {
            id,
            members: vec![id],
            point: v(&[1.0, 0.0]),
            text: Some(text.into()),
        };
        let c = src
            .compromise(&coalition(0, "a"), &coalition(1, "b"), &Metric::sqrt_cosine(2))
            .unwrap();
        // the long candidate matches the target exactly but is filtered
        assert_eq!(c.text.as_deref(), Some("short one"));

        let only_long = alloc::format!("1) {long}");
        let mut src = TextualCompromise::new(
            cfg,
            PromptSet::builtin(),
            Canned::new(&[&only_long]),
            Lookup(vec![(long.into(), v(&[1.0, 0.0]))], 2),
        );
        let c = src
            .compromise(&coalition(0, "a"), &coalition(1, "b"), &Metric::sqrt_cosine(2))
            .unwrap();
        let set = c.candidates.unwrap();
        assert_eq!(set.overlong, vec![true]);
        assert_eq!(c.text.as_deref(), Some(long));
    }
}
