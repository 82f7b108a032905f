//! Offline generator and embedder. Both are pure functions of their input
//! and a seed.

use coalition_core::provider::{ChatRequest, ProviderError, Task};
use coalition_core::textual::{Embedder, Generator};
use coalition_core::Point;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    /// Seed of the embedder. Shared by every run so the geometry is fixed.
    pub seed: u64,
    pub dimension: usize,
    /// Character n-gram length.
    pub ngram: usize,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings {
            seed: 0,
            dimension: 16,
            ngram: 3,
        }
    }
}

/// Signed hashed bag of character n-grams and words.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dimension: usize,
    ngram: usize,
}

impl MockEmbedder {
    pub fn new(settings: MockSettings) -> Self {
        MockEmbedder {
            seed: settings.seed,
            dimension: settings.dimension.max(1),
            ngram: settings.ngram.max(1),
        }
    }

    pub fn embed_one(&self, text: &str) -> Point {
        let mut v = vec![0.0; self.dimension];
        let mut add = |bytes: &[u8]| {
            let h = fnv1a(self.seed, bytes);
            let slot = (h % self.dimension as u64) as usize;
            v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        let lower = text.to_lowercase();
        let padded: Vec<char> = format!(" {} ", lower.trim()).chars().collect();
        for w in padded.windows(self.ngram.min(padded.len())) {
            let s: String = w.iter().collect();
            add(s.as_bytes());
        }
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            add(format!("#{word}").as_bytes());
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        Point::new(v).expect("finite and nonempty")
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&mut self, texts: &[String]) -> Result<Vec<Point>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

const VERBS: &[&str] = &[
    "Tax", "Cut", "Ban", "Subsidize", "Expand", "Fund", "Limit", "Phase out", "Invest in",
    "Regulate", "Promote", "Reduce",
];
const OBJECTS: &[&str] = &[
    "carbon emissions",
    "coal power",
    "solar panels",
    "public transit",
    "electric cars",
    "forest protection",
    "wind farms",
    "meat consumption",
    "air travel",
    "home insulation",
    "nuclear energy",
    "plastic waste",
];
const MEANS: &[&str] = &[
    "through international agreements",
    "with strict national laws",
    "using market incentives",
    "by empowering local communities",
    "through public education",
    "with green technology research",
    "starting this decade",
    "across every industry",
];

const ODD_SUBJECTS: &[&str] = &[
    "The purple giraffe",
    "My grandmother's violin",
    "A sleepy octopus",
    "The midnight baker",
    "An old lighthouse keeper",
    "Our neighbor's parrot",
    "The jazz quartet",
    "A curious hedgehog",
];
const ODD_ACTIONS: &[&str] = &[
    "quietly hums",
    "juggles lemons",
    "paints tiny boats",
    "collects silver spoons",
    "dances the tango",
    "recites poetry",
    "knits striped scarves",
    "whistles old lullabies",
];
const ODD_PLACES: &[&str] = &[
    "beside the river",
    "on Tuesday mornings",
    "under the piano",
    "at the village fair",
    "inside a teacup",
    "near the bakery",
    "during thunderstorms",
    "in the attic",
];

/// Template generator that answers by task: topic sentences, light
/// rewordings, interleavings of two sentences, or off-topic sentences.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        MockGenerator { seed }
    }

    fn rng_for(&self, request: &ChatRequest) -> ChaCha8Rng {
        let h = fnv1a(self.seed, request.system.as_bytes());
        ChaCha8Rng::seed_from_u64(fnv1a(h, request.prompt.as_bytes()))
    }
}

fn numbered(lines: &[String]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}) {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn limit_words(words: Vec<&str>, limit: usize) -> String {
    let mut out: Vec<&str> = Vec::new();
    for w in words {
        if out.last() != Some(&w) {
            out.push(w);
        }
    }
    out.truncate(limit.max(1));
    let mut s = out.join(" ");
    let trimmed = s.trim_end_matches(['.', ',', ';']).len();
    s.truncate(trimmed);
    s.push('.');
    s
}

fn topic_sentence(topic: &str, rng: &mut impl Rng) -> String {
    format!(
        "{} {} {} to tackle {topic}.",
        VERBS.choose(rng).unwrap(),
        OBJECTS.choose(rng).unwrap(),
        MEANS.choose(rng).unwrap()
    )
}

fn odd_sentence(rng: &mut impl Rng) -> String {
    format!(
        "{} {} {}.",
        ODD_SUBJECTS.choose(rng).unwrap(),
        ODD_ACTIONS.choose(rng).unwrap(),
        ODD_PLACES.choose(rng).unwrap()
    )
}

fn variant(sentence: &str, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = sentence.split_whitespace().collect();
    if words.len() > 3 {
        let i = rng.random_range(1..words.len() - 1);
        match rng.random_range(0..3) {
            0 => words.swap(i, i + 1),
            1 => words[i] = ["quickly", "firmly", "gradually", "boldly"][rng.random_range(0..4)],
            _ => {
                words.remove(i);
            }
        }
    }
    limit_words(words, usize::MAX)
}

/// Candidate `k` of `count` draws each position from `a` with probability
/// `(k+1)/(count+1)`, so the candidates sweep from mostly-`b` to mostly-`a`.
fn interleave(a: &str, b: &str, k: usize, count: usize, limit: usize, rng: &mut impl Rng) -> String {
    let wa: Vec<&str> = a.trim_end_matches('.').split_whitespace().collect();
    let wb: Vec<&str> = b.trim_end_matches('.').split_whitespace().collect();
    let f = (k + 1) as f64 / (count + 1) as f64;
    let len = wa.len().max(wb.len());
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let from_a = rng.random::<f64>() < f;
        let w = match (wa.get(i), wb.get(i)) {
            (Some(x), Some(y)) => {
                if from_a {
                    x
                } else {
                    y
                }
            }
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => unreachable!(),
        };
        out.push(*w);
    }
    limit_words(out, limit)
}

impl Generator for MockGenerator {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut rng = self.rng_for(request);
        let reply = match &request.task {
            Task::IdealSentences { count, topic } => {
                let lines: Vec<String> = (0..*count).map(|_| topic_sentence(topic, &mut rng)).collect();
                numbered(&lines)
            }
            Task::NoisyVariant { sentence } => variant(sentence, &mut rng),
            Task::Aggregate {
                count,
                sentence_a,
                sentence_b,
                ..
            } => {
                let lines: Vec<String> = (0..*count)
                    .map(|k| interleave(sentence_a, sentence_b, k, *count, request.word_limit, &mut rng))
                    .collect();
                numbered(&lines)
            }
            Task::RandomSentence => odd_sentence(&mut rng),
        };
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coalition_core::textual::{
        generate_candidates, generate_ideal_sentences, generate_noisy_variant, MediatorOption,
        PromptSet, Sentence, TextualConfig,
    };
    use coalition_core::{Distance, Metric};

    #[test]
    fn same_text_same_vector() {
        let mut e = MockEmbedder::new(MockSettings::default());
        let v = e
            .embed_batch(&["Tax coal.".into(), "Tax coal.".into(), "Fund trains.".into()])
            .unwrap();
        assert_eq!(v[0], v[1]);
        assert_ne!(v[0], v[2]);
        assert_eq!(v[0].dim(), 16);
    }

    #[test]
    fn batch_order_is_preserved() {
        let mut e = MockEmbedder::new(MockSettings::default());
        let texts: Vec<String> = ["a b", "c d", "e f"].map(String::from).to_vec();
        let fwd = e.embed_batch(&texts).unwrap();
        let rev: Vec<String> = texts.iter().rev().cloned().collect();
        let back = e.embed_batch(&rev).unwrap();
        assert_eq!(fwd[0], back[2]);
        assert_eq!(fwd[2], back[0]);
    }

    #[test]
    fn empty_text_is_not_a_zero_vector() {
        let e = MockEmbedder::new(MockSettings::default());
        assert!(e.embed_one("").coords().iter().any(|x| *x != 0.0));
    }

    #[test]
    fn ten_ideal_sentences() {
        let cfg = TextualConfig::default();
        let s = generate_ideal_sentences(&cfg, &PromptSet::builtin(), &mut MockGenerator::new(1))
            .unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|x| x.text.ends_with("global warming.")));
        assert!(s.iter().all(|x| x.word_count <= 15));
    }

    #[test]
    fn option_one_yields_ten_numbered_lines() {
        let cfg = TextualConfig::default();
        let a = Sentence::new("Tax carbon emissions with strict national laws to tackle global warming.");
        let b = Sentence::new("Fund wind farms through public education to tackle global warming.");
        let (raw, c) =
            generate_candidates(&a, &b, &cfg, &PromptSet::builtin(), &mut MockGenerator::new(2))
                .unwrap();
        assert_eq!(c.len(), 10);
        assert!(raw.starts_with("1) "));
        assert!(raw.contains("\n10) "));
        assert!(c.iter().all(|s| s.word_count <= cfg.word_limit));
    }

    #[test]
    fn generator_is_pure() {
        let cfg = TextualConfig {
            mediator_option: MediatorOption::Random,
            ..TextualConfig::default()
        };
        let a = Sentence::new("x");
        let run = |seed| {
            generate_candidates(&a, &a, &cfg, &PromptSet::builtin(), &mut MockGenerator::new(seed))
                .unwrap()
                .0
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn identical_inputs_interleave_to_themselves() {
        let s = "Ban coal power starting this decade to tackle global warming.";
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..10 {
            assert_eq!(interleave(s, s, k, 10, 15, &mut rng), s);
        }
    }

    #[test]
    fn noisy_variant_stays_closer_than_other_ideals() {
        let cfg = TextualConfig {
            noisy_init: true,
            agent_count: 20,
            ..TextualConfig::default()
        };
        let p = PromptSet::builtin();
        let mut g = MockGenerator::new(9);
        let ideals = generate_ideal_sentences(&cfg, &p, &mut g).unwrap();
        let e = MockEmbedder::new(MockSettings {
            dimension: 64,
            ..MockSettings::default()
        });
        let m = Metric::sqrt_cosine(64);
        let (mut own, mut other) = (0.0, 0.0);
        for (i, s) in ideals.iter().enumerate() {
            let v = generate_noisy_variant(s, &cfg, &p, &mut g).unwrap();
            let ev = e.embed_one(&v.text);
            own += m.dist(&ev, &e.embed_one(&s.text)).unwrap();
            let j = (i + 1) % ideals.len();
            other += m.dist(&ev, &e.embed_one(&ideals[j].text)).unwrap();
        }
        assert!(own < other, "own {own} other {other}");
    }
}
