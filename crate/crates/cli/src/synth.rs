//! Synthetic corpora: truth strings plus candidates corrupted at known rates.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CandidateRecord, CorpusRecord, Label};
use crate::error::{EvalError, Result};

/// Printable ASCII, space through tilde.
pub const ALPHABET: &[u8] = b" !\"#$%&'()*+,-./0123456789:;<=>?@ABCDEFGHIJKLMNOPQRSTUVWXYZ[\\]^_`abcdefghijklmnopqrstuvwxyz{|}~";

fn random_symbol(rng: &mut impl Rng) -> char {
    ALPHABET[rng.random_range(0..ALPHABET.len())] as char
}

fn substitute(rng: &mut impl Rng, original: char) -> char {
    match ALPHABET.iter().position(|&b| b as char == original) {
        Some(pos) => {
            let k = rng.random_range(0..ALPHABET.len() - 1);
            ALPHABET[if k >= pos { k + 1 } else { k }] as char
        }
        None => random_symbol(rng),
    }
}

/// Each character independently, with probability `rate`, is substituted,
/// deleted, or preceded by an inserted character (one third each).
/// Replacements are drawn from [`ALPHABET`]; substitutions always change the
/// character.
pub fn corrupt(text: &str, rate: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(text.len() + text.len() / 4);
    for c in text.chars() {
        if rng.random::<f64>() >= rate {
            out.push(c);
            continue;
        }
        match rng.random_range(0..3u8) {
            0 => out.push(substitute(&mut rng, c)),
            1 => {}
            _ => {
                out.push(random_symbol(&mut rng));
                out.push(c);
            }
        }
    }
    out
}

const WORDS: &[&str] = &[
    "the",
    "of",
    "and",
    "invoice",
    "total",
    "page",
    "section",
    "model",
    "data",
    "table",
    "report",
    "value",
    "amount",
    "date",
    "number",
    "figure",
    "results",
    "method",
    "sample",
    "text",
    "order",
    "account",
    "street",
    "north",
    "river",
    "quarterly",
    "summary",
    "balance",
    "item",
    "price",
    "signature",
    "received",
    "shipping",
    "address",
    "phone",
    "reference",
    "notes",
    "chapter",
    "analysis",
    "review",
    "approved",
    "pending",
    "unit",
    "weight",
    "height",
    "width",
    "batch",
];

/// Word-salad text of exactly `len` characters with occasional digits,
/// capitals and punctuation.
pub fn random_text(rng: &mut impl Rng, len: usize) -> String {
    let mut out = String::with_capacity(len + 16);
    while out.chars().count() < len {
        if !out.is_empty() {
            out.push(' ');
        }
        match rng.random_range(0..10u8) {
            0 => out.push_str(&rng.random_range(0..10_000u32).to_string()),
            1 => {
                let w = WORDS[rng.random_range(0..WORDS.len())];
                let mut cs = w.chars();
                if let Some(first) = cs.next() {
                    out.extend(first.to_uppercase());
                    out.push_str(cs.as_str());
                }
            }
            _ => out.push_str(WORDS[rng.random_range(0..WORDS.len())]),
        }
        if rng.random_range(0..8u8) == 0 {
            out.push(if rng.random_bool(0.5) { ',' } else { '.' });
        }
    }
    let mut s: String = out.chars().take(len).collect();
    if s.ends_with(' ') {
        s.pop();
        s.push('.');
    }
    s
}

/// A `len`-character window of `seed_text` (whitespace collapsed), starting
/// at a random offset and wrapping around through a single space.
pub fn window(rng: &mut impl Rng, seed_text: &[char], len: usize) -> String {
    if seed_text.is_empty() {
        return String::new();
    }
    let start = rng.random_range(0..seed_text.len());
    seed_text
        .iter()
        .chain(std::iter::once(&' '))
        .cycle()
        .skip(start)
        .take(len)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub candidates: usize,
    /// Corruption rate of every candidate of a good sample and of the clean
    /// candidates of a bad one.
    pub rate: f64,
    /// Share of samples labeled bad. Zero produces an unlabeled corpus.
    pub bad_fraction: f64,
    pub bad_rate: f64,
    /// A bad sample has between this many and all of its candidates at
    /// `bad_rate`.
    pub min_bad: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            min_len: 200,
            max_len: 800,
            candidates: 5,
            rate: 0.05,
            bad_fraction: 0.0,
            bad_rate: 0.3,
            min_bad: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(EvalError::Usage(m));
        if self.candidates < 2 {
            return usage(format!(
                "need at least 2 candidates, got {}",
                self.candidates
            ));
        }
        if self.min_len > self.max_len {
            return usage(format!(
                "min length {} exceeds max length {}",
                self.min_len, self.max_len
            ));
        }
        for (name, v) in [
            ("rate", self.rate),
            ("bad rate", self.bad_rate),
            ("bad fraction", self.bad_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return usage(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.bad_fraction > 0.0 && (self.min_bad == 0 || self.min_bad > self.candidates) {
            return usage(format!(
                "min bad count must lie in [1, {}], got {}",
                self.candidates, self.min_bad
            ));
        }
        Ok(())
    }
}

/// Truth strings come from `seed_text` windows when given, otherwise from
/// [`random_text`]. Deterministic in the config; truths and per-candidate
/// seeds do not depend on the rates, so sweeping `rate` with a fixed seed
/// corrupts the same truths.
pub fn synth_corpus(config: &SynthConfig, seed_text: Option<&str>) -> Result<Vec<CorpusRecord>> {
    config.validate()?;
    let seed_chars: Option<Vec<char>> = seed_text.map(|t| {
        t.split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .chars()
            .collect()
    });
    if seed_chars.as_ref().is_some_and(Vec::is_empty) {
        return Err(EvalError::Data("seed text is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labeled = config.bad_fraction > 0.0;
    let n_bad = (config.bad_fraction * config.samples as f64).round() as usize;
    let mut labels: Vec<Label> = (0..config.samples)
        .map(|i| if i < n_bad { Label::Bad } else { Label::Good })
        .collect();
    labels.shuffle(&mut rng);

    let mut out = Vec::with_capacity(config.samples);
    for (i, label) in labels.into_iter().enumerate() {
        let len = rng.random_range(config.min_len..=config.max_len);
        let truth = match &seed_chars {
            Some(chars) => window(&mut rng, chars, len),
            None => random_text(&mut rng, len),
        };
        let mut rates = vec![config.rate; config.candidates];
        if label == Label::Bad {
            let k = rng.random_range(config.min_bad..=config.candidates);
            for j in index::sample(&mut rng, config.candidates, k) {
                rates[j] = config.bad_rate;
            }
        }
        let candidates = rates
            .iter()
            .enumerate()
            .map(|(j, &r)| CandidateRecord {
                model: format!("m{}", j + 1),
                text: corrupt(&truth, r, rng.random()),
                embedding: None,
            })
            .collect();
        out.push(CorpusRecord {
            sample_id: format!("syn-{i:05}"),
            image_path: None,
            truth: Some(truth),
            label: labeled.then_some(label),
            candidates: Some(candidates),
        });
    }
    Ok(out)
}
