//! Lexicon-based sentiment views: word-level scores weighted by tf-idf with
//! negation swapping, and window-weighted scores around stative verbs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::lexicon::{mark_negated, Lexicon, DEFAULT_NEGATION_SCOPE};

pub const DEFAULT_STATIVE_VERBS: &[&str] = &[
    "feel",
    "feels",
    "feeling",
    "felt",
    "suffer",
    "suffers",
    "suffering",
    "suffered",
    "experience",
    "experiences",
    "experiencing",
    "experienced",
];

pub const DEFAULT_WINDOW: usize = 5;

/// Smoothed inverse document frequencies, `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    idf: BTreeMap<String, f64>,
    corpus_size: usize,
}

impl IdfTable {
    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.idf.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.idf.keys().map(String::as_str)
    }

    /// idf of `word`; words never seen get `ln(1 + N) + 1`.
    pub fn get(&self, word: &str) -> f64 {
        self.idf
            .get(word)
            .copied()
            .unwrap_or_else(|| self.unseen())
    }

    pub fn unseen(&self) -> f64 {
        (1.0 + self.corpus_size as f64).ln() + 1.0
    }
}

pub fn compute_idf<'a>(documents: impl IntoIterator<Item = &'a TokenSequence>) -> IdfTable {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n = 0;
    for doc in documents {
        n += 1;
        let distinct: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for w in distinct {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let numerator = 1.0 + n as f64;
    IdfTable {
        idf: df
            .into_iter()
            .map(|(w, d)| (w.to_string(), (numerator / (1.0 + d as f64)).ln() + 1.0))
            .collect(),
        corpus_size: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WordScores {
    pub pos: f64,
    pub neg: f64,
    pub obj: f64,
}

/// Per-word positive, negative and objective scores for each distinct
/// lexicon word in the post. Negated occurrences contribute their prior
/// with positive and negative mass swapped.
pub fn word_sentiment_scores(
    tokens: &TokenSequence,
    negated: &[bool],
    lexicon: &Lexicon,
    idf: &IdfTable,
) -> BTreeMap<String, WordScores> {
    assert_eq!(negated.len(), tokens.len(), "negation flags must align with tokens");
    // token -> (tf plain, tf negated)
    let mut tf: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (tok, &neg) in tokens.tokens.iter().zip(negated) {
        if lexicon.lookup(tok).is_none() {
            continue;
        }
        let slot = tf.entry(tok.as_str()).or_default();
        if neg {
            slot.1 += 1.0;
        } else {
            slot.0 += 1.0;
        }
    }
    tf.into_iter()
        .map(|(word, (plain, negated))| {
            let prior = lexicon.lookup(word).expect("filtered above");
            let idf = idf.get(word);
            let scores = WordScores {
                pos: (plain * prior.pos + negated * prior.neg) * idf,
                neg: (plain * prior.neg + negated * prior.pos) * idf,
                obj: (plain + negated) * idf * prior.obj,
            };
            (word.to_string(), scores)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WordSentimentView {
    pub ws_pos: f64,
    pub ws_neg: f64,
    pub ws_obj: f64,
}

/// Sums of per-word scores divided by the post's token count.
pub fn word_level_view(
    tokens: &TokenSequence,
    negated: &[bool],
    lexicon: &Lexicon,
    idf: &IdfTable,
) -> WordSentimentView {
    let n = tokens.len();
    if n == 0 {
        return WordSentimentView::default();
    }
    let scores = word_sentiment_scores(tokens, negated, lexicon, idf);
    let mut view = WordSentimentView::default();
    for s in scores.values() {
        view.ws_pos += s.pos;
        view.ws_neg += s.neg;
        view.ws_obj += s.obj;
    }
    let n = n as f64;
    view.ws_pos /= n;
    view.ws_neg /= n;
    view.ws_obj /= n;
    view
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub stative_verbs: BTreeSet<String>,
    /// Context words considered on each side of the verb.
    pub window: usize,
    /// Divisor applied to each window score.
    pub normalizer: usize,
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams {
            stative_verbs: DEFAULT_STATIVE_VERBS.iter().map(|s| s.to_string()).collect(),
            window: DEFAULT_WINDOW,
            normalizer: 2 * DEFAULT_WINDOW,
        }
    }
}

impl TargetParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("target window must be >= 1".into()));
        }
        if self.normalizer == 0 {
            return Err(Error::InvalidArgument("target normalizer must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetSentimentView {
    pub ts_pos: f64,
    pub ts_neg: f64,
}

/// Weight of a context word `distance` positions away from the verb:
/// `window` for an adjacent word down to 1 at the window edge.
pub fn window_weight(window: usize, distance: usize) -> f64 {
    debug_assert!((1..=window).contains(&distance));
    (window - distance + 1) as f64
}

/// Max over stative-verb occurrences of the distance-weighted positive and
/// negative prior mass in the surrounding window, divided by the normalizer.
pub fn target_view(
    tokens: &TokenSequence,
    lexicon: &Lexicon,
    params: &TargetParams,
) -> TargetSentimentView {
    debug_assert!(params.validate().is_ok());
    let toks = &tokens.tokens;
    let norm = params.normalizer as f64;
    let mut view = TargetSentimentView::default();
    for (i, tok) in toks.iter().enumerate() {
        if !params.stative_verbs.contains(tok) {
            continue;
        }
        let (mut pos, mut neg) = (0.0, 0.0);
        for d in 1..=params.window {
            let w = window_weight(params.window, d);
            let left = i.checked_sub(d);
            let right = Some(i + d).filter(|&j| j < toks.len());
            for j in [left, right].into_iter().flatten() {
                if let Some(p) = lexicon.lookup(&toks[j]) {
                    pos += w * p.pos;
                    neg += w * p.neg;
                }
            }
        }
        view.ts_pos = view.ts_pos.max(pos / norm);
        view.ts_neg = view.ts_neg.max(neg / norm);
    }
    view
}

pub const SENTIMENT_COLUMNS: [&str; 5] = ["ws_pos", "ws_neg", "ws_obj", "ts_pos", "ts_neg"];

/// Bundles everything needed to compute both sentiment views of a post.
#[derive(Debug, Clone)]
pub struct SentimentFeaturizer {
    pub lexicon: Lexicon,
    pub negation_scope: usize,
    pub target: TargetParams,
}

impl SentimentFeaturizer {
    pub fn new(lexicon: Lexicon) -> Self {
        SentimentFeaturizer {
            lexicon,
            negation_scope: DEFAULT_NEGATION_SCOPE,
            target: TargetParams::default(),
        }
    }

    pub fn word_level(&self, tokens: &TokenSequence, idf: &IdfTable) -> WordSentimentView {
        let flags = mark_negated(tokens, &self.lexicon, self.negation_scope);
        word_level_view(tokens, &flags, &self.lexicon, idf)
    }

    pub fn target(&self, tokens: &TokenSequence) -> TargetSentimentView {
        target_view(tokens, &self.lexicon, &self.target)
    }

    /// `[ws_pos, ws_neg, ws_obj, ts_pos, ts_neg]`.
    pub fn featurize(&self, tokens: &TokenSequence, idf: &IdfTable) -> [f64; 5] {
        let ws = self.word_level(tokens, idf);
        let ts = self.target(tokens);
        [ws.ws_pos, ws.ws_neg, ws.ws_obj, ts.ts_pos, ts.ts_neg]
    }
}
