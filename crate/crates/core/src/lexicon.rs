//! Sentiment priors and negation detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-6;

pub const DEFAULT_NEGATION_CUES: &[&str] = &[
    "not", "no", "never", "n't", "without", "cannot", "can't", "don't", "doesn't", "didn't",
    "won't", "isn't", "aren't", "wasn't", "weren't",
];

pub const DEFAULT_NEGATION_SCOPE: usize = 3;

/// Positive, negative and objective prior mass of one word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentPrior {
    pub pos: f64,
    pub neg: f64,
    pub obj: f64,
}

impl SentimentPrior {
    /// Builds a prior from positive and negative mass; `obj` is the remainder.
    pub fn from_pos_neg(pos: f64, neg: f64) -> Result<Self> {
        if !(pos.is_finite() && neg.is_finite()) || pos < 0.0 || neg < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sentiment scores must be finite and nonnegative, got ({pos}, {neg})"
            )));
        }
        if pos + neg > 1.0 + SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "positive + negative score exceeds 1 ({pos} + {neg})"
            )));
        }
        Ok(SentimentPrior {
            pos,
            neg,
            obj: (1.0 - pos - neg).max(0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconKind {
    /// SentiWordNet 3.0 six-column TSV.
    Sentiwordnet,
    /// `word<TAB>pos<TAB>neg`.
    Simple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, SentimentPrior>,
    negation_cues: BTreeSet<String>,
    suffix_fallback: bool,
}

impl Lexicon {
    /// Builds a lexicon with the default negation cues. Words are lowercased.
    pub fn new(entries: impl IntoIterator<Item = (String, SentimentPrior)>) -> Self {
        Lexicon {
            entries: entries
                .into_iter()
                .map(|(w, p)| (w.to_lowercase(), p))
                .collect(),
            negation_cues: DEFAULT_NEGATION_CUES.iter().map(|s| s.to_string()).collect(),
            suffix_fallback: false,
        }
    }

    pub fn with_negation_cues(mut self, cues: impl IntoIterator<Item = String>) -> Result<Self> {
        let cues: BTreeSet<String> = cues.into_iter().map(|c| c.to_lowercase()).collect();
        if cues.is_empty() {
            return Err(Error::InvalidArgument("negation cue list is empty".into()));
        }
        self.negation_cues = cues;
        Ok(self)
    }

    /// Retry lookups with `-s`, `-ed` and `-ing` stripped when the exact
    /// word is missing.
    pub fn with_suffix_fallback(mut self, enabled: bool) -> Self {
        self.suffix_fallback = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &SentimentPrior)> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p))
    }

    pub fn negation_cues(&self) -> impl Iterator<Item = &str> {
        self.negation_cues.iter().map(String::as_str)
    }

    /// Exact-match lookup of a lowercase token.
    pub fn lookup(&self, token: &str) -> Option<SentimentPrior> {
        self.resolve(token).map(|(_, p)| p)
    }

    /// Like [`Lexicon::lookup`] but also returns the matched entry word,
    /// which differs from `token` only under suffix fallback.
    pub fn resolve<'a>(&'a self, token: &'a str) -> Option<(&'a str, SentimentPrior)> {
        debug_assert!(
            !token.chars().any(char::is_uppercase),
            "lexicon lookup requires a lowercase token, got {token:?}"
        );
        if let Some((w, p)) = self.entries.get_key_value(token) {
            return Some((w.as_str(), *p));
        }
        if self.suffix_fallback {
            for suffix in ["ing", "ed", "s"] {
                if let Some(stem) = token.strip_suffix(suffix) {
                    if let Some((w, p)) = self.entries.get_key_value(stem) {
                        return Some((w.as_str(), *p));
                    }
                }
            }
        }
        None
    }

    pub fn is_negation_cue(&self, token: &str) -> bool {
        self.negation_cues.contains(token)
            || (token.ends_with("n't") && self.negation_cues.contains("n't"))
    }
}

/// Loads a SentiWordNet 3.0 file. Each word's prior is the unweighted mean
/// of (PosScore, NegScore) over every synset listing it.
pub fn load_sentiwordnet(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sentiwordnet(&content, path)
}

pub(crate) fn parse_sentiwordnet(content: &str, path: &Path) -> Result<Lexicon> {
    // word -> (sum pos, sum neg, senses)
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i as u64 + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 6 tab-separated columns, found {}", cols.len()),
            ));
        }
        let pos = parse_score(cols[2], path, lineno)?;
        let neg = parse_score(cols[3], path, lineno)?;
        SentimentPrior::from_pos_neg(pos, neg).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        for term in cols[4].split_whitespace() {
            let word = term.split_once('#').map_or(term, |(w, _)| w);
            if word.is_empty() || word.contains('_') || word.contains(' ') {
                continue;
            }
            let slot = acc.entry(word.to_lowercase()).or_insert((0.0, 0.0, 0));
            slot.0 += pos;
            slot.1 += neg;
            slot.2 += 1;
        }
    }
    let mut entries = Vec::with_capacity(acc.len());
    for (word, (p, n, count)) in acc {
        let c = count as f64;
        entries.push((word, SentimentPrior::from_pos_neg(p / c, n / c)?));
    }
    Ok(Lexicon::new(entries))
}

/// Loads a `word<TAB>pos<TAB>neg` lexicon. Later duplicates of a word are
/// rejected.
pub fn load_simple_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_simple(&content, path)
}

pub(crate) fn parse_simple(content: &str, path: &Path) -> Result<Lexicon> {
    let mut entries = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i as u64 + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected word<TAB>pos<TAB>neg, found {} columns", cols.len()),
            ));
        }
        let word = cols[0].trim().to_lowercase();
        let pos = parse_score(cols[1], path, lineno)?;
        let neg = parse_score(cols[2], path, lineno)?;
        let prior = SentimentPrior::from_pos_neg(pos, neg)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if entries.insert(word.clone(), prior).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate word {word:?}")));
        }
    }
    Ok(Lexicon::new(entries))
}

pub fn load_lexicon(path: impl AsRef<Path>, kind: LexiconKind) -> Result<Lexicon> {
    match kind {
        LexiconKind::Sentiwordnet => load_sentiwordnet(path),
        LexiconKind::Simple => load_simple_lexicon(path),
    }
}

/// Reads a one-word-per-line list, lowercased; blank and `#` lines skipped.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn parse_score(field: &str, path: &Path, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(path, line, format!("bad score {field:?}: {e}")))
}

/// Flags lexicon words preceded by a negation cue within `scope` tokens of
/// the same sentence.
pub fn mark_negated(tokens: &TokenSequence, lexicon: &Lexicon, scope: usize) -> Vec<bool> {
    assert!(scope >= 1, "negation scope must be >= 1");
    let mut flags = vec![false; tokens.len()];
    for sentence in &tokens.sentences {
        for i in sentence.clone() {
            if lexicon.lookup(&tokens.tokens[i]).is_none() {
                continue;
            }
            let from = i.saturating_sub(scope).max(sentence.start);
            flags[i] = tokens.tokens[from..i]
                .iter()
                .any(|t| lexicon.is_negation_cue(t));
        }
    }
    flags
}
