//! Labeled forum posts: loading, validation, tokenization and fold planning.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MedicalCondition,
    Medication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Recover,
    Exist,
    Deteriorate,
    Effective,
    Ineffective,
    SeriousAdverseEffect,
    Other,
}

impl TaskKind {
    pub const ALL: [TaskKind; 2] = [TaskKind::MedicalCondition, TaskKind::Medication];

    /// Class order used by every model and report for this task.
    pub fn labels(self) -> [Label; 4] {
        match self {
            TaskKind::MedicalCondition => {
                [Label::Recover, Label::Exist, Label::Deteriorate, Label::Other]
            }
            TaskKind::Medication => [
                Label::Effective,
                Label::Ineffective,
                Label::SeriousAdverseEffect,
                Label::Other,
            ],
        }
    }

    pub fn class_index(self, label: Label) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::MedicalCondition => "medical_condition",
            TaskKind::Medication => "medication",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medical_condition" => Ok(TaskKind::MedicalCondition),
            "medication" => Ok(TaskKind::Medication),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Recover => "recover",
            Label::Exist => "exist",
            Label::Deteriorate => "deteriorate",
            Label::Effective => "effective",
            Label::Ineffective => "ineffective",
            Label::SeriousAdverseEffect => "serious_adverse_effect",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "recover" => Label::Recover,
            "exist" => Label::Exist,
            "deteriorate" => Label::Deteriorate,
            "effective" => Label::Effective,
            "ineffective" => Label::Ineffective,
            "serious_adverse_effect" => Label::SeriousAdverseEffect,
            "other" => Label::Other,
            other => return Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForumPost {
    pub id: String,
    pub text: String,
    pub task: TaskKind,
    pub label: Label,
}

impl ForumPost {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        task: TaskKind,
        label: Label,
    ) -> Result<Self> {
        let post = ForumPost {
            id: id.into(),
            text: text.into(),
            task,
            label,
        };
        post.validate()?;
        Ok(post)
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("empty post id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "post {:?} has empty text",
                self.id
            )));
        }
        if self.task.class_index(self.label).is_none() {
            return Err(Error::LabelInvalidForTask {
                label: self.label.to_string(),
                task: self.task.to_string(),
            });
        }
        Ok(())
    }

    /// Index of the label in the task's class order.
    pub fn class_index(&self) -> usize {
        self.task
            .class_index(self.label)
            .expect("validated on construction")
    }
}

/// A validated collection of posts with unique ids, kept in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<ForumPost>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(posts: Vec<ForumPost>) -> Result<Self> {
        let mut index = HashMap::with_capacity(posts.len());
        for (i, post) in posts.iter().enumerate() {
            post.validate()?;
            if index.insert(post.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(post.id.clone()));
            }
        }
        Ok(Corpus { posts, index })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[ForumPost] {
        &self.posts
    }

    pub fn get(&self, id: &str) -> Option<&ForumPost> {
        self.index.get(id).map(|&i| &self.posts[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.id.as_str())
    }

    /// Tasks present, in [`TaskKind::ALL`] order.
    pub fn tasks(&self) -> Vec<TaskKind> {
        TaskKind::ALL
            .into_iter()
            .filter(|t| self.posts.iter().any(|p| p.task == *t))
            .collect()
    }

    /// Per-class counts for `task`, in the task's class order.
    pub fn histogram(&self, task: TaskKind) -> [usize; 4] {
        let mut counts = [0; 4];
        for post in self.posts.iter().filter(|p| p.task == task) {
            counts[post.class_index()] += 1;
        }
        counts
    }

    pub fn class_counts(&self) -> BTreeMap<(TaskKind, Label), usize> {
        let mut counts = BTreeMap::new();
        for post in &self.posts {
            *counts.entry((post.task, post.label)).or_insert(0) += 1;
        }
        counts
    }

    pub fn by_task(&self, task: TaskKind) -> Corpus {
        self.filter(|p| p.task == task)
    }

    /// Posts whose id is in `ids`, in corpus order.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let keep: std::collections::HashSet<&str> = ids.into_iter().collect();
        self.filter(|p| keep.contains(p.id.as_str()))
    }

    fn filter(&self, pred: impl Fn(&ForumPost) -> bool) -> Corpus {
        let posts: Vec<ForumPost> = self.posts.iter().filter(|p| pred(p)).cloned().collect();
        let index = posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Corpus { posts, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown corpus format {other:?}"
            ))),
        }
    }
}

/// One corpus record before validation. `task` and `label` are optional so
/// the same reader serves unlabeled prediction input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
}

/// Reads raw records, tagging each with its 1-based line number.
pub fn read_records(path: &Path, format: CorpusFormat) -> Result<Vec<(u64, PostRecord)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in content.lines().enumerate() {
                let lineno = i as u64 + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: PostRecord = serde_json::from_str(line)
                    .map_err(|e| Error::parse(path, lineno, format!("malformed record: {e}")))?;
                out.push((lineno, rec));
            }
            Ok(out)
        }
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(content.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?
                .clone();
            for required in ["id", "text"] {
                if !headers.iter().any(|h| h == required) {
                    return Err(Error::parse(
                        path,
                        1,
                        format!("header lacks column {required:?}"),
                    ));
                }
            }
            let mut out = Vec::new();
            for result in reader.records() {
                let record = result.map_err(|e| {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    Error::parse(path, line, format!("malformed record: {e}"))
                })?;
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let rec: PostRecord = record
                    .deserialize(Some(&headers))
                    .map_err(|e| Error::parse(path, line, format!("malformed record: {e}")))?;
                out.push((line, rec));
            }
            Ok(out)
        }
    }
}

/// Loads and validates a labeled corpus. The format is inferred from the
/// extension when `format` is `None`.
pub fn load_corpus(path: impl AsRef<Path>, format: Option<CorpusFormat>) -> Result<Corpus> {
    let path = path.as_ref();
    let format = resolve_format(path, format)?;
    let records = read_records(path, format)?;
    let mut posts = Vec::with_capacity(records.len());
    let mut seen = HashMap::new();
    for (line, rec) in records {
        let post = record_to_post(rec).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if let Some(first) = seen.insert(post.id.clone(), line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate id {:?} (first seen on line {first})", post.id),
            ));
        }
        posts.push(post);
    }
    Corpus::new(posts)
}

pub fn resolve_format(path: &Path, format: Option<CorpusFormat>) -> Result<CorpusFormat> {
    format.or_else(|| CorpusFormat::from_path(path)).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "cannot infer corpus format of {}; pass jsonl or csv",
            path.display()
        ))
    })
}

fn record_to_post(rec: PostRecord) -> Result<ForumPost> {
    let task: TaskKind = rec
        .task
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("missing field \"task\"".into()))?
        .parse()?;
    let label: Label = rec
        .label
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("missing field \"label\"".into()))?
        .parse()?;
    ForumPost::new(rec.id, rec.text, task, label)
}

/// Lowercased tokens of one post plus sentence spans over token indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the sentence containing token `i`.
    pub fn sentence_of(&self, i: usize) -> Option<usize> {
        self.sentences.iter().position(|s| s.contains(&i))
    }
}

fn is_token_char(c: char) -> bool {
    // combining diacritics can appear from lowercasing (e.g. U+0130)
    c.is_alphanumeric() || c == '\'' || ('\u{300}'..='\u{36f}').contains(&c)
}

/// Lowercases, splits on whitespace and punctuation (keeping word-internal
/// apostrophes), and records sentence breaks at `.`, `!` and `?`.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut sentences = Vec::new();
    let mut sentence_start = 0;
    let mut current = String::new();

    fn flush(current: &mut String, tokens: &mut Vec<String>) {
        let trimmed = current.trim_matches('\'');
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        current.clear();
    }

    for c in text.chars() {
        let c = if c == '\u{2019}' { '\'' } else { c };
        if is_token_char(c) {
            current.extend(c.to_lowercase());
            continue;
        }
        flush(&mut current, &mut tokens);
        if matches!(c, '.' | '!' | '?') && tokens.len() > sentence_start {
            sentences.push(sentence_start..tokens.len());
            sentence_start = tokens.len();
        }
    }
    flush(&mut current, &mut tokens);
    if tokens.len() > sentence_start {
        sentences.push(sentence_start..tokens.len());
    }
    TokenSequence { tokens, sentences }
}

/// Assignment of every corpus id to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    ids: Vec<String>,
    folds: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.folds[i])
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&str, usize)> {
        self.ids.iter().map(String::as_str).zip(self.folds.iter().copied())
    }

    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments()
            .filter(|&(_, f)| f == fold)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments()
            .filter(|&(_, f)| f != fold)
            .map(|(id, _)| id)
            .collect()
    }
}

/// Seeded k-fold partition. In stratified mode each class is shuffled and
/// dealt round-robin, continuing the fold cursor across classes so both
/// per-class and total fold sizes differ by at most one.
pub fn split_kfold(corpus: &Corpus, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be >= 2, got {k}")));
    }
    if k > corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} larger than corpus size {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; corpus.len()];

    let groups: Vec<Vec<usize>> = if stratified {
        let mut by_class: BTreeMap<(TaskKind, Label), Vec<usize>> = BTreeMap::new();
        for task in corpus.tasks() {
            for label in task.labels() {
                by_class.insert((task, label), Vec::new());
            }
        }
        for (i, post) in corpus.posts().iter().enumerate() {
            by_class.entry((post.task, post.label)).or_default().push(i);
        }
        if let Some(((task, label), _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::EmptyClass(format!("{task}/{label}")));
        }
        by_class.into_values().collect()
    } else {
        vec![(0..corpus.len()).collect()]
    };

    let mut cursor = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            folds[i] = cursor % k;
            cursor += 1;
        }
    }

    Ok(FoldPlan {
        k,
        ids: corpus.ids().map(str::to_string).collect(),
        folds,
    })
}
