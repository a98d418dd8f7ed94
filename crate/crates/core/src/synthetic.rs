//! Seeded synthetic benchmark: a 4-class corpus whose sentiment view is
//! driven by class-correlated lexicon words, a planted-signal dense view and
//! an optional pure-noise view.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, ForumPost, TaskKind};
use crate::error::{Error, Result};
use crate::fusion::WgccaConfig;
use crate::lexicon::{Lexicon, SentimentPrior};
use crate::pipeline::{PipelineSpec, ViewKind, ViewSpec};
use crate::view_ingest::ViewMatrix;

pub const POSITIVE: &[&str] = &["good", "great", "better", "relieved", "wonderful", "happy"];
pub const NEGATIVE: &[&str] = &["awful", "worse", "terrible", "painful", "miserable", "horrible"];
pub const OBJECTIVE: &[&str] = &["stable", "normal", "routine", "usual", "steady", "ordinary"];
const FILLER: &[&str] = &[
    "today", "my", "the", "doctor", "week", "said", "again", "after", "visit", "morning",
    "appointment", "and", "was", "it", "with",
];

pub const PLANTED_VIEW: &str = "planted";
pub const NOISE_VIEW: &str = "noise";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub task: TaskKind,
    pub posts_per_class: usize,
    /// Probability that a post carries no sentiment cue at all (filler
    /// wording, as in the `other` class).
    pub sentiment_noise: f64,
    /// Scale of the class one-hot in the planted view.
    pub planted_signal: f64,
    pub planted_dim: usize,
    pub noise_dim: usize,
    pub latent_dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            task: TaskKind::MedicalCondition,
            posts_per_class: 100,
            sentiment_noise: 0.25,
            planted_signal: 4.0,
            planted_dim: 6,
            noise_dim: 4,
            latent_dim: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub config: SyntheticConfig,
    pub corpus: Corpus,
    pub lexicon: Lexicon,
    pub planted: ViewMatrix,
    pub noise: ViewMatrix,
}

pub fn lexicon() -> Lexicon {
    let entries = POSITIVE
        .iter()
        .map(|w| (w, 0.75, 0.0))
        .chain(NEGATIVE.iter().map(|w| (w, 0.0, 0.75)))
        .chain(OBJECTIVE.iter().map(|w| (w, 0.0, 0.0)))
        .map(|(w, p, n)| (w.to_string(), SentimentPrior::from_pos_neg(p, n).expect("valid prior")));
    Lexicon::new(entries)
}

fn pick<'a>(words: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn post_text(pattern: usize, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<&str> = (0..rng.random_range(2..6)).map(|_| pick(FILLER, rng)).collect();
    let cue = match pattern {
        0 => Some(POSITIVE),
        1 => Some(OBJECTIVE),
        2 => Some(NEGATIVE),
        _ => None,
    };
    if let Some(cue) = cue {
        words.push("i");
        words.push("feel");
        for _ in 0..rng.random_range(1..3) {
            words.push(pick(cue, rng));
        }
    }
    for _ in 0..rng.random_range(0..4) {
        words.push(pick(FILLER, rng));
    }
    let mut text = words.join(" ");
    text.push('.');
    text
}

/// Posts are interleaved by class. Id prefixes follow the task so two
/// benchmarks can share one corpus file.
pub fn generate(config: &SyntheticConfig, seed: u64) -> SyntheticBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = config.task.labels();
    let prefix = match config.task {
        TaskKind::MedicalCondition => "c",
        TaskKind::Medication => "m",
    };
    let m = 4 * config.posts_per_class;
    let mut posts = Vec::with_capacity(m);
    let mut planted = DMatrix::zeros(m, config.planted_dim);
    for i in 0..m {
        let class = i % 4;
        let pattern = if rng.random_bool(config.sentiment_noise) { 3 } else { class };
        let id = format!("{prefix}{i:04}");
        posts.push(ForumPost::new(id, post_text(pattern, &mut rng), config.task, labels[class]).expect("label fits task"));
        for j in 0..config.planted_dim {
            let signal = if j == class { config.planted_signal } else { 0.0 };
            planted[(i, j)] = signal + rng.sample::<f64, _>(StandardNormal);
        }
    }
    let noise = DMatrix::from_fn(m, config.noise_dim, |_, _| rng.sample(StandardNormal));
    let ids: Vec<String> = posts.iter().map(|p| p.id.clone()).collect();
    SyntheticBenchmark {
        config: config.clone(),
        corpus: Corpus::new(posts).expect("unique ids"),
        lexicon: lexicon(),
        planted: ViewMatrix::new(PLANTED_VIEW, ids.clone(), planted).expect("finite"),
        noise: ViewMatrix::new(NOISE_VIEW, ids, noise).expect("finite"),
    }
}

impl SyntheticBenchmark {
    pub fn externals(&self, with_noise: bool) -> Vec<ViewMatrix> {
        let mut out = vec![self.planted.clone()];
        if with_noise {
            out.push(self.noise.clone());
        }
        out
    }

    /// Sentiment view plus the planted view, and the noise view on request.
    pub fn spec(&self, with_noise: bool) -> PipelineSpec {
        let mut views = vec![ViewSpec::builtin(ViewKind::Sentiment, 1.0)];
        views.extend(self.externals(with_noise).into_iter().map(ViewSpec::external));
        let mut spec = PipelineSpec::new(self.lexicon.clone(), views);
        spec.fusion = WgccaConfig {
            latent_dim: Some(self.config.latent_dim),
            ridge: None,
        };
        spec
    }
}

/// Writes a two-task fixture to `dir`: `corpus.jsonl`, `lexicon.tsv`,
/// `planted.csv` and `noise.csv`.
pub fn write_fixture(dir: &Path, posts_per_class: usize, seed: u64) -> Result<()> {
    let benches: Vec<SyntheticBenchmark> = TaskKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &task)| {
            let config = SyntheticConfig {
                task,
                posts_per_class,
                ..SyntheticConfig::default()
            };
            generate(&config, seed.wrapping_add(i as u64))
        })
        .collect();
    let write = |name: &str, content: String| {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))
    };

    let mut corpus = String::new();
    for b in &benches {
        for p in b.corpus.posts() {
            let line = serde_json::json!({
                "id": p.id, "text": p.text, "task": p.task.as_str(), "label": p.label.as_str()
            });
            writeln!(corpus, "{line}").expect("string write");
        }
    }
    write("corpus.jsonl", corpus)?;

    let mut lex = String::from("# word\tpos\tneg\n");
    for (w, p) in benches[0].lexicon.entries() {
        writeln!(lex, "{w}\t{}\t{}", p.pos, p.neg).expect("string write");
    }
    write("lexicon.tsv", lex)?;

    for (name, pick) in [("planted.csv", 0), ("noise.csv", 1)] {
        let parts: Vec<&ViewMatrix> = benches
            .iter()
            .map(|b| if pick == 0 { &b.planted } else { &b.noise })
            .collect();
        let ids: Vec<String> = parts.iter().flat_map(|v| v.ids().iter().cloned()).collect();
        let mut data = DMatrix::zeros(ids.len(), parts[0].dim());
        let mut row = 0;
        for v in &parts {
            data.rows_mut(row, v.rows()).copy_from(v.data());
            row += v.rows();
        }
        write(name, ViewMatrix::new(parts[0].name.clone(), ids, data)?.to_view_file())?;
    }
    Ok(())
}
