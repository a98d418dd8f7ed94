//! TOML run configuration. Relative paths resolve against the config file's
//! directory; command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use medsev::classifier::TrainConfig;
use medsev::corpus::CorpusFormat;
use medsev::lexicon::LexiconKind;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the classifier shuffle and the fold split unless those set
    /// their own.
    pub seed: Option<u64>,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub lexicon: LexiconSection,
    #[serde(default)]
    pub views: ViewsSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSection {
    pub path: Option<PathBuf>,
    #[serde(default = "default_lexicon_kind")]
    pub kind: LexiconKind,
    pub negation_cues: Option<PathBuf>,
    pub stative_verbs: Option<PathBuf>,
    #[serde(default = "default_scope")]
    pub negation_scope: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Defaults to twice the window.
    pub normalizer: Option<usize>,
    #[serde(default)]
    pub suffix_fallback: bool,
}

fn default_lexicon_kind() -> LexiconKind {
    LexiconKind::Simple
}

fn default_scope() -> usize {
    medsev::lexicon::DEFAULT_NEGATION_SCOPE
}

fn default_window() -> usize {
    medsev::sentiment_views::DEFAULT_WINDOW
}

impl Default for LexiconSection {
    fn default() -> Self {
        LexiconSection {
            path: None,
            kind: default_lexicon_kind(),
            negation_cues: None,
            stative_verbs: None,
            negation_scope: default_scope(),
            window: default_window(),
            normalizer: None,
            suffix_fallback: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewsSection {
    /// Weight of the word-level sentiment view; omitted means disabled.
    pub word_sentiment: Option<f64>,
    pub target_sentiment: Option<f64>,
    /// Both sentiment views as one 5-column view.
    pub sentiment: Option<f64>,
    pub hashed: Option<HashedSection>,
    #[serde(default)]
    pub external: Vec<ExternalSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashedSection {
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    pub path: PathBuf,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub latent_dim: Option<usize>,
    pub ridge: Option<f64>,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            latent_dim: None,
            ridge: None,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub l2_penalty: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub stratified: bool,
}

fn default_folds() -> usize {
    10
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            folds: default_folds(),
            seed: None,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub ablation: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 42;

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.lexicon.path);
        fix(&mut self.lexicon.negation_cues);
        fix(&mut self.lexicon.stative_verbs);
        for o in [
            &mut self.output.features,
            &mut self.output.model,
            &mut self.output.metrics,
            &mut self.output.ablation,
            &mut self.output.predictions,
        ] {
            fix(o);
        }
        for e in &mut self.views.external {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            l2_penalty: t.l2_penalty.unwrap_or(d.l2_penalty),
            epochs: t.epochs.unwrap_or(d.epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            seed: t.seed.unwrap_or(self.seed()),
        }
    }

    pub fn fold_seed(&self) -> u64 {
        self.cv.seed.unwrap_or(self.seed())
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        match &self.corpus.path {
            Some(p) => Ok(p),
            None => bail!("no corpus given; set [corpus] path or pass --corpus"),
        }
    }

    pub fn lexicon_path(&self) -> Result<&Path> {
        match &self.lexicon.path {
            Some(p) => Ok(p),
            None => bail!("no lexicon given; set [lexicon] path or pass --lexicon"),
        }
    }

    /// With no view configured, both sentiment views are enabled at weight 1.
    pub fn views_or_default(&self) -> ViewsSection {
        let v = &self.views;
        let any = v.word_sentiment.is_some()
            || v.target_sentiment.is_some()
            || v.sentiment.is_some()
            || v.hashed.is_some()
            || !v.external.is_empty();
        if any {
            v.clone()
        } else {
            ViewsSection {
                word_sentiment: Some(1.0),
                target_sentiment: Some(1.0),
                ..ViewsSection::default()
            }
        }
    }
}
