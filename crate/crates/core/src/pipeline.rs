//! End-to-end fit and predict: featurize, standardize, fuse, classify.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classifier::{train_softmax, SoftmaxModel, TrainConfig};
use crate::corpus::{tokenize, Corpus, TaskKind, TokenSequence};
use crate::error::{Error, Result};
use crate::fusion::{fit_wgcca, WgccaConfig, WgccaModel};
use crate::lexicon::Lexicon;
use crate::sentiment_views::{compute_idf, IdfTable, SentimentFeaturizer, TargetParams};
use crate::view_ingest::{hashed_tfidf_row, standardize_view, ViewMatrix};

pub const WORD_SENTIMENT: &str = "word_sentiment";
pub const TARGET_SENTIMENT: &str = "target_sentiment";
pub const SENTIMENT: &str = "sentiment";
pub const CONTENT_HASHED: &str = "content_hashed";

/// How one view is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewKind {
    /// `[ws_pos, ws_neg, ws_obj]`.
    WordSentiment,
    /// `[ts_pos, ts_neg]`.
    TargetSentiment,
    /// Both sentiment views as one 5-column view.
    Sentiment,
    HashedContent { dim: usize, seed: u64 },
    /// Precomputed vectors looked up by post id.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub name: String,
    pub weight: f64,
    #[serde(flatten)]
    pub kind: ViewKind,
}

#[derive(Debug, Clone)]
pub struct ViewSpec {
    pub descriptor: ViewDescriptor,
    /// Rows for every post the pipeline may see; required for
    /// [`ViewKind::External`].
    pub source: Option<ViewMatrix>,
}

impl ViewSpec {
    pub fn builtin(kind: ViewKind, weight: f64) -> Self {
        let name = match &kind {
            ViewKind::WordSentiment => WORD_SENTIMENT,
            ViewKind::TargetSentiment => TARGET_SENTIMENT,
            ViewKind::Sentiment => SENTIMENT,
            ViewKind::HashedContent { .. } => CONTENT_HASHED,
            ViewKind::External => "external",
        };
        ViewSpec {
            descriptor: ViewDescriptor {
                name: name.to_string(),
                weight,
                kind,
            },
            source: None,
        }
    }

    pub fn external(matrix: ViewMatrix) -> Self {
        ViewSpec {
            descriptor: ViewDescriptor {
                name: matrix.name.clone(),
                weight: matrix.weight(),
                kind: ViewKind::External,
            },
            source: Some(matrix),
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn weight(&self) -> f64 {
        self.descriptor.weight
    }
}

/// Stage of a pipeline fit, reported with the ids the fitted structure saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FitStage {
    Idf,
    Scaling,
    Fusion,
    Classifier,
}

#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub featurizer: SentimentFeaturizer,
    pub views: Vec<ViewSpec>,
    pub standardize: bool,
    pub fusion: WgccaConfig,
    pub train: TrainConfig,
}

impl PipelineSpec {
    pub fn new(lexicon: Lexicon, views: Vec<ViewSpec>) -> Self {
        PipelineSpec {
            featurizer: SentimentFeaturizer::new(lexicon),
            views,
            standardize: true,
            fusion: WgccaConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn active_view_count(&self) -> usize {
        self.views.iter().filter(|v| v.weight() > 0.0).count()
    }

    /// Copy with the named view's weight set to zero.
    pub fn without_view(&self, name: &str) -> PipelineSpec {
        let mut spec = self.clone();
        for v in &mut spec.views {
            if v.name() == name {
                v.descriptor.weight = 0.0;
            }
        }
        spec
    }

    pub fn fit(&self, corpus: &Corpus) -> Result<FittedPipeline> {
        self.fit_observed(corpus, &mut |_, _| {})
    }

    /// Fits on `corpus` (a single task). `observer` is called once per
    /// fitted structure with the ids of the rows it was fit on.
    pub fn fit_observed(
        &self,
        corpus: &Corpus,
        observer: &mut dyn FnMut(FitStage, &[String]),
    ) -> Result<FittedPipeline> {
        let task = single_task(corpus)?;
        if self.views.is_empty() {
            return Err(Error::InvalidArgument("no views configured".into()));
        }
        self.featurizer.target.validate()?;
        let ids: Vec<String> = corpus.ids().map(str::to_string).collect();
        let tokens: Vec<TokenSequence> = corpus.posts().iter().map(|p| tokenize(&p.text)).collect();

        let idf = compute_idf(&tokens);
        observer(FitStage::Idf, &ids);

        let descriptors: Vec<ViewDescriptor> = self.views.iter().map(|v| v.descriptor.clone()).collect();
        let raw = build_views(&self.views, &self.featurizer, &idf, &ids, &tokens)?;

        let mut fused_inputs = Vec::with_capacity(raw.len());
        let mut scalings = Vec::with_capacity(raw.len());
        for view in &raw {
            if self.standardize {
                let (scaled, params) = standardize_view(view)?;
                observer(FitStage::Scaling, scaled.ids());
                fused_inputs.push(scaled);
                scalings.push(Some(params));
            } else {
                fused_inputs.push(view.clone());
                scalings.push(None);
            }
        }

        let (mut fusion, fused) = fit_wgcca(&fused_inputs, &self.fusion)?;
        observer(FitStage::Fusion, &fused.ids);
        for (proj, scaling) in fusion.views.iter_mut().zip(scalings) {
            proj.scaling = scaling;
        }

        // The classifier sees the same projection rule used for unseen
        // posts, rescaled so columns have unit mean square.
        let feature_scale = (ids.len() as f64).sqrt();
        let latent = fusion.project_views(&raw)?;
        let x = latent.g * feature_scale;
        let labels: Vec<usize> = corpus.posts().iter().map(|p| p.class_index()).collect();
        let class_names = task.labels().iter().map(|l| l.to_string()).collect();
        let classifier = train_softmax(&x, &labels, class_names, &self.train)?;
        observer(FitStage::Classifier, &latent.ids);

        Ok(FittedPipeline {
            task,
            views: descriptors,
            negation_scope: self.featurizer.negation_scope,
            target: self.featurizer.target.clone(),
            idf,
            fusion,
            feature_scale,
            classifier,
            train_ids: ids,
        })
    }
}

fn single_task(corpus: &Corpus) -> Result<TaskKind> {
    match corpus.tasks().as_slice() {
        [task] => Ok(*task),
        [] => Err(Error::InvalidArgument("empty corpus".into())),
        _ => Err(Error::InvalidArgument(
            "pipeline fits one task at a time; split the corpus by task".into(),
        )),
    }
}

fn build_views(
    specs: &[ViewSpec],
    featurizer: &SentimentFeaturizer,
    idf: &IdfTable,
    ids: &[String],
    tokens: &[TokenSequence],
) -> Result<Vec<ViewMatrix>> {
    let sentiment: Option<Vec<[f64; 5]>> = specs
        .iter()
        .any(|v| {
            matches!(
                v.descriptor.kind,
                ViewKind::WordSentiment | ViewKind::TargetSentiment | ViewKind::Sentiment
            )
        })
        .then(|| tokens.iter().map(|t| featurizer.featurize(t, idf)).collect());

    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let d = &spec.descriptor;
        let from_rows = |cols: std::ops::Range<usize>| {
            let rows = sentiment.as_ref().expect("computed above");
            DMatrix::from_fn(ids.len(), cols.len(), |i, j| rows[i][cols.start + j])
        };
        let data = match &d.kind {
            ViewKind::WordSentiment => from_rows(0..3),
            ViewKind::TargetSentiment => from_rows(3..5),
            ViewKind::Sentiment => from_rows(0..5),
            ViewKind::HashedContent { dim, seed } => {
                if *dim < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "hashed view dimension must be >= 2, got {dim}"
                    )));
                }
                let mut m = DMatrix::zeros(ids.len(), *dim);
                for (i, t) in tokens.iter().enumerate() {
                    m.row_mut(i).copy_from(&hashed_tfidf_row(t, idf, *dim, *seed).transpose());
                }
                m
            }
            ViewKind::External => {
                let source = spec.source.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!("external view {:?} has no data", d.name))
                })?;
                source.select(ids)?.data().clone()
            }
        };
        out.push(ViewMatrix::new(d.name.clone(), ids.to_vec(), data)?.with_weight(d.weight)?);
    }
    Ok(out)
}

/// Prediction for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    pub class_index: usize,
    pub probabilities: Vec<f64>,
    /// Norm of each view's projected sub-vector.
    pub view_contributions: BTreeMap<String, f64>,
}

/// A fitted pipeline for one task. Everything except the lexicon and the
/// external view rows is stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub task: TaskKind,
    pub views: Vec<ViewDescriptor>,
    pub negation_scope: usize,
    pub target: TargetParams,
    pub idf: IdfTable,
    pub fusion: WgccaModel,
    pub feature_scale: f64,
    pub classifier: SoftmaxModel,
    pub train_ids: Vec<String>,
}

impl FittedPipeline {
    pub fn class_names(&self) -> &[String] {
        &self.classifier.class_names
    }

    /// Predicts `(id, text)` posts. `externals` must hold rows for every
    /// post under each external view's name.
    pub fn predict(
        &self,
        lexicon: &Lexicon,
        externals: &[ViewMatrix],
        posts: &[(String, String)],
    ) -> Result<Vec<Prediction>> {
        let featurizer = SentimentFeaturizer {
            lexicon: lexicon.clone(),
            negation_scope: self.negation_scope,
            target: self.target.clone(),
        };
        let specs: Vec<ViewSpec> = self
            .views
            .iter()
            .map(|d| {
                let source = match d.kind {
                    ViewKind::External => Some(
                        externals
                            .iter()
                            .find(|v| v.name == d.name)
                            .cloned()
                            .ok_or_else(|| {
                                Error::InvalidArgument(format!("missing external view {:?}", d.name))
                            }),
                    )
                    .transpose(),
                    _ => Ok(None),
                }?;
                Ok(ViewSpec {
                    descriptor: d.clone(),
                    source,
                })
            })
            .collect::<Result<_>>()?;
        let ids: Vec<String> = posts.iter().map(|(id, _)| id.clone()).collect();
        let tokens: Vec<TokenSequence> = posts.iter().map(|(_, t)| tokenize(t)).collect();
        let raw = build_views(&specs, &featurizer, &self.idf, &ids, &tokens)?;

        let mut out = Vec::with_capacity(posts.len());
        for (i, id) in ids.iter().enumerate() {
            let features: BTreeMap<String, DVector<f64>> = raw
                .iter()
                .map(|v| (v.name.clone(), v.data().row(i).transpose()))
                .collect();
            let projection = self.fusion.project_detailed(&features)?;
            let x: Vec<f64> = (projection.latent * self.feature_scale).iter().copied().collect();
            let probabilities = self.classifier.predict_proba(&x)?;
            let class_index = crate::classifier::argmax(&probabilities);
            out.push(Prediction {
                id: id.clone(),
                label: self.classifier.class_names[class_index].clone(),
                class_index,
                probabilities,
                view_contributions: projection.contributions,
            });
        }
        Ok(out)
    }
}
