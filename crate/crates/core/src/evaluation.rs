//! Metrics, k-fold cross-validation, leave-one-view-out ablation and the
//! paired t-test.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FoldPlan, TaskKind};
use crate::error::{Error, Result};
use crate::pipeline::{FitStage, PipelineSpec};
use crate::view_ingest::ViewMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[true][pred]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

pub fn confusion_matrix<A, B, C>(y_true: &[A], y_pred: &[B], class_order: &[C]) -> Result<ConfusionMatrix>
where
    A: AsRef<str>,
    B: AsRef<str>,
    C: AsRef<str>,
{
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    let classes: Vec<String> = class_order.iter().map(|c| c.as_ref().to_string()).collect();
    let index = |label: &str| {
        classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label {label:?}")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[index(t.as_ref())?][index(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Aggregate returned by [`MetricsReport::headline`].
    pub averaging: Averaging,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Aggregate,
    #[serde(rename = "weighted")]
    pub weighted_avg: Aggregate,
    pub accuracy: f64,
    pub support: usize,
}

impl MetricsReport {
    pub fn aggregate(&self, averaging: Averaging) -> Aggregate {
        match averaging {
            Averaging::Macro => self.macro_avg,
            Averaging::Weighted => self.weighted_avg,
        }
    }

    pub fn headline(&self) -> Aggregate {
        self.aggregate(self.averaging)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix, averaging: Averaging) -> MetricsReport {
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = cm
        .classes
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            ClassMetrics {
                class: name.clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.support(c),
            }
        })
        .collect();
    let k = per_class.len().max(1) as f64;
    let macro_avg = Aggregate {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * ratio(m.support, total))
            .sum::<f64>()
    };
    let weighted_avg = Aggregate {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };
    let correct = (0..cm.classes.len()).map(|c| cm.counts[c][c]).sum();
    MetricsReport {
        averaging,
        per_class,
        macro_avg,
        weighted_avg,
        accuracy: ratio(correct, total),
        support: total,
    }
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub task: TaskKind,
    pub folds: Vec<FoldReport>,
    pub macro_f1: Summary,
    pub weighted_f1: Summary,
    pub accuracy: Summary,
}

/// Hooks into a cross-validation run; used to audit what each fitted
/// structure saw.
pub trait CvObserver {
    fn on_fit(&mut self, _fold: usize, _stage: FitStage, _ids: &[String]) {}
    fn on_fold(&mut self, _fold: usize, _test_ids: &[String], _report: &FoldReport) {}
}

impl CvObserver for () {}

/// Runs `plan` over a single-task corpus. The plan may cover more ids than
/// the corpus; only ids present in the corpus are used.
pub fn cross_validate(
    corpus: &Corpus,
    spec: &PipelineSpec,
    plan: &FoldPlan,
    observer: &mut dyn CvObserver,
) -> Result<CvReport> {
    let task = match corpus.tasks().as_slice() {
        [task] => *task,
        [] => return Err(Error::InvalidArgument("empty corpus".into())),
        _ => {
            return Err(Error::InvalidArgument(
                "cross-validation runs one task at a time".into(),
            ))
        }
    };
    if let Some(id) = corpus.ids().find(|id| plan.fold_of(id).is_none()) {
        return Err(Error::InvalidArgument(format!("post {id:?} is not in the fold plan")));
    }
    let externals: Vec<ViewMatrix> = spec.views.iter().filter_map(|v| v.source.clone()).collect();
    let class_names: Vec<String> = task.labels().iter().map(|l| l.to_string()).collect();

    let mut folds = Vec::with_capacity(plan.k());
    for fold in 0..plan.k() {
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let train = corpus.subset(plan.train_ids(fold));
        let test = corpus.subset(plan.test_ids(fold));
        if test.is_empty() {
            return Err(wrap(Error::InvalidArgument("held-out fold is empty".into())));
        }
        let fitted = spec
            .fit_observed(&train, &mut |stage, ids| observer.on_fit(fold, stage, ids))
            .map_err(wrap)?;
        let posts: Vec<(String, String)> = test
            .posts()
            .iter()
            .map(|p| (p.id.clone(), p.text.clone()))
            .collect();
        let predictions = fitted
            .predict(&spec.featurizer.lexicon, &externals, &posts)
            .map_err(wrap)?;
        let y_true: Vec<&str> = test.posts().iter().map(|p| p.label.as_str()).collect();
        let y_pred: Vec<&str> = predictions.iter().map(|p| p.label.as_str()).collect();
        let confusion = confusion_matrix(&y_true, &y_pred, &class_names).map_err(wrap)?;
        let report = FoldReport {
            fold,
            train_size: train.len(),
            test_size: test.len(),
            metrics: precision_recall_f1(&confusion, Averaging::Macro),
            confusion,
        };
        let test_ids: Vec<String> = test.ids().map(str::to_string).collect();
        observer.on_fold(fold, &test_ids, &report);
        folds.push(report);
    }
    let collect = |f: fn(&FoldReport) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
    Ok(CvReport {
        task,
        macro_f1: collect(|r| r.metrics.macro_avg.f1),
        weighted_f1: collect(|r| r.metrics.weighted_avg.f1),
        accuracy: collect(|r| r.metrics.accuracy),
        folds,
    })
}

pub const ALL_VIEWS: &str = "All";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Removed view, or [`ALL_VIEWS`] for the baseline.
    pub view: String,
    /// Mean macro-F1 per task, in [`AblationTable::tasks`] order.
    pub f1: Vec<f64>,
    /// `f1 - baseline f1` per task.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub tasks: Vec<TaskKind>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, view: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.view == view)
    }
}

/// Cross-validates every task in `corpus` with all views, then once per
/// active view with that view's weight set to zero.
pub fn ablate(corpus: &Corpus, spec: &PipelineSpec, plan: &FoldPlan) -> Result<AblationTable> {
    let active: Vec<String> = spec
        .views
        .iter()
        .filter(|v| v.weight() > 0.0)
        .map(|v| v.name().to_string())
        .collect();
    if active.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ablation needs ≥2 views, found {} active",
            active.len()
        )));
    }
    let tasks = corpus.tasks();
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let per_task: Vec<Corpus> = tasks.iter().map(|&t| corpus.by_task(t)).collect();
    let run = |spec: &PipelineSpec| -> Result<Vec<f64>> {
        per_task
            .iter()
            .map(|c| Ok(cross_validate(c, spec, plan, &mut ())?.macro_f1.mean))
            .collect()
    };
    let baseline = run(spec)?;
    let mut rows = vec![AblationRow {
        view: ALL_VIEWS.to_string(),
        f1: baseline.clone(),
        delta: vec![0.0; tasks.len()],
    }];
    for name in active {
        let f1 = run(&spec.without_view(&name))?;
        let delta = f1.iter().zip(&baseline).map(|(a, b)| a - b).collect();
        rows.push(AblationRow { view: name, f1, delta });
    }
    Ok(AblationTable { tasks, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
}

/// Paired two-tailed t-test on `a - b`. Zero-variance differences give
/// `t = 0, p = 1` when all are zero and `t = ±inf, p = 0` otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Summary::of(&diffs);
    let df = n - 1;
    if s.std == 0.0 {
        return Ok(if s.mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: f64::INFINITY.copysign(s.mean),
                df,
                p: 0.0,
            }
        });
    }
    let t = s.mean / (s.std / (n as f64).sqrt());
    let nu = df as f64;
    let p = regularized_incomplete_beta(nu / (nu + t * t), nu / 2.0, 0.5);
    Ok(TTest {
        t,
        df,
        p: p.clamp(0.0, 1.0),
    })
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// `I_x(a, b)` by the continued fraction, evaluated with modified Lentz.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        for coef in [even, -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))] {
            d = 1.0 + coef * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + coef / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
