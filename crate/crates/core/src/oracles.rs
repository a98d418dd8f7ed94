//! Independent reference implementations used by tests.
//!
//! Nothing here shares code paths with the library routines it checks: the
//! sentiment oracle sums per occurrence with literal signed window indices,
//! the eigensolver is cyclic Jacobi, and Gram inverses use Gauss-Jordan.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::TokenSequence;
use crate::lexicon::{Lexicon, SentimentPrior};
use crate::sentiment_views::{compute_idf, IdfTable, TargetParams};

#[derive(Debug, Clone)]
pub struct SentimentCase {
    pub tokens: TokenSequence,
    pub negated: Vec<bool>,
    pub lexicon: Lexicon,
    pub idf: IdfTable,
    pub params: TargetParams,
}

const VOCAB: &[&str] = &[
    "good", "bad", "stable", "pain", "fine", "worse", "great", "awful", "relief", "tired",
    "feel", "suffer", "experience", "not", "the", "today", "my", "dose",
];

/// Random post of at most 12 tokens over a small vocabulary, a lexicon of at
/// most 8 words, random negation flags, random stative verbs and window.
pub fn random_sentiment_case(seed: u64) -> SentimentCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_lex = rng.random_range(0..=8);
    let mut lex_words: Vec<&str> = VOCAB.to_vec();
    shuffle(&mut lex_words, &mut rng);
    let lexicon = Lexicon::new(lex_words[..n_lex].iter().map(|w| {
        let pos: f64 = rng.random();
        let neg: f64 = rng.random::<f64>() * (1.0 - pos);
        (w.to_string(), SentimentPrior::from_pos_neg(pos, neg).unwrap())
    }));

    let len = rng.random_range(0..=12);
    let tokens: Vec<String> = (0..len)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
        .collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for i in 1..=len {
        if i == len || rng.random_bool(0.2) {
            sentences.push(start..i);
            start = i;
        }
    }
    let negated = (0..len).map(|_| rng.random_bool(0.3)).collect();
    let tokens = TokenSequence { tokens, sentences };

    let mut docs = vec![tokens.clone()];
    for _ in 0..rng.random_range(0..5) {
        let l = rng.random_range(1..8);
        docs.push(TokenSequence {
            tokens: (0..l)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string())
                .collect(),
            sentences: vec![0..l],
        });
    }
    let idf = compute_idf(&docs);

    let mut stative: BTreeSet<String> = ["feel", "suffer", "experience"]
        .iter()
        .filter(|_| rng.random_bool(0.8))
        .map(|s| s.to_string())
        .collect();
    if rng.random_bool(0.2) {
        stative.insert(VOCAB[rng.random_range(0..VOCAB.len())].to_string());
    }
    let window = rng.random_range(1..=6);
    let params = TargetParams {
        stative_verbs: stative,
        window,
        normalizer: rng.random_range(1..=2 * window),
    };
    SentimentCase {
        tokens,
        negated,
        lexicon,
        idf,
        params,
    }
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

fn prior(lexicon: &Lexicon, word: &str) -> Option<SentimentPrior> {
    lexicon
        .entries()
        .find(|(w, _)| *w == word)
        .map(|(_, p)| *p)
}

/// Literal evaluation of the word-level and target-specific sentiment
/// formulas: `([WS+, WS-, WSo], [TS+, TS-])`.
pub fn brute_force_sentiment(case: &SentimentCase) -> ([f64; 3], [f64; 2]) {
    let toks = &case.tokens.tokens;
    let n = toks.len();
    let mut ws = [0.0; 3];
    if n > 0 {
        for (j, tok) in toks.iter().enumerate() {
            let Some(p) = prior(&case.lexicon, tok) else {
                continue;
            };
            let idf = case.idf.get(tok);
            let (plus, minus) = if case.negated[j] {
                (p.neg, p.pos)
            } else {
                (p.pos, p.neg)
            };
            ws[0] += plus * idf;
            ws[1] += minus * idf;
            ws[2] += p.obj * idf;
        }
        for v in &mut ws {
            *v /= n as f64;
        }
    }

    let k = case.params.window as i64;
    let at = |pos: i64| -> Option<SentimentPrior> {
        if pos < 0 || pos >= n as i64 {
            None
        } else {
            prior(&case.lexicon, &toks[pos as usize])
        }
    };
    let mut ts = [0.0f64; 2];
    for (i, tok) in toks.iter().enumerate() {
        if !case.params.stative_verbs.contains(tok) {
            continue;
        }
        let i = i as i64;
        let mut score = [0.0; 2];
        for m in (i - k)..=(i - 1) {
            let w_m = (m + k - i + 1) as f64;
            if let Some(p) = at(m) {
                score[0] += w_m * p.pos;
                score[1] += w_m * p.neg;
            }
        }
        for n_ in (i + 1)..=(i + k) {
            let w_n = (k - n_ + i + 1) as f64;
            if let Some(p) = at(n_) {
                score[0] += w_n * p.pos;
                score[1] += w_n * p.neg;
            }
        }
        let norm = case.params.normalizer as f64;
        ts[0] = ts[0].max(score[0] / norm);
        ts[1] = ts[1].max(score[1] / norm);
    }
    (ws, ts)
}

/// Cyclic Jacobi eigensolver. Returns eigenvalues in descending order with
/// matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())?;
        if m[(pivot, col)].abs() < 1e-300 {
            return None;
        }
        m.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let d = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(i, j)] -= f * m[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// `sum_i w_i X_i (X_i'X_i + ridge_i I)^-1 X_i'`, assembled term by term.
pub fn assemble_wgcca_matrix(views: &[DMatrix<f64>], weights: &[f64], ridges: &[f64]) -> DMatrix<f64> {
    let m = views[0].nrows();
    let mut p = DMatrix::<f64>::zeros(m, m);
    for ((x, &w), &ridge) in views.iter().zip(weights).zip(ridges) {
        if w == 0.0 {
            continue;
        }
        let d = x.ncols();
        let gram = x.transpose() * x + DMatrix::<f64>::identity(d, d) * ridge;
        let inv = gauss_jordan_inverse(&gram).expect("invertible Gram matrix");
        p += (x * inv * x.transpose()) * w;
    }
    p
}

/// Uniformly random `m x k` matrix with orthonormal columns (modified
/// Gram-Schmidt on Gaussian draws).
pub fn random_orthonormal(m: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    loop {
        let mut q = DMatrix::<f64>::from_fn(m, k, |_, _| rng.sample(StandardNormal));
        let mut ok = true;
        for j in 0..k {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
            let norm = q.column(j).norm();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).unscale_mut(norm);
        }
        if ok {
            return q;
        }
    }
}

/// Flips each column of `b` to best match the corresponding column of `a`.
pub fn align_signs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = b.clone();
    for j in 0..a.ncols() {
        if a.column(j).dot(&b.column(j)) < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    out
}
