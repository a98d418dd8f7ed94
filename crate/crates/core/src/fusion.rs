//! Weighted generalized CCA.
//!
//! Given row-aligned views `X_i` with weights `w_i`, the fused matrix `G`
//! holds the top-`k` eigenvectors of
//!
//! ```text
//! P = sum_i w_i X_i (X_i'X_i + r_i I)^-1 X_i'
//! ```
//!
//! and each view map is `U_i = (X_i'X_i + r_i I)^-1 X_i' G`. `G` minimizes
//! `sum_i w_i ||G - X_i U_i||_F^2` subject to `G'G = I`.
//!
//! When the stacked view width is below the sample count, `P = Y Y'` with
//! `Y = [sqrt(w_i) X_i L_i^-T]` (`L_i` the Cholesky factor of the damped
//! Gram matrix), so the eigenvectors of `P` are recovered from the much
//! smaller `Y'Y`. The dense `m x m` route is used otherwise, or whenever the
//! low-rank result fails its orthonormality check.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::view_ingest::{ScalingParams, ViewMatrix};

pub const MAX_DEFAULT_LATENT_DIM: usize = 64;
/// Auto ridge is this fraction of the Gram matrix's mean diagonal.
pub const AUTO_RIDGE_FACTOR: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-9;
const ORTHO_CHECK_TOL: f64 = 1e-10;

/// Fixes each column's sign so its largest-magnitude entry (first on ties)
/// is positive.
pub fn canonical_sign(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Top-`k` eigenpairs of a symmetric matrix, eigenvalues descending, ties
/// kept in solver order, eigenvector signs canonicalized.
pub fn symmetric_eig_topk(a: &DMatrix<f64>, k: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let scale = a.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep ascending solver index
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    order.truncate(k);
    let values = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    canonical_sign(&mut vectors);
    Ok((values, vectors))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WgccaConfig {
    /// Latent dimension; `None` uses [`default_latent_dim`].
    pub latent_dim: Option<usize>,
    /// Ridge added to every Gram matrix; `None` picks
    /// `AUTO_RIDGE_FACTOR * trace(X'X) / d` per view.
    pub ridge: Option<f64>,
}

/// `min(64, min_i d_i, m - 1)` over positive-weight views, at least 1.
pub fn default_latent_dim(views: &[ViewMatrix]) -> usize {
    let m = views.first().map_or(1, ViewMatrix::rows);
    views
        .iter()
        .filter(|v| v.weight() > 0.0)
        .map(ViewMatrix::dim)
        .min()
        .unwrap_or(1)
        .min(MAX_DEFAULT_LATENT_DIM)
        .min(m.saturating_sub(1))
        .max(1)
}

/// Learned map from one view into the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProjection {
    pub name: String,
    pub weight: f64,
    pub ridge: f64,
    /// `d_i x k`; all zeros for weight-zero views.
    #[serde(with = "crate::serde_matrix")]
    pub u: DMatrix<f64>,
    /// Applied to raw features before projection when present.
    pub scaling: Option<ScalingParams>,
}

impl ViewProjection {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgccaModel {
    pub latent_dim: usize,
    pub views: Vec<ViewProjection>,
    /// Descending, one per latent dimension.
    pub eigenvalues: Vec<f64>,
}

/// Training-time latent representation, one row per post.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMatrix {
    pub ids: Vec<String>,
    pub g: DMatrix<f64>,
}

struct PreparedView<'a> {
    view: &'a ViewMatrix,
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
}

fn prepare<'a>(view: &'a ViewMatrix, ridge: Option<f64>) -> Result<PreparedView<'a>> {
    let x = view.data();
    let d = x.ncols();
    let gram = x.transpose() * x;
    let ridge = match ridge {
        Some(r) if !(r.is_finite() && r >= 0.0) => {
            return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {r}")))
        }
        Some(r) => r,
        None => {
            let mean_diag = gram.trace() / d as f64;
            // an all-zero view contributes nothing; any positive ridge works
            if mean_diag > 0.0 {
                AUTO_RIDGE_FACTOR * mean_diag
            } else {
                AUTO_RIDGE_FACTOR
            }
        }
    };
    let damped = gram + DMatrix::<f64>::identity(d, d) * ridge;
    let singular = || Error::SingularGram {
        view: view.name.clone(),
    };
    let chol = Cholesky::new(damped).ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if lo.is_nan() || lo <= 0.0 || (lo / hi) * (lo / hi) < 1e-14 {
        return Err(singular());
    }
    Ok(PreparedView { view, chol, ridge })
}

fn check_aligned(views: &[ViewMatrix]) -> Result<usize> {
    let first = views
        .first()
        .ok_or_else(|| Error::InvalidArgument("no views to fuse".into()))?;
    for v in &views[1..] {
        if v.ids() != first.ids() {
            return Err(Error::Shape(format!(
                "view {:?} is not row-aligned with view {:?}",
                v.name, first.name
            )));
        }
    }
    Ok(first.rows())
}

/// Fits weighted GCCA. View weights are taken from each [`ViewMatrix`];
/// views are expected to be aligned (and usually standardized) already.
pub fn fit_wgcca(views: &[ViewMatrix], config: &WgccaConfig) -> Result<(WgccaModel, FusedMatrix)> {
    let m = check_aligned(views)?;
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "fusion needs at least 2 samples, got {m}"
        )));
    }
    if !views.iter().any(|v| v.weight() > 0.0) {
        return Err(Error::InvalidArgument("all view weights are zero".into()));
    }
    let k = config.latent_dim.unwrap_or_else(|| default_latent_dim(views));
    if k == 0 {
        return Err(Error::InvalidArgument("latent dimension must be >= 1".into()));
    }
    if k > m {
        return Err(Error::LatentDimension { k, m });
    }

    let prepared: Vec<PreparedView> = views
        .iter()
        .filter(|v| v.weight() > 0.0)
        .map(|v| prepare(v, config.ridge))
        .collect::<Result<_>>()?;

    let stacked: usize = prepared.iter().map(|p| p.view.dim()).sum();
    let low_rank = if stacked < m && k <= stacked {
        low_rank_top_k(&prepared, m, k)
    } else {
        None
    };
    let (values, g) = match low_rank {
        Some(pair) => pair,
        None => symmetric_eig_topk(&assemble_projection_sum(&prepared, m), k)?,
    };

    let mut active = prepared.iter();
    let mut projections = Vec::with_capacity(views.len());
    for view in views {
        if view.weight() > 0.0 {
            let p = active.next().expect("one prepared entry per active view");
            let u = p.chol.solve(&(p.view.data().transpose() * &g));
            projections.push(ViewProjection {
                name: view.name.clone(),
                weight: view.weight(),
                ridge: p.ridge,
                u,
                scaling: None,
            });
        } else {
            projections.push(ViewProjection {
                name: view.name.clone(),
                weight: 0.0,
                ridge: 0.0,
                u: DMatrix::zeros(view.dim(), k),
                scaling: None,
            });
        }
    }

    let model = WgccaModel {
        latent_dim: k,
        views: projections,
        eigenvalues: values.iter().map(|&v| v.max(0.0)).collect(),
    };
    let fused = FusedMatrix {
        ids: views[0].ids().to_vec(),
        g,
    };
    Ok((model, fused))
}

/// Dense `P`, symmetrized to remove roundoff asymmetry.
fn assemble_projection_sum(prepared: &[PreparedView], m: usize) -> DMatrix<f64> {
    let mut p = DMatrix::<f64>::zeros(m, m);
    for pv in prepared {
        let x = pv.view.data();
        let a = pv.chol.solve(&x.transpose());
        p += (x * a) * pv.view.weight();
    }
    (&p + p.transpose()) * 0.5
}

fn low_rank_top_k(prepared: &[PreparedView], m: usize, k: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let stacked: usize = prepared.iter().map(|p| p.view.dim()).sum();
    let mut y = DMatrix::<f64>::zeros(m, stacked);
    let mut col = 0;
    for pv in prepared {
        let d = pv.view.dim();
        // L^-1 X' gives (X L^-T)'
        let yt = pv.chol.l_dirty().solve_lower_triangular(&pv.view.data().transpose())?;
        let block = yt.transpose() * pv.view.weight().sqrt();
        y.view_mut((0, col), (m, d)).copy_from(&block);
        col += d;
    }
    let c = y.transpose() * &y;
    let c = (&c + c.transpose()) * 0.5;
    let (values, v) = symmetric_eig_topk(&c, k).ok()?;
    let floor = 1e-10 * values[0].max(1.0);
    if values.iter().any(|&l| l <= floor) {
        return None;
    }
    let mut g = &y * v;
    for (j, &l) in values.iter().enumerate() {
        g.column_mut(j).unscale_mut(l.sqrt());
    }
    let gram = g.transpose() * &g;
    if (gram - DMatrix::<f64>::identity(k, k)).amax() > ORTHO_CHECK_TOL {
        return None;
    }
    canonical_sign(&mut g);
    Some((values, g))
}

/// `sum_i w_i ||G - X_i U_i||_F^2`.
pub fn wgcca_objective(
    g: &DMatrix<f64>,
    views: &[&DMatrix<f64>],
    maps: &[&DMatrix<f64>],
    weights: &[f64],
) -> Result<f64> {
    if views.len() != maps.len() || views.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} views, {} maps, {} weights",
            views.len(),
            maps.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for ((x, u), &w) in views.iter().zip(maps).zip(weights) {
        if x.nrows() != g.nrows() || x.ncols() != u.nrows() || u.ncols() != g.ncols() {
            return Err(Error::Shape(format!(
                "G {}x{}, X {}x{}, U {}x{}",
                g.nrows(),
                g.ncols(),
                x.nrows(),
                x.ncols(),
                u.nrows(),
                u.ncols()
            )));
        }
        if w != 0.0 {
            total += w * (g - *x * *u).norm_squared();
        }
    }
    Ok(total)
}

/// Latent vector of one post plus the norm of each view's contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub latent: DVector<f64>,
    pub contributions: BTreeMap<String, f64>,
}

impl WgccaModel {
    pub fn total_weight(&self) -> f64 {
        self.views.iter().map(|v| v.weight).sum()
    }

    pub fn active_views(&self) -> impl Iterator<Item = &ViewProjection> {
        self.views.iter().filter(|v| v.weight > 0.0)
    }

    /// Out-of-sample rule `g = sum_i w_i x_i' U_i / sum_i w_i` on raw
    /// features (each view's stored scaling is applied first).
    pub fn project(&self, features: &BTreeMap<String, DVector<f64>>) -> Result<DVector<f64>> {
        Ok(self.project_detailed(features)?.latent)
    }

    pub fn project_detailed(&self, features: &BTreeMap<String, DVector<f64>>) -> Result<Projection> {
        let mut latent = DVector::zeros(self.latent_dim);
        let mut contributions = BTreeMap::new();
        for view in self.active_views() {
            let x = features
                .get(&view.name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing view {:?}", view.name)))?;
            if x.len() != view.dim() {
                return Err(Error::Shape(format!(
                    "view {:?}: expected {} features, got {}",
                    view.name,
                    view.dim(),
                    x.len()
                )));
            }
            let x = match &view.scaling {
                Some(s) => s.apply_row(x),
                None => x.clone(),
            };
            let part = view.u.tr_mul(&x);
            contributions.insert(view.name.clone(), part.norm());
            latent.axpy(view.weight, &part, 1.0);
        }
        latent /= self.total_weight();
        Ok(Projection {
            latent,
            contributions,
        })
    }

    /// Projection of every row of the given raw views (matched by name and
    /// row-aligned). Rows go through [`WgccaModel::project_detailed`], so
    /// batch and single-post results are identical.
    pub fn project_views(&self, views: &[ViewMatrix]) -> Result<FusedMatrix> {
        let mut sources = Vec::new();
        for proj in self.active_views() {
            let view = views
                .iter()
                .find(|v| v.name == proj.name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing view {:?}", proj.name)))?;
            if let Some((_, first)) = sources.first() {
                let first: &&ViewMatrix = first;
                if first.ids() != view.ids() {
                    return Err(Error::Shape(format!("view {:?} is not row-aligned", view.name)));
                }
            }
            sources.push((proj.name.clone(), view));
        }
        let (_, first) = sources.first().expect("model has an active view");
        let ids = first.ids().to_vec();
        let mut g = DMatrix::zeros(ids.len(), self.latent_dim);
        for i in 0..ids.len() {
            let features = sources
                .iter()
                .map(|(name, v)| (name.clone(), v.data().row(i).transpose()))
                .collect();
            g.row_mut(i).copy_from(&self.project(&features)?.transpose());
        }
        Ok(FusedMatrix { ids, g })
    }
}
