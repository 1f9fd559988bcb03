//! Classical regressors trained one model per output on the same scaled
//! data pipeline as the network.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fit_scalers, transform, Dataset, DatasetError, DatasetScalers, N_INPUTS, N_OUTPUTS};

pub const BASELINE_FORMAT: &str = "enginecal-baseline";
pub const BASELINE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("design matrix is rank deficient (rank {rank} of {columns})")]
    RankDeficient { rank: usize, columns: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Linear,
    Ridge,
    Knn,
    Tree,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::Linear, BaselineKind::Ridge, BaselineKind::Knn, BaselineKind::Tree];

    /// Short method name used in reports: lm, rg, knn, dt.
    pub fn short_name(self) -> &'static str {
        match self {
            BaselineKind::Linear => "lm",
            BaselineKind::Ridge => "rg",
            BaselineKind::Knn => "knn",
            BaselineKind::Tree => "dt",
        }
    }

    /// Accepts either the short or the long name.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lm" | "linear" => Some(BaselineKind::Linear),
            "rg" | "ridge" => Some(BaselineKind::Ridge),
            "knn" => Some(BaselineKind::Knn),
            "dt" | "tree" => Some(BaselineKind::Tree),
            _ => None,
        }
    }
}

/// Hyperparameters for every baseline kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub ridge_lambda: f64,
    pub knn_k: usize,
    pub tree: TreeConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1.0,
            knn_k: 5,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

/// `y ≈ intercept + coef · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

fn check_rows<R: AsRef<[f64]>>(x: &[R], targets: &[Vec<f64>]) -> Result<usize, BaselineError> {
    let d = x.first().map(|r| r.as_ref().len()).ok_or_else(|| BaselineError::InvalidConfig("no rows".into()))?;
    if x.iter().any(|r| r.as_ref().len() != d) {
        return Err(BaselineError::InvalidConfig("rows have differing widths".into()));
    }
    if targets.iter().any(|t| t.len() != x.len()) {
        return Err(BaselineError::InvalidConfig("target length differs from row count".into()));
    }
    Ok(d)
}

fn solve_qr(a: DMatrix<f64>, mut b: DMatrix<f64>) -> Result<DMatrix<f64>, BaselineError> {
    let p = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..p).filter(|&i| r[(i, i)].abs() > 1e-10 * scale.max(f64::MIN_POSITIVE)).count();
    if rank < p {
        return Err(BaselineError::RankDeficient { rank, columns: p });
    }
    qr.q_tr_mul(&mut b);
    let top = b.rows(0, p).into_owned();
    r.solve_upper_triangular(&top)
        .ok_or(BaselineError::RankDeficient { rank, columns: p })
}

/// Ordinary least squares with an intercept, one fit per target column,
/// through a single QR factorization of the design matrix.
pub fn least_squares<R: AsRef<[f64]>>(x: &[R], targets: &[Vec<f64>]) -> Result<Vec<LinearFit>, BaselineError> {
    let d = check_rows(x, targets)?;
    let n = x.len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i].as_ref()[j - 1] });
    let b = DMatrix::from_fn(n, targets.len(), |i, k| targets[k][i]);
    let sol = solve_qr(a, b)?;
    Ok((0..targets.len())
        .map(|k| LinearFit {
            intercept: sol[(0, k)],
            coef: (1..=d).map(|j| sol[(j, k)]).collect(),
        })
        .collect())
}

/// Minimizes `Σ (y - b0 - b·x)² + λ |b|²`; the intercept is not penalized.
/// Solved as an augmented least-squares problem on centered data.
pub fn ridge<R: AsRef<[f64]>>(x: &[R], targets: &[Vec<f64>], lambda: f64) -> Result<Vec<LinearFit>, BaselineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BaselineError::InvalidConfig(format!("ridge lambda must be non-negative, got {lambda}")));
    }
    let d = check_rows(x, targets)?;
    let n = x.len();
    let x_mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r.as_ref()[j]).sum::<f64>() / n as f64).collect();
    let y_mean: Vec<f64> = targets.iter().map(|t| t.iter().sum::<f64>() / n as f64).collect();
    let root = lambda.sqrt();
    let a = DMatrix::from_fn(n + d, d, |i, j| {
        if i < n {
            x[i].as_ref()[j] - x_mean[j]
        } else if i - n == j {
            root
        } else {
            0.0
        }
    });
    let b = DMatrix::from_fn(n + d, targets.len(), |i, k| if i < n { targets[k][i] - y_mean[k] } else { 0.0 });
    let sol = solve_qr(a, b)?;
    Ok((0..targets.len())
        .map(|k| {
            let coef: Vec<f64> = (0..d).map(|j| sol[(j, k)]).collect();
            let intercept = y_mean[k] - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
            LinearFit { intercept, coef }
        })
        .collect())
}

/// Indices of the `k` training rows nearest to `query` in Euclidean
/// distance, nearest first; equal distances go to the lower index.
pub fn nearest<R: AsRef<[f64]>>(train: &[R], query: &[f64], k: usize) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, row) in train.iter().enumerate() {
        let d2: f64 = row.as_ref().iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d2 >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(d, _)| d <= d2);
        best.insert(pos, (d2, i));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    /// Rows going left in the order of the split feature.
    n_left: usize,
}

impl RegressionTree {
    /// CART growth by variance reduction. Per-feature row orderings are
    /// sorted once and partitioned stably at every split.
    pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[f64], config: &TreeConfig) -> Result<Self, BaselineError> {
        let d = check_rows(x, &[y.to_vec()])?;
        if config.min_leaf == 0 {
            return Err(BaselineError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        let n = x.len();
        let column = |j: usize, i: usize| x[i].as_ref()[j];
        let orders: Vec<Vec<u32>> = (0..d)
            .map(|j| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| column(j, a as usize).total_cmp(&column(j, b as usize)).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, 0usize, orders)];
        let mut side = vec![false; n];
        while let Some((slot, depth, orders)) = stack.pop() {
            let rows = &orders[0];
            let m = rows.len();
            let mean = rows.iter().map(|&i| y[i as usize]).sum::<f64>() / m as f64;
            let first = y[rows[0] as usize];
            let pure = rows.iter().all(|&i| y[i as usize] == first);
            let depth_left = config.max_depth.map_or(true, |md| depth < md);
            let choice = if pure || !depth_left || m < 2 * config.min_leaf {
                None
            } else {
                best_split(&orders, &column, y, config.min_leaf)
            };
            let Some(choice) = choice else {
                nodes[slot] = TreeNode::Leaf { value: mean };
                continue;
            };
            for (p, &i) in orders[choice.feature].iter().enumerate() {
                side[i as usize] = p < choice.n_left;
            }
            let (mut lo, mut ro) = (Vec::with_capacity(d), Vec::with_capacity(d));
            for order in &orders {
                let (l, r): (Vec<u32>, Vec<u32>) = order.iter().partition(|&&i| side[i as usize]);
                lo.push(l);
                ro.push(r);
            }
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes[slot] = TreeNode::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                left,
                right,
            };
            stack.push((right, depth + 1, ro));
            stack.push((left, depth + 1, lo));
        }
        Ok(Self { nodes })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn best_split(orders: &[Vec<u32>], column: &dyn Fn(usize, usize) -> f64, y: &[f64], min_leaf: usize) -> Option<SplitChoice> {
    let m = orders[0].len();
    let total: f64 = orders[0].iter().map(|&i| y[i as usize]).sum();
    let mut best: Option<(f64, SplitChoice)> = None;
    for (j, order) in orders.iter().enumerate() {
        let mut sum_left = 0.0;
        for p in 0..m - 1 {
            sum_left += y[order[p] as usize];
            let n_left = p + 1;
            if n_left < min_leaf || m - n_left < min_leaf {
                continue;
            }
            let (a, b) = (column(j, order[p] as usize), column(j, order[p + 1] as usize));
            if a == b {
                continue;
            }
            let sum_right = total - sum_left;
            let score = sum_left * sum_left / n_left as f64 + sum_right * sum_right / (m - n_left) as f64;
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                best = Some((
                    score,
                    SplitChoice {
                        feature: j,
                        threshold,
                        n_left,
                    },
                ));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Fitted parameters in scaled space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineParams {
    Linear {
        fits: Vec<LinearFit>,
    },
    Ridge {
        lambda: f64,
        fits: Vec<LinearFit>,
    },
    Knn {
        k: usize,
        inputs: Vec<[f64; N_INPUTS]>,
        outputs: Vec<[f64; N_OUTPUTS]>,
    },
    Tree {
        config: TreeConfig,
        trees: Vec<RegressionTree>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub scalers: DatasetScalers,
    #[serde(flatten)]
    pub params: BaselineParams,
}

fn output_columns(data: &Dataset) -> Vec<Vec<f64>> {
    (0..N_OUTPUTS).map(|j| data.output_column(j)).collect()
}

fn prepare(data: &Dataset) -> Result<(DatasetScalers, Dataset), BaselineError> {
    let scalers = fit_scalers(data)?;
    let scaled = transform(data, &scalers)?;
    Ok((scalers, scaled))
}

pub fn fit_linear(data: &Dataset) -> Result<BaselineModel, BaselineError> {
    let (scalers, scaled) = prepare(data)?;
    let fits = least_squares(&scaled.inputs, &output_columns(&scaled))?;
    Ok(BaselineModel {
        scalers,
        params: BaselineParams::Linear { fits },
    })
}

pub fn fit_ridge(data: &Dataset, lambda: f64) -> Result<BaselineModel, BaselineError> {
    let (scalers, scaled) = prepare(data)?;
    let fits = ridge(&scaled.inputs, &output_columns(&scaled), lambda)?;
    Ok(BaselineModel {
        scalers,
        params: BaselineParams::Ridge { lambda, fits },
    })
}

pub fn fit_knn(data: &Dataset, k: usize) -> Result<BaselineModel, BaselineError> {
    if k == 0 {
        return Err(BaselineError::InvalidConfig("k must be at least 1".into()));
    }
    let (scalers, scaled) = prepare(data)?;
    Ok(BaselineModel {
        scalers,
        params: BaselineParams::Knn {
            k,
            inputs: scaled.inputs,
            outputs: scaled.outputs,
        },
    })
}

pub fn fit_tree(data: &Dataset, config: &TreeConfig) -> Result<BaselineModel, BaselineError> {
    let (scalers, scaled) = prepare(data)?;
    let trees = output_columns(&scaled)
        .iter()
        .map(|y| RegressionTree::fit(&scaled.inputs, y, config))
        .collect::<Result<_, _>>()?;
    Ok(BaselineModel {
        scalers,
        params: BaselineParams::Tree { config: *config, trees },
    })
}

pub fn fit_baseline(kind: BaselineKind, data: &Dataset, config: &BaselineConfig) -> Result<BaselineModel, BaselineError> {
    match kind {
        BaselineKind::Linear => fit_linear(data),
        BaselineKind::Ridge => fit_ridge(data, config.ridge_lambda),
        BaselineKind::Knn => fit_knn(data, config.knn_k),
        BaselineKind::Tree => fit_tree(data, &config.tree),
    }
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self.params {
            BaselineParams::Linear { .. } => BaselineKind::Linear,
            BaselineParams::Ridge { .. } => BaselineKind::Ridge,
            BaselineParams::Knn { .. } => BaselineKind::Knn,
            BaselineParams::Tree { .. } => BaselineKind::Tree,
        }
    }

    /// Prediction for one scaled input row, in scaled output units.
    pub fn predict_scaled(&self, x: &[f64; N_INPUTS]) -> [f64; N_OUTPUTS] {
        match &self.params {
            BaselineParams::Linear { fits } | BaselineParams::Ridge { fits, .. } => {
                std::array::from_fn(|j| fits[j].predict(x))
            }
            BaselineParams::Knn { k, inputs, outputs } => {
                let idx = nearest(inputs, x, *k);
                let mut mean = [0.0; N_OUTPUTS];
                for &i in &idx {
                    for j in 0..N_OUTPUTS {
                        mean[j] += outputs[i][j];
                    }
                }
                mean.map(|v| v / idx.len() as f64)
            }
            BaselineParams::Tree { trees, .. } => std::array::from_fn(|j| trees[j].predict(x)),
        }
    }

    /// Raw inputs to raw outputs; rows are evaluated in parallel.
    pub fn predict(&self, inputs: &[[f64; N_INPUTS]]) -> Vec<[f64; N_OUTPUTS]> {
        inputs
            .par_iter()
            .map(|x| {
                let y = self.predict_scaled(&self.scalers.inputs.transform_row(x));
                self.scalers.outputs.inverse_row(&y)
            })
            .collect()
    }

    fn validate(&self) -> Result<(), BaselineError> {
        let n = match &self.params {
            BaselineParams::Linear { fits } | BaselineParams::Ridge { fits, .. } => {
                if fits.iter().any(|f| f.coef.len() != N_INPUTS) {
                    return Err(BaselineError::Format("linear fit has the wrong width".into()));
                }
                fits.len()
            }
            BaselineParams::Knn { k, inputs, outputs } => {
                if *k == 0 || inputs.len() != outputs.len() || inputs.is_empty() {
                    return Err(BaselineError::Format("knn model is inconsistent".into()));
                }
                N_OUTPUTS
            }
            BaselineParams::Tree { trees, .. } => {
                for t in trees {
                    let bad = t.nodes.is_empty()
                        || t.nodes.iter().any(|node| match node {
                            TreeNode::Leaf { .. } => false,
                            TreeNode::Split { feature, left, right, .. } => {
                                *feature >= N_INPUTS || *left >= t.nodes.len() || *right >= t.nodes.len()
                            }
                        });
                    if bad {
                        return Err(BaselineError::Format("tree has an invalid node".into()));
                    }
                }
                trees.len()
            }
        };
        if n != N_OUTPUTS {
            return Err(BaselineError::Format(format!("expected {N_OUTPUTS} sub-models, found {n}")));
        }
        Ok(())
    }
}

pub fn baseline_to_json(model: &BaselineModel) -> String {
    let mut doc = serde_json::to_value(model).expect("baseline serializes");
    if let serde_json::Value::Object(map) = &mut doc {
        map.insert("format".into(), BASELINE_FORMAT.into());
        map.insert("version".into(), BASELINE_VERSION.into());
    }
    serde_json::to_string(&doc).expect("baseline serializes")
}

pub fn baseline_from_json(text: &str) -> Result<BaselineModel, BaselineError> {
    let mut doc: serde_json::Value = serde_json::from_str(text)?;
    let map = doc
        .as_object_mut()
        .ok_or_else(|| BaselineError::Format("model file is not a JSON object".into()))?;
    match map.remove("format") {
        Some(serde_json::Value::String(f)) if f == BASELINE_FORMAT => {}
        other => return Err(BaselineError::Format(format!("unexpected format tag {other:?}"))),
    }
    match map.remove("version").and_then(|v| v.as_u64()) {
        Some(v) if v == BASELINE_VERSION as u64 => {}
        other => return Err(BaselineError::Format(format!("unsupported version {other:?}"))),
    }
    let model: BaselineModel = serde_json::from_value(doc)?;
    model.validate()?;
    Ok(model)
}

pub fn save_baseline(model: &BaselineModel, path: impl AsRef<Path>) -> Result<(), BaselineError> {
    std::fs::write(path, baseline_to_json(model))?;
    Ok(())
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineModel, BaselineError> {
    baseline_from_json(&std::fs::read_to_string(path)?)
}
