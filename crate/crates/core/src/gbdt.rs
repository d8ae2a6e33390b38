//! Gradient-boosted decision trees for binary classification: Newton
//! boosting on logistic loss with exact greedy splits over sorted unique
//! thresholds. Training is single-threaded and bit-deterministic under a
//! fixed seed; trained models are immutable and safe to share across
//! threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::{atomic_write, subseed};

/// L2 regularization on leaf weights.
pub const LAMBDA: f64 = 1.0;
/// Leaf values are clamped to this magnitude.
pub const LEAF_CLAMP: f64 = 10.0;
/// Margins are clamped before the sigmoid so probabilities stay strictly
/// inside (0, 1) in f64.
const MARGIN_CLAMP: f64 = 30.0;
/// Splits with gain at or below this are not worth a node.
const MIN_GAIN: f64 = 1e-12;

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidInput(
                "n_rounds, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidInput("learning_rate must be in (0, 1]".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidInput("subsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Rows with `x[feature] < threshold` go left, the rest go right.
    pub fn output(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub feature_dim: usize,
    /// Log-odds of the training positive rate.
    pub base_score: f64,
    pub params: GbdtParams,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn sigmoid(margin: f64) -> f64 {
    let m = margin.clamp(-MARGIN_CLAMP, MARGIN_CLAMP);
    1.0 / (1.0 + (-m).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean logistic loss given raw margins.
pub fn log_loss_from_margins(margins: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| if y { softplus(-m) } else { softplus(m) })
        .sum();
    total / margins.len() as f64
}

/// Mean logistic loss given probabilities.
pub fn log_loss(probs: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-15, 1.0 - 1e-15);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

fn leaf_value(grad_sum: f64, hess_sum: f64) -> f64 {
    (-grad_sum / (hess_sum + LAMBDA)).clamp(-LEAF_CLAMP, LEAF_CLAMP)
}

fn half_score(g: f64, h: f64) -> f64 {
    g * g / (h + LAMBDA)
}

/// Exact greedy split search: maximize the Newton gain
/// `(G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)) / 2` over every feature and
/// every midpoint between consecutive distinct sorted values, subject to
/// both children holding at least `min_samples_leaf` rows. Ties resolve to
/// the lowest feature index, then the lowest threshold.
pub fn best_split(
    features: &[Vec<f64>],
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    min_samples_leaf: usize,
    lambda: f64,
) -> Option<SplitCandidate> {
    if rows.len() < 2 * min_samples_leaf {
        return None;
    }
    let dim = features.first().map(|r| r.len()).unwrap_or(0);
    let total_g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let total_h: f64 = rows.iter().map(|&i| hess[i]).sum();
    let parent_score = total_g * total_g / (total_h + lambda);

    let mut best: Option<SplitCandidate> = None;
    let mut sorted: Vec<usize> = rows.to_vec();
    for feature in 0..dim {
        sorted.sort_by(|&a, &b| {
            features[a][feature]
                .partial_cmp(&features[b][feature])
                .expect("validated finite features")
        });
        let mut left_g = 0.0;
        let mut left_h = 0.0;
        for (pos, &row) in sorted.iter().enumerate().take(sorted.len() - 1) {
            left_g += grad[row];
            left_h += hess[row];
            let here = features[row][feature];
            let next = features[sorted[pos + 1]][feature];
            if here == next {
                continue;
            }
            let left_count = pos + 1;
            let right_count = sorted.len() - left_count;
            if left_count < min_samples_leaf || right_count < min_samples_leaf {
                continue;
            }
            let right_g = total_g - left_g;
            let right_h = total_h - left_h;
            let gain = 0.5
                * (left_g * left_g / (left_h + lambda)
                    + right_g * right_g / (right_h + lambda)
                    - parent_score);
            let threshold = here + (next - here) / 2.0;
            if best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > MIN_GAIN)
}

fn build_tree(
    features: &[Vec<f64>],
    rows: Vec<usize>,
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> Tree {
    let mut nodes = Vec::new();
    grow(features, rows, grad, hess, params, 0, &mut nodes);
    Tree { nodes }
}

fn grow(
    features: &[Vec<f64>],
    rows: Vec<usize>,
    grad: &[f64],
    hess: &[f64],
    params: &GbdtParams,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let make_leaf = |nodes: &mut Vec<Node>, rows: &[usize]| -> usize {
        let g: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| hess[i]).sum();
        nodes.push(Node::Leaf {
            value: leaf_value(g, h),
        });
        nodes.len() - 1
    };

    if depth >= params.max_depth {
        return make_leaf(nodes, &rows);
    }
    let Some(split) = best_split(features, &rows, grad, hess, params.min_samples_leaf, LAMBDA)
    else {
        return make_leaf(nodes, &rows);
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&i| features[i][split.feature] < split.threshold);

    let idx = nodes.len();
    nodes.push(Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: 0,
        right: 0,
    });
    let left = grow(features, left_rows, grad, hess, params, depth + 1, nodes);
    let right = grow(features, right_rows, grad, hess, params, depth + 1, nodes);
    if let Node::Split {
        left: l, right: r, ..
    } = &mut nodes[idx]
    {
        *l = left;
        *r = right;
    }
    idx
}

fn validate_features(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::InvalidInput("no training rows".into()))?;
    if dim == 0 {
        return Err(Error::InvalidInput("features have zero dimension".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} features, expected {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "row {i} contains a non-finite feature"
            )));
        }
    }
    Ok(dim)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: GbdtModel,
    /// Full-data training log-loss after each boosting round.
    pub round_losses: Vec<f64>,
}

/// Train with per-round loss history (used by the monotonicity checks).
pub fn train_with_history(
    features: &[Vec<f64>],
    labels: &[bool],
    params: &GbdtParams,
) -> Result<TrainOutcome> {
    params.validate()?;
    let dim = validate_features(features)?;
    if features.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 training rows".into()));
    }
    if labels.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} rows",
            labels.len(),
            features.len()
        )));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::InvalidInput(
            "training labels must contain both classes".into(),
        ));
    }

    let n = features.len();
    let pos_rate = positives as f64 / n as f64;
    let base_score = (pos_rate / (1.0 - pos_rate)).ln();

    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut round_losses = Vec::with_capacity(params.n_rounds);
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(params.seed, "gbdt-subsample"));

    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }

        let rows: Vec<usize> = if params.subsample < 1.0 {
            let take = ((n as f64 * params.subsample).floor() as usize).max(1);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            let mut picked = all[..take].to_vec();
            picked.sort_unstable();
            picked
        } else {
            (0..n).collect()
        };

        let tree = build_tree(features, rows, &grad, &hess, params);
        for i in 0..n {
            margins[i] += params.learning_rate * tree.output(&features[i]);
        }
        round_losses.push(log_loss_from_margins(&margins, labels));
        trees.push(tree);
    }

    Ok(TrainOutcome {
        model: GbdtModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_dim: dim,
            base_score,
            params: params.clone(),
            trees,
        },
        round_losses,
    })
}

/// Train a boosted classifier. Deterministic under a fixed seed.
pub fn train(features: &[Vec<f64>], labels: &[bool], params: &GbdtParams) -> Result<GbdtModel> {
    train_with_history(features, labels, params).map(|t| t.model)
}

impl GbdtModel {
    /// `sigmoid(base_score + Σ learning_rate · tree(x))` per row.
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let dim = validate_features(features)?;
        if dim != self.feature_dim {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, got {dim}",
                self.feature_dim
            )));
        }
        Ok(features
            .iter()
            .map(|row| {
                let margin: f64 = self.base_score
                    + self
                        .trees
                        .iter()
                        .map(|t| self.params.learning_rate * t.output(row))
                        .sum::<f64>();
                sigmoid(margin)
            })
            .collect())
    }

    /// Probability at or above `threshold` → positive.
    pub fn predict(&self, features: &[Vec<f64>], threshold: f64) -> Result<Vec<bool>> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold must be inside (0, 1), got {threshold}"
            )));
        }
        Ok(self
            .predict_proba(features)?
            .into_iter()
            .map(|p| p >= threshold)
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Backend(format!("serializing model: {e}")))?;
        atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<GbdtModel> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(&raw)
            .map_err(|e| Error::ModelLoad(format!("{}: {e}", path.display())))?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelLoad(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                probe.format_version
            )));
        }
        let model: GbdtModel = serde_json::from_str(&raw)
            .map_err(|e| Error::ModelLoad(format!("{}: {e}", path.display())))?;
        for tree in &model.trees {
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, .. } if *feature >= model.feature_dim => {
                        return Err(Error::ModelLoad(format!(
                            "split feature {feature} out of range for dim {}",
                            model.feature_dim
                        )));
                    }
                    Node::Leaf { value } if !value.is_finite() => {
                        return Err(Error::ModelLoad("non-finite leaf value".into()));
                    }
                    _ => {}
                }
            }
        }
        Ok(model)
    }
}
