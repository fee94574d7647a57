use log::warn;
use rayon::prelude::*;

use crate::binning::{BinMapper, BinnedMatrix};
use crate::histogram::{build_histogram, Histogram};
use crate::loss::{logistic_grad_hess, logistic_loss};
use crate::model::GbdtModel;
use crate::split::{best_split, leaf_value, NodeTotals, SplitCandidate};
use crate::tree::{Node, Tree};
use crate::{GbdtError, GbdtParams, Matrix, Result};

/// Row-feature products above which per-feature histograms are built in parallel.
const PARALLEL_WORK: usize = 1 << 15;

/// Fits a boosted ensemble on `matrix` against binary `labels`.
///
/// Single-class labels yield a constant model (no trees) with a warning.
pub fn train(matrix: &Matrix, feature_names: &[String], labels: &[bool], params: &GbdtParams) -> Result<GbdtModel> {
    train_with_trace(matrix, feature_names, labels, params).map(|(m, _)| m)
}

/// Like [`train`], also returning the mean training loss before the first
/// round and after every round.
pub fn train_with_trace(
    matrix: &Matrix,
    feature_names: &[String],
    labels: &[bool],
    params: &GbdtParams,
) -> Result<(GbdtModel, Vec<f64>)> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 || matrix.n_cols() == 0 {
        return Err(GbdtError::EmptyMatrix);
    }
    if labels.len() != n {
        return Err(GbdtError::LabelCount { labels: labels.len(), rows: n });
    }
    if feature_names.len() != matrix.n_cols() {
        return Err(GbdtError::Shape(format!("{} feature names for {} columns", feature_names.len(), matrix.n_cols())));
    }

    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    let mean = positives as f64 / n as f64;
    let mapper = BinMapper::fit(matrix, params.max_bins);

    if positives == 0 || positives == n {
        warn!("single-class training labels ({positives}/{n} positive); returning constant model");
        let p = mean.clamp(1e-6, 1.0 - 1e-6);
        let base = (p / (1.0 - p)).ln();
        let model = GbdtModel::new(feature_names.to_vec(), params.clone(), base, mapper, Vec::new());
        let loss = y.iter().map(|&t| logistic_loss(base, t)).sum::<f64>() / n as f64;
        return Ok((model, vec![loss]));
    }

    let base = (mean / (1.0 - mean)).ln();
    let binned = mapper.transform(matrix);
    let mut scores = vec![base; n];
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.num_trees);
    let mean_loss = |scores: &[f64]| scores.iter().zip(&y).map(|(&s, &t)| logistic_loss(s, t)).sum::<f64>() / n as f64;
    let mut trace = vec![mean_loss(&scores)];

    for _ in 0..params.num_trees {
        for i in 0..n {
            let (g, h) = logistic_grad_hess(scores[i], y[i]);
            grads[i] = g;
            hess[i] = h;
        }
        let tree = grow_tree(&binned, &mapper, &grads, &hess, params, &mut scores)?;
        trees.push(tree);
        trace.push(mean_loss(&scores));
    }

    Ok((GbdtModel::new(feature_names.to_vec(), params.clone(), base, mapper, trees), trace))
}

struct OpenLeaf {
    node: usize,
    rows: Vec<u32>,
    totals: NodeTotals,
    split: Option<SplitCandidate>,
}

fn node_totals(rows: &[u32], grads: &[f64], hess: &[f64]) -> NodeTotals {
    let mut t = NodeTotals::default();
    for &r in rows {
        t.grad += grads[r as usize];
        t.hess += hess[r as usize];
    }
    t.count = rows.len();
    t
}

fn histograms(binned: &BinnedMatrix, grads: &[f64], hess: &[f64], rows: &[u32]) -> Result<Vec<Histogram>> {
    let build = |f: usize| build_histogram(binned.column(f), binned.n_bins(f), grads, hess, rows);
    if rows.len() * binned.n_features() >= PARALLEL_WORK {
        (0..binned.n_features()).into_par_iter().map(build).collect()
    } else {
        (0..binned.n_features()).map(build).collect()
    }
}

fn open_leaf(
    node: usize,
    rows: Vec<u32>,
    binned: &BinnedMatrix,
    grads: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> Result<OpenLeaf> {
    let totals = node_totals(&rows, grads, hess);
    let split = if rows.len() >= 2 * params.min_child_samples.max(1) {
        best_split(&histograms(binned, grads, hess, &rows)?, totals, params)
    } else {
        None
    };
    Ok(OpenLeaf { node, rows, totals, split })
}

/// Leaf-wise growth: repeatedly split the open leaf with the largest gain
/// until `max_leaves` is reached or no admissible split remains. Adds the
/// new tree's output to `scores`.
fn grow_tree(
    binned: &BinnedMatrix,
    mapper: &BinMapper,
    grads: &[f64],
    hess: &[f64],
    params: &GbdtParams,
    scores: &mut [f64],
) -> Result<Tree> {
    let all_rows: Vec<u32> = (0..binned.n_rows() as u32).collect();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open = vec![open_leaf(0, all_rows, binned, grads, hess, params)?];
    let mut n_leaves = 1;

    while n_leaves < params.max_leaves {
        let mut chosen: Option<(usize, f64)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(s) = leaf.split {
                if chosen.is_none_or(|(_, g)| s.gain > g) {
                    chosen = Some((i, s.gain));
                }
            }
        }
        let Some((idx, _)) = chosen else { break };
        let leaf = open.remove(idx);
        let split = leaf.split.expect("chosen leaf has a split");

        let column = binned.column(split.feature);
        let missing_bin = mapper.missing_bin(split.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| {
            let b = column[r as usize] as usize;
            if b == missing_bin {
                split.missing_left
            } else {
                b <= split.bin
            }
        });

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            bin: split.bin,
            threshold: mapper.upper_bound(split.feature, split.bin),
            missing_left: split.missing_left,
            gain: split.gain + params.gamma_min_gain,
            left,
            right,
        };
        open.push(open_leaf(left, left_rows, binned, grads, hess, params)?);
        open.push(open_leaf(right, right_rows, binned, grads, hess, params)?);
        n_leaves += 1;
    }

    for leaf in open {
        let value = leaf_value(leaf.totals.grad, leaf.totals.hess, params);
        nodes[leaf.node] = Node::Leaf { value };
        for &r in &leaf.rows {
            scores[r as usize] += value;
        }
    }
    Ok(Tree { nodes }.into_preorder())
}
