use crate::{GbdtParams, Histogram};

/// Gradient statistics of a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeTotals {
    pub grad: f64,
    pub hess: f64,
    pub count: usize,
}

impl NodeTotals {
    pub fn new(grad: f64, hess: f64, count: usize) -> Self {
        Self { grad, hess, count }
    }

    fn add_bin(&mut self, grad: f64, hess: f64, count: usize) {
        self.grad += grad;
        self.hess += hess;
        self.count += count;
    }
}

/// A candidate split: rows with `bin <= bin` go left, missing rows go left
/// iff `missing_left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub bin: usize,
    pub missing_left: bool,
    /// Regularised loss reduction minus `gamma_min_gain`.
    pub gain: f64,
    pub left: NodeTotals,
    pub right: NodeTotals,
}

/// `½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ`
pub fn split_gain(left: NodeTotals, right: NodeTotals, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(left.grad, left.hess) + score(right.grad, right.hess)
        - score(left.grad + right.grad, left.hess + right.hess))
        - gamma
}

/// Newton step for a leaf, scaled by the learning rate.
pub fn leaf_value(grad: f64, hess: f64, params: &GbdtParams) -> f64 {
    let denom = hess + params.lambda_l2;
    if denom <= 0.0 {
        return 0.0;
    }
    -params.learning_rate * grad / denom
}

/// Exhaustive search over every feature, bin boundary and missing-value
/// direction.
///
/// Splits with non-negative gain are admissible; zero-gain splits are kept so
/// that symmetric interactions (XOR-like targets) can be unfolded by the
/// next level. Ties go to the lowest feature, then the lowest bin, then
/// missing-left.
pub fn best_split(histograms: &[Histogram], totals: NodeTotals, params: &GbdtParams) -> Option<SplitCandidate> {
    let min_samples = params.min_child_samples.max(1);
    if totals.count < 2 * min_samples {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    let mut suffix: Vec<NodeTotals> = Vec::new();
    for (feature, hist) in histograms.iter().enumerate() {
        let n_real = hist.n_real_bins();
        let missing = hist.missing();

        // suffix[t] = statistics of real bins t..n_real
        suffix.clear();
        suffix.resize(n_real + 1, NodeTotals::default());
        for t in (0..n_real).rev() {
            let mut s = suffix[t + 1];
            let b = hist.bins[t];
            s.add_bin(b.grad, b.hess, b.count);
            suffix[t] = s;
        }

        let mut prefix = NodeTotals::default();
        for bin in 0..n_real {
            let b = hist.bins[bin];
            prefix.add_bin(b.grad, b.hess, b.count);
            for missing_left in [true, false] {
                let mut left = prefix;
                let mut right = suffix[bin + 1];
                if missing_left {
                    left.add_bin(missing.grad, missing.hess, missing.count);
                } else {
                    right.add_bin(missing.grad, missing.hess, missing.count);
                }
                if left.count < min_samples || right.count < min_samples {
                    continue;
                }
                if left.hess < params.min_child_weight || right.hess < params.min_child_weight {
                    continue;
                }
                let gain = split_gain(left, right, params.lambda_l2, params.gamma_min_gain);
                if gain.is_nan() || gain < 0.0 {
                    continue;
                }
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate { feature, bin, missing_left, gain, left, right });
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{build_histogram, BinMapper, Matrix};

    #[test]
    fn gain_formula_arithmetic() {
        let left = NodeTotals::new(-2.0, 1.0, 1);
        let right = NodeTotals::new(2.0, 1.0, 1);
        assert_eq!(split_gain(left, right, 1.0, 0.0), 2.0);
    }

    #[test]
    fn leaf_values() {
        let p = GbdtParams { lambda_l2: 1.0, learning_rate: 1.0, ..Default::default() };
        assert_eq!(leaf_value(2.0, 3.0, &p), -0.5);
        assert_eq!(leaf_value(0.0, 3.0, &p), 0.0);
        let p = GbdtParams { lambda_l2: 1.0, learning_rate: 0.1, ..Default::default() };
        assert!((leaf_value(-1.0, 0.0, &p) - 0.1).abs() < 1e-15);
    }

    fn histograms(x: &Matrix, g: &[f64], h: &[f64]) -> Vec<Histogram> {
        let mapper = BinMapper::fit(x, 255);
        let binned = mapper.transform(x);
        let rows: Vec<u32> = (0..x.n_rows() as u32).collect();
        (0..x.n_cols()).map(|f| build_histogram(binned.column(f), binned.n_bins(f), g, h, &rows).unwrap()).collect()
    }

    #[test]
    fn pure_node_has_no_split() {
        // all labels 1 at a converged score: identical gradients on every row
        let x = Matrix::new(vec![1.0, 2.0, 3.0, 4.0], 4, 1).unwrap();
        let (g, h) = crate::logistic_grad_hess(4.0, 1.0);
        let gs = vec![g; 4];
        let hs = vec![h; 4];
        let hists = histograms(&x, &gs, &hs);
        let totals = NodeTotals::new(4.0 * g, 4.0 * h, 4);
        let params = GbdtParams { min_child_samples: 1, min_child_weight: 0.0, ..Default::default() };
        assert_eq!(best_split(&hists, totals, &params), None);
    }

    #[test]
    fn four_point_dataset_matches_enumeration() {
        let x = Matrix::new(vec![0.3, 1.2, 2.5, 3.1], 4, 1).unwrap();
        let g = [0.4, 0.3, -0.6, -0.2];
        let h = [0.24, 0.21, 0.24, 0.16];
        let hists = histograms(&x, &g, &h);
        let totals = NodeTotals::new(g.iter().sum(), h.iter().sum(), 4);
        let params = GbdtParams { min_child_samples: 1, min_child_weight: 0.0, ..Default::default() };
        let best = best_split(&hists, totals, &params).unwrap();

        // brute force: split after each sorted position
        let mut best_gain = f64::NEG_INFINITY;
        let mut best_pos = 0;
        for pos in 1..4 {
            let l = NodeTotals::new(g[..pos].iter().sum(), h[..pos].iter().sum(), pos);
            let r = NodeTotals::new(g[pos..].iter().sum(), h[pos..].iter().sum(), 4 - pos);
            let gain = split_gain(l, r, 1.0, 0.0);
            if gain > best_gain {
                best_gain = gain;
                best_pos = pos;
            }
        }
        assert_eq!(best.bin, best_pos - 1);
        assert!((best.gain - best_gain).abs() < 1e-12);
    }

    #[test]
    fn respects_min_child_samples() {
        let x = Matrix::new(vec![0.0, 1.0, 2.0, 3.0], 4, 1).unwrap();
        let g = [1.0, -1.0, -1.0, -1.0];
        let h = [0.25; 4];
        let hists = histograms(&x, &g, &h);
        let totals = NodeTotals::new(-2.0, 1.0, 4);
        let params = GbdtParams { min_child_samples: 2, min_child_weight: 0.0, ..Default::default() };
        let best = best_split(&hists, totals, &params).unwrap();
        assert_eq!(best.bin, 1);
        let params = GbdtParams { min_child_samples: 3, ..params };
        assert_eq!(best_split(&hists, totals, &params), None);
    }

    #[test]
    fn learns_missing_direction() {
        // missing rows behave like the high-value rows
        let x = Matrix::new(vec![0.0, 1.0, f64::NAN, 5.0, 6.0, f64::NAN], 6, 1).unwrap();
        let g = [0.5, 0.5, -0.5, -0.5, -0.5, -0.5];
        let h = [0.25; 6];
        let hists = histograms(&x, &g, &h);
        let totals = NodeTotals::new(-1.0, 1.5, 6);
        let params = GbdtParams { min_child_samples: 1, min_child_weight: 0.0, ..Default::default() };
        let best = best_split(&hists, totals, &params).unwrap();
        assert_eq!(best.bin, 1);
        assert!(!best.missing_left);
        assert_eq!(best.left.count, 2);
    }
}
