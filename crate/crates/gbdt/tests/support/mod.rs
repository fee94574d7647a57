//! Exhaustive split enumeration straight from raw rows, independent of the
//! histogram path.

use vistacast_gbdt::GbdtParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    /// Index into the sorted distinct values of the feature; rows `<=` go left.
    pub threshold_rank: usize,
    pub missing_left: bool,
    pub gain: f64,
}

pub fn exhaustive_best_split(
    rows: &[Vec<f64>],
    grads: &[f64],
    hess: &[f64],
    params: &GbdtParams,
) -> Option<OracleSplit> {
    let n = rows.len();
    let min_samples = params.min_child_samples.max(1);
    if n < 2 * min_samples {
        return None;
    }
    let lambda = params.lambda_l2;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let n_features = rows.first().map_or(0, Vec::len);
    let mut best: Option<OracleSplit> = None;
    for f in 0..n_features {
        let mut distinct: Vec<f64> = rows.iter().map(|r| r[f]).filter(|v| !v.is_nan()).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for (rank, &thr) in distinct.iter().enumerate() {
            for missing_left in [true, false] {
                let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
                let (mut gr, mut hr, mut nr) = (0.0, 0.0, 0usize);
                for (i, r) in rows.iter().enumerate() {
                    let v = r[f];
                    let left = if v.is_nan() { missing_left } else { v <= thr };
                    if left {
                        gl += grads[i];
                        hl += hess[i];
                        nl += 1;
                    } else {
                        gr += grads[i];
                        hr += hess[i];
                        nr += 1;
                    }
                }
                if nl < min_samples || nr < min_samples {
                    continue;
                }
                if hl < params.min_child_weight || hr < params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - params.gamma_min_gain;
                if gain >= 0.0 && best.is_none_or(|b| gain > b.gain) {
                    best = Some(OracleSplit { feature: f, threshold_rank: rank, missing_left, gain });
                }
            }
        }
    }
    best
}
