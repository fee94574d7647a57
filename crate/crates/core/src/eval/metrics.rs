use super::EvalError;

/// Fraction of rows where `prob >= threshold` agrees with the label.
pub fn accuracy(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    check_lengths(probs.len(), labels.len())?;
    let correct = probs.iter().zip(labels).filter(|(p, y)| (**p >= threshold) == **y).count();
    Ok(correct as f64 / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auc {
    pub value: f64,
    /// Only one class was present; `value` is the conventional 0.5.
    pub degenerate: bool,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, computed from average ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Auc, EvalError> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|y| **y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Auc { value: 0.5, degenerate: true });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // ranks doubled so tied averages stay integral
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            if labels[idx] {
                pos_rank_sum2 += avg2;
            }
        }
        i = j + 1;
    }
    let np = n_pos as u64;
    let u2 = pos_rank_sum2 - np * (np + 1);
    Ok(Auc { value: u2 as f64 / (2 * np * n_neg as u64) as f64, degenerate: false })
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a == 0 {
        return Err(EvalError::InvalidInput("empty input".into()));
    }
    if a != b {
        return Err(EvalError::InvalidInput(format!("{a} scores for {b} labels")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.9, 0.1], &[true, false], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.9, 0.9], &[true, false], 0.5).unwrap(), 0.5);
        assert_eq!(accuracy(&[0.5], &[true], 0.5).unwrap(), 1.0);
        assert!(accuracy(&[], &[], 0.5).is_err());
        assert!(accuracy(&[0.1], &[true, false], 0.5).is_err());
    }

    #[test]
    fn auc_examples() {
        let a = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(a.value, 0.75);
        assert!(!a.degenerate);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap().value, 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &[false, true, false, true]).unwrap().value, 0.5);
        let d = roc_auc(&[0.1, 0.9], &[true, true]).unwrap();
        assert_eq!((d.value, d.degenerate), (0.5, true));
    }
}
