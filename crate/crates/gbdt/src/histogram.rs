use crate::{GbdtError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub grad: f64,
    pub hess: f64,
    pub count: usize,
}

impl BinStats {
    fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1;
    }
}

/// Gradient statistics per bin of one feature; the last slot is the missing bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<BinStats>,
}

impl Histogram {
    pub fn n_real_bins(&self) -> usize {
        self.bins.len() - 1
    }

    pub fn missing(&self) -> BinStats {
        self.bins[self.bins.len() - 1]
    }

    pub fn total(&self) -> BinStats {
        self.bins.iter().fold(BinStats::default(), |mut acc, b| {
            acc.grad += b.grad;
            acc.hess += b.hess;
            acc.count += b.count;
            acc
        })
    }
}

/// Accumulates gradients and hessians of `rows` into the bins of one column.
/// Rows are visited in the given order, so the floating-point sums are
/// deterministic for a fixed row set.
pub fn build_histogram(column: &[u8], n_bins: usize, grads: &[f64], hess: &[f64], rows: &[u32]) -> Result<Histogram> {
    let mut bins = vec![BinStats::default(); n_bins];
    for &r in rows {
        let r = r as usize;
        let b = column[r] as usize;
        let slot = bins.get_mut(b).ok_or(GbdtError::BinOutOfRange { bin: b, bins: n_bins })?;
        slot.add(grads[r], hess[r]);
    }
    Ok(Histogram { bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_row() {
        let h = build_histogram(&[3], 6, &[0.5], &[0.25], &[0]).unwrap();
        for (i, b) in h.bins.iter().enumerate() {
            if i == 3 {
                assert_eq!(*b, BinStats { grad: 0.5, hess: 0.25, count: 1 });
            } else {
                assert_eq!(*b, BinStats::default());
            }
        }
    }

    #[test]
    fn all_missing_rows_land_in_missing_bin() {
        let column = [4u8; 5];
        let g = [0.1, -0.2, 0.3, 0.4, -0.5];
        let h = [0.2; 5];
        let hist = build_histogram(&column, 5, &g, &h, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(hist.missing().count, 5);
        assert!(hist.bins[..4].iter().all(|b| b.count == 0));
    }

    #[test]
    fn out_of_range_bin_is_an_error() {
        let err = build_histogram(&[7], 4, &[0.0], &[0.0], &[0]).unwrap_err();
        assert_eq!(err, GbdtError::BinOutOfRange { bin: 7, bins: 4 });
    }

    #[test]
    fn matches_naive_reaccumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n_bins = 9;
        let column: Vec<u8> = (0..100).map(|_| rng.random_range(0..n_bins as u8)).collect();
        let g: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..0.25)).collect();
        let rows: Vec<u32> = (0..100).filter(|i| i % 3 != 0).collect();
        let hist = build_histogram(&column, n_bins, &g, &h, &rows).unwrap();
        for bin in 0..n_bins {
            let mut expected = BinStats::default();
            for &r in &rows {
                if column[r as usize] as usize == bin {
                    expected.grad += g[r as usize];
                    expected.hess += h[r as usize];
                    expected.count += 1;
                }
            }
            assert_eq!(hist.bins[bin], expected);
        }
        let total = hist.total();
        let direct_g: f64 = rows.iter().map(|&r| g[r as usize]).sum();
        assert!((total.grad - direct_g).abs() < 1e-12);
        assert_eq!(total.count, rows.len());
    }
}
