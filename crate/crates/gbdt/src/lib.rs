//! Histogram gradient-boosted decision trees for binary classification.
//!
//! The learner grows trees leaf-wise (always expanding the leaf whose best
//! split has the largest gain) on quantile-binned features, optimises the
//! logistic loss with second-order leaf values, and learns a default
//! direction for missing values (`NaN`) at every split.
//!
//! ```
//! use vistacast_gbdt::{GbdtParams, Matrix, train};
//!
//! let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
//! let y = [false, true, true, false];
//! let params = GbdtParams { num_trees: 50, max_leaves: 4, min_child_samples: 1, min_child_weight: 0.0, ..GbdtParams::default() };
//! let names: Vec<String> = vec!["x".into(), "y".into()];
//! let model = train(&x, &names, &y, &params).unwrap();
//! assert!(model.predict_proba(&[1.0, 0.0]).unwrap() > 0.5);
//! ```

mod binning;
mod error;
mod histogram;
mod importance;
mod loss;
mod matrix;
mod model;
mod params;
mod serialize;
mod split;
mod train;
mod tree;

pub use binning::{BinMapper, BinnedMatrix};
pub use error::GbdtError;
pub use histogram::{build_histogram, BinStats, Histogram};
pub use importance::FeatureImportance;
pub use loss::{logistic_grad_hess, logistic_loss, sigmoid};
pub use matrix::Matrix;
pub use model::{schema_fingerprint, GbdtModel};
pub use params::GbdtParams;
pub use split::{best_split, leaf_value, split_gain, NodeTotals, SplitCandidate};
pub use train::{train, train_with_trace};
pub use tree::{Node, Tree};

pub type Result<T, E = GbdtError> = std::result::Result<T, E>;
