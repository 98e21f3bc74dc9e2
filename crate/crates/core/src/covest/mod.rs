//! Training-sample estimation of means and (thresholded) covariance and
//! precision matrices, plus the operator-norm tools used to check them.

mod io;
mod linalg;
mod moments;
mod precision;
mod select;
mod threshold;
mod uniformity;

pub use io::{read_matrix_csv, write_matrix_csv, SymmetricJson};
pub use linalg::{min_eigenvalue, spectral_norm, sup_norm, symmetric_eigenvalues};
pub use moments::{estimate_moments, MomentEstimates};
pub use precision::{precision_estimate, PrecisionEstimate};
pub use select::{select_c_th, C_TH_GRID, DEFAULT_SPLITS};
pub use threshold::{
    apply_threshold, apply_threshold_rule, threshold_all, ThresholdKind, ThresholdRule,
    ThresholdValue,
};
pub use uniformity::{
    lr_term, membership_check, threshold_bound_check, BoundCheck, MembershipReport,
    UniformityClassParams,
};
