//! Numerical building blocks shared by the estimators.

mod cosfit;
mod fir;
mod polyroots;
mod root_music;
mod savgol;

pub use cosfit::{least_squares_cos_fit, least_squares_cos_fit_offset, CosFit};
pub use fir::{design_fir, fir_filter, FilterKind, FilterSpec, ZeroPhaseFir};
pub use polyroots::poly_roots;
pub use root_music::{root_music, FreqEstimate, SUBARRAY_LEN};
pub use savgol::{savitzky_golay, SavGol};
