//! Dense linear algebra used by every layer in the crate.

mod decomp;
mod matrix;

pub use decomp::{inv_sqrt_psd, psd_eig, solve_spd, svd, sym_eig, Cholesky, Svd, SymEig, MIN_EPS, PSD_CLAMP};
pub use matrix::{dot, norm, Matrix};
