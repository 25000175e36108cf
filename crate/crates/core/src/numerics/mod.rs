//! Sparse/dense linear algebra substrate and deterministic sampling.

pub mod dense;
pub mod io;
pub mod lu;
pub mod rng;
pub mod sparse;

pub use dense::{dot, sym_eig, DenseMatrix};
pub use lu::{factorize, solve_refined, solve_sparse, LuFactors};
pub use rng::{latin_hypercube, Rng, RNG_ALGORITHM};
pub use sparse::{
    solve_permuted_triangular, solve_permuted_triangular_transpose, SparseBuilder, SparseMatrix,
};
