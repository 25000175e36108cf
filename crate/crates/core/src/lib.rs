//! Mass-conservation-preserving neural reduced order models for
//! parametrized Darcy-type flow.
//!
//! The flux is split into a particular solution produced by a spanning-tree
//! solve and a homogeneous, divergence-free part predicted by a small dense
//! network through a kernel map. The surrogate then satisfies the discrete
//! conservation law exactly, regardless of how well the network is trained.
//!
//! Crate layout mirrors the pipeline:
//! [`mesh`] → [`fem`] operators → [`fom`] full-order solvers →
//! [`tree`] right-inverse → [`kernelmaps`] → [`nn`] networks and training →
//! [`rom`] surrogate assembly and evaluation, all on the [`numerics`] substrate.

pub mod error;
pub mod fem;
pub mod fom;
pub mod kernelmaps;
pub mod mesh;
pub mod nn;
pub mod numerics;
pub mod rom;
pub mod tol;
pub mod tree;

pub use error::{Error, Result};
