//! Exact symbolic classifier for free products of weighted von Neumann
//! algebras.
//!
//! Given formal direct sums of matrix blocks and admissible diffuse or
//! infinite summands with faithful rational weights, the crate computes the
//! isomorphism class of their free product: a free Araki-Woods factor with
//! its free quasi-free state, possibly direct sum an explicit
//! finite-dimensional part. All arithmetic is exact over arbitrary-precision
//! rationals.
//!
//! - [`rat`]: positive rationals and prime factorization.
//! - [`ratio_group`]: multiplicative subgroups of the positive rationals as
//!   integer exponent lattices in Hermite normal form.
//! - [`algebra`]: the summand/algebra data model, validation, point spectra,
//!   traciality, rescaling, tensor simplification.
//! - [`classify`]: the closed-form free product classifier, Connes type
//!   labels, compression, and the product expression evaluator.
//! - [`derive`]: an independent inductive engine that replays the
//!   compression/expansion proof chain and cross-checks the classifier,
//!   emitting a citable derivation trace.
//! - [`graph`]: the classifier for free algebras of weighted directed
//!   graphs with edge involution.
//! - [`expr`]: the small expression language of the command line front end.
//! - [`report`]: text rendering of classifications.

pub mod algebra;
pub mod classify;
pub mod derive;
pub mod expr;
pub mod graph;
pub mod rat;
pub mod ratio_group;
pub mod report;

pub use algebra::{Algebra, Summand};
pub use classify::{free_product_classify, Classification};
pub use rat::PosRat;
pub use ratio_group::RatioGroup;
