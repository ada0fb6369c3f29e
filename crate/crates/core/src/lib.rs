//! Nested binary-response regression, the net reclassification improvement
//! (NRI) and its score-residual modification (mNRI), with asymptotic tests
//! and a Monte Carlo engine for size studies.
//!
//! The usual flow is [`glm::fit_nested`] on a [`glm::Dataset`], then
//! [`reclass::ReclassReport::compute`] for the statistics and
//! [`inference::test_mnri_single`] (or the train/test variant) for p-values.

pub mod glm;
pub mod numerics;
pub mod reclass;
pub mod inference;
pub mod sim;
pub mod spline;
