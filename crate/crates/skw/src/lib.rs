//! Monte Carlo laboratory for smart kinetic walks on the square lattice.
//!
//! A smart kinetic walk grows a self-avoiding path that never steps onto a
//! site from which the domain exterior has become unreachable. This crate
//! runs ensembles of such walks inside planar domains under configurable
//! turning probabilities, accumulates the distribution of boundary exit
//! points, and compares it against the harmonic measure of the domain seen
//! from the starting point. The statistical layer quantifies the leading
//! finite-spacing deviation: its scaling in the lattice spacing, its overall
//! size across rule tables, and the universality of its angular shape.

pub mod analysis;
pub mod engine;
pub mod geometry;
pub mod harmonic;
pub mod recipe;
pub mod transition;
pub mod walker;
