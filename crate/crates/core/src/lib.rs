//! Coderivative and subdifferential Leibniz rules for expected-integral
//! multifunctions over finite weighted node sets.
//!
//! Exact polyhedral computations live in [`geometry`], [`normal_cone`] and
//! [`coderivative`]; [`oracle`] recomputes the same objects from their
//! defining limits by sampling, and [`leibniz`] compares both sides of each
//! rule on concrete instances.

pub mod coderivative;
pub mod error;
pub mod expected;
pub mod expr;
pub mod functions;
pub mod geometry;
pub mod integrand;
pub mod leibniz;
pub mod linalg;
pub mod lipschitz;
pub mod measure;
pub mod normal_cone;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod verdict;

pub use error::{Error, Result};
pub use linalg::{vector, Matrix, Vector};
pub use verdict::Verdict;
