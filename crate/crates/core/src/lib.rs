//! Information-theoretic subsampling from labelled data streams.

pub mod acquisition;
pub mod cli;
pub mod demo;
pub mod harness;
pub mod models;
pub mod prob;
pub mod seeding;
pub mod store;
pub mod streams;
