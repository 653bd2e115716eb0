pub mod backend;
pub mod chain;
pub mod cli;
pub mod constraints;
pub mod datasets;
pub mod eval;
pub mod prompting;
pub mod tom;
