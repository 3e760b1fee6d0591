#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dense;
pub mod error;
pub mod gcg;
pub mod io;
pub mod multivec;
pub mod orth;

pub use error::{Error, Result};
