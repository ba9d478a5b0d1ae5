pub mod densities;
pub mod error;
pub mod gig;
pub mod inference;
pub mod labels;
pub mod selection;
pub mod simulate;
pub mod specfun;

pub use error::{Error, Result};
