pub mod density;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod numeric;
pub mod linalg;
pub mod optim;
pub mod sim;
pub mod speus;
pub mod twopart;

pub use error::{Error, Result};
