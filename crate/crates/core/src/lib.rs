//! Learned-dictionary beamspace channel representation and estimation for
//! mmWave massive MIMO with lens antenna arrays.

pub mod beamspace;
pub mod channel;
pub mod dictionary;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod precoding;
pub mod random;
pub mod sparse;

pub use error::{Error, Result};
