//! Random initialization, the good-initialization classifier, Monte Carlo
//! harnesses and the supporting inequality checks.

mod init;
mod lemmas;
mod monte_carlo;

pub use init::*;
pub use lemmas::*;
pub use monte_carlo::*;
