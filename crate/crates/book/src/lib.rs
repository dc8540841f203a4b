//! mdbook cannot run listings that depend on workspace crates, so every
//! chapter is pulled in here and `cargo test --doc` runs the code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/propagators.md")]
pub mod propagators {}
#[doc = include_str!("../../../book/src/evolution.md")]
pub mod evolution {}
#[doc = include_str!("../../../book/src/decay.md")]
pub mod decay {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
