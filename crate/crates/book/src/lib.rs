//! The guide in `book/` compiled as doc-tests, so every snippet there runs
//! under `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/conllu.md")]
pub mod conllu {}
#[doc = include_str!("../../../book/src/transitions.md")]
pub mod transitions {}
#[doc = include_str!("../../../book/src/runtime.md")]
pub mod runtime {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/distillation.md")]
pub mod distillation {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/lint.md")]
pub mod lint {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
