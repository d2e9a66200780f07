//! The mdbook guide under `book/`, compiled so its Rust snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/cameras.md")]
pub mod cameras {}
#[doc = include_str!("../../../book/src/cache.md")]
pub mod cache {}
#[doc = include_str!("../../../book/src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("../../../book/src/warping.md")]
pub mod warping {}
#[doc = include_str!("../../../book/src/context.md")]
pub mod context {}
#[doc = include_str!("../../../book/src/augmentation.md")]
pub mod augmentation {}
#[doc = include_str!("../../../book/src/meshing.md")]
pub mod meshing {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
