//! Guide chapters compiled as documentation so their snippets run as
//! doctests.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/possible_worlds.md")]
pub mod possible_worlds {}

#[doc = include_str!("../../../book/src/infinite_products.md")]
pub mod infinite_products {}

#[doc = include_str!("../../../book/src/tuple_independence.md")]
pub mod tuple_independence {}

#[doc = include_str!("../../../book/src/blocks.md")]
pub mod blocks {}

#[doc = include_str!("../../../book/src/completions.md")]
pub mod completions {}

#[doc = include_str!("../../../book/src/queries.md")]
pub mod queries {}

#[doc = include_str!("../../../book/src/approximation.md")]
pub mod approximation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
