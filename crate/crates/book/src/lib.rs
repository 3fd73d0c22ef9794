//! Book chapters compiled as doc-tests.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/coarse-search.md")]
pub mod coarse_search {}

#[doc = include_str!("../../../book/src/corridors.md")]
pub mod corridors {}

#[doc = include_str!("../../../book/src/smoothing.md")]
pub mod smoothing {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
