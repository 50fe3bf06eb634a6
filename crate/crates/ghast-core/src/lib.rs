//! Core of the GHAST consensus model: Tree-Graph storage with incremental
//! subtree weights, the GHOST pivot rule, GHAST adaptive weights, the
//! potential-function oracle, and confirmation-risk bounds.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod block;
pub mod confirm;
pub mod lct;
pub mod oracle;
pub mod rules;
pub mod store;
pub mod treegraph;
pub mod view;

pub use block::{Block, BlockId, Creator, DigestKey, GENESIS_ID};
pub use rules::{ProtocolParams, Strategy, WeightTag};
pub use store::{BlockStore, Ix, NIL};
pub use treegraph::{GraphError, TreeGraph};
pub use view::{ForkChoice, View, WeightBackend};
