//! Fully-connected networks, optimizers and parameter snapshots.

mod mlp;
mod optim;
mod snapshot;

pub use mlp::{Activation, Layer, NetParams};
pub use optim::{OptConfig, OptKind, OptState};
pub use snapshot::{decode_nets, encode_nets, restore, snapshot};
