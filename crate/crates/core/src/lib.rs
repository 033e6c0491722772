//! Secure aggregation of user-held vectors, robust to users dropping out.
//!
//! The layers, bottom up:
//!
//! * [`ring`]: arithmetic mod `2^bits` for data and mod a prime for shares.
//! * [`shamir`]: threshold secret sharing over byte strings.
//! * [`crypto`]: key agreement groups, key derivation, sealed boxes, the mask PRG.
//! * [`masking`]: pairwise and self masks and their removal.
//! * [`protocol`]: user and server state machines plus the wire format.
//! * [`harness`]: an in-process orchestrator, dropout injection and benchmarks.
//!
//! The guide in `book/` walks through each layer with runnable examples.

pub mod crypto;
pub mod harness;
pub mod masking;
pub mod protocol;
pub mod ring;
pub mod shamir;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ring.md")]
    mod ring {}
    #[doc = include_str!("../../../book/src/shamir.md")]
    mod shamir {}
    #[doc = include_str!("../../../book/src/crypto.md")]
    mod crypto {}
    #[doc = include_str!("../../../book/src/masking.md")]
    mod masking {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/dropouts.md")]
    mod dropouts {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
}
