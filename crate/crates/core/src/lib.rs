//! Secure multi-party training and inference of gradient-boosted decision
//! tables over vertically partitioned data.
//!
//! Each party keeps its feature columns local. Labels, gradients, split
//! scores and leaf weights only ever exist as additive shares over Z_{2^64};
//! a trusted dealer supplies the correlated randomness offline. Parties run
//! as threads over an in-process transport that accounts rounds and bytes.
//!
//! Layers, bottom up:
//!
//! * [`ring`]: 64-bit ring arithmetic and fixed-point encoding.
//! * [`transport`]: frames, mailboxes, traffic statistics.
//! * [`dealer`], [`sharing`]: offline material, sharing, Beaver products, truncation.
//! * [`math`]: reciprocal, division, exponential, sigmoid, comparison, argmin.
//! * [`perm`]: oblivious permutation and gradient bucketing.
//! * [`table`]: split search, node splitting, leaf weights, table inference.
//! * [`federation`]: parties, the boosting loop, prediction and metrics.
//! * [`oracle`]: plaintext reference implementation.
//! * [`audit`]: transcript scanning for leaked plaintexts.
//! * [`data`]: CSV ingestion, vertical partitioning, synthetic data.
//! * [`sim`]: one-thread-per-party test harness.

pub mod audit;
pub mod data;
pub mod dealer;
pub mod error;
pub mod federation;
pub mod math;
pub mod oracle;
pub mod perm;
pub mod ring;
pub mod sharing;
pub mod sim;
pub mod table;
pub mod transport;

pub use error::{Error, Result};
pub use ring::{FixedPointConfig, RingValue};
pub use sharing::{Scale, Session, SharedVector};
pub use transport::{Network, NetworkConfig, PartyId, SessionTag};
