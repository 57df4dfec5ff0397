//! Core of the `oppdtn` toolkit: bundle and endpoint types, the per-node
//! bundle store, the routing agents (dLife, PROPHET, Epidemic), a
//! deterministic contact-driven simulator, trace I/O and metric reduction.

pub mod config;
pub mod contact;
pub mod metrics;
pub mod routing;
pub mod sim;
pub mod store;
pub mod trace;
pub mod types;

pub use contact::{normalize_contacts, ContactEvent};
pub use routing::{RouterKind, RoutingMeta};
pub use store::{BundleStore, Refusal, StoreEntry, StoredBundle};
pub use types::{Bundle, BundleId, EndpointId, SimClock};
