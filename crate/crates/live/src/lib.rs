//! Live node: beacon discovery over UDP broadcast, bundle-exchange sessions
//! over TCP, an outbox/inbox directory interface for applications and a
//! persisted bundle store. Routing decisions come from `oppdtn-core`.

pub mod beacon;
pub mod daemon;
pub mod node;
pub mod persist;
pub mod session;
pub mod wire;

pub use beacon::Beacon;
pub use node::{Clock, ManualClock, Node, NodeConfig, SystemClock};
pub use session::{run_session, SessionError, SessionOutcome};
pub use wire::{Frame, WireError};
