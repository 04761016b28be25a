//! Incremental federation of reservoir sufficient statistics.
//!
//! Clients run the shared reservoir over their own sequences and send the
//! cumulative covariance `Φ_c` (or the readout pair `A_c`, `B_c`) as RSMX
//! frames; the server sums them in ascending client id and returns the
//! global precision (or readout). Summed statistics make the global model
//! identical to one trained on the pooled trajectories.

pub mod client;
pub mod exchange;
pub mod message;
pub mod rsmx;
pub mod server;
pub mod simulate;

pub use client::{Client, ClientRidge};
pub use exchange::MessageDirectory;
pub use message::{parse_message_file_name, ClientUpdateMessage, GlobalKind, GlobalModelMessage, PayloadKind};
pub use rsmx::{decode as decode_rsmx, encode as encode_rsmx, CodecError, Role};
pub use server::{global_covariance, server_aggregate, server_aggregate_readout, AggregationPolicy, AggregationSummary, Server, ServerModel};
pub use simulate::{model_from_global, simulate, ClientPayload, Exchange, FederationRun, RoundLog, RunReport, SimulationOutcome};
