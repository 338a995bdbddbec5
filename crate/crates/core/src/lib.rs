//! Monitor-Synthesize-Execute self-adaptation over shared knowledge, with a
//! simulated brownout web-server farm as the managed system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod client;
pub mod config;
pub mod context;
pub mod decision;
pub mod execute;
pub mod harness;
pub mod knowledge;
pub mod monitor;
pub mod par;
pub mod sim;
pub mod synthesize;
pub mod trace;

pub use config::SystemConfig;
pub use context::{ContextSnapshot, Objective};
pub use decision::{decode_decision, encode_decision, Action, AdaptationDecision, DecodeError};
pub use trace::ArrivalTrace;
