//! Execute stage: verifier gate and effector dispatch.

mod erlang;
mod executor;
mod verifier;

pub use erlang::erlang_c_response_time;
pub use executor::{effector_command, execute, ExecuteError};
pub use verifier::{
    alternatives, best_alternative, predict, soundness_sweep, soundness_sweep_seq,
    structural_check, sweep_states, verify, Reason, SweepReport, Verdict, SWEEP_CANDIDATES,
};
