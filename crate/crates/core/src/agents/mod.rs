//! The three agents: program controller, input formatter, output formatter.
//!
//! Agents are stateless functions over an [`AgentContext`] and a
//! [`CompletionBackend`]. The controller decides control flow only; values
//! flow through the variable store.

pub mod backend;
mod context;
mod controller;
mod input;
mod output;

pub use backend::{
    fingerprint, BackendError, CompletionBackend, MatchSpec, RemoteBackend, ScriptEntry,
    ScriptedBackend,
};
pub use context::{AgentContext, VarSummary};
pub use controller::{
    build_controller_prompt, controller_decide, parse_decision, ControllerDecision,
    ControllerError, DecisionMenu, ParseError, Verdict,
};
pub use input::{build_formatter_prompt, format_input, parse_bindings, BindingProposal};
pub use output::{format_output, render_kind_for, OutputError, RenderedOutput};
