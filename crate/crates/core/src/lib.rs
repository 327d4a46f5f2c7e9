//! Message sequence graph toolkit: the bMSC/MSG model, choice-node
//! analysis, prediction-passing synthesis of communicating finite-state
//! machines, and desk-scale verification of the result.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bmsc;
pub mod choice;
pub mod graph;
pub mod realize;
pub mod runtime;
pub mod verify;

pub use bmsc::{
    Action, ActionKind, Bmsc, BmscBuilder, EventKind, EventRef, MessageLabel, ProcessId,
};
pub use graph::{MsgGraph, NodeId};
