//! Operational semantics: threads executing roles against a network
//! controlled by a Dolev-Yao intruder.

mod derive;
mod enumerate;
mod executable;
mod run;

pub use derive::{decryption_key, derive, Knowledge};
pub use enumerate::{enabled_events, enumerate_runs, enumerate_shared, receive_candidates, RunIter};
pub use executable::{executable, matches_in_order, ActionKind, ActionPattern};
pub use run::{
    initial_intruder_knowledge, intruder_agent, intruder_fresh, Event, GroundAction, Run, Thread,
    ThreadId, INTRUDER,
};
