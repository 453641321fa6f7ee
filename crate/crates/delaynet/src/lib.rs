//! Queueing-network delay modelling toolkit.
//!
//! Two halves, joined by a shared data model:
//!
//! * a packet-level discrete-event simulator ([`sim`]) that produces
//!   ground-truth per-path mean delays under FIFO/SP/WFQ/DRR queue
//!   scheduling, driven by random scenarios ([`netgraph`]) and traffic
//!   matrices ([`traffic`]);
//! * a message-passing neural model ([`gnn`]) over queues, links and
//!   paths that learns to predict those delays, built on a small
//!   reverse-mode autodiff core ([`tensor`]) and trained by [`train`].
//!
//! Datasets of simulated samples are produced and stored by
//! [`dataset`].

pub mod codec;
pub mod dataset;
pub mod gnn;
pub mod netgraph;
pub mod seeds;
pub mod sim;
pub mod tensor;
pub mod traffic;
pub mod train;

#[cfg(doctest)]
mod booktests {
    //! Keeps the guide's runnable snippets compiling; each chapter with
    //! code is included here as doc-tests.
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
}
