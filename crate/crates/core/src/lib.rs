pub mod client;
pub mod cli;
pub mod clock;
pub mod demo;
pub mod merge;
mod node;
pub mod protocol;
pub mod query;
pub mod transport;
pub mod xdp;
pub mod xqd;
