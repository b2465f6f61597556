pub mod client;
pub mod config;
pub mod crypto;
pub mod harness;
pub mod mail;
pub mod net;
pub mod persist;
pub mod placement;
pub mod protocol;
pub mod storage;
pub mod system;
