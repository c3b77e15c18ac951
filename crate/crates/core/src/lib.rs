pub mod backend;
pub mod client;
pub mod codec;
pub mod scenario;
pub mod sim;
pub mod sniffer;
pub mod verifier;
