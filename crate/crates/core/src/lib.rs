//! Model of a dynamically resizable die-stacked DRAM cache.
//!
//! The crate covers the cache itself ([`cache`], [`geometry`]), bank
//! remapping when banks are powered down ([`remap`], [`rrt`]), dirty-row
//! tracking ([`hier`]), the power-down/up engines ([`transition`]), a DRAM
//! power model ([`power`]), a bank utility predictor ([`bup`]), a closed-form
//! transition-cost model ([`analytic`]), synthetic and file-based workloads
//! ([`workload`]) and the experiment drivers ([`engine`]).

pub mod analytic;
pub mod bup;
pub mod cache;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod hier;
pub mod kv;
pub mod power;
pub mod remap;
pub mod rrt;
pub mod system;
pub mod transition;
pub mod workload;

pub use error::{Error, Result};
pub use geometry::{CacheGeometry, DecodedAddress};
pub use remap::{ActiveBankMask, Remapper, Scheme};
pub use rrt::RegionRemapTable;
