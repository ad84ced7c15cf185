//! Reed-Solomon and Piggybacked-RS storage codes over GF(2^8), block-level
//! striping with minimum-download repair, and a trace-driven model of the
//! cross-rack traffic those repairs generate.

pub mod cluster_sim;
pub mod error;
pub mod gf256;
pub mod linalg;
pub mod par;
pub mod piggyback;
pub mod plan;
pub mod rs_code;
pub mod stripe_io;

pub use error::{Error, Result};
pub use gf256::Gf;
pub use linalg::{GeneratorMatrix, Matrix};
pub use piggyback::{default_partition, GroupPartition, PiggybackCode, StripePair};
pub use plan::{RepairPlan, Substripe};
pub use rs_code::{CodeParams, RsCode, Stripe};
