//! Degradation dictionary with its query and injection modules.

pub mod cp;
pub mod dictionary;
pub mod inject;
pub mod query;

pub use cp::{cp_conv, cp_factors, kronecker_slices, CpFactors, CpProjectors, CpWeights};
pub use dictionary::NdrDictionary;
pub use inject::{affine_inject, di_inject, DegradationInjection};
pub use query::{dq_affinity, dq_query, ApproxDegradation, DegradationQuery};
