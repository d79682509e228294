//! Exact-arithmetic laboratory for finite stages of the rational Urysohn
//! space, its predicate expansion class 𝒦, grey subgroups and stability
//! witness search.

pub mod dk;
pub mod formula;
pub mod grey;
pub mod isometry;
pub mod k_oracle;
pub mod metric;
pub mod patterns;
pub mod predicate;
pub mod rational;
pub mod sample;
pub mod stability;
pub mod stage;
