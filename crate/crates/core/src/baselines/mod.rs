//! Clustering baselines that need no preset cluster count.

pub mod affinity;
pub mod agglomerative;

pub use affinity::{affinity_propagation, AffinityPropagationConfig, AffinityResult, Preference};
pub use agglomerative::{
    agglomerative_cluster, agglomerative_with_merges, AgglomerativeConfig, AgglomerativeResult,
    DistanceMetric, Linkage,
};
