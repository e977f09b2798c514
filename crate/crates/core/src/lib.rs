//! Greedy part assignment for multi-person 2D pose estimation.
//!
//! Given per-class keypoint candidates with unary confidences and a pairwise
//! association model, [`assemble`] groups the candidates into person
//! clusters by walking the kinematic chain from head to ankles.
//!
//! Besides the assignment pipeline the crate carries what is needed to check
//! it: an exhaustive [`oracle`] for small instances, a synthetic scene
//! generator ([`synthgen`]), PCKh evaluation ([`eval`]) and a runtime
//! scaling / ablation [`harness`].

pub mod assignment;
pub mod association;
pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod harness;
pub mod io;
pub mod model;
pub mod oracle;
pub mod synthgen;

pub use assignment::{
    assemble, assemble_traced, assign_part_class, cluster_affinity, estimate_head_length,
    proximal_clusters, seed_clusters, spawn_clusters, suppress_hallucinations, AssignmentResult,
    PersonCluster, Suppressed, Trace,
};
pub use association::{AssociationProvider, SparseAssociation};
pub use clustering::{kmeans, reduce_candidates, ClusterResult};
pub use config::{AssignmentConfig, ConfigFile, Tables};
pub use error::{Error, Result};
pub use eval::{match_persons, pckh, PckhReport};
pub use model::{
    chain_order, expected_radius, predecessors, AnthropometricTable, Candidate, CandidateId,
    Detections, PartClass, Point, PredecessorTable,
};
pub use oracle::{exhaustive_assign, OracleInstance};
pub use synthgen::{generate_scene, geometric_association, render_detections, NoiseConfig, SceneGroundTruth};
