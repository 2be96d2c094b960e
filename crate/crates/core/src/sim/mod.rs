//! Nav-graph simulator: synthetic worlds, ground-truth scanning and oracle
//! agents.

pub mod oracle;
pub mod scan;
pub mod world;

pub use oracle::{
    landmark_nouns, oracle_backends, OracleDecider, OracleOrchestrator, OraclePerceiver,
    OracleScanner,
};
pub use scan::{bearing, oracle_scan};
pub use world::{
    generate_world, resolve_world, DecoyBranch, LandmarkGate, Profile, SceneObject, World,
    WorldError, WorldFile,
};
