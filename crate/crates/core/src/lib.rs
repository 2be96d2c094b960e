//! Instruction-following navigation over waypoint graphs: ego-centric
//! semantic maps, a query-driven perception loop and a branch-diverse search
//! tree that narrows the candidate set handed to the decision agent.

pub mod agents;
pub mod episode;
pub mod graph;
pub mod harness;
pub mod llm;
pub mod mcts;
pub mod memory;
pub mod perception;
pub mod semantic_map;
pub mod sim;

pub use agents::{AgentBackends, AgentError, AgentRole, Decision, Observation};
pub use episode::{Episode, EpisodeError};
pub use graph::{GraphError, NavGraph, Waypoint};
pub use mcts::{ScoredCandidate, SearchTree, SelectionParams, TreeError};
pub use memory::{MemoryBank, MultimodalContext};
pub use perception::{LoopConfig, PerceptionOutcome, SemanticValueMap, VisualQuery};
pub use semantic_map::{heading_angle, BBox, PanoramaLayout, SemanticMap};
