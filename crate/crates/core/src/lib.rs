//! Context-aware multi-label ownership inference over a household object map,
//! with split-conformal uncertainty and an active questioning loop.

pub mod acquisition;
pub mod baselines;
pub mod conformal;
pub mod context;
pub mod datagen;
pub mod evaluation;
pub mod history;
pub mod interaction;
pub mod llm;
pub mod map;
pub mod prompts;
pub mod roster;
pub mod scores;
pub mod scoring;
pub mod state;
pub mod truth;
