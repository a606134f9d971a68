//! Self-play arena for the "Who Is the Spy" visual game: symbolic scene
//! pairs, the two-stage game engine, reward and loss arithmetic, the stage
//! scheduler, scripted and remote policies, and a run harness.

pub mod agents;
pub mod answer;
pub mod chart;
pub mod claims;
pub mod dataset;
pub mod game;
pub mod harness;
pub mod losses;
pub mod prompts;
pub mod protocol;
pub mod rewards;
pub mod scene;
pub mod scheduler;
pub mod seed;
