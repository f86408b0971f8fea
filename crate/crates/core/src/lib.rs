pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod ctc;
pub mod g2p;
pub mod layers;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod tts;
