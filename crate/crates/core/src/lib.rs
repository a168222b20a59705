pub mod error;
pub mod numerics;
pub mod penalty;
pub mod loss;
pub mod solver;
pub mod asymptotics;
pub mod datagen;
pub mod metrics;
pub mod experiments;
