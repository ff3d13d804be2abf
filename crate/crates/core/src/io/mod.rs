//! Configuration, persistence and orchestration.

pub mod config;
pub mod container;
pub mod pipeline;
pub mod records;

pub use config::CampaignConfig;
