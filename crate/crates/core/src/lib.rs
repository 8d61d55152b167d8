//! Experiential memory for a walking companion robot.
//!
//! Recording side: [`memory`] stores each session as a dated folder holding
//! `events.json` and one image per event, [`emotion`] turns chat messages
//! into pictogram replies, and [`recorder`] ties the two together.
//!
//! Remembering side: [`select`] picks representative scenes, [`describe`]
//! turns them into sentences and [`summarize`] has a text generator write
//! the diary. External models sit behind the traits in [`providers`].

pub mod config;
pub mod describe;
pub mod emotion;
pub mod error;
pub mod fixture;
pub mod memory;
pub mod providers;
pub mod recorder;
pub mod select;
pub mod summarize;
pub mod text;

pub use config::Config;
pub use error::{PipelineError, Stage};
