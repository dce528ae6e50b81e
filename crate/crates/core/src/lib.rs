//! Safe-distance checking for one vehicle following another in a single lane.
//!
//! The crate provides the safe-distance rule ([`rule`]), the proper response
//! as a controller ([`response`]), closed-form and simulated kinematics
//! ([`dynamics`]), a simplex supervisor around arbitrary controllers
//! ([`supervisor`]), offline trajectory auditing ([`audit`]), seeded
//! verification campaigns ([`verify`]) and file formats ([`io`]).
//!
//! ```
//! use rss_core::{safe_distance, RssParams};
//!
//! let p = RssParams::reference();
//! let d = safe_distance(&p, 20.0, 20.0).unwrap();
//! assert!((d - 34.135).abs() < 1e-9);
//! ```

pub mod audit;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod params;
pub mod response;
pub mod rule;
pub mod state;
pub mod supervisor;
pub mod verify;

pub use error::{Error, Result};
pub use params::RssParams;
pub use rule::{condition_holds, evaluate, safe_distance, safe_distance_terms, SafetyEvaluation};
pub use state::{ControlMode, ScenarioState, Trajectory, TrajectorySample};
