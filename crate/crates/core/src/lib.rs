//! Track driving with sampling-based model-predictive control over learned or
//! synthesized costmaps.
//!
//! The crate covers the vehicle model, costmap storage and track construction,
//! the MPPI controller, ground-truth label generation, costmap provider
//! simulation, a closed-loop episode harness and evaluation utilities.

pub mod autolabel;
pub mod costmap;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod mppi;
pub mod perception;
pub mod track;

pub use costmap::{build_track_costmap, Centerline, CostField, CostMapGrid, GridFrame};
pub use dynamics::{rollout, step, Control, VehicleParams, VehicleState};
pub use error::{Error, Result};
pub use geometry::{Pose2, TransformDirection};
pub use mppi::{ControlSequence, MppiController, MppiParams, StepDiagnostics};
