//! Center-of-mass driven grasp adaptation.
//!
//! Stage I finds cylindrical handles and a visual CoM guess in a tabletop
//! range scan. Stage II lifts the object, reads the wrist wrench, solves for
//! the line of possible CoM positions and regrasps at the handle that
//! minimizes the expected torque.

pub mod cloud;
pub mod com;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod handles;
pub mod harness;
pub mod sim;

pub use error::{Error, Result};
