//! Coherent noise fields as a coordination substrate for large agent
//! populations.
//!
//! * [`noise`]: seeded octave noise, temporal modes, substreams and mappings.
//! * [`crowd`]: torus crowd motion under field-driven and baseline policies.
//! * [`action`]: per-agent start scheduling under matched mean rates.
//! * [`spawn`]: spawn placement with a replenishment controller.
//! * [`worldgen`]: template-driven layered world generation.
//! * [`metrics`]: every evaluation statistic used by the studies.

pub mod noise;
pub mod geom;
pub mod metrics;
pub mod crowd;
pub mod action;
pub mod spawn;
pub mod worldgen;
