//! Rehabilitation exercise assessment engine.
//!
//! Pipeline: skeletal sessions ([`motion`]) are segmented into repetition
//! clips, measured ([`kinematics`]), scored by per-component classifiers
//! ([`prediction`]) and explained through a feature-acquisition agent
//! ([`acquisition`]) whose queried features drive the therapist-facing
//! [`analysis`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod acquisition;
pub mod analysis;
pub mod corpus;
pub mod error;
pub mod kinematics;
pub mod motion;
pub mod numerics;
pub mod prediction;
pub mod synthdata;

pub use error::{Error, Result};
pub use motion::{
    Arm, Component, Exercise, Group, Joint, Labels, MotionClip, Quality, QualityThreshold, Session,
    Side, Skeleton,
};
