#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` is the NaN-rejecting form.

pub mod capture;
pub mod controller;
pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod kinematics;
pub mod service;
pub mod wire;
