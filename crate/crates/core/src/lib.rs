#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bg_decomposition;
pub mod cli;
pub mod exponents;
pub mod kakeya_lab;
pub mod lower_bound_examples;
pub mod numerics;
pub mod oscillatory_core;
pub mod poly;
pub mod sparse_cover;
pub mod surface_geometry;
