// Negated comparisons deliberately reject NaN in config validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod buscodec;
pub mod environment;
pub mod faults;
pub mod forcemoment;
pub mod frames;
pub mod harness;
pub mod refctrl;
pub mod rigidbody;
pub mod sensors;
pub mod simloop;
