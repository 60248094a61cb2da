pub mod align;
pub mod bench;
pub mod eval;
pub mod features;
pub mod index;
pub mod query;
pub mod selftest;
pub mod synth;
