pub mod couple;
pub mod exact;
pub mod generate;
pub mod preset;
pub mod simulate;
pub mod skew;
pub mod sweep;
