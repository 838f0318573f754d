pub mod clt;
pub mod diagnose;
pub mod estimate;
pub mod moments;
pub mod simulate;
