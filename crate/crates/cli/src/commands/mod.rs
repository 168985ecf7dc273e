pub mod eval;
pub mod gen;
pub mod oracle;
pub mod refine;
pub mod sample;
pub mod sweep;
pub mod train;
