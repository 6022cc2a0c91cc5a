pub mod data;
pub mod eval;
pub mod fit;
pub mod generate;
