pub mod basic;
pub mod estimates;
pub mod front_law;
pub mod diagnostics;
pub mod nondegeneracy;
