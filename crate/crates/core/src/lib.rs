pub mod catalog;
pub mod expr;
pub mod jet;
pub mod lde;
pub mod pde;
pub mod reduce;
pub mod run;
pub mod sampling;
pub mod util;
