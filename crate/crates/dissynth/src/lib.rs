pub mod bench;
pub mod conic;
pub mod dissipativity;
pub mod hinf;
pub mod ico;
pub mod numlin;
pub mod pipeline;
pub mod plant;
pub mod sparsity;
