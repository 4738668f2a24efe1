pub mod config;
pub mod init;
pub mod observation;
pub mod refine;
pub mod synthetic;
