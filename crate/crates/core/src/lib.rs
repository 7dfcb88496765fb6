pub mod cli;
pub mod laakso;
pub mod params;
pub mod profiles;
pub mod tree;
pub mod verify;
pub mod walk;
