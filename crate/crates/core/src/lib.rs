pub mod env;
pub mod episode;
pub mod error;
pub mod estimation;
pub mod planning;
pub mod po;
pub mod sda;
pub mod ssp;
pub mod table;
pub mod harness;
pub mod oracle;
