pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod genericity;
pub mod jsonmat;
pub mod linalg;
pub mod reservoir;
pub mod spectral;
pub mod superop;
