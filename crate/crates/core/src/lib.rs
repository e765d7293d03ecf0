pub mod augment;
pub mod corpus;
pub mod geometry;
pub mod grasp;
pub mod latent;
pub mod parallel;
pub mod tensor;
