pub mod consistency;
pub mod eval;
pub mod genboxes;
pub mod saliency;
pub mod synth;
pub mod tune;
