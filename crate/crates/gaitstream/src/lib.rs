pub mod dsp;
pub mod features;
pub mod learn;
pub mod synthgait;
pub mod session;
pub mod stream;
