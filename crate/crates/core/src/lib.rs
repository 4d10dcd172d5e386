pub mod error;
pub mod special;
pub mod mat2;
pub mod circle_calculus;
pub mod regdet;
pub mod spectra;
pub mod glue;
pub mod anomaly;
pub mod genus1;
pub mod cli;
