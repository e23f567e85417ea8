// `!(x < y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod density;
pub mod io;
pub mod measure;
pub mod misiurewicz;
pub mod orbit;
pub mod rng;
pub mod transfer;
