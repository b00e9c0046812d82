mod bench;
mod eval;
mod inspect;
mod sr;
mod train;

pub use bench::{bench, BenchArgs};
pub use eval::{eval, EvalArgs};
pub use inspect::{inspect, InspectArgs};
pub use sr::{sr, SrArgs};
pub use train::{train, TrainArgs};

/// Calls `$f::<f32>` or `$f::<f64>` according to `--precision`.
macro_rules! by_precision {
    ($global:expr, $f:ident($($arg:expr),*)) => {
        match $global.precision() {
            $crate::Precision::F32 => $f::<f32>($($arg),*),
            $crate::Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}
pub(crate) use by_precision;
