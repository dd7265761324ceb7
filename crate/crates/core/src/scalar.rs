use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Floating-point precision of a computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "sp")]
    Single,
    #[serde(rename = "dp")]
    Double,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    /// Relative Frobenius tolerance used when comparing against the oracle.
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::Single => 1e-4,
            Precision::Double => 1e-10,
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Single => "sp",
            Precision::Double => "dp",
        })
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "single" | "f32" => Ok(Precision::Single),
            "dp" | "double" | "f64" => Ok(Precision::Double),
            other => Err(format!("unknown precision `{other}` (expected sp or dp)")),
        }
    }
}

/// Element type of every matrix in a computation (`f32` or `f64`).
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + FromStr
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const PRECISION: Precision;

    /// Storage used for lock-free accumulation in atomic tiling.
    type Atomic: Send + Sync;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_bits_u64(self) -> u64;

    fn atomic_new(v: Self) -> Self::Atomic;
    fn atomic_add(slot: &Self::Atomic, v: Self);
    fn atomic_load(slot: &Self::Atomic) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty, $atomic:ty, $prec:expr) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const PRECISION: Precision = $prec;

            type Atomic = $atomic;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn to_bits_u64(self) -> u64 {
                self.to_bits() as u64
            }

            fn atomic_new(v: Self) -> Self::Atomic {
                <$atomic>::new(v.to_bits())
            }

            #[inline]
            fn atomic_add(slot: &Self::Atomic, v: Self) {
                let mut cur = slot.load(Ordering::Relaxed);
                loop {
                    let next = (<$t>::from_bits(cur) + v).to_bits();
                    match slot.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed) {
                        Ok(_) => return,
                        Err(actual) => cur = actual,
                    }
                }
            }

            #[inline]
            fn atomic_load(slot: &Self::Atomic) -> Self {
                <$t>::from_bits(slot.load(Ordering::Acquire))
            }
        }
    };
}

impl_scalar!(f32, AtomicU32, Precision::Single);
impl_scalar!(f64, AtomicU64, Precision::Double);
