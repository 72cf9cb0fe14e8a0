//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Training runs in `f32`; gradient checks run in `f64`. Everything in
//! [`crate::nn`] and the model modules is written against [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::distr::uniform::SampleUniform;

pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + SampleUniform
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Name written to checkpoint manifests.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn lit(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn le_round_trip() {
        let mut buf = Vec::new();
        (-1.25f32).write_le(&mut buf);
        std::f64::consts::PI.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), -1.25);
        assert_eq!(f64::read_le(&buf[4..]), std::f64::consts::PI);
    }
}
