use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the geometry and solvers are generic over: `f32` or `f64`.
pub trait Scalar: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant (tolerance, default, literal) into `T`.
#[inline]
pub fn sc<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("constant must be representable in the scalar type")
}
