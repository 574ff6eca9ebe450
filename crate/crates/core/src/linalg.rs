//! Small fixed-size complex linear algebra shared by every module.

use nalgebra::{Matrix3, Vector3};
pub use num_complex::Complex64 as C64;

pub type Vec3 = Vector3<f64>;
pub type CVec3 = Vector3<C64>;
pub type Dyad = Matrix3<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn to_complex(v: &Vec3) -> CVec3 {
    v.map(c)
}

pub fn dyad_identity(s: C64) -> Dyad {
    Dyad::from_diagonal_element(s)
}

/// Entrywise imaginary part, as a complex dyad with zero imaginary entries.
pub fn imag_part(g: &Dyad) -> Dyad {
    g.map(|z| c(z.im))
}

pub fn frobenius(g: &Dyad) -> f64 {
    g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Frobenius distance `|a - b| / max(|a|, |b|)`.
pub fn rel_diff(a: &Dyad, b: &Dyad) -> f64 {
    let scale = frobenius(a).max(frobenius(b));
    if scale == 0.0 {
        0.0
    } else {
        frobenius(&(a - b)) / scale
    }
}

pub fn max_abs(g: &Dyad) -> f64 {
    g.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    CVec3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

/// Plain bilinear dot product (no conjugation).
pub fn dot(a: &CVec3, b: &CVec3) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Pairwise (tree) summation. The reduction order depends only on the length
/// of the input, never on how the terms were produced.
pub fn pairwise_sum<T>(items: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + Default,
{
    match items.len() {
        0 => T::default(),
        1 => items[0],
        n => {
            let (a, b) = items.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Frobenius norm of a dyad, exposed for trait-object friendly callers.
pub fn norm(g: &Dyad) -> f64 {
    frobenius(g)
}
