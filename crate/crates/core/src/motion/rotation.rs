use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::MotionError;

/// First two columns of a rotation matrix, before orthonormalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Rot6D {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self { a, b }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::x(), Vector3::y())
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a.x, self.a.y, self.a.z, self.b.x, self.b.y, self.b.z]
    }

    pub fn to_matrix(&self) -> Result<Matrix3<f64>, MotionError> {
        rot6d_to_matrix(self)
    }
}

/// Rescales `v` by the power of two that brings its largest component into
/// `[1, 2)`. Exact in floating point, so `k * v` and `v` map to the same
/// vector whenever `k` is a power of two.
fn pow2_normalize(v: &Vector3<f64>) -> Vector3<f64> {
    let m = v.amax();
    if !m.is_normal() {
        return *v;
    }
    let exp = ((m.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    v * 2f64.powi(-exp)
}

/// Gram-Schmidt decoding: `c1 = a/|a|`, `c2 = normalize(b - (b.c1) c1)`,
/// `c3 = c1 x c2`.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<Matrix3<f64>, MotionError> {
    if !(r.a.iter().chain(r.b.iter()).all(|x| x.is_finite())) {
        return Err(MotionError::DegenerateRotation("non-finite component"));
    }
    if r.a.norm() <= 1e-8 {
        return Err(MotionError::DegenerateRotation("first column has zero length"));
    }
    let a = pow2_normalize(&r.a);
    let b = pow2_normalize(&r.b);
    let c1 = a / a.norm();
    let u = b - c1 * b.dot(&c1);
    let un = u.norm();
    if b.norm() <= 1e-8 || un <= 1e-8 * b.norm() {
        return Err(MotionError::DegenerateRotation("columns are parallel"));
    }
    let c2 = u / un;
    let c3 = c1.cross(&c2);
    Ok(Matrix3::from_columns(&[c1, c2, c3]))
}

pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Result<Rot6D, MotionError> {
    let err = (m.transpose() * m - Matrix3::identity()).amax();
    let det = m.determinant();
    if !err.is_finite() || err > 1e-6 || (det - 1.0).abs() > 1e-6 {
        return Err(MotionError::NotARotation(err.max((det - 1.0).abs())));
    }
    Ok(Rot6D::new(m.column(0).into_owned(), m.column(1).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent classical Gram-Schmidt on raw columns, no rescaling.
    fn gram_schmidt_oracle(a: [f64; 3], b: [f64; 3]) -> [[f64; 3]; 3] {
        let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        let na = dot(a, a).sqrt();
        let e1 = [a[0] / na, a[1] / na, a[2] / na];
        let p = dot(b, e1);
        let u = [b[0] - p * e1[0], b[1] - p * e1[1], b[2] - p * e1[2]];
        let nu = dot(u, u).sqrt();
        let e2 = [u[0] / nu, u[1] / nu, u[2] / nu];
        let e3 = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        [e1, e2, e3]
    }

    fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
    }

    #[test]
    fn identity_and_scaled_identity() {
        let m = rot6d_to_matrix(&Rot6D::identity()).unwrap();
        assert_eq!(m, Matrix3::identity());
        let m = rot6d_to_matrix(&Rot6D::new(Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 3.0, 0.0)))
            .unwrap();
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn matches_gram_schmidt_oracle() {
        let m = rot6d_to_matrix(&Rot6D::new(Vector3::new(1.0, 1.0, 0.0), Vector3::new(0.0, 1.0, 0.0)))
            .unwrap();
        let o = gram_schmidt_oracle([1.0, 1.0, 0.0], [0.0, 1.0, 0.0]);
        for c in 0..3 {
            for r in 0..3 {
                assert!((m[(r, c)] - o[c][r]).abs() < 1e-12);
            }
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m[(0, 0)] - s).abs() < 1e-15 && (m[(0, 1)] + s).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let zero = Rot6D::new(Vector3::zeros(), Vector3::y());
        assert!(matches!(rot6d_to_matrix(&zero), Err(MotionError::DegenerateRotation(_))));
        let parallel = Rot6D::new(Vector3::x(), Vector3::new(2.0, 0.0, 0.0));
        assert!(matches!(rot6d_to_matrix(&parallel), Err(MotionError::DegenerateRotation(_))));
        let nan = Rot6D::new(Vector3::new(f64::NAN, 0.0, 0.0), Vector3::y());
        assert!(rot6d_to_matrix(&nan).is_err());
    }

    #[test]
    fn encode_extracts_columns() {
        let r6 = matrix_to_rot6d(&Matrix3::identity()).unwrap();
        assert_eq!(r6, Rot6D::identity());
        let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let r6 = matrix_to_rot6d(&yaw).unwrap();
        assert_eq!(r6.a, yaw.column(0).into_owned());
        assert_eq!(r6.b, yaw.column(1).into_owned());
        assert!(matches!(
            matrix_to_rot6d(&(Matrix3::identity() * 2.0)),
            Err(MotionError::NotARotation(_))
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(matrix_to_rot6d(&reflection).is_err());
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = random_rotation(&mut rng);
            let back = rot6d_to_matrix(&matrix_to_rot6d(&m).unwrap()).unwrap();
            assert!((back - m).amax() < 1e-6);
        }
    }

    #[test]
    fn decoded_matrices_are_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let r = Rot6D::new(
                Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
            );
            let m = rot6d_to_matrix(&r).unwrap();
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-6);
            assert!((m.determinant() - 1.0).abs() < 1e-6);
            let c1 = r.a.normalize();
            assert!((m.column(0) - c1).amax() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance_is_exact_for_power_of_two_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let r = Rot6D::new(
                Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
            );
            let k = 2f64.powi(rng.random_range(-20..20));
            let base = rot6d_to_matrix(&r).unwrap();
            let scaled = rot6d_to_matrix(&Rot6D::new(r.a * k, r.b * k)).unwrap();
            assert_eq!(base, scaled);
            // arbitrary positive scales are equal up to the rounding of k*a itself
            let k = rng.random_range(0.01..100.0);
            let scaled = rot6d_to_matrix(&Rot6D::new(r.a * k, r.b * k)).unwrap();
            assert!((base - scaled).amax() < 1e-12);
        }
    }
}
