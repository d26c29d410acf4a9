//! Voxel-to-world geometry.
//!
//! An [`AffineMatrix`] maps homogeneous voxel indices `[i, j, k, 1]` to
//! physical RAS+ coordinates in millimetres. Voxel values are located at
//! voxel centres, so index `(0, 0, 0)` is the centre of the first voxel.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

/// Smallest |det| of the linear block accepted as invertible.
pub const MIN_DETERMINANT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMatrix(Matrix4<f64>);

impl Default for AffineMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineMatrix {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidAffine(format!(
                "last row must be [0, 0, 0, 1], got {:?}",
                [last[0], last[1], last[2], last[3]]
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAffine("non-finite entry".into()));
        }
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        if det.abs() <= MIN_DETERMINANT {
            return Err(Error::SingularAffine(det.abs()));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::new(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    /// Row-major 16 values, the serialized form used in pipeline parameters.
    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn from_parts(linear: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::new(m)
    }

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn diagonal(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        Self::new(Matrix4::from_diagonal(&Vector4::new(sx, sy, sz, 1.0)))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn index_to_physical(&self, index: [f64; 3]) -> [f64; 3] {
        let p = self.linear() * Vector3::from(index) + self.translation();
        [p.x, p.y, p.z]
    }

    pub fn physical_to_index(&self, point: [f64; 3]) -> Result<[f64; 3]> {
        let linear = self.linear();
        let lu = linear.lu();
        let rhs = Vector3::from(point) - self.translation();
        let mut x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularAffine(linear.determinant().abs()))?;
        // One step of iterative refinement.
        let residual = rhs - linear * x;
        if let Some(dx) = lu.solve(&residual) {
            x += dx;
        }
        Ok([x.x, x.y, x.z])
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .0
            .try_inverse()
            .ok_or_else(|| Error::SingularAffine(self.linear().determinant().abs()))?;
        let mut inv = inv;
        inv.set_row(3, &nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0));
        Self::new(inv)
    }

    /// Euclidean norms of the three direction columns.
    pub fn spacing(&self) -> [f64; 3] {
        let l = self.linear();
        [l.column(0).norm(), l.column(1).norm(), l.column(2).norm()]
    }

    /// Product `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &AffineMatrix) -> Result<Self> {
        Self::new(self.0 * other.0)
    }

    /// Affine of the sub-grid whose index `(0,0,0)` is `offset` in this grid.
    pub fn shifted(&self, offset: [f64; 3]) -> Self {
        let t = self.translation() + self.linear() * Vector3::from(offset);
        let mut m = self.0;
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self(m)
    }

    pub fn approx_eq(&self, other: &AffineMatrix, tol: f64) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Orientation letters such as `"RAS"`: the physical direction each voxel
    /// axis increases towards.
    pub fn orientation_code(&self) -> String {
        let l = self.linear();
        (0..3)
            .map(|axis| {
                let col = l.column(axis);
                let (dominant, _) = col
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
                let positive = col[dominant] >= 0.0;
                match (dominant, positive) {
                    (0, true) => 'R',
                    (0, false) => 'L',
                    (1, true) => 'A',
                    (1, false) => 'P',
                    (2, true) => 'S',
                    _ => 'I',
                }
            })
            .collect()
    }
}

pub fn index_to_physical(affine: &AffineMatrix, index: [f64; 3]) -> [f64; 3] {
    affine.index_to_physical(index)
}

pub fn physical_to_index(affine: &AffineMatrix, point: [f64; 3]) -> Result<[f64; 3]> {
    affine.physical_to_index(point)
}

pub fn spacing(affine: &AffineMatrix) -> [f64; 3] {
    affine.spacing()
}

/// Rotation matrix for intrinsic angles (degrees) composed as `Rz * Ry * Rx`.
pub fn rotation_zyx(degrees: [f64; 3]) -> Matrix3<f64> {
    let [ax, ay, az] = degrees.map(f64::to_radians);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ax.cos(), -ax.sin(), 0.0, ax.sin(), ax.cos());
    let ry = Matrix3::new(ay.cos(), 0.0, ay.sin(), 0.0, 1.0, 0.0, -ay.sin(), 0.0, ay.cos());
    let rz = Matrix3::new(az.cos(), -az.sin(), 0.0, az.sin(), az.cos(), 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn index_to_physical_examples() {
        let id = AffineMatrix::identity();
        assert_eq!(id.index_to_physical([0.0; 3]), [0.0; 3]);
        let d = AffineMatrix::diagonal(2.0, 2.0, 2.0).unwrap();
        assert_eq!(d.index_to_physical([1.0; 3]), [2.0; 3]);
        let t = AffineMatrix::from_rows([
            [1.0, 0.0, 0.0, 10.0],
            [0.0, 1.0, 0.0, -5.0],
            [0.0, 0.0, 1.0, 3.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        // 1+10, 2-5, 3+3
        assert_eq!(t.index_to_physical([1.0, 2.0, 3.0]), [11.0, -3.0, 6.0]);
    }

    #[test]
    fn physical_to_index_examples() {
        let id = AffineMatrix::identity();
        assert_eq!(id.physical_to_index([0.0; 3]).unwrap(), [0.0; 3]);
        let d = AffineMatrix::diagonal(2.0, 2.0, 2.0).unwrap();
        assert!(close(d.physical_to_index([2.0; 3]).unwrap(), [1.0; 3], 1e-15));
    }

    #[test]
    fn singular_affine_rejected() {
        let err = AffineMatrix::diagonal(1.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::SingularAffine(_)));
        let bad_row = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 2.0));
        assert!(matches!(AffineMatrix::new(bad_row), Err(Error::InvalidAffine(_))));
    }

    #[test]
    fn spacing_examples() {
        let a = AffineMatrix::diagonal(0.66, 0.66, 0.30).unwrap();
        assert_eq!(a.spacing(), [0.66, 0.66, 0.30]);
        assert_eq!(AffineMatrix::identity().spacing(), [1.0; 3]);
        // Column-norm oracle: rotating diag(2,3,4) keeps column lengths.
        let r = rotation_zyx([0.0, 0.0, 45.0]) * Matrix3::from_diagonal(&Vector3::new(2.0, 3.0, 4.0));
        let a = AffineMatrix::from_parts(r, Vector3::zeros()).unwrap();
        assert!(close(a.spacing(), [2.0, 3.0, 4.0], 1e-12));
    }

    #[test]
    fn orientation_codes() {
        assert_eq!(AffineMatrix::identity().orientation_code(), "RAS");
        assert_eq!(AffineMatrix::diagonal(-1.0, 1.0, 1.0).unwrap().orientation_code(), "LAS");
        assert_eq!(AffineMatrix::diagonal(-1.0, -1.0, 1.0).unwrap().orientation_code(), "LPS");
    }

    #[test]
    fn shifted_moves_origin_to_offset() {
        let a = AffineMatrix::from_rows([
            [0.0, -2.0, 0.0, 5.0],
            [1.5, 0.0, 0.0, 1.0],
            [0.0, 0.0, 3.0, -4.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let s = a.shifted([1.0, 2.0, 3.0]);
        assert_eq!(s.index_to_physical([0.0; 3]), a.index_to_physical([1.0, 2.0, 3.0]));
    }

    fn arb_affine() -> impl Strategy<Value = AffineMatrix> {
        (prop::array::uniform9(-5.0f64..5.0), prop::array::uniform3(-100.0f64..100.0))
            .prop_filter_map("singular", |(l, t)| {
                let linear = Matrix3::from_row_slice(&l);
                if linear.determinant().abs() <= 1e-6 {
                    return None;
                }
                AffineMatrix::from_parts(linear, Vector3::from(t)).ok()
            })
    }

    proptest! {
        #[test]
        fn physical_index_roundtrip(a in arb_affine(), p in prop::array::uniform3(-100.0f64..100.0)) {
            let idx = a.physical_to_index(p).unwrap();
            let back = a.index_to_physical(idx);
            prop_assert!(close(back, p, 1e-9), "{:?} vs {:?}", back, p);
        }

        #[test]
        fn spacing_rotation_invariant(s in prop::array::uniform3(0.1f64..5.0), deg in prop::array::uniform3(-180.0f64..180.0)) {
            let base = Matrix3::from_diagonal(&Vector3::from(s));
            let rotated = AffineMatrix::from_parts(rotation_zyx(deg) * base, Vector3::zeros()).unwrap();
            prop_assert!(close(rotated.spacing(), s, 1e-9));
        }
    }
}
