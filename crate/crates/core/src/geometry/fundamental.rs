use nalgebra::{DMatrix, Matrix3, Vector3, SVD};

use super::{homogeneous, GeometryError, PointPair};

/// Rank-2 fundamental matrix in canonical form: unit Frobenius norm and
/// largest-magnitude entry positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Projects `m` onto rank 2 and canonicalizes it.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        Ok(Self(canonicalize(drop_smallest_singular(m))?))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Right and left null vectors: `F e_a = 0`, `F^T e_b = 0` (unit norm).
    pub fn epipoles(&self) -> (Vector3<f64>, Vector3<f64>) {
        let svd = self.0.svd(true, true);
        let k = svd.singular_values.imin();
        let ea = svd.v_t.expect("v_t requested").row(k).transpose();
        let eb = svd.u.expect("u requested").column(k).into_owned();
        (ea, eb)
    }

    /// Epipolar residual `b^T F a`.
    pub fn residual(&self, pair: &PointPair) -> f64 {
        homogeneous(&pair.b).dot(&(self.0 * homogeneous(&pair.a)))
    }
}

/// Nearest rank-2 matrix. Only the smallest singular component is
/// subtracted so the remaining entries keep their full precision.
fn drop_smallest_singular(m: Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let k = svd.singular_values.imin();
    let u = svd.u.expect("u requested").column(k).into_owned();
    let v = svd.v_t.expect("v_t requested").row(k).into_owned();
    m - u * v * svd.singular_values[k]
}

/// Scales to unit Frobenius norm; the first entry (row-major) whose
/// magnitude is within 1e-9 of the maximum is made positive.
pub(crate) fn canonicalize(m: Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    let norm = m.norm();
    if !norm.is_finite() || norm < 1e-300 {
        return Err(GeometryError::Degenerate("zero fundamental matrix".into()));
    }
    let m = m / norm;
    let max = m.amax();
    let mut sign = 1.0;
    'outer: for r in 0..3 {
        for c in 0..3 {
            if m[(r, c)].abs() >= max * (1.0 - 1e-9) {
                sign = m[(r, c)].signum();
                break 'outer;
            }
        }
    }
    Ok(m * sign)
}

/// Similarity moving the centroid to the origin with RMS distance sqrt(2).
fn normalizing_transform<'a>(pts: impl Iterator<Item = &'a nalgebra::Point2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = pts.clone().count() as f64;
    let (sx, sy) = pts.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let ms = pts.map(|p| (p.x - cx).powi(2) + (p.y - cy).powi(2)).sum::<f64>() / n;
    let rms = ms.sqrt();
    if !(rms > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Normalized eight-point estimate from at least 8 correspondences.
pub fn estimate_f_8point(pairs: &[PointPair]) -> Result<FundamentalMatrix, GeometryError> {
    if pairs.len() < 8 {
        return Err(GeometryError::NotEnoughPoints {
            needed: 8,
            got: pairs.len(),
        });
    }
    let ta = normalizing_transform(pairs.iter().map(|p| &p.a))
        .ok_or_else(|| GeometryError::Degenerate("coincident points in first view".into()))?;
    let tb = normalizing_transform(pairs.iter().map(|p| &p.b))
        .ok_or_else(|| GeometryError::Degenerate("coincident points in second view".into()))?;

    // pad to 9 rows so the SVD always yields a full 9x9 V
    let rows = pairs.len().max(9);
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (i, p) in pairs.iter().enumerate() {
        let a = ta * homogeneous(&p.a);
        let b = tb * homogeneous(&p.b);
        let (x, y) = (a.x / a.z, a.y / a.z);
        let (xp, yp) = (b.x / b.z, b.y / b.z);
        let row = [xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0];
        for (j, v) in row.into_iter().enumerate() {
            design[(i, j)] = v;
        }
    }
    let svd = SVD::new(design, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[8]];
    let second_smallest = svd.singular_values[order[1]];
    if !(second_smallest > 1e-10 * largest) {
        return Err(GeometryError::Degenerate(format!(
            "design matrix rank < 8 (sigma_8 / sigma_1 = {:e})",
            second_smallest / largest
        )));
    }
    let f = v_t.row(order[0]);
    let fn_ = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    // rank 2 in normalized coordinates, then undo the normalization
    let fn_rank2 = drop_smallest_singular(fn_);
    FundamentalMatrix::from_matrix(tb.transpose() * fn_rank2 * ta)
}

/// First-order geometric error of `pair` under `f` in squared pixels;
/// `+inf` when the gradient vanishes.
pub fn sampson_distance(f: &FundamentalMatrix, pair: &PointPair) -> f64 {
    let m = f.matrix();
    let a = homogeneous(&pair.a);
    let b = homogeneous(&pair.b);
    let fa = m * a;
    let ftb = m.transpose() * b;
    let num = b.dot(&fa);
    let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
    if den < 1e-24 {
        return f64::INFINITY;
    }
    num * num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn translation_f() -> FundamentalMatrix {
        FundamentalMatrix::from_matrix(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn canonical_form_is_unit_norm_with_positive_peak() {
        let f = FundamentalMatrix::from_matrix(Matrix3::new(1.0, 2.0, 3.0, -4.0, -9.0, 1.0, 0.5, 0.2, 0.1)).unwrap();
        assert!((f.matrix().norm() - 1.0).abs() < 1e-12);
        let m = f.matrix();
        let peak = m.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        assert!(peak > 0.0);
        assert!(m.svd(false, false).singular_values.min() < 1e-12);
    }

    #[test]
    fn pure_translation_from_varying_depth() {
        let pairs: Vec<PointPair> = (0..20)
            .map(|i| {
                let x = 37.0 * i as f64 % 640.0;
                let y = 13.0 + 29.0 * (i * i) as f64 % 480.0;
                let d = 3.0 + (i % 7) as f64 * 2.5;
                PointPair::new(x, y, x + d, y)
            })
            .collect();
        let f = estimate_f_8point(&pairs).unwrap();
        let want = translation_f();
        assert!((f.matrix() - want.matrix()).amax() < 1e-9, "{}", f.matrix());
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pairs: Vec<PointPair> = (0..8)
            .map(|i| {
                let t = i as f64;
                PointPair::new(10.0 + t, 20.0 + 2.0 * t, 30.0 + 3.0 * t, 5.0 - t)
            })
            .collect();
        assert!(matches!(estimate_f_8point(&pairs), Err(GeometryError::Degenerate(_))));
        assert!(matches!(
            estimate_f_8point(&pairs[..7]),
            Err(GeometryError::NotEnoughPoints { .. })
        ));
    }

    #[test]
    fn sampson_closed_forms() {
        let f = translation_f();
        assert!(sampson_distance(&f, &PointPair::new(10.0, 20.0, 14.0, 20.0)) < 1e-20);
        let d = sampson_distance(&f, &PointPair::new(10.0, 20.0, 14.0, 21.0));
        assert!((d - 0.5).abs() < 1e-12, "{d}");
    }

    #[test]
    fn sampson_flags_vanishing_gradient() {
        let f = translation_f();
        // F a and F^T b have no x/y component
        let rank1 = FundamentalMatrix(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0));
        assert!(sampson_distance(&rank1, &PointPair::new(3.0, 4.0, 5.0, 6.0)).is_infinite());
        assert!(sampson_distance(&f, &PointPair::new(0.0, 0.0, 0.0, 0.0)).is_finite());
    }
}
