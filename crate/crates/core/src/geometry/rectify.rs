use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use super::{cross_matrix, homogeneous, transform_point, FundamentalMatrix, GeometryError, PointPair};

/// Projective transforms that bring both views onto common scanlines.
///
/// `h1` applies to the first view (`PointPair::a`), `h2` to the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifyingPair {
    pub h1: Matrix3<f64>,
    pub h2: Matrix3<f64>,
    pub extent: (u32, u32),
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scales `h` so that its bottom-right entry is 1 (or to unit norm when
/// that entry vanishes).
fn normalize_scale(h: Matrix3<f64>) -> Matrix3<f64> {
    let z = h[(2, 2)];
    if z.abs() > 1e-12 * h.norm() {
        h / z
    } else {
        h / h.norm()
    }
}

fn check_outside(e: &Vector3<f64>, (w, h): (u32, u32)) -> Result<(), GeometryError> {
    if e.z.abs() <= 1e-12 * e.norm() {
        return Ok(());
    }
    let (x, y) = (e.x / e.z, e.y / e.z);
    if x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64 {
        return Err(GeometryError::EpipoleInsideImage { x, y });
    }
    Ok(())
}

/// Sends epipole `e` to the point at infinity on the x-axis with as little
/// distortion as possible around the image centre.
fn epipole_to_infinity(e: &Vector3<f64>, (w, h): (u32, u32)) -> Matrix3<f64> {
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let t = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    let t_inv = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
    let et = t * e;
    let mut angle = et.y.atan2(et.x);
    // the smallest rotation that puts the epipole on the x-axis, either side
    if angle > FRAC_PI_2 {
        angle -= PI;
    } else if angle <= -FRAC_PI_2 {
        angle += PI;
    }
    let (s, c) = angle.sin_cos();
    let r = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
    let er = r * et;
    let g = if er.z.abs() > 1e-12 * er.norm() {
        let f = er.x / er.z;
        Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0 / f, 0.0, 1.0)
    } else {
        Matrix3::identity()
    };
    t_inv * g * r * t
}

/// Uncalibrated rectification: `h2` maps the second epipole to infinity and
/// `h1` is the matching transform closest to `h2` over the inliers.
///
/// The horizontal offset of `h1` is chosen so the median horizontal
/// disparity of the inliers is unchanged by rectification.
pub fn rectify(
    f: &FundamentalMatrix,
    inliers: &[PointPair],
    image_size: (u32, u32),
) -> Result<RectifyingPair, GeometryError> {
    if inliers.len() < 8 {
        return Err(GeometryError::NotEnoughPoints {
            needed: 8,
            got: inliers.len(),
        });
    }
    let (ea, eb) = f.epipoles();
    check_outside(&ea, image_size)?;
    check_outside(&eb, image_size)?;

    let h2 = epipole_to_infinity(&eb, image_size);
    let eb = eb / eb.norm();
    let m = cross_matrix(&eb) * f.matrix() + eb * eb.transpose();
    let h0 = h2 * m;

    // least squares for the first row of H_A = [[a, b, c], [0, 1, 0], [0, 0, 1]]
    let n = inliers.len();
    let mut design = nalgebra::DMatrix::<f64>::zeros(n, 3);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    let mut warped = Vec::with_capacity(n);
    for (i, p) in inliers.iter().enumerate() {
        let xa = transform_point(&h0, &p.a);
        let xb = transform_point(&h2, &p.b);
        design[(i, 0)] = xa.x;
        design[(i, 1)] = xa.y;
        design[(i, 2)] = 1.0;
        rhs[i] = xb.x;
        warped.push((xa, xb));
    }
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| GeometryError::Degenerate(e.to_string()))?;
    let (a, b) = (sol[0], sol[1]);
    if !(a.is_finite() && b.is_finite()) || a.abs() < 1e-12 {
        return Err(GeometryError::Degenerate("matching transform is singular".into()));
    }
    let raw = median(inliers.iter().map(|p| p.a.x - p.b.x).collect());
    let rect = median(warped.iter().map(|(xa, xb)| a * xa.x + b * xa.y - xb.x).collect());
    let c = raw - rect;
    let h_a = Matrix3::new(a, b, c, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let h1 = normalize_scale(h_a * h0);
    let h2 = normalize_scale(h2);
    for h in [&h1, &h2] {
        if !(h.determinant().abs() > 1e-12) {
            return Err(GeometryError::Degenerate("rectifying transform is singular".into()));
        }
    }
    Ok(RectifyingPair {
        h1,
        h2,
        extent: image_size,
    })
}

/// Row offset `y(H1 a) - y(H2 b)` for every pair.
pub fn vertical_disparities(rp: &RectifyingPair, pairs: &[PointPair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| {
            let qa = rp.h1 * homogeneous(&p.a);
            let qb = rp.h2 * homogeneous(&p.b);
            qa.y / qa.z - qb.y / qb.z
        })
        .collect()
}
