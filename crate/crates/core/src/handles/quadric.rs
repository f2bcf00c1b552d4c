//! Algebraic quadric fitting with Taubin's gradient normalization, and the
//! differential geometry of the fitted surface.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, SymmetricEigen};

use crate::geometry::{orthonormal_complement, Point3, Vec3};

type Mat9 = SMatrix<f64, 9, 9>;
type Vec9 = SVector<f64, 9>;

/// f(x) = xᵀAx + bᵀx + c, stored in the original (unnormalized) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadric {
    pub a: Matrix3<f64>,
    pub b: Vec3,
    pub c: f64,
}

impl Quadric {
    pub fn value(&self, x: &Point3) -> f64 {
        let v = x.coords;
        v.dot(&(self.a * v)) + self.b.dot(&v) + self.c
    }

    pub fn gradient(&self, x: &Point3) -> Vec3 {
        2.0 * self.a * x.coords + self.b
    }

    pub fn hessian(&self) -> Matrix3<f64> {
        2.0 * self.a
    }

    /// Newton steps along the gradient from `start` onto f = 0.
    pub fn project(&self, start: &Point3) -> Option<Point3> {
        let mut x = *start;
        for _ in 0..20 {
            let g = self.gradient(&x);
            let g2 = g.norm_squared();
            if !(g2 > 0.0) {
                return None;
            }
            let step = g * (self.value(&x) / g2);
            x -= step;
            if step.norm() < 1e-13 {
                break;
            }
        }
        x.coords.iter().all(|c| c.is_finite()).then_some(x)
    }

    /// Principal curvatures at a surface point with the normal oriented
    /// toward `viewpoint`; convex-toward-viewer bending is positive.
    pub fn curvatures(&self, x: &Point3, viewpoint: &Point3) -> Option<Curvature> {
        let mut g = self.gradient(x);
        let mut h = self.hessian();
        let gn = g.norm();
        if !(gn > 1e-12) {
            return None;
        }
        if g.dot(&(viewpoint - x)) < 0.0 {
            g = -g;
            h = -h;
        }
        let n = g / gn;
        // shape operator restricted to the tangent plane
        let (t1, t2) = orthonormal_complement(&n);
        let s11 = t1.dot(&(h * t1)) / gn;
        let s12 = t1.dot(&(h * t2)) / gn;
        let s22 = t2.dot(&(h * t2)) / gn;
        let eig = SymmetricEigen::new(Matrix2::new(s11, s12, s12, s22));
        let (i1, i2) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let dir = |i: usize| (t1 * eig.eigenvectors[(0, i)] + t2 * eig.eigenvectors[(1, i)]).normalize();
        let tangent = [(eig.eigenvalues[i1], dir(i1)), (eig.eigenvalues[i2], dir(i2))];
        Some(Curvature { k1: tangent[0].0, k2: tangent[1].0, dir1: tangent[0].1, dir2: tangent[1].1, normal: n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    /// Smaller principal curvature and its direction.
    pub k1: f64,
    pub k2: f64,
    pub dir1: Vec3,
    pub dir2: Vec3,
    pub normal: Vec3,
}

/// Taubin fit: minimizes Σf(xᵢ)² subject to Σ‖∇f(xᵢ)‖² = n, solved as a
/// generalized symmetric eigenproblem. Points are centered and scaled to
/// unit RMS radius first; the result is mapped back.
pub fn fit_quadric(points: &[Point3]) -> Option<Quadric> {
    if points.len() < 9 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n;
    let rms = (points.iter().map(|p| (p.coords - centroid).norm_squared()).sum::<f64>() / n).sqrt();
    if !(rms > 0.0) {
        return None;
    }
    let s = 1.0 / rms;

    // moment matrices over the basis [x², y², z², xy, xz, yz, x, y, z] plus 1
    let mut m11 = Mat9::zeros();
    let mut m12 = Vec9::zeros();
    let mut n11 = Mat9::zeros();
    for p in points {
        let q = (p.coords - centroid) * s;
        let (x, y, z) = (q.x, q.y, q.z);
        let phi = Vec9::from([x * x, y * y, z * z, x * y, x * z, y * z, x, y, z]);
        m11 += phi * phi.transpose();
        m12 += phi;
        let gx = Vec9::from([2.0 * x, 0.0, 0.0, y, z, 0.0, 1.0, 0.0, 0.0]);
        let gy = Vec9::from([0.0, 2.0 * y, 0.0, x, 0.0, z, 0.0, 1.0, 0.0]);
        let gz = Vec9::from([0.0, 0.0, 2.0 * z, 0.0, x, y, 0.0, 0.0, 1.0]);
        n11 += gx * gx.transpose() + gy * gy.transpose() + gz * gz.transpose();
    }
    m11 /= n;
    m12 /= n;
    n11 /= n;
    // the constant term is eliminated in closed form: c = −m12ᵀa (m22 = 1)
    let reduced = m11 - m12 * m12.transpose();
    // planar data make N singular; a tiny ridge keeps the Cholesky alive
    let ridge = 1e-12 * n11.trace();
    let chol = (n11 + Mat9::identity() * ridge).cholesky()?;
    let l_inv = chol.l().try_inverse()?;
    let sym = &l_inv * reduced * l_inv.transpose();
    let sym = (sym + sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let y = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let coef = l_inv.transpose() * y;
    let c_norm = -m12.dot(&coef);

    // back to world coordinates, q = s(x − m)
    let a_n = Matrix3::new(
        coef[0], coef[3] / 2.0, coef[4] / 2.0,
        coef[3] / 2.0, coef[1], coef[5] / 2.0,
        coef[4] / 2.0, coef[5] / 2.0, coef[2],
    );
    let b_n = Vec3::new(coef[6], coef[7], coef[8]);
    let a = a_n * (s * s);
    let b = b_n * s - 2.0 * a * centroid;
    let c = centroid.dot(&(a * centroid)) - s * b_n.dot(&centroid) + c_norm;
    let quad = Quadric { a, b, c };
    quad.a.iter().chain(quad.b.iter()).all(|v| v.is_finite()).then_some(quad)
}
