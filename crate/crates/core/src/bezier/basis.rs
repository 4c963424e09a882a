use nalgebra::DMatrix;

use crate::Vec3;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// `n! / (n - c)!`
pub fn falling_factorial(n: usize, c: usize) -> f64 {
    if c > n {
        return 0.0;
    }
    ((n - c + 1)..=n).map(|x| x as f64).product()
}

/// Bernstein-to-monomial matrix on local time `[0, τ]`: entry `(n, i)` is the
/// coefficient of `tⁿ` in `b_{i,D}(t) = C(D,i) (t/τ)^i (1 − t/τ)^{D−i}`.
pub fn bernstein_basis(degree: usize, duration: f64) -> DMatrix<f64> {
    let d = degree;
    DMatrix::from_fn(d + 1, d + 1, |n, i| {
        if n < i {
            0.0
        } else {
            let sign = if (n - i) % 2 == 0 { 1.0 } else { -1.0 };
            binomial(d, i) * binomial(d - i, n - i) * sign * duration.powi(-(n as i32))
        }
    })
}

/// Control points from monomial coefficients on `[0, τ]` (inverse of
/// [`bernstein_basis`]): `y_i = Σ_{j≤i} C(i,j)/C(D,j) · a_j τ^j`.
pub fn monomial_to_bernstein(coeffs: &[f64], duration: f64) -> Vec<f64> {
    let d = coeffs.len() - 1;
    (0..=d)
        .map(|i| {
            (0..=i)
                .map(|j| binomial(i, j) / binomial(d, j) * coeffs[j] * duration.powi(j as i32))
                .sum()
        })
        .collect()
}

/// Gram matrix of the weighted cost on monomial coefficients:
/// `aᵀQa = Σ_c γ_c ∫₀^τ (p^{(c)}(t))² dt`, with `weights[c - 1] = γ_c`.
pub fn cost_matrix(degree: usize, duration: f64, weights: &[f64]) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(degree + 1, degree + 1);
    for (ci, &gamma) in weights.iter().enumerate() {
        let c = ci + 1;
        if gamma == 0.0 || c > degree {
            continue;
        }
        for m in c..=degree {
            for n in c..=degree {
                let p = (m + n - 2 * c + 1) as i32;
                q[(m, n)] += gamma * falling_factorial(m, c) * falling_factorial(n, c) * duration.powi(p) / p as f64;
            }
        }
    }
    q
}

/// Cost Gram matrix expressed on Bernstein control points: `MᵀQM`.
pub fn bernstein_cost_matrix(degree: usize, duration: f64, weights: &[f64]) -> DMatrix<f64> {
    let m = bernstein_basis(degree, duration);
    let h = m.transpose() * cost_matrix(degree, duration, weights) * &m;
    (&h + h.transpose()) * 0.5
}

/// Value at `s ∈ [0, 1]` by repeated linear interpolation.
pub fn de_casteljau(points: &[Vec3], s: f64) -> Vec3 {
    let mut work = points.to_vec();
    let n = work.len();
    for level in 1..n {
        for i in 0..n - level {
            work[i] = work[i] * (1.0 - s) + work[i + 1] * s;
        }
    }
    work[0]
}

/// Control points of the derivative curve (hodograph) on a piece of length `duration`.
pub fn hodograph(points: &[Vec3], duration: f64) -> Vec<Vec3> {
    let d = points.len() - 1;
    if d == 0 {
        return vec![Vec3::zeros()];
    }
    points
        .windows(2)
        .map(|w| (w[1] - w[0]) * (d as f64 / duration))
        .collect()
}

/// Coefficients of the `c`-th derivative at the first control points:
/// `p^{(c)}(0) = D!/(D−c)! / τ^c · Σ_j (−1)^{c−j} C(c, j) y_j`.
pub fn start_derivative_weights(c: usize) -> Vec<f64> {
    (0..=c)
        .map(|j| {
            let sign = if (c - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(c, j)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_basis() {
        let b = bernstein_basis(1, 1.0);
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
    }

    #[test]
    fn partition_of_unity_on_scaled_interval() {
        let b = bernstein_basis(7, 0.37);
        for j in 0..=10 {
            let t = 0.37 * j as f64 / 10.0;
            let total: f64 = (0..=7)
                .map(|i| (0..=7).map(|n| b[(n, i)] * t.powi(n as i32)).sum::<f64>())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_cost_of_line() {
        let h = bernstein_cost_matrix(1, 2.0, &[1.0]);
        // y0 = 0, y1 = 3 → 3² / 2
        let cost = h[(1, 1)] * 9.0;
        assert!((cost - 4.5).abs() < 1e-12);
        assert_eq!(cost_matrix(5, 1.0, &[0.0, 0.0]), DMatrix::zeros(6, 6));
    }

    #[test]
    fn monomial_round_trip() {
        let y = [0.3, -1.0, 2.0, 0.5, 0.1];
        let m = bernstein_basis(4, 0.8);
        let a = &m * nalgebra::DVector::from_row_slice(&y);
        let back = monomial_to_bernstein(a.as_slice(), 0.8);
        for (p, q) in y.iter().zip(&back) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
