use super::dot;

/// Orthonormal basis of the polynomials of degree `< degree_count` sampled on
/// `n` equally spaced points (the null space of `D^(degree_count)`).
pub fn poly_basis(n: usize, degree_count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(degree_count);
    let x: Vec<f64> = (0..n)
        .map(|i| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 })
        .collect();
    for p in 0..degree_count.min(n) {
        let mut v: Vec<f64> = x.iter().map(|xi| xi.powi(p as i32)).collect();
        // Gram-Schmidt applied twice keeps the basis orthogonal to rounding level
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|vi| *vi /= norm);
        basis.push(v);
    }
    basis
}

/// Least-squares projection of `y` onto polynomials of degree `< degree_count`.
pub fn poly_project(y: &[f64], degree_count: usize) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for q in poly_basis(y.len(), degree_count) {
        let c = dot(y, &q);
        out.iter_mut().zip(&q).for_each(|(o, qi)| *o += c * qi);
    }
    out
}
