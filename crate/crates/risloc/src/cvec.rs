//! Small helpers for complex vectors.

use num_complex::Complex64;

/// Inner product with conjugation on the first argument: sum conj(a_i) b_i.
pub(crate) fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Squared Euclidean norm.
pub(crate) fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Euclidean norm.
pub(crate) fn norm(a: &[Complex64]) -> f64 {
    norm_sq(a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdot_conjugates_first_argument() {
        let a = [Complex64::new(0.0, 1.0)];
        let b = [Complex64::new(2.0, 0.0)];
        assert_eq!(cdot(&a, &b), Complex64::new(0.0, -2.0));
    }

    #[test]
    fn norms() {
        let a = [Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)];
        assert_eq!(norm_sq(&a), 25.0);
        assert_eq!(norm(&a), 5.0);
    }
}
