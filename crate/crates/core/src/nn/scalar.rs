//! Float abstraction plus the three GEMM shapes the dense layers need.
//!
//! All matrices are dense row-major slices.

use std::fmt::Debug;

use num_traits::Float;

pub trait Scalar: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    #[allow(clippy::too_many_arguments)]
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n` views.
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(x: f64) -> f32 {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(x: f64) -> f64 {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// `c = a * b^T + beta * c` with `a: m x k`, `b: n x k`, `c: m x n`.
pub(crate) fn gemm_nt<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `c = a^T * b + beta * c` with `a: k x m`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_tn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`.
pub(crate) fn gemm_nn<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, n: usize, k: usize, a: impl Fn(usize, usize) -> f64, b: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a(i, p) * b(p, j)).sum();
            }
        }
        c
    }

    #[test]
    fn gemm_layouts_agree_with_naive_product() {
        let (m, n, k) = (5, 3, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let bt: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.11).cos()).collect(); // n x k
        let expect = naive(m, n, k, |i, p| a[i * k + p], |p, j| bt[j * k + p]);

        let mut c = vec![0.0; m * n];
        gemm_nt(m, n, k, &a, &bt, 0.0, &mut c);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T stored as k x m
        let at: Vec<f64> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let b: Vec<f64> = (0..k * n).map(|idx| bt[(idx % n) * k + idx / n]).collect(); // k x n
        let mut c2 = vec![0.0; m * n];
        gemm_tn(m, n, k, &at, &b, 0.0, &mut c2);
        let mut c3 = vec![0.0; m * n];
        gemm_nn(m, n, k, &a, &b, 0.0, &mut c3);
        for i in 0..m * n {
            assert!((c2[i] - expect[i]).abs() < 1e-12);
            assert!((c3[i] - expect[i]).abs() < 1e-12);
        }
    }
}
