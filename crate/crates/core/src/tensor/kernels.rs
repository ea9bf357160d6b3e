//! Row-major dense kernels on raw slices.

use crate::scalar::Scalar;

/// `a[m×k] · b[k×n]`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · g` for `a[m×k]`, `g[m×n]`, giving `[k×n]`.
pub(crate) fn matmul_tn<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// `g · bᵀ` for `g[m×n]`, `b[k×n]`, giving `[m×k]`.
pub(crate) fn matmul_nt<T: Scalar>(g: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in grow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + p] = acc;
        }
    }
    out
}

/// Splits a shape into `(outer, extent, inner)` around `axis`.
pub(crate) fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let extent = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, extent, inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_products_agree_with_plain_product() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![58.0, 64.0, 139.0, 154.0]);
        // aᵀ (3x2) · a (2x3)
        let ata = matmul_tn(&a, &a, 2, 3, 3);
        assert_eq!(ata, vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // a (2x3) · aᵀ
        let aat = matmul_nt(&a, &a, 2, 2, 3);
        assert_eq!(aat, vec![14.0, 32.0, 32.0, 77.0]);
    }
}
