//! Batched matrix products over (n, 1, rows, cols) tensors.
//!
//! Each batch entry multiplies one rows-by-cols matrix stored row major in
//! the (h, w) plane. Three transpose variants cover every case the backward
//! passes need; none of them materialize a transposed copy.

use super::axpy;
use crate::tensor::{Shape, Tensor};
use crate::{shape_err, Result};

fn check_batch(op: &'static str, a: &Tensor, b: &Tensor) -> Result<usize> {
    if a.shape().c != 1 || b.shape().c != 1 {
        return Err(shape_err(
            op,
            format!("matrix operands must have c=1, got {} and {}", a.shape(), b.shape()),
        ));
    }
    if a.shape().n != b.shape().n {
        return Err(shape_err(
            op,
            format!("batch sizes differ: {} vs {}", a.shape().n, b.shape().n),
        ));
    }
    Ok(a.shape().n)
}

/// out[r][c] = sum_k a[r][k] * b[k][c], per batch entry.
pub fn bmm_nn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = check_batch("bmm_nn", a, b)?;
    let (r, k) = (a.shape().h, a.shape().w);
    let (kb, c) = (b.shape().h, b.shape().w);
    if k != kb {
        return Err(shape_err(
            "bmm_nn",
            format!("inner dims differ: a is {}x{}, b is {}x{}", r, k, kb, c),
        ));
    }
    let mut out = Tensor::zeros(Shape::new(n, 1, r, c));
    let av = a.data();
    let bv = b.data();
    let ov = out.data_mut();
    for ni in 0..n {
        let ab = ni * r * k;
        let bb = ni * k * c;
        let ob = ni * r * c;
        for ri in 0..r {
            for ki in 0..k {
                let scale = av[ab + ri * k + ki];
                if scale != 0.0 {
                    axpy(&mut ov[ob + ri * c..ob + (ri + 1) * c], scale, &bv[bb + ki * c..bb + (ki + 1) * c]);
                }
            }
        }
    }
    Ok(out)
}

/// out[r][c] = sum_k a[r][k] * b[c][k]  (b used transposed), per batch entry.
pub fn bmm_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = check_batch("bmm_nt", a, b)?;
    let (r, k) = (a.shape().h, a.shape().w);
    let (c, kb) = (b.shape().h, b.shape().w);
    if k != kb {
        return Err(shape_err(
            "bmm_nt",
            format!("inner dims differ: a is {}x{}, b^T is {}x{}", r, k, kb, c),
        ));
    }
    let mut out = Tensor::zeros(Shape::new(n, 1, r, c));
    let av = a.data();
    let bv = b.data();
    let ov = out.data_mut();
    for ni in 0..n {
        let ab = ni * r * k;
        let bb = ni * c * k;
        let ob = ni * r * c;
        for ri in 0..r {
            let arow = &av[ab + ri * k..ab + (ri + 1) * k];
            for ci in 0..c {
                let brow = &bv[bb + ci * k..bb + (ci + 1) * k];
                ov[ob + ri * c + ci] = super::dot(arow, brow);
            }
        }
    }
    Ok(out)
}

/// out[r][c] = sum_k a[k][r] * b[k][c]  (a used transposed), per batch entry.
pub fn bmm_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = check_batch("bmm_tn", a, b)?;
    let (k, r) = (a.shape().h, a.shape().w);
    let (kb, c) = (b.shape().h, b.shape().w);
    if k != kb {
        return Err(shape_err(
            "bmm_tn",
            format!("inner dims differ: a^T is {}x{}, b is {}x{}", r, k, kb, c),
        ));
    }
    let mut out = Tensor::zeros(Shape::new(n, 1, r, c));
    let av = a.data();
    let bv = b.data();
    let ov = out.data_mut();
    for ni in 0..n {
        let ab = ni * k * r;
        let bb = ni * k * c;
        let ob = ni * r * c;
        for ki in 0..k {
            for ri in 0..r {
                let scale = av[ab + ki * r + ri];
                if scale != 0.0 {
                    axpy(&mut ov[ob + ri * c..ob + (ri + 1) * c], scale, &bv[bb + ki * c..bb + (ki + 1) * c]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize, h: usize, w: usize, v: Vec<f32>) -> Tensor {
        Tensor::from_vec(Shape::new(n, 1, h, w), v).unwrap()
    }

    #[test]
    fn small_product_matches_hand_result() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = t(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = t(1, 2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        let c = bmm_nn(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn nt_equals_nn_with_transposed_operand() {
        let a = t(1, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // b is 2x3; nt computes a * b^T (2x2).
        let b = t(1, 2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let c = bmm_nt(&a, &b).unwrap();
        // Row 0 of a dotted with rows of b: (1+3, 2) ; row 1: (4+6, 5).
        assert_eq!(c.data(), &[4.0, 2.0, 10.0, 5.0]);
    }

    #[test]
    fn tn_equals_nn_with_transposed_operand() {
        let a = t(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = t(1, 2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        // a^T = [[1,3],[2,4]]; a^T*b = [[26,30],[38,44]].
        let c = bmm_tn(&a, &b).unwrap();
        assert_eq!(c.data(), &[26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn batch_entries_are_independent() {
        let a = t(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = t(2, 2, 1, vec![3.0, 4.0, 5.0, 6.0]);
        let c = bmm_nn(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 6.0]);
    }

    #[test]
    fn rejects_mismatched_inner_dims() {
        let a = t(1, 2, 3, vec![0.0; 6]);
        let b = t(1, 2, 2, vec![0.0; 4]);
        assert!(bmm_nn(&a, &b).is_err());
    }
}
