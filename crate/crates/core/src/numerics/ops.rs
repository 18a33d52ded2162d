use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Norm floor below which a vector is treated as degenerate.
pub const COSINE_EPS: f64 = 1e-12;

/// Cosine similarity; 0 when either vector has (near) zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim("cosine_similarity", u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::Contract("cosine_similarity of empty vectors".into()));
    }
    Ok(cosine_unchecked(u, v))
}

pub(crate) fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    if nu < COSINE_EPS || nv < COSINE_EPS {
        return 0.0;
    }
    dot(u, v) / (nu * nv)
}

/// `max(x, 0)`, except that NaN passes through.
pub fn relu(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

/// `relu(sum_k coeff_k * W * v_k)`.
pub fn relu_affine(w: &Matrix, inputs: &[(f64, &[f64])]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; w.cols()];
    for &(c, v) in inputs {
        if v.len() != w.cols() {
            return Err(Error::dim("relu_affine", w.cols(), v.len()));
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += c * x;
        }
    }
    Ok(w.matvec_unchecked(&acc).into_iter().map(relu).collect())
}
