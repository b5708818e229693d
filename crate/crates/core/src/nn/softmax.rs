use ndarray::{Array2, ArrayView2, Axis};

use super::Scalar;

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows<F: Scalar>(logits: ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: F = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn log_softmax_rows<F: Scalar>(logits: ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// `sum_k p_k log p_k` per row (the negative entropy) and its gradient with
/// respect to the logits, `p_k (log p_k - sum_j p_j log p_j)`.
pub fn entropy_term<F: Scalar>(logits: ArrayView2<F>) -> (Vec<F>, Array2<F>) {
    let logp = log_softmax_rows(logits);
    let p = logp.mapv(|v| v.exp());
    let mut values = Vec::with_capacity(p.nrows());
    let mut grad = Array2::zeros(p.raw_dim());
    for ((pr, lr), mut gr) in p
        .axis_iter(Axis(0))
        .zip(logp.axis_iter(Axis(0)))
        .zip(grad.axis_iter_mut(Axis(0)))
    {
        let neg_ent: F = pr.iter().zip(lr.iter()).map(|(&a, &b)| a * b).sum();
        values.push(neg_ent);
        for ((g, &a), &b) in gr.iter_mut().zip(pr.iter()).zip(lr.iter()) {
            *g = a * (b - neg_ent);
        }
    }
    (values, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_on_zeros() {
        let p = softmax_rows(Array2::<f64>::zeros((2, 15)).view());
        assert!(p.iter().all(|&v| (v - 1.0 / 15.0).abs() < 1e-15));
    }

    #[test]
    fn shift_invariant_and_normalized() {
        let z = array![[1.0f64, -2.0, 30.0, 0.5], [700.0, 701.0, 699.0, 0.0]];
        let p = softmax_rows(z.view());
        let q = softmax_rows(z.mapv(|v| v + 123.0).view());
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for row in p.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        let lp = log_softmax_rows(z.view());
        for (a, b) in p.iter().zip(lp.iter()) {
            assert!((a.ln() - b).abs() < 1e-9 || *a == 0.0);
        }
    }

    #[test]
    fn entropy_at_uniform_is_stationary() {
        let (v, g) = entropy_term(Array2::<f64>::zeros((1, 15)).view());
        assert!((v[0] + 15f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn entropy_of_deterministic_policy_is_zero() {
        let mut z = Array2::<f64>::zeros((1, 15));
        z[[0, 3]] = 800.0;
        let (v, _) = entropy_term(z.view());
        assert!(v[0].abs() < 1e-12);
    }
}
