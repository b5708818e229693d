use ndarray::{s, Array2, ArrayD, ArrayView2, Axis, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_finite, Gradients, Group, ParamId, ParamStore, Scalar};
use crate::error::{Error, Result};

/// Single-layer gated recurrent cell:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// n  = tanh(x Wn + bn + r * (h Un))
/// h' = (1 - z) * n + z * h
/// ```
///
/// Input weights are stored as one `[n_in, 3H]` matrix and recurrent
/// weights as `[H, 3H]`, gates in `z | r | n` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct GruCache<F> {
    x: Array2<F>,
    h_prev: Array2<F>,
    z: Array2<F>,
    r: Array2<F>,
    n: Array2<F>,
    /// `h Un`, needed for the reset-gate gradient.
    hn: Array2<F>,
}

/// Random orthogonal `n x n` matrix via Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let d: f64 = (0..n).map(|k| m[i][k] * m[j][k]).sum();
            for k in 0..n {
                m[i][k] -= d * m[j][k];
            }
        }
        let norm = m[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut m[i] {
            *v /= norm;
        }
    }
    m.into_iter().flatten().collect()
}

fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

impl Gru {
    /// Registers the cell's parameters: uniform fan-in input weights,
    /// orthogonal recurrent blocks, zero biases.
    pub fn new<F: Scalar, R: Rng>(
        store: &mut ParamStore<F>,
        group: Group,
        prefix: &str,
        n_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let h3 = 3 * hidden;
        let bound = 1.0 / (n_in as f64).sqrt();
        let wx = (0..n_in * h3).map(|_| F::of(rng.gen_range(-bound..=bound))).collect();
        let w_x = store.add(
            format!("{prefix}.w_x"),
            group,
            ArrayD::from_shape_vec(IxDyn(&[n_in, h3]), wx).expect("shape"),
        );
        let mut wh = ArrayD::zeros(IxDyn(&[hidden, h3]));
        for gate in 0..3 {
            let q = orthogonal(rng, hidden);
            for i in 0..hidden {
                for j in 0..hidden {
                    wh[[i, gate * hidden + j]] = F::of(q[i * hidden + j]);
                }
            }
        }
        let w_h = store.add(format!("{prefix}.w_h"), group, wh);
        let b = store.add(format!("{prefix}.b"), group, ArrayD::zeros(IxDyn(&[h3])));
        Gru {
            w_x,
            w_h,
            b,
            n_in,
            hidden,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        p: &ParamStore<F>,
        x: ArrayView2<F>,
        h: ArrayView2<F>,
    ) -> Result<(Array2<F>, GruCache<F>)> {
        let hd = self.hidden;
        if x.ncols() != self.n_in || h.ncols() != hd || x.nrows() != h.nrows() {
            return Err(Error::shape(
                "gru input/state",
                (self.n_in, hd),
                (x.ncols(), h.ncols()),
            ));
        }
        let mut gx = x.dot(&p.value2(self.w_x));
        gx += &p.value1(self.b);
        let gh = h.dot(&p.value2(self.w_h));
        let z = (&gx.slice(s![.., 0..hd]) + &gh.slice(s![.., 0..hd])).mapv(sigmoid);
        let r = (&gx.slice(s![.., hd..2 * hd]) + &gh.slice(s![.., hd..2 * hd])).mapv(sigmoid);
        let hn = gh.slice(s![.., 2 * hd..]).to_owned();
        let n = (&gx.slice(s![.., 2 * hd..]) + &(&r * &hn)).mapv(|v| v.tanh());
        let one = F::one();
        let mut h_new = Array2::zeros(h.raw_dim());
        ndarray::Zip::from(&mut h_new)
            .and(&z)
            .and(&n)
            .and(&h)
            .for_each(|o, &z, &n, &h| *o = (one - z) * n + z * h);
        if cfg!(debug_assertions) {
            check_finite("gru state", &h_new)?;
        }
        Ok((
            h_new,
            GruCache {
                x: x.to_owned(),
                h_prev: h.to_owned(),
                z,
                r,
                n,
                hn,
            },
        ))
    }

    /// Returns `(dL/dx, dL/dh_prev)`; `dL/dx` only when `need_dx`.
    pub fn backward<F: Scalar>(
        &self,
        p: &ParamStore<F>,
        c: &GruCache<F>,
        dh: ArrayView2<F>,
        g: &mut Gradients<F>,
        need_dx: bool,
    ) -> Result<(Option<Array2<F>>, Array2<F>)> {
        if dh.raw_dim() != c.h_prev.raw_dim() {
            return Err(Error::shape("gru grad_state", c.h_prev.shape(), dh.shape()));
        }
        let hd = self.hidden;
        let one = F::one();
        let b = dh.nrows();
        let mut dgx = Array2::zeros((b, 3 * hd));
        let mut dgh = Array2::zeros((b, 3 * hd));
        let mut dh_prev = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let (z, r, n, hn, hp) = (c.z[[i, j]], c.r[[i, j]], c.n[[i, j]], c.hn[[i, j]], c.h_prev[[i, j]]);
                let d = dh[[i, j]];
                let dn = d * (one - z);
                let dz = d * (hp - n);
                let da_n = dn * (one - n * n);
                let dr = da_n * hn;
                let da_r = dr * r * (one - r);
                let da_z = dz * z * (one - z);
                dgx[[i, j]] = da_z;
                dgx[[i, hd + j]] = da_r;
                dgx[[i, 2 * hd + j]] = da_n;
                dgh[[i, j]] = da_z;
                dgh[[i, hd + j]] = da_r;
                dgh[[i, 2 * hd + j]] = da_n * r;
                dh_prev[[i, j]] = d * z;
            }
        }
        if g.wants(self.w_x) {
            g.add2(self.w_x, &[self.n_in, 3 * hd], c.x.t().dot(&dgx).view());
        }
        if g.wants(self.b) {
            g.add1(self.b, &[3 * hd], dgx.sum_axis(Axis(0)).view());
        }
        if g.wants(self.w_h) {
            g.add2(self.w_h, &[hd, 3 * hd], c.h_prev.t().dot(&dgh).view());
        }
        dh_prev += &dgh.dot(&p.value2(self.w_h).t());
        let dx = need_dx.then(|| dgx.dot(&p.value2(self.w_x).t()));
        Ok((dx, dh_prev))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GroupMask;
    use rand::SeedableRng;

    #[test]
    fn zero_input_zero_state_stays_zero() {
        // z = r = sigmoid(0) = 1/2, n = tanh(0) = 0, h' = 0.5 * 0 + 0.5 * 0.
        let mut store = ParamStore::<f64>::new(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cell = Gru::new(&mut store, Group::Aggregate, "agg", 5, 4, &mut rng);
        let (h, cache) = cell
            .forward(&store, Array2::zeros((2, 5)).view(), Array2::zeros((2, 4)).view())
            .unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(cache.z.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn recurrent_blocks_are_orthogonal() {
        let mut store = ParamStore::<f64>::new(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let cell = Gru::new(&mut store, Group::Aggregate, "agg", 3, 6, &mut rng);
        let w = store.value2(cell.w_h);
        for gate in 0..3 {
            let q = w.slice(s![.., gate * 6..(gate + 1) * 6]);
            let qtq = q.t().dot(&q);
            for i in 0..6 {
                for j in 0..6 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((qtq[[i, j]] - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let mut store = ParamStore::<f64>::new(0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cell = Gru::new(&mut store, Group::Aggregate, "agg", 3, 4, &mut rng);
        let x = Array2::from_elem((1, 3), 0.3);
        let h = Array2::from_elem((1, 4), -0.2);
        let (_, cache) = cell.forward(&store, x.view(), h.view()).unwrap();
        let mut g = Gradients::new(&store, GroupMask::all());
        let (dx, dh) = cell
            .backward(&store, &cache, Array2::zeros((1, 4)).view(), &mut g, true)
            .unwrap();
        assert!(dx.unwrap().iter().all(|&v| v == 0.0));
        assert!(dh.iter().all(|&v| v == 0.0));
        assert_eq!(g.group_max_abs(Group::Aggregate), 0.0);
    }
}
