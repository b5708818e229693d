use ndarray::{Array1, Array2, ArrayD, ArrayView2, Axis, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, Gradients, Group, GroupMask, ParamId, ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(F::zero()),
            Activation::Sigmoid => F::one() / (F::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn grad_from_output<F: Scalar>(self, y: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
        }
    }
}

/// Shape of one row of activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Flat(usize),
    Spatial { c: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Spatial { c, h, w } => c * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serializable description of one layer of a [`Sequential`] stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        out: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv {
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Deconv {
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    },
    /// 2x2 average pooling.
    Pool,
    Reshape {
        c: usize,
        h: usize,
        w: usize,
    },
    Nonlinearity {
        f: Activation,
    },
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn dense(out: usize) -> Self {
        LayerSpec::Dense { out, bias: true }
    }

    /// 5x5 convolution, stride 1, zero padding 2 (size preserving).
    pub fn conv(out_ch: usize) -> Self {
        LayerSpec::Conv {
            out_ch,
            kernel: 5,
            stride: 1,
            pad: 2,
        }
    }

    /// 5x5 transposed convolution, stride 2, padding 2, output padding 1
    /// (doubles height and width).
    pub fn deconv(out_ch: usize) -> Self {
        LayerSpec::Deconv {
            out_ch,
            kernel: 5,
            stride: 2,
            pad: 2,
            out_pad: 1,
        }
    }

    pub fn act(f: Activation) -> Self {
        LayerSpec::Nonlinearity { f }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub n_in: usize,
    pub n_out: usize,
}

/// Convolution geometry shared by [`Conv2d`] and [`Deconv2d`]: the kernel
/// window at grid position `(gy, gx)` covers image pixels
/// `(gy * stride - pad + ky, gx * stride - pad + kx)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Window {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gh: usize,
    gw: usize,
}

impl Window {
    fn col_len(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.gh * self.gw
    }

    fn pixel(&self, kk: usize, pos: usize) -> Option<usize> {
        let (gy, gx) = (pos / self.gw, pos % self.gw);
        let (ky, kx) = (kk / self.k, kk % self.k);
        let y = (gy * self.stride + ky) as isize - self.pad as isize;
        let x = (gx * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some(y as usize * self.w + x as usize)
        }
    }

    /// Gathers image patches into rows `[positions, c * k * k]`.
    fn im2col<F: Scalar>(&self, img: &[F], cols: &mut [F]) {
        let (kk_len, plane) = (self.k * self.k, self.h * self.w);
        for pos in 0..self.positions() {
            let row = &mut cols[pos * self.col_len()..(pos + 1) * self.col_len()];
            for kk in 0..kk_len {
                match self.pixel(kk, pos) {
                    Some(px) => {
                        for ch in 0..self.c {
                            row[ch * kk_len + kk] = img[ch * plane + px];
                        }
                    }
                    None => {
                        for ch in 0..self.c {
                            row[ch * kk_len + kk] = F::zero();
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-adds rows back into the image.
    fn col2im<F: Scalar>(&self, cols: &[F], img: &mut [F]) {
        let (kk_len, plane) = (self.k * self.k, self.h * self.w);
        for pos in 0..self.positions() {
            let row = &cols[pos * self.col_len()..(pos + 1) * self.col_len()];
            for kk in 0..kk_len {
                if let Some(px) = self.pixel(kk, pos) {
                    for ch in 0..self.c {
                        img[ch * plane + px] += row[ch * kk_len + kk];
                    }
                }
            }
        }
    }
}

/// 2-D convolution; weights `[out_ch, in_ch, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Transposed 2-D convolution; weights `[in_ch, out_ch, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Deconv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2d {
    fn window(&self) -> Window {
        Window {
            c: self.in_ch,
            h: self.in_h,
            w: self.in_w,
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            gh: self.out_h,
            gw: self.out_w,
        }
    }
}

impl Deconv2d {
    fn window(&self) -> Window {
        Window {
            c: self.out_ch,
            h: self.out_h,
            w: self.out_w,
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            gh: self.in_h,
            gw: self.in_w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    Deconv(Deconv2d),
    Pool { c: usize, h: usize, w: usize },
    Reshape,
    Act(Activation),
}

/// `[B, C*P]` channel-major rows to `[B*P, C]` pixel rows.
fn to_pixel_rows<F: Scalar>(x: ArrayView2<F>, c: usize, p: usize) -> Array2<F> {
    let b = x.nrows();
    let mut out = Array2::zeros((b * p, c));
    for (bi, row) in x.axis_iter(Axis(0)).enumerate() {
        for ch in 0..c {
            for pos in 0..p {
                out[[bi * p + pos, ch]] = row[ch * p + pos];
            }
        }
    }
    out
}

fn from_pixel_rows<F: Scalar>(x: ArrayView2<F>, batch: usize, c: usize, p: usize) -> Array2<F> {
    let mut out = Array2::zeros((batch, c * p));
    for bi in 0..batch {
        for pos in 0..p {
            for ch in 0..c {
                out[[bi, ch * p + pos]] = x[[bi * p + pos, ch]];
            }
        }
    }
    out
}

fn im2col_batch<F: Scalar>(win: &Window, x: ArrayView2<F>) -> Array2<F> {
    let b = x.nrows();
    let mut cols = Array2::zeros((b * win.positions(), win.col_len()));
    let stride = win.positions() * win.col_len();
    let slice = cols.as_slice_mut().expect("contiguous");
    for (bi, row) in x.axis_iter(Axis(0)).enumerate() {
        let img = row.to_vec();
        win.im2col(&img, &mut slice[bi * stride..(bi + 1) * stride]);
    }
    cols
}

impl Layer {
    pub fn forward<F: Scalar>(&self, p: &ParamStore<F>, x: ArrayView2<F>) -> Array2<F> {
        match self {
            Layer::Dense(d) => {
                let mut y = x.dot(&p.value2(d.w));
                if let Some(b) = d.b {
                    y += &p.value1(b);
                }
                y
            }
            Layer::Conv(c) => {
                let win = c.window();
                let cols = im2col_batch(&win, x);
                let w = p.value2(c.w);
                let mut out = cols.dot(&w.t());
                out += &p.value1(c.b);
                from_pixel_rows(out.view(), x.nrows(), c.out_ch, c.out_h * c.out_w)
            }
            Layer::Deconv(d) => {
                let win = d.window();
                let pix = to_pixel_rows(x, d.in_ch, d.in_h * d.in_w);
                let cols = pix.dot(&p.value2(d.w));
                let plane = d.out_h * d.out_w;
                let bias = p.value1(d.b);
                let mut y = Array2::zeros((x.nrows(), d.out_ch * plane));
                let per = win.positions() * win.col_len();
                let cols = cols.as_standard_layout();
                let cs = cols.as_slice().expect("contiguous");
                for (bi, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
                    let mut img = vec![F::zero(); d.out_ch * plane];
                    win.col2im(&cs[bi * per..(bi + 1) * per], &mut img);
                    for ch in 0..d.out_ch {
                        for i in 0..plane {
                            row[ch * plane + i] = img[ch * plane + i] + bias[ch];
                        }
                    }
                }
                y
            }
            &Layer::Pool { c, h, w } => {
                let (oh, ow) = (h / 2, w / 2);
                let quarter = F::of(0.25);
                let mut y = Array2::zeros((x.nrows(), c * oh * ow));
                for (xr, mut yr) in x.axis_iter(Axis(0)).zip(y.axis_iter_mut(Axis(0))) {
                    for ch in 0..c {
                        for i in 0..oh {
                            for j in 0..ow {
                                let base = ch * h * w + 2 * i * w + 2 * j;
                                yr[ch * oh * ow + i * ow + j] =
                                    (xr[base] + xr[base + 1] + xr[base + w] + xr[base + w + 1])
                                        * quarter;
                            }
                        }
                    }
                }
                y
            }
            Layer::Reshape => x.to_owned(),
            Layer::Act(f) => x.mapv(|v| f.apply(v)),
        }
    }

    /// Backward pass given the layer's cached input `x` and output `y`.
    /// Parameter gradients go into `g`; returns `dL/dx` when `need_dx`.
    pub fn backward<F: Scalar>(
        &self,
        p: &ParamStore<F>,
        x: ArrayView2<F>,
        y: ArrayView2<F>,
        dy: ArrayView2<F>,
        g: &mut Gradients<F>,
        need_dx: bool,
    ) -> Option<Array2<F>> {
        match self {
            Layer::Dense(d) => {
                let w = p.value2(d.w);
                if g.wants(d.w) {
                    g.add2(d.w, w.shape(), x.t().dot(&dy).view());
                }
                if let Some(b) = d.b {
                    if g.wants(b) {
                        g.add1(b, &[d.n_out], dy.sum_axis(Axis(0)).view());
                    }
                }
                need_dx.then(|| dy.dot(&w.t()))
            }
            Layer::Conv(c) => {
                let win = c.window();
                let plane = c.out_h * c.out_w;
                let dout = to_pixel_rows(dy, c.out_ch, plane);
                let w = p.value2(c.w);
                if g.wants(c.w) {
                    let cols = im2col_batch(&win, x);
                    g.add2(
                        c.w,
                        &[c.out_ch, c.in_ch, c.kernel, c.kernel],
                        dout.t().dot(&cols).view(),
                    );
                }
                if g.wants(c.b) {
                    g.add1(c.b, &[c.out_ch], dout.sum_axis(Axis(0)).view());
                }
                need_dx.then(|| {
                    let dcols = dout.dot(&w);
                    let per = win.positions() * win.col_len();
                    let ds = dcols.as_slice().expect("contiguous");
                    let mut dx = Array2::zeros(x.raw_dim());
                    for (bi, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
                        let mut img = vec![F::zero(); row.len()];
                        win.col2im(&ds[bi * per..(bi + 1) * per], &mut img);
                        row.assign(&Array1::from(img));
                    }
                    dx
                })
            }
            Layer::Deconv(d) => {
                let win = d.window();
                let dcols = im2col_batch(&win, dy);
                let w = p.value2(d.w);
                if g.wants(d.w) {
                    let pix = to_pixel_rows(x, d.in_ch, d.in_h * d.in_w);
                    g.add2(
                        d.w,
                        &[d.in_ch, d.out_ch, d.kernel, d.kernel],
                        pix.t().dot(&dcols).view(),
                    );
                }
                if g.wants(d.b) {
                    let plane = d.out_h * d.out_w;
                    let mut db = Array1::zeros(d.out_ch);
                    for row in dy.axis_iter(Axis(0)) {
                        for ch in 0..d.out_ch {
                            db[ch] += row.slice(ndarray::s![ch * plane..(ch + 1) * plane]).sum();
                        }
                    }
                    g.add1(d.b, &[d.out_ch], db.view());
                }
                need_dx.then(|| {
                    let dpix = dcols.dot(&w.t());
                    from_pixel_rows(dpix.view(), x.nrows(), d.in_ch, d.in_h * d.in_w)
                })
            }
            &Layer::Pool { c, h, w } => need_dx.then(|| {
                let (oh, ow) = (h / 2, w / 2);
                let quarter = F::of(0.25);
                let mut dx = Array2::zeros(x.raw_dim());
                for (dyr, mut dxr) in dy.axis_iter(Axis(0)).zip(dx.axis_iter_mut(Axis(0))) {
                    for ch in 0..c {
                        for i in 0..oh {
                            for j in 0..ow {
                                let v = dyr[ch * oh * ow + i * ow + j] * quarter;
                                let base = ch * h * w + 2 * i * w + 2 * j;
                                dxr[base] = v;
                                dxr[base + 1] = v;
                                dxr[base + w] = v;
                                dxr[base + w + 1] = v;
                            }
                        }
                    }
                }
                dx
            }),
            Layer::Reshape => need_dx.then(|| dy.to_owned()),
            Layer::Act(f) => need_dx.then(|| {
                let mut dx = dy.to_owned();
                dx.zip_mut_with(&y, |d, &o| *d *= f.grad_from_output(o));
                dx
            }),
        }
    }
}

/// A stack of layers whose parameters all belong to one group.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
    input: Shape,
    output: Shape,
    group: Group,
}

/// Activations saved by [`Sequential::forward`]: the input followed by the
/// output of every layer.
#[derive(Clone, Debug)]
pub struct SeqCache<F> {
    pub acts: Vec<Array2<F>>,
}

impl<F: Scalar> SeqCache<F> {
    pub fn output(&self) -> &Array2<F> {
        self.acts.last().expect("non-empty cache")
    }
}

fn uniform<F: Scalar, R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> ArrayD<F> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| F::of(rng.gen_range(-bound..=bound))).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape")
}

/// Validates that `specs` compose starting from `input` and registers their
/// parameters as `{prefix}.{index}.w` / `.b` in `store`. Weights use uniform
/// fan-in scaling `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start at zero.
pub fn build_sequential<F: Scalar, R: Rng>(
    specs: &[LayerSpec],
    input: Shape,
    store: &mut ParamStore<F>,
    group: Group,
    prefix: &str,
    rng: &mut R,
) -> Result<Sequential> {
    let mut shape = input;
    let mut layers = Vec::with_capacity(specs.len());
    let bad = |i: usize, msg: String, shape: Shape| Error::ShapeMismatch {
        context: format!("{prefix} layer {i}"),
        expected: msg,
        found: format!("{shape:?}"),
    };
    for (i, spec) in specs.iter().enumerate() {
        let name = |s: &str| format!("{prefix}.{i}.{s}");
        match *spec {
            LayerSpec::Dense { out, bias } => {
                let n_in = shape.len();
                let bound = 1.0 / (n_in as f64).sqrt();
                let w = store.add(name("w"), group, uniform(rng, &[n_in, out], bound));
                let b = bias.then(|| store.add(name("b"), group, ArrayD::zeros(IxDyn(&[out]))));
                layers.push(Layer::Dense(Dense {
                    w,
                    b,
                    n_in,
                    n_out: out,
                }));
                shape = Shape::Flat(out);
            }
            LayerSpec::Conv {
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let Shape::Spatial { c, h, w } = shape else {
                    return Err(bad(i, "spatial input for conv".into(), shape));
                };
                if h + 2 * pad < kernel || w + 2 * pad < kernel || stride == 0 {
                    return Err(bad(i, format!("input at least {kernel} after padding"), shape));
                }
                let out_h = (h + 2 * pad - kernel) / stride + 1;
                let out_w = (w + 2 * pad - kernel) / stride + 1;
                let bound = 1.0 / ((c * kernel * kernel) as f64).sqrt();
                let wid = store.add(name("w"), group, uniform(rng, &[out_ch, c, kernel, kernel], bound));
                let bid = store.add(name("b"), group, ArrayD::zeros(IxDyn(&[out_ch])));
                layers.push(Layer::Conv(Conv2d {
                    w: wid,
                    b: bid,
                    in_ch: c,
                    out_ch,
                    in_h: h,
                    in_w: w,
                    kernel,
                    stride,
                    pad,
                    out_h,
                    out_w,
                }));
                shape = Shape::Spatial {
                    c: out_ch,
                    h: out_h,
                    w: out_w,
                };
            }
            LayerSpec::Deconv {
                out_ch,
                kernel,
                stride,
                pad,
                out_pad,
            } => {
                let Shape::Spatial { c, h, w } = shape else {
                    return Err(bad(i, "spatial input for deconv".into(), shape));
                };
                let span = |n: usize| ((n - 1) * stride + kernel + out_pad).checked_sub(2 * pad);
                let (Some(out_h), Some(out_w)) = (span(h), span(w)) else {
                    return Err(bad(i, "padding smaller than the output".into(), shape));
                };
                if stride == 0 || out_pad >= stride {
                    return Err(bad(i, "output padding smaller than stride".into(), shape));
                }
                let bound = 1.0 / ((c * kernel * kernel) as f64).sqrt();
                let wid = store.add(name("w"), group, uniform(rng, &[c, out_ch, kernel, kernel], bound));
                let bid = store.add(name("b"), group, ArrayD::zeros(IxDyn(&[out_ch])));
                layers.push(Layer::Deconv(Deconv2d {
                    w: wid,
                    b: bid,
                    in_ch: c,
                    out_ch,
                    in_h: h,
                    in_w: w,
                    kernel,
                    stride,
                    pad,
                    out_h,
                    out_w,
                }));
                shape = Shape::Spatial {
                    c: out_ch,
                    h: out_h,
                    w: out_w,
                };
            }
            LayerSpec::Pool => {
                let Shape::Spatial { c, h, w } = shape else {
                    return Err(bad(i, "spatial input for pooling".into(), shape));
                };
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(bad(i, "even height and width".into(), shape));
                }
                layers.push(Layer::Pool { c, h, w });
                shape = Shape::Spatial {
                    c,
                    h: h / 2,
                    w: w / 2,
                };
            }
            LayerSpec::Reshape { c, h, w } => {
                if c * h * w != shape.len() {
                    return Err(bad(i, format!("{} features", c * h * w), shape));
                }
                layers.push(Layer::Reshape);
                shape = Shape::Spatial { c, h, w };
            }
            LayerSpec::Nonlinearity { f } => layers.push(Layer::Act(f)),
        }
    }
    Ok(Sequential {
        layers,
        input,
        output: shape,
        group,
    })
}

impl Sequential {
    pub fn input(&self) -> Shape {
        self.input
    }

    pub fn output(&self) -> Shape {
        self.output
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward<F: Scalar>(&self, p: &ParamStore<F>, x: ArrayView2<F>) -> Result<SeqCache<F>> {
        if x.ncols() != self.input.len() {
            return Err(Error::shape("sequential input", self.input.len(), x.ncols()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.layers {
            let y = layer.forward(p, acts.last().expect("input").view());
            if cfg!(debug_assertions) {
                check_finite(&format!("{:?} forward", self.group), &y)?;
            }
            acts.push(y);
        }
        Ok(SeqCache { acts })
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamStore<F>,
        cache: &SeqCache<F>,
        dy: ArrayView2<F>,
        g: &mut Gradients<F>,
        need_dx: bool,
    ) -> Result<Option<Array2<F>>> {
        if cache.acts.len() != self.layers.len() + 1 {
            return Err(Error::InvalidArgument("stale sequential cache".into()));
        }
        if dy.raw_dim() != cache.output().raw_dim() {
            return Err(Error::shape("sequential grad_output", cache.output().shape(), dy.shape()));
        }
        if !need_dx && !g.wants_any(GroupMask::only(&[self.group])) {
            return Ok(None);
        }
        let mut grad = dy.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let want_dx = need_dx || i > 0;
            match layer.backward(p, cache.acts[i].view(), cache.acts[i + 1].view(), grad.view(), g, want_dx) {
                Some(dx) => grad = dx,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }
}
