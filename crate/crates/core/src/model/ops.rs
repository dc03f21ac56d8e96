//! Dense kernels on flat row-major slices.

use crate::Scalar;

pub const LN_EPS: f64 = 1e-5;

/// `out = b + x · W` with `W` shaped `[x.len()][out.len()]`.
pub fn affine<T: Scalar>(x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let n = out.len();
    out.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `dx += W · dy`.
pub fn back_input<T: Scalar>(w: &[T], dy: &[T], dx: &mut [T]) {
    let n = dy.len();
    for (i, g) in dx.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        let mut acc = T::zero();
        for (&wij, &d) in row.iter().zip(dy) {
            acc += wij * d;
        }
        *g += acc;
    }
}

/// `gw += x ⊗ dy`.
pub fn back_weight<T: Scalar>(x: &[T], dy: &[T], gw: &mut [T]) {
    let n = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &mut gw[i * n..(i + 1) * n];
        for (g, &d) in row.iter_mut().zip(dy) {
            *g += xi * d;
        }
    }
}

pub fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Normalizes `x` into `xhat`, writes `g * xhat + b` into `y`, returns 1/σ.
pub fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], xhat: &mut [T], y: &mut [T]) -> T {
    let n = T::of(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |s, &v| s + v) / n;
    let var = x.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
    let rstd = T::one() / (var + T::of(LN_EPS)).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = g[i] * xhat[i] + b[i];
    }
    rstd
}

/// Accumulates input, gain and bias gradients of a layer norm.
pub fn layer_norm_back<T: Scalar>(
    xhat: &[T],
    rstd: T,
    g: &[T],
    dy: &[T],
    dx: &mut [T],
    dg: &mut [T],
    db: &mut [T],
) {
    let n = T::of(xhat.len() as f64);
    let mut mean_d = T::zero();
    let mut mean_dx = T::zero();
    for i in 0..xhat.len() {
        let d = dy[i] * g[i];
        mean_d += d;
        mean_dx += d * xhat[i];
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
    }
    mean_d /= n;
    mean_dx /= n;
    for i in 0..xhat.len() {
        dx[i] += rstd * (dy[i] * g[i] - mean_d - xhat[i] * mean_dx);
    }
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

/// Tanh-approximated GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * a * x * x)
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut out: Vec<T> = row.iter().map(|&x| (x - m).exp()).collect();
    let s = out.iter().fold(T::zero(), |a, &b| a + b);
    out.iter_mut().for_each(|p| *p /= s);
    out
}

/// `log softmax(row)[k]`.
pub fn log_prob<T: Scalar>(row: &[T], k: usize) -> T {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let s = row.iter().fold(T::zero(), |a, &x| a + (x - m).exp());
    row[k] - m - s.ln()
}
