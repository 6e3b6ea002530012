//! Forward and backward kernels. The forward functions are usable on their
//! own; [`super::Graph`] records them for reverse-mode differentiation.

use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Range of output frames `t` whose tap `t + off` lies inside `[0, n)`.
#[inline]
fn valid_range(n: usize, off: isize) -> (usize, usize) {
    if off >= 0 {
        (0, n.saturating_sub(off as usize))
    } else {
        ((-off as usize).min(n), n)
    }
}

fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (c_in, n) = x.dims2("conv1d input")?;
    let [c_out, wc, k] = w.shape()[..] else {
        return Err(Error::Shape(format!("conv1d weights must be 3-D, got {:?}", w.shape())));
    };
    if wc != c_in {
        return Err(Error::Shape(format!("conv1d: {c_in} input channels, weights expect {wc}")));
    }
    if k % 2 == 0 {
        return Err(Error::Shape(format!("conv1d kernel must be odd, got {k}")));
    }
    if b.shape() != [c_out] {
        return Err(Error::Shape(format!("conv1d bias {:?} for {c_out} filters", b.shape())));
    }
    Ok((c_in, n, c_out, k))
}

/// Same-padded dilated convolution: `(c_in, n) -> (c_out, n)`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor> {
    if dilation == 0 {
        return Err(Error::Shape("conv1d dilation must be >= 1".into()));
    }
    let (c_in, n, c_out, k) = conv_dims(x, w, b)?;
    let half = (k - 1) / 2;
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![0.0; c_out * n];
    for o in 0..c_out {
        let yo = &mut y[o * n..(o + 1) * n];
        yo.fill(b.data()[o]);
        for i in 0..c_in {
            let xi = &xd[i * n..(i + 1) * n];
            for j in 0..k {
                let off = (j as isize - half as isize) * dilation as isize;
                let (t0, t1) = valid_range(n, off);
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + off) as usize;
                axpy(&mut yo[t0..t1], wd[(o * c_in + i) * k + j], &xi[s0..s0 + (t1 - t0)]);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c_out, n], y))
}

/// Gradients of [`conv1d`] with respect to input, weights and bias.
pub(crate) fn conv1d_backward(x: &Tensor, w: &Tensor, dilation: usize, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (c_in, n) = (x.shape()[0], x.shape()[1]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let half = (k - 1) / 2;
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; c_in * n];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c_out];
    for o in 0..c_out {
        let dyo = &dyd[o * n..(o + 1) * n];
        db[o] = dyo.iter().sum();
        for i in 0..c_in {
            let xi = &xd[i * n..(i + 1) * n];
            for j in 0..k {
                let off = (j as isize - half as isize) * dilation as isize;
                let (t0, t1) = valid_range(n, off);
                if t0 >= t1 {
                    continue;
                }
                let s0 = (t0 as isize + off) as usize;
                let len = t1 - t0;
                let widx = (o * c_in + i) * k + j;
                dw[widx] = dot(&dyo[t0..t1], &xi[s0..s0 + len]);
                axpy(&mut dx[i * n + s0..i * n + s0 + len], wd[widx], &dyo[t0..t1]);
            }
        }
    }
    (
        Tensor::from_parts(vec![c_in, n], dx),
        Tensor::from_parts(w.shape().to_vec(), dw),
        Tensor::from_parts(vec![c_out], db),
    )
}

/// Non-overlapping max pooling `(c, n) -> (c, n / pool)`; trailing frames are
/// dropped. Also returns the flat input index of each maximum (first wins).
pub fn maxpool1d(x: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, n) = x.dims2("maxpool input")?;
    if pool == 0 || pool > n {
        return Err(Error::Shape(format!("pool size {pool} for {n} frames")));
    }
    let m = n / pool;
    let mut y = Vec::with_capacity(c * m);
    let mut argmax = Vec::with_capacity(c * m);
    for ch in 0..c {
        let row = &x.data()[ch * n..(ch + 1) * n];
        for t in 0..m {
            let base = t * pool;
            let mut best = base;
            for s in base + 1..base + pool {
                if row[s] > row[best] {
                    best = s;
                }
            }
            y.push(row[best]);
            argmax.push(ch * n + best);
        }
    }
    Ok((Tensor::from_parts(vec![c, m], y), argmax))
}

/// `y = W x + b` for `x: (f_in,)`, `W: (f_out, f_in)`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let f_in = x.len();
    let [f_out, wf] = w.shape()[..] else {
        return Err(Error::Shape(format!("dense weights must be 2-D, got {:?}", w.shape())));
    };
    if x.shape().len() != 1 || wf != f_in || b.shape() != [f_out] {
        return Err(Error::Shape(format!(
            "dense: input {:?}, weights {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let y = (0..f_out).map(|o| b.data()[o] + dot(w.row(o), x.data())).collect();
    Ok(Tensor::vector(y))
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect())
}

/// Logistic function in the overflow-free two-branch form. Results are kept
/// at or above the smallest normal `f64` so they never reach exactly 0.
pub fn sigmoid_scalar(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    // NaN must survive so divergence is caught downstream
    if s < f64::MIN_POSITIVE {
        f64::MIN_POSITIVE
    } else {
        s
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| sigmoid_scalar(v)).collect())
}

/// Mean binary cross-entropy of probabilities `p` against targets `y`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Shape(format!("bce: {} predictions, {} targets", p.len(), y.len())));
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// Mean squared error over all elements.
pub fn mse_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("mse: {} vs {} values", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_and_hand_example() {
        let x = row(&[1.0, -2.0, 3.0]);
        let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        assert_eq!(conv1d(&x, &w, &b, 1).unwrap(), x);

        let x = row(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = conv1d(&x, &w, &b, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn conv_shape_errors() {
        let x = row(&[0.0; 5]);
        let b = Tensor::vector(vec![0.0]);
        let even = Tensor::zeros(&[1, 1, 2]);
        assert!(conv1d(&x, &even, &b, 1).is_err());
        let wrong_in = Tensor::zeros(&[1, 2, 3]);
        assert!(conv1d(&x, &wrong_in, &b, 1).is_err());
        assert!(conv1d(&x, &Tensor::zeros(&[1, 1, 3]), &Tensor::vector(vec![0.0, 0.0]), 1).is_err());
    }

    #[test]
    fn receptive_span() {
        let (k, d) = (9usize, 7usize);
        assert_eq!(1 + (k - 1) * d, 57);
    }

    #[test]
    fn pooling() {
        let x = row(&[1.0, 5.0, 2.0, 4.0]);
        assert_eq!(maxpool1d(&x, 2).unwrap().0.data(), &[5.0, 4.0]);
        assert_eq!(maxpool1d(&x, 1).unwrap().0, x);
        assert_eq!(maxpool1d(&Tensor::zeros(&[1, 1500]), 7).unwrap().0.shape(), &[1, 214]);
        assert!(maxpool1d(&x, 5).is_err());
    }

    #[test]
    fn dense_cases() {
        let x = Tensor::vector(vec![0.5, -1.5]);
        let eye = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let zero_b = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(dense(&x, &eye, &zero_b).unwrap(), x);
        let b = Tensor::vector(vec![0.25, -4.0]);
        assert_eq!(dense(&x, &Tensor::zeros(&[2, 2]), &b).unwrap(), b);

        let w = Tensor::matrix(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 4.0]]).unwrap();
        let y = dense(&x, &w, &Tensor::vector(vec![1.0, 0.0, -1.0])).unwrap();
        // hand matmul
        assert_eq!(y.data(), &[1.0 + 0.5 - 3.0, -1.5 - 0.75, -1.0 - 6.0]);
        assert!(dense(&x, &w, &zero_b).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(relu(&Tensor::scalar(-1.0)).data(), &[0.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        // 1/(1+e^30) to 16 significant digits, computed at 50-digit precision
        let reference = 9.357_622_968_839_299e-14;
        assert!((sigmoid_scalar(-30.0) / reference - 1.0).abs() < 1e-12);
        let tiny = sigmoid_scalar(-800.0);
        assert!(tiny > 0.0 && tiny.is_finite());
        assert_eq!(sigmoid_scalar(800.0), 1.0);
    }

    #[test]
    fn losses() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(&[0.9], &[1.0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(bce_loss(&[0.0], &[1.0]).unwrap().is_finite());
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }
}
