use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::{add_at_b, ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

const K: usize = 3;
const PAD: usize = 1;

/// 3×3 convolution with padding 1 over `[channels, height, width]` tensors.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct ConvTrace<T> {
    cols: Array2<T>,
    in_shape: (usize, usize, usize),
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = p.register_glorot(
            format!("{name}.weight"),
            &[cout, cin, K, K],
            cin * K * K,
            cout * K * K,
            rng,
        )?;
        let b = p.register(format!("{name}.bias"), &[cout])?;
        Ok(Self {
            w,
            b,
            cin,
            cout,
            stride,
        })
    }

    /// Output side length for an input side length (`ceil(n / stride)`).
    pub fn out_size(&self, n: usize) -> usize {
        (n + 2 * PAD - K) / self.stride + 1
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: &Array3<T>,
    ) -> (Array3<T>, ConvTrace<T>) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.cin, "conv input channels");
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        let cols = im2col(x, self.stride, ho, wo);
        let mut out = p.mat(self.w).dot(&cols);
        let bias = p.vec(self.b);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let out = out
            .into_shape_with_order((self.cout, ho, wo))
            .expect("contiguous conv output");
        (
            out,
            ConvTrace {
                cols,
                in_shape: (c, h, w),
            },
        )
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `need_input_grad`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        trace: &ConvTrace<T>,
        dout: &Array3<T>,
        need_input_grad: bool,
    ) -> Option<Array3<T>> {
        let (_, ho, wo) = dout.dim();
        let dmat = dout
            .view()
            .into_shape_with_order((self.cout, ho * wo))
            .expect("contiguous conv grad");
        add_at_b(&mut g.mat_mut(self.w), dmat.t(), trace.cols.t());
        g.vec_mut(self.b)
            .scaled_add(T::one(), &dmat.sum_axis(Axis(1)));
        if !need_input_grad {
            return None;
        }
        let dcols = p.mat(self.w).t().dot(&dmat);
        Some(col2im(&dcols, trace.in_shape, self.stride, ho, wo))
    }
}

/// Output columns `lo..hi` whose tap `kx` lands inside a row of width `w`.
#[inline]
fn valid_cols(kx: usize, stride: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = if kx < PAD { 1 } else { 0 };
    // largest ox with ox * stride + kx - PAD < w
    let hi = ((w + PAD - kx - 1) / stride + 1).min(wo);
    (lo, hi)
}

fn im2col<T: Scalar>(x: &Array3<T>, stride: usize, ho: usize, wo: usize) -> Array2<T> {
    let (c, h, w) = x.dim();
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let mut cols = Array2::<T>::zeros((c * K * K, ho * wo));
    let cs = cols.as_slice_mut().expect("fresh array");
    let n = ho * wo;
    for ch in 0..c {
        let plane = &xs[ch * h * w..(ch + 1) * h * w];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cs[((ch * K + ky) * K + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    let (lo, hi) = valid_cols(kx, stride, w, wo);
                    if stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[lo + kx - PAD..hi + kx - PAD]);
                    } else {
                        for ox in lo..hi {
                            dst[ox] = src[ox * stride + kx - PAD];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(
    dcols: &Array2<T>,
    (c, h, w): (usize, usize, usize),
    stride: usize,
    ho: usize,
    wo: usize,
) -> Array3<T> {
    let mut dx = Array3::<T>::zeros((c, h, w));
    let ds = dx.as_slice_mut().expect("fresh array");
    let dc = dcols.as_standard_layout();
    let dc = dc.as_slice().expect("standard layout");
    let n = ho * wo;
    for ch in 0..c {
        let plane = &mut ds[ch * h * w..(ch + 1) * h * w];
        for ky in 0..K {
            for kx in 0..K {
                let row = &dc[((ch * K + ky) * K + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * wo..(oy + 1) * wo];
                    let (lo, hi) = valid_cols(kx, stride, w, wo);
                    if stride == 1 {
                        let d = &mut dst[lo + kx - PAD..hi + kx - PAD];
                        for (d, &s) in d.iter_mut().zip(&src[lo..hi]) {
                            *d += s;
                        }
                    } else {
                        for ox in lo..hi {
                            let ix = ox * stride + kx - PAD;
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle.
    fn naive(x: &Array3<f64>, wt: &ndarray::ArrayD<f64>, b: &[f64], stride: usize) -> Array3<f64> {
        let (c, h, w) = x.dim();
        let cout = wt.shape()[0];
        let ho = (h - 1) / stride + 1;
        let wo = (w - 1) / stride + 1;
        let mut out = Array3::zeros((cout, ho, wo));
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = b[o];
                    for ci in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                let ix = (ox * stride + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += wt[[o, ci, ky, kx]] * x[[ci, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    out[[o, oy, ox]] = s;
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for stride in [1, 2] {
            let mut p = ParameterStore::<f64>::new();
            let conv = Conv2d::new(&mut p, "c", 2, 3, stride, &mut rng).unwrap();
            p.vec_mut(conv.b)
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 0.1 * i as f64);
            let x = Array3::from_shape_fn((2, 7, 5), |(c, y, x)| {
                ((c * 31 + y * 7 + x) as f64 * 0.37).sin()
            });
            let (out, _) = conv.forward(&p, &x);
            let b: Vec<f64> = p.vec(conv.b).to_vec();
            let want = naive(&x, p.get(conv.w), &b, stride);
            assert_eq!(out.dim(), want.dim());
            for (a, b) in out.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_is_ceil_half() {
        let mut p = ParameterStore::<f32>::new();
        let conv = Conv2d::new(&mut p, "c", 1, 1, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let sizes: Vec<usize> = [300, 150, 75, 38, 19]
            .iter()
            .map(|&n| conv.out_size(n))
            .collect();
        assert_eq!(sizes, vec![150, 75, 38, 19, 10]);
    }
}
