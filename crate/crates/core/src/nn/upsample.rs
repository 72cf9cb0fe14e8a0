use ndarray::Array3;

use crate::scalar::Scalar;

/// Side length after scaling by `factor` (rounded to nearest).
pub fn upsample_size(n: usize, factor: f64) -> usize {
    (n as f64 * factor).round() as usize
}

fn src_map(n_in: usize, n_out: usize) -> Vec<usize> {
    (0..n_out).map(|o| o * n_in / n_out).collect()
}

/// Nearest-neighbour resize of a `[c, h, w]` tensor.
pub fn upsample_nearest<T: Scalar>(x: &Array3<T>, out_h: usize, out_w: usize) -> Array3<T> {
    let (c, h, w) = x.dim();
    let (ys, xs) = (src_map(h, out_h), src_map(w, out_w));
    let src = x.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &sy in &ys {
            let row = &plane[sy * w..(sy + 1) * w];
            out.extend(xs.iter().map(|&sx| row[sx]));
        }
    }
    Array3::from_shape_vec((c, out_h, out_w), out).expect("sized buffer")
}

/// Adjoint of [`upsample_nearest`]: sums output gradients into their source cells.
pub fn upsample_nearest_backward<T: Scalar>(dy: &Array3<T>, in_h: usize, in_w: usize) -> Array3<T> {
    let (c, out_h, out_w) = dy.dim();
    let (ys, xs) = (src_map(in_h, out_h), src_map(in_w, out_w));
    let src = dy.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let mut dx = Array3::<T>::zeros((c, in_h, in_w));
    let dst = dx.as_slice_mut().expect("fresh array");
    for ch in 0..c {
        let plane = &mut dst[ch * in_h * in_w..(ch + 1) * in_h * in_w];
        for (y, &sy) in ys.iter().enumerate() {
            let out_row = &src[(ch * out_h + y) * out_w..][..out_w];
            let row = &mut plane[sy * in_w..(sy + 1) * in_w];
            for (&v, &sx) in out_row.iter().zip(&xs) {
                row[sx] += v;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_sizes() {
        let mut n = 30;
        let mut sizes = vec![n];
        for f in [2.5, 2.0, 2.0] {
            n = upsample_size(n, f);
            sizes.push(n);
        }
        assert_eq!(sizes, vec![30, 75, 150, 300]);
    }

    #[test]
    fn backward_is_adjoint() {
        let x = Array3::from_shape_fn((2, 3, 4), |(c, y, x)| (c + 2 * y + 3 * x) as f64 * 0.1);
        let dy = Array3::from_shape_fn((2, 8, 10), |(c, y, x)| ((c * 7 + y * 3 + x) as f64).cos());
        let up = upsample_nearest(&x, 8, 10);
        let dx = upsample_nearest_backward(&dy, 3, 4);
        let lhs: f64 = up.iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
