/// Bilinear resampling of a row-major `rows × cols` matrix to
/// `out_rows × out_cols`, aligning corner samples. Identity when the sizes
/// already agree.
pub fn bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(src.len(), rows * cols, "matrix size");
    if (rows, cols) == (out_rows, out_cols) {
        return src.to_vec();
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let (r0, r1, fr) = coord(r, out_rows, rows);
        for c in 0..out_cols {
            let (c0, c1, fc) = coord(c, out_cols, cols);
            let top = src[r0 * cols + c0] * (1.0 - fc) + src[r0 * cols + c1] * fc;
            let bottom = src[r1 * cols + c0] * (1.0 - fc) + src[r1 * cols + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let m = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(bilinear(&m, 2, 2, 2, 2), m);
    }

    #[test]
    fn linear_ramp_is_reproduced_exactly() {
        let ramp: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let up = bilinear(&ramp, 4, 1, 7, 1);
        for (i, v) in up.iter().enumerate() {
            assert!((v - i as f64 * 0.5).abs() < 1e-12);
        }
    }
}
