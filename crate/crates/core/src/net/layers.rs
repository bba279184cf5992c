//! Dense kernels for `n×n` feature maps. Everything is row-major:
//! feature maps are `[channel][y][x]`, conv weights `[out][in][ky][kx]`,
//! fully connected weights `[out][in]`.

/// Gathers every `k×k` same-padded input patch: rows are
/// `(channel, ky, kx)`, columns are output pixels.
fn im2col(input: &[f64], in_ch: usize, n: usize, k: usize, cols: &mut Vec<f64>) {
    let pad = k / 2;
    let hw = n * n;
    cols.clear();
    cols.resize(in_ch * k * k * hw, 0.0);
    for ci in 0..in_ch {
        let src = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                // output (y, x) reads input (y + ky - pad, x + kx - pad)
                let y0 = pad.saturating_sub(ky);
                let y1 = (n + pad).saturating_sub(ky).min(n);
                let x0 = pad.saturating_sub(kx);
                let x1 = (n + pad).saturating_sub(kx).min(n);
                for y in y0..y1 {
                    let sy = y + ky - pad;
                    row[y * n + x0..y * n + x1].copy_from_slice(&src[sy * n + x0 + kx - pad..sy * n + x1 + kx - pad]);
                }
            }
        }
    }
}

/// Adds column gradients back onto the input pixels they were read from.
fn col2im(cols: &[f64], in_ch: usize, n: usize, k: usize, dinput: &mut [f64]) {
    let pad = k / 2;
    let hw = n * n;
    dinput.fill(0.0);
    for ci in 0..in_ch {
        let dst = &mut dinput[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let y0 = pad.saturating_sub(ky);
                let y1 = (n + pad).saturating_sub(ky).min(n);
                let x0 = pad.saturating_sub(kx);
                let x1 = (n + pad).saturating_sub(kx).min(n);
                for y in y0..y1 {
                    let sy = y + ky - pad;
                    for x in x0..x1 {
                        dst[sy * n + x + kx - pad] += row[y * n + x];
                    }
                }
            }
        }
    }
}

/// Same-padded, stride-1 convolution.
pub(crate) fn conv_forward(
    input: &[f64],
    in_ch: usize,
    n: usize,
    weights: &[f64],
    bias: &[f64],
    out_ch: usize,
    k: usize,
    out: &mut [f64],
) {
    let hw = n * n;
    let rows = in_ch * k * k;
    debug_assert_eq!(input.len(), in_ch * hw);
    debug_assert_eq!(weights.len(), out_ch * rows);
    debug_assert_eq!(out.len(), out_ch * hw);
    let mut scratch = Vec::new();
    let cols: &[f64] = if k == 1 {
        input
    } else {
        im2col(input, in_ch, n, k, &mut scratch);
        &scratch
    };
    for co in 0..out_ch {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.fill(bias[co]);
        for (r, &wv) in weights[co * rows..(co + 1) * rows].iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            for (acc, x) in o.iter_mut().zip(&cols[r * hw..(r + 1) * hw]) {
                *acc += wv * x;
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient
/// of [`conv_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    input: &[f64],
    in_ch: usize,
    n: usize,
    weights: &[f64],
    out_ch: usize,
    k: usize,
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let hw = n * n;
    let rows = in_ch * k * k;
    let mut scratch = Vec::new();
    let cols: &[f64] = if k == 1 {
        input
    } else {
        im2col(input, in_ch, n, k, &mut scratch);
        &scratch
    };
    for co in 0..out_ch {
        let d = &dout[co * hw..(co + 1) * hw];
        dbias[co] += d.iter().sum::<f64>();
        for (r, dw) in dweights[co * rows..(co + 1) * rows].iter_mut().enumerate() {
            *dw += d.iter().zip(&cols[r * hw..(r + 1) * hw]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    if let Some(di) = dinput {
        let mut dcols = vec![0.0; rows * hw];
        for co in 0..out_ch {
            let d = &dout[co * hw..(co + 1) * hw];
            for (r, &wv) in weights[co * rows..(co + 1) * rows].iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                for (acc, g) in dcols[r * hw..(r + 1) * hw].iter_mut().zip(d) {
                    *acc += wv * g;
                }
            }
        }
        if k == 1 {
            di.copy_from_slice(&dcols);
        } else {
            col2im(&dcols, in_ch, n, k, di);
        }
    }
}

pub(crate) fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let fan_in = input.len();
    for (o, (row, b)) in out.iter_mut().zip(weights.chunks_exact(fan_in).zip(bias)) {
        *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
    }
}

pub(crate) fn dense_backward(
    input: &[f64],
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let fan_in = input.len();
    for (o, &d) in dout.iter().enumerate() {
        dbias[o] += d;
        if d == 0.0 {
            continue;
        }
        for (dw, x) in dweights[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
            *dw += d * x;
        }
    }
    if let Some(di) = dinput {
        di.fill(0.0);
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (g, w) in di.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                *g += d * w;
            }
        }
    }
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward activation was clamped by ReLU.
pub(crate) fn relu_backward(activation: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
