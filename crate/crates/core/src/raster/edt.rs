//! Exact Euclidean distance transform via the two-pass lower-envelope
//! method: a 1D squared-distance transform over rows, then over columns.
//! Squared distances between pixel grids are exact small integers in f64,
//! so the result matches a brute-force scan bit for bit.

use super::Grid;

const INF: f64 = f64::INFINITY;

/// Distance from every pixel to the nearest nonzero pixel of `features`.
/// Distances are in pixels; a grid with no features maps to infinity
/// everywhere.
pub fn distance_transform(features: &Grid<u8>) -> Grid<f64> {
    let (w, h) = (features.width, features.height);
    let mut sq = Grid::<f64>::filled(w, h, INF);
    for p in 0..sq.data.len() {
        if features.data[p] != 0 {
            sq.data[p] = 0.0;
        }
    }

    // Columns first, then rows; order does not matter for correctness.
    let mut col = vec![0.0f64; h];
    let mut out_col = vec![0.0f64; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = *sq.at(x, y);
        }
        dt_1d(&col, &mut out_col);
        for y in 0..h {
            *sq.at_mut(x, y) = out_col[y];
        }
    }
    let mut row = vec![0.0f64; w];
    let mut out_row = vec![0.0f64; w];
    for y in 0..h {
        row.copy_from_slice(&sq.data[y * w..(y + 1) * w]);
        dt_1d(&row, &mut out_row);
        for x in 0..w {
            *sq.at_mut(x, y) = out_row[x];
        }
    }

    for v in &mut sq.data {
        *v = v.sqrt();
    }
    sq
}

/// 1D squared-distance transform of a sampled function `f`:
/// `out[p] = min_q (p - q)^2 + f[q]`, computed with the lower envelope of
/// the parabolas rooted at each `q`.
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    // v[k]: abscissa of the k-th parabola in the envelope;
    // z[k]..z[k+1]: the range where it is minimal.
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        if f[q] == INF {
            continue;
        }
        loop {
            let p = v[k];
            let s = if f[p] == INF {
                // Any finite parabola beats an infinite one everywhere left
                // of +inf; replace it outright.
                -INF
            } else {
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64)
            };
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for p in 0..n {
        while z[k + 1] < p as f64 {
            k += 1;
        }
        let q = v[k];
        out[p] = if f[q] == INF {
            INF
        } else {
            ((p as isize - q as isize) * (p as isize - q as isize)) as f64 + f[q]
        };
    }
}
