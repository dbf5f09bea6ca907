//! Dense loop over the training dyads shared by every denominator.
//!
//! For a pair of factor matrices `x`, `y` with `λ_ij = x_i · y_j`, each dyad
//! `{i, j}` gets the weights `c_ij = (1 + η λ_ji) / Z` and
//! `c_ji = (1 + η λ_ij) / Z`. Partners `j` are processed [`LANES`] at a time
//! from community-major columns so the arithmetic vectorizes; masked dyads
//! get weight 0.

use crate::mask::HeldOut;
use crate::model::log_normalizer;

pub(super) const LANES: usize = 4;

/// Products of normalizers are folded into the log once they pass this.
const FLUSH: f64 = 1e150;
/// Normalizers this large take the overflow-safe path.
const HUGE: f64 = 1e100;

/// Community-major copy of an `n × k` matrix, padded with zero rows so a
/// lane block starting at any node stays in bounds.
pub(super) struct Columns {
    k: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Columns {
    pub(super) fn from_rows(rows: &[f64], n: usize, k: usize) -> Self {
        let stride = n + LANES;
        let mut data = vec![0.0; k * stride];
        for i in 0..n {
            for a in 0..k {
                data[a * stride + i] = rows[i * k + a];
            }
        }
        Self { k, stride, data }
    }

    pub(super) fn zeros(n: usize, k: usize) -> Self {
        let stride = n + LANES;
        Self {
            k,
            stride,
            data: vec![0.0; k * stride],
        }
    }

    pub(super) fn k(&self) -> usize {
        self.k
    }

    #[inline(always)]
    fn col(&self, a: usize) -> &[f64] {
        &self.data[a * self.stride..(a + 1) * self.stride]
    }

    #[inline(always)]
    fn get(&self, i: usize, a: usize) -> f64 {
        self.data[a * self.stride + i]
    }

    /// Row-major `n × k` copy.
    pub(super) fn to_rows(&self, n: usize) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; n * k];
        for i in 0..n {
            for a in 0..k {
                out[i * k + a] = self.get(i, a);
            }
        }
        out
    }
}

/// What a sweep accumulates.
pub(super) mod mode {
    /// `out_i += c_ij y_j`, `out_j += c_ji y_i`, plus `Σ ln Z`.
    pub const SOURCE_LOG: u8 = 0;
    /// `out_i += c_ij y_j`, `out_j += c_ji y_i`.
    pub const SOURCE: u8 = 1;
    /// `out_j += c_ij x_i`, `out_i += c_ji x_j`.
    pub const TARGET: u8 = 2;
    /// `Σ λ_ij λ_ji / Z`.
    pub const PRESSURE: u8 = 3;
}

pub(super) struct Sweep {
    pub out: Columns,
    pub log_z: f64,
    pub pressure: f64,
}

#[inline(always)]
fn width<const K: usize>(k: usize) -> usize {
    if K == 0 {
        k
    } else {
        K
    }
}

/// One pass over the training dyads.
pub(super) fn sweep<const K: usize, const MODE: u8>(
    n: usize,
    x: &Columns,
    y: &Columns,
    eta: f64,
    held: Option<HeldOut<'_>>,
) -> Sweep {
    match held {
        None => sweep_impl::<K, MODE, false>(n, x, y, eta, None),
        Some(h) => sweep_impl::<K, MODE, true>(n, x, y, eta, Some(h)),
    }
}

#[inline(always)]
fn sweep_impl<const K: usize, const MODE: u8, const MASKED: bool>(
    n: usize,
    x: &Columns,
    y: &Columns,
    eta: f64,
    held: Option<HeldOut<'_>>,
) -> Sweep {
    let k = width::<K>(x.k);
    let accumulates = MODE != mode::PRESSURE;
    let mut out = Columns::zeros(if accumulates { n } else { 0 }, k);
    let mut weights = vec![0.0; if MASKED { n + LANES } else { 0 }];
    let mut row_acc = vec![[0.0; LANES]; k];
    let mut xi = vec![0.0; k];
    let mut yi = vec![0.0; k];
    let mut log_z = 0.0;
    let mut pressure = 0.0;

    for i in 0..n {
        let start = i + 1;
        if start >= n {
            break;
        }
        if MASKED {
            let (row, fold) = held.expect("masked sweep").row(i);
            for (w, &f) in weights.iter_mut().zip(row) {
                *w = if f == fold { 0.0 } else { 1.0 };
            }
            weights[row.len()..].fill(0.0);
        }
        for a in 0..k {
            xi[a] = x.get(i, a);
            yi[a] = y.get(i, a);
            row_acc[a] = [0.0; LANES];
        }
        let mut logs = 0.0;
        let mut prod = [1.0; LANES];
        let mut press = [0.0; LANES];

        let mut j0 = start;
        while j0 < n {
            let mut l_ij = [0.0; LANES];
            let mut l_ji = [0.0; LANES];
            for a in 0..k {
                let yc = &y.col(a)[j0..j0 + LANES];
                let xc = &x.col(a)[j0..j0 + LANES];
                for l in 0..LANES {
                    l_ij[l] += xi[a] * yc[l];
                    l_ji[l] += xc[l] * yi[a];
                }
            }
            let mut m = [1.0; LANES];
            if MASKED {
                m.copy_from_slice(&weights[j0 - start..j0 - start + LANES]);
            } else {
                // lanes past the last node see zero rates and contribute
                // nothing except through `m`
                for (l, ml) in m.iter_mut().enumerate() {
                    if j0 + l >= n {
                        *ml = 0.0;
                    }
                }
            }
            let mut s = [0.0; LANES];
            let mut inv = [0.0; LANES];
            for l in 0..LANES {
                s[l] = l_ij[l] + l_ji[l] + eta * l_ij[l] * l_ji[l];
                inv[l] = m[l] / (1.0 + s[l]);
            }
            match MODE {
                mode::SOURCE_LOG | mode::SOURCE | mode::TARGET => {
                    let mut c_ij = [0.0; LANES];
                    let mut c_ji = [0.0; LANES];
                    for l in 0..LANES {
                        c_ij[l] = (1.0 + eta * l_ji[l]) * inv[l];
                        c_ji[l] = (1.0 + eta * l_ij[l]) * inv[l];
                    }
                    let (near, far, own, other) = if MODE == mode::TARGET {
                        (c_ji, c_ij, x, &xi)
                    } else {
                        (c_ij, c_ji, y, &yi)
                    };
                    for a in 0..k {
                        let col = &own.col(a)[j0..j0 + LANES];
                        for l in 0..LANES {
                            row_acc[a][l] += near[l] * col[l];
                        }
                        let o = a * out.stride + j0;
                        let dst = &mut out.data[o..o + LANES];
                        for l in 0..LANES {
                            dst[l] += far[l] * other[a];
                        }
                    }
                    if MODE == mode::SOURCE_LOG {
                        let mut huge = false;
                        let mut full = false;
                        for l in 0..LANES {
                            let sl = s[l] * m[l];
                            huge |= sl >= HUGE;
                            prod[l] *= if sl < HUGE { 1.0 + sl } else { 1.0 };
                            full |= prod[l] > FLUSH;
                        }
                        if huge {
                            for l in 0..LANES {
                                if m[l] > 0.0 && s[l] >= HUGE {
                                    logs += log_normalizer(l_ij[l], l_ji[l], eta);
                                }
                            }
                        }
                        if full {
                            for p in prod.iter_mut() {
                                logs += p.ln();
                                *p = 1.0;
                            }
                        }
                    }
                }
                _ => {
                    for l in 0..LANES {
                        press[l] += l_ij[l] * l_ji[l] * inv[l];
                    }
                }
            }
            j0 += LANES;
        }

        if accumulates {
            for a in 0..k {
                let r = row_acc[a];
                out.data[a * out.stride + i] += (r[0] + r[1]) + (r[2] + r[3]);
            }
        }
        if MODE == mode::SOURCE_LOG {
            for p in prod {
                logs += p.ln();
            }
            log_z += logs;
        }
        if MODE == mode::PRESSURE {
            pressure += (press[0] + press[1]) + (press[2] + press[3]);
        }
    }
    Sweep { out, log_z, pressure }
}
