//! Community recovery measured by cosine similarity of membership rows.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `K` aligned by an exact search; larger `K` falls back to greedy matching.
pub const EXACT_ALIGNMENT_MAX_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRecoveryReport {
    pub cosine_similarity: f64,
    /// `permutation[k]` is the inferred column matched to true column `k`.
    pub permutation: Vec<usize>,
    /// `false` when the alignment came from greedy matching.
    pub exact_alignment: bool,
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(&b) / (na * nb)
    }
}

/// Per-column contribution table: `s[k][l]` is the summed cosine numerator
/// from matching true column `k` with inferred column `l`, over both
/// membership matrices, already divided by the row norms.
fn contribution_table(pairs: [(&Array2<f64>, &Array2<f64>); 2]) -> Vec<Vec<f64>> {
    let k = pairs[0].0.ncols();
    let mut s = vec![vec![0.0; k]; k];
    for (truth, inferred) in pairs {
        for (t, f) in truth.rows().into_iter().zip(inferred.rows()) {
            let nt = t.dot(&t).sqrt();
            let nf = f.dot(&f).sqrt();
            if nt == 0.0 || nf == 0.0 {
                continue;
            }
            let scale = 1.0 / (nt * nf);
            for a in 0..k {
                if t[a] == 0.0 {
                    continue;
                }
                for b in 0..k {
                    s[a][b] += t[a] * f[b] * scale;
                }
            }
        }
    }
    s
}

/// Exact maximum-weight assignment by dynamic programming over subsets.
fn exact_assignment(s: &[Vec<f64>]) -> Vec<usize> {
    let k = s.len();
    let full = 1usize << k;
    let mut best = vec![f64::NEG_INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for used in 0..full {
        if best[used] == f64::NEG_INFINITY {
            continue;
        }
        let row = used.count_ones() as usize;
        if row == k {
            continue;
        }
        for col in 0..k {
            if used & (1 << col) != 0 {
                continue;
            }
            let next = used | (1 << col);
            let value = best[used] + s[row][col];
            if value > best[next] {
                best[next] = value;
                choice[next] = col;
            }
        }
    }
    let mut perm = vec![0; k];
    let mut used = full - 1;
    for row in (0..k).rev() {
        let col = choice[used];
        perm[row] = col;
        used &= !(1 << col);
    }
    perm
}

/// Repeatedly takes the largest remaining entry.
fn greedy_assignment(s: &[Vec<f64>]) -> Vec<usize> {
    let k = s.len();
    let mut cells: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
    cells.sort_by(|x, y| s[y.0][y.1].total_cmp(&s[x.0][x.1]).then(x.cmp(y)));
    let mut perm = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (a, b) in cells {
        if perm[a] == usize::MAX && !taken[b] {
            perm[a] = b;
            taken[b] = true;
        }
    }
    perm
}

/// Mean over nodes of `½[cos(u_i, û_iπ) + cos(v_i, v̂_iπ)]`, maximized over a
/// single column permutation `π` shared by both inferred matrices. Rows with
/// zero norm contribute 0.
pub fn cosine_similarity(
    true_u: &Array2<f64>,
    true_v: &Array2<f64>,
    inf_u: &Array2<f64>,
    inf_v: &Array2<f64>,
) -> Result<CommunityRecoveryReport> {
    let dim = true_u.dim();
    if true_v.dim() != dim || inf_u.dim() != dim || inf_v.dim() != dim {
        return Err(Error::Dimension(format!(
            "membership shapes differ: {:?} {:?} {:?} {:?}",
            true_u.dim(),
            true_v.dim(),
            inf_u.dim(),
            inf_v.dim()
        )));
    }
    let (n, k) = dim;
    if n == 0 || k == 0 {
        return Err(Error::Dimension("empty membership matrices".into()));
    }
    let s = contribution_table([(true_u, inf_u), (true_v, inf_v)]);
    let exact = k <= EXACT_ALIGNMENT_MAX_K;
    let permutation = if exact {
        exact_assignment(&s)
    } else {
        greedy_assignment(&s)
    };
    let permuted_u = inf_u.select(Axis(1), &permutation);
    let permuted_v = inf_v.select(Axis(1), &permutation);
    let mut total = 0.0;
    for i in 0..n {
        total += 0.5
            * (cosine(true_u.row(i), permuted_u.row(i))
                + cosine(true_v.row(i), permuted_v.row(i)));
    }
    Ok(CommunityRecoveryReport {
        cosine_similarity: total / n as f64,
        permutation,
        exact_alignment: exact,
    })
}
