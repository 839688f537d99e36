//! Exhaustive reference computations, independent of the fast algorithms.
//! Used by tests and by `ttbell verify`.

use crate::distance::Matching;

/// Calls `visit` with every partial non-crossing matching between sequences
/// of lengths `m` and `n`.
pub fn for_each_matching(m: usize, n: usize, mut visit: impl FnMut(&Matching)) {
    fn rec(k: usize, next_l: usize, m: usize, n: usize, cur: &mut Matching, visit: &mut dyn FnMut(&Matching)) {
        if k == m {
            visit(cur);
            return;
        }
        rec(k + 1, next_l, m, n, cur, visit);
        for l in next_l..n {
            cur.pairs.push((k, l));
            rec(k + 1, l + 1, m, n, cur, visit);
            cur.pairs.pop();
        }
    }
    let mut cur = Matching::default();
    rec(0, 0, m, n, &mut cur, &mut visit);
}

/// Minimum of `m - |dom M| + sum g(t_M(k) - r_k)` over every matching.
pub fn brute_force_min_cost(g: impl Fn(f64) -> f64, r: &[f64], t: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for_each_matching(r.len(), t.len(), |mat| {
        let c = (r.len() - mat.len()) as f64
            + mat.pairs.iter().map(|&(k, l)| g(t[l] - r[k])).sum::<f64>();
        best = best.min(c);
    });
    best
}

/// Largest one-to-one matching, crossing allowed, of pairs with
/// `|t_l - r_k| < w`.
pub fn brute_force_max_coincidences(r: &[f64], t: &[f64], w: f64) -> usize {
    fn rec(k: usize, used: &mut Vec<bool>, r: &[f64], t: &[f64], w: f64) -> usize {
        if k == r.len() {
            return 0;
        }
        let mut best = rec(k + 1, used, r, t, w);
        for l in 0..t.len() {
            if !used[l] && (t[l] - r[k]).abs() < w {
                used[l] = true;
                best = best.max(1 + rec(k + 1, used, r, t, w));
                used[l] = false;
            }
        }
        best
    }
    rec(0, &mut vec![false; t.len()], r, t, w)
}

/// All sorted sequences of length at most `max_len` with entries from `grid`
/// (repetition allowed).
pub fn enumerate_sequences(grid: &[f64], max_len: usize) -> Vec<Vec<f64>> {
    let mut g = grid.to_vec();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = vec![vec![]];
    let mut frontier: Vec<(Vec<f64>, usize)> = vec![(vec![], 0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (seq, start) in &frontier {
            for (i, &x) in g.iter().enumerate().skip(*start) {
                let mut s = seq.clone();
                s.push(x);
                out.push(s.clone());
                next.push((s, i));
            }
        }
        frontier = next;
    }
    out
}

/// Joint outcome probabilities of a two-qubit state
/// `cos(theta)|00> + sin(theta)|11>` measured with linear polarizers at
/// `alpha`, `beta` and detectors of efficiency `eta`, computed from the
/// 4x4 density matrix. Returns `[p00, p01, p10, p11]` with 1 = detection.
pub fn density_matrix_probabilities(theta: f64, alpha: f64, beta: f64, eta: f64) -> [f64; 4] {
    let psi = [theta.cos(), 0.0, 0.0, theta.sin()];
    let mut rho = [[0.0f64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            rho[i][j] = psi[i] * psi[j];
        }
    }
    let proj = |a: f64| {
        let v = [a.cos(), a.sin()];
        [[v[0] * v[0], v[0] * v[1]], [v[1] * v[0], v[1] * v[1]]]
    };
    let (pa, pb) = (proj(alpha), proj(beta));
    let kron = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
        let mut k = [[0.0f64; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        k[2 * i + p][2 * j + q] = x[i][j] * y[p][q];
                    }
                }
            }
        }
        k
    };
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let trace = |op: [[f64; 4]; 4]| {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += op[i][j] * rho[j][i];
            }
        }
        s
    };
    let pab = trace(kron(pa, pb));
    let p_a = trace(kron(pa, id));
    let p_b = trace(kron(id, pb));
    // Each passed photon is detected independently with probability eta.
    let p11 = eta * eta * pab;
    let p10 = eta * p_a - p11;
    let p01 = eta * p_b - p11;
    [1.0 - p11 - p10 - p01, p01, p10, p11]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_count_is_binomial_sum() {
        // Number of partial monotone matchings of sizes (m, n) is
        // sum_j C(m, j) C(n, j).
        let binom = |n: u64, k: u64| (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1));
        for m in 0..5 {
            for n in 0..5 {
                let mut count = 0;
                for_each_matching(m, n, |_| count += 1);
                let expect: u64 = (0..=m.min(n) as u64).map(|j| binom(m as u64, j) * binom(n as u64, j)).sum();
                assert_eq!(count, expect);
            }
        }
    }

    #[test]
    fn sequences_enumeration_size() {
        // Multisets of size <= 2 over 3 points: 1 + 3 + 6.
        assert_eq!(enumerate_sequences(&[0.0, 0.5, 1.0], 2).len(), 10);
    }

    #[test]
    fn max_coincidences_small() {
        assert_eq!(brute_force_max_coincidences(&[1.0], &[0.95, 1.04], 0.1), 1);
        assert_eq!(brute_force_max_coincidences(&[1.0, 1.05], &[0.95, 1.04], 0.1), 2);
    }
}
