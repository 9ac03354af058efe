//! Shared fixtures and brute-force oracles for the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use discharge_core::linalg::Matrix;
use discharge_core::mdp::{Action, CostSpec, Policy};
use discharge_core::rng::{self, SimRng};
use discharge_core::transitions::TransitionModel;

/// Dense random keep matrix and uniform p_UD.
pub fn random_model(h: usize, rng: &mut SimRng) -> TransitionModel {
    let mut rows = Vec::with_capacity(h);
    for _ in 0..h {
        let w: Vec<f64> = (0..h).map(|_| rng::uniform(rng) + 1e-3).collect();
        let s: f64 = w.iter().sum();
        rows.push(w.iter().map(|v| v / s).collect());
    }
    let p_ud = (0..h).map(|_| rng::uniform(rng)).collect();
    TransitionModel::new(Matrix::from_rows(&rows), p_ud).unwrap()
}

pub fn random_cost(h: usize, rng: &mut SimRng) -> CostSpec {
    CostSpec::standard(h, 5.0 * rng::uniform(rng))
}

/// Gauss-Jordan solve with full row scan; independent of the library LU.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Exact value of a stationary policy: (I - alpha P_mu) J = g_mu.
pub fn exact_value(policy: &Policy, model: &TransitionModel, cost: &CostSpec) -> Vec<f64> {
    let h = model.n_states;
    let a = cost.alpha;
    let mut m = vec![vec![0.0; h]; h];
    let mut rhs = vec![0.0; h];
    for x in 0..h {
        m[x][x] = 1.0;
        match policy.actions[x] {
            Action::Keep => {
                for y in 0..h {
                    m[x][y] -= a * model.keep_matrix[(x, y)];
                }
                rhs[x] = cost.g_keep[x];
            }
            Action::Discharge => {
                rhs[x] = cost.g_discharge[x]
                    + a * (model.p_sd[x] * cost.g_sd + model.p_ud[x] * cost.g_ud) / (1.0 - a);
            }
        }
    }
    gauss_solve(m, rhs)
}

/// All 2^H policies; returns the policy with minimal total value
/// (lowest mask on ties) and the pointwise minimum over policies.
pub fn brute_force(model: &TransitionModel, cost: &CostSpec) -> (Policy, Vec<f64>, Vec<f64>) {
    let h = model.n_states;
    let mut best: Option<(f64, Policy, Vec<f64>)> = None;
    let mut pointwise = vec![f64::INFINITY; h];
    for mask in 0u64..(1 << h) {
        let actions = (0..h)
            .map(|x| if mask >> x & 1 == 1 { Action::Discharge } else { Action::Keep })
            .collect();
        let p = Policy { actions };
        let j = exact_value(&p, model, cost);
        for (m, v) in pointwise.iter_mut().zip(&j) {
            *m = m.min(*v);
        }
        let total: f64 = j.iter().sum();
        if best.as_ref().is_none_or(|b| total < b.0 - 1e-12) {
            best = Some((total, p, j));
        }
    }
    let (_, p, j) = best.unwrap();
    (p, j, pointwise)
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Best-matching accuracy over all label bijections (k! permutations).
pub fn purity(truth: &[usize], labels: &[usize], k: usize) -> f64 {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &l) in truth.iter().zip(labels) {
        confusion[t][l] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = (0..k).map(|t| confusion[t][p[t]]).sum();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(p: &mut Vec<usize>, i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Max per-row L1 distance.
pub fn max_row_l1(a: &Matrix, b: &Matrix) -> f64 {
    a.iter_rows()
        .zip(b.iter_rows())
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Ground truth over a given keep matrix with a constant clinician
/// discharge rate; one silent feature.
pub fn chain_truth(keep: Matrix, discharge: f64, rng: &mut SimRng) -> discharge_core::synth::GroundTruthModel {
    let h = keep.rows();
    let mut p_ud: Vec<f64> = (0..h).map(|_| 0.6 * rng::uniform(rng)).collect();
    p_ud.sort_by(f64::total_cmp);
    discharge_core::synth::GroundTruthModel {
        n_states: h,
        keep_matrix: keep,
        p_ud,
        discharge_prob: vec![discharge; h],
        initial_dist: vec![1.0; h],
        feature_means: Matrix::zeros(h, 1),
        feature_scale: vec![0.0],
        seed: 0,
    }
}

pub fn random_keep(h: usize, rng: &mut SimRng) -> Matrix {
    random_model(h, rng).keep_matrix
}
