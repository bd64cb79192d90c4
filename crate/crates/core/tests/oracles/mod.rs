#![allow(dead_code)]

use std::collections::BTreeMap;

use econkg::coref::MergeDecision;
use econkg::forecast::LassoFit;
use econkg::triples::RdfTriple;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_problem(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let truth: Vec<f64> = (0..p).map(|j| if j < 5 { 2.0 - j as f64 * 0.7 } else { 0.0 }).collect();
    let y = Array1::from_shape_fn(n, |i| {
        let e: f64 = StandardNormal.sample(&mut rng);
        1.5 + (0..p).map(|j| x[[i, j]] * truth[j]).sum::<f64>() + e
    });
    (x, y)
}

/// Largest KKT violation of `fit` recomputed from scratch on the
/// standardized design the fit reports.
pub fn kkt_residual(x: &Array2<f64>, y: &Array1<f64>, fit: &LassoFit) -> f64 {
    let n = x.nrows() as f64;
    let resid: Vec<f64> = (0..x.nrows()).map(|i| y[i] - fit.predict_row(x.row(i))).collect();
    let mut worst = 0.0f64;
    for j in 0..x.ncols() {
        let g: f64 = (0..x.nrows())
            .map(|i| (x[[i, j]] - fit.means[j]) / fit.scales[j] * resid[i])
            .sum::<f64>()
            / n;
        let b = fit.coefficients[j];
        let v = if b == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g - fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub fn ols_oracle(x: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
    let (n, p) = x.dim();
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let b = DVector::from_iterator(n, y.iter().copied());
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    ata.cholesky().expect("well conditioned").solve(&atb).iter().copied().collect()
}

// Student-t tail written from scratch: regularized incomplete beta by
// continued fraction, log-gamma by Lanczos.

pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

pub fn t_two_sided(t: f64, df: f64) -> f64 {
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Straight transcription of the test with its own loops.
pub fn dm_reference(a: &[f64], b: &[f64], h: usize) -> (f64, f64) {
    let n = a.len();
    let mut d = Vec::new();
    for i in 0..n {
        d.push(a[i] - b[i]);
    }
    let mut mean = 0.0;
    for v in &d {
        mean += v;
    }
    mean /= n as f64;
    let mut v = 0.0;
    for k in 0..h {
        let mut g = 0.0;
        for t in k..n {
            g += (d[t] - mean) * (d[t - k] - mean);
        }
        g /= n as f64;
        v += if k == 0 { g } else { 2.0 * g };
    }
    let nf = n as f64;
    let hf = h as f64;
    let stat = mean / (v / nf).sqrt() * ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt();
    (stat, t_two_sided(stat, nf - 1.0))
}

pub fn loss_pair(seed: u64, n: usize, shift: f64, ma: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..n + ma).map(|_| StandardNormal.sample(&mut rng)).collect();
    let f: Vec<f64> = (0..n + ma).map(|_| StandardNormal.sample(&mut rng)).collect();
    let smooth = |s: &[f64], i: usize| s[i..=i + ma].iter().sum::<f64>() / (ma + 1) as f64;
    let a = (0..n).map(|i| smooth(&e, i).powi(2) + shift).collect();
    let b = (0..n).map(|i| smooth(&f, i).powi(2)).collect();
    (a, b)
}

/// Distances by repeated relaxation over the undirected edge list.
pub fn oracle_distances(triples: &[RdfTriple], center: &str, hops: usize) -> BTreeMap<String, usize> {
    let mut dist = BTreeMap::from([(center.to_string(), 0usize)]);
    loop {
        let mut changed = false;
        for t in triples.iter().filter(|t| t.subject != t.object) {
            for (a, b) in [(&t.subject, &t.object), (&t.object, &t.subject)] {
                if let Some(&da) = dist.get(a) {
                    if da < hops && dist.get(b).is_none_or(|&db| db > da + 1) {
                        dist.insert(b.clone(), da + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Component labels by repeated min-propagation.
pub fn oracle_classes(decisions: &[MergeDecision], n: usize) -> Vec<usize> {
    let idx = |s: &str| s[1..].parse::<usize>().unwrap();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for d in decisions.iter().filter(|d| d.confirm) {
            let (a, b) = (idx(&d.a), idx(&d.b));
            let m = label[a].min(label[b]);
            changed |= label[a] != m || label[b] != m;
            label[a] = m;
            label[b] = m;
        }
        if !changed {
            return label;
        }
    }
}

