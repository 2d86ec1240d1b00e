#![allow(dead_code)]

use fbvar::data::{Dataset, Period, TransformCode};
use fbvar::gibbs::ChainOutput;
use fbvar::model::{ModelDims, ParameterDraw};
use nalgebra::{DMatrix, DVector};

/// Largest gap between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail probability `P(sqrt(n_eff) D > d sqrt(n_eff))`.
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn ks_one_sample_p(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    ks_pvalue(ks_statistic(sample, cdf), sample.len() as f64)
}

pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    ks_pvalue(d, na * nb / (na + nb))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Dataset over `y` (`n x m`) with the given lag order.
pub fn dataset(y: DMatrix<f64>, p: usize, standardize: bool) -> Dataset {
    let m = y.ncols();
    let names = (1..=m).map(|i| format!("s{i}")).collect();
    let periods = Period::new(1990, 1).unwrap().range(y.nrows());
    Dataset::from_transformed(names, vec![TransformCode::Level; m], periods, y, p, standardize).unwrap()
}

/// A linear draw (no nonlinear factors) with the given static factors.
pub fn linear_draw(a: DMatrix<f64>, omega: Vec<f64>, lambda_q: DMatrix<f64>, v_q: Vec<f64>) -> ParameterDraw {
    let m = a.nrows();
    ParameterDraw {
        a,
        lambda_f: DMatrix::zeros(m, 0),
        lambda_q,
        omega: DVector::from_vec(omega),
        v_q: DVector::from_vec(v_q),
        v_f: DVector::zeros(0),
        ensembles: Vec::new(),
        f: None,
        q: None,
    }
}

pub fn chain_of(draws: Vec<ParameterDraw>, p: usize, t_len: usize) -> ChainOutput {
    let d = &draws[0];
    let dims = ModelDims::new(d.m(), p, d.q_f(), d.q_q(), t_len).unwrap();
    let mut out = ChainOutput::new(dims);
    out.draws = draws;
    out
}
