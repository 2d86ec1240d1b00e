mod common;

use common::{chain_of, dataset, ks_two_sample_p, linear_draw, variance};
use fbvar::bart::{Covariates, ResponseMap, SplitRule, TreeEnsemble, TreeNode};
use fbvar::forecast::{crps, lpl_mixture, predictive_simulate};
use fbvar::model::{roll_lags, LoadingConstraint, ParameterDraw, StepShocks};
use fbvar::rng::{std_normal, substream};
use fbvar::structural::{girf, quantile_sorted, ShockSpec};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn var_data(t_len: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = substream(seed, &[]);
    let mut y = DMatrix::zeros(t_len, 2);
    for t in 1..t_len {
        y[(t, 0)] = 0.5 * y[(t - 1, 0)] + std_normal(&mut rng);
        y[(t, 1)] = 0.2 * y[(t - 1, 0)] + 0.3 * y[(t - 1, 1)] + std_normal(&mut rng);
    }
    y
}

#[test]
fn linear_forecasts_match_a_plain_var_simulator() {
    let ds = dataset(var_data(60, 1), 1, false);
    let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.4]);
    let omega = vec![0.5, 1.5];
    let chain = chain_of(vec![linear_draw(a.clone(), omega.clone(), DMatrix::zeros(2, 0), vec![])], 1, 59);
    let origin = ds.t_len();
    let fc = predictive_simulate(&chain, &ds, origin, 3, 5000, 7).unwrap();

    let y0 = DVector::from_vec(ds.lags_for(origin).unwrap());
    let mut rng = substream(99, &[]);
    let reference: Vec<f64> = (0..5000)
        .map(|_| {
            let mut y = y0.clone();
            for _ in 0..3 {
                let e = DVector::from_fn(2, |i, _| omega[i].sqrt() * std_normal(&mut rng));
                y = &a * y + e;
            }
            y[1]
        })
        .collect();
    let p = ks_two_sample_p(&fc.column(3, 1), &reference);
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn crps_matches_the_gaussian_closed_form() {
    let mut rng = substream(2, &[]);
    let draws: Vec<f64> = (0..40_000).map(|_| std_normal(&mut rng)).collect();
    let n = Normal::new(0.0, 1.0).unwrap();
    for y in [-1.5, 0.0, 0.4, 2.2] {
        let exact = y * (2.0 * n.cdf(y) - 1.0) + 2.0 * n.pdf(y) - 1.0 / std::f64::consts::PI.sqrt();
        assert!((crps(&draws, y).unwrap() - exact).abs() < 0.01, "y = {y}");
    }
}

#[test]
fn wider_mixture_scores_better_in_the_tail() {
    let narrow = lpl_mixture(&[(0.0, 1.0), (0.1, 1.0)], 5.0).unwrap().value;
    let wide = lpl_mixture(&[(0.0, 4.0), (0.1, 4.0)], 5.0).unwrap().value;
    assert!(wide > narrow);
}

/// `J C^h J'` applied to the impact vector, for a VAR with lag blocks `a`.
fn companion_irf(a: &DMatrix<f64>, impact: &DVector<f64>, horizon: usize) -> Vec<DVector<f64>> {
    let m = a.nrows();
    let k = a.ncols();
    let mut c = DMatrix::zeros(k, k);
    c.rows_mut(0, m).copy_from(a);
    for i in m..k {
        c[(i, i - m)] = 1.0;
    }
    let mut state = DVector::zeros(k);
    state.rows_mut(0, m).copy_from(impact);
    (0..=horizon)
        .map(|h| {
            let out = DVector::from_fn(m, |i, _| state[i]);
            if h < horizon {
                state = &c * &state;
            }
            out
        })
        .collect()
}

#[test]
fn linear_girf_equals_the_companion_form_irf() {
    let ds = dataset(var_data(80, 3), 2, true);
    let draws: Vec<ParameterDraw> = (0..6)
        .map(|d| {
            let s = 0.05 * d as f64;
            linear_draw(
                DMatrix::from_row_slice(2, 4, &[0.5 + s, 0.1, -0.1, 0.05, 0.2, 0.3 - s, 0.0, 0.1]),
                vec![0.4, 0.6],
                DMatrix::from_column_slice(2, 1, &[1.0, -0.5 + s]),
                vec![0.3 + s],
            )
        })
        .collect();
    let chain = chain_of(draws, 2, ds.t_len());
    let mut spec = ShockSpec::new(0, 1.0, 1, 8);
    spec.n_histories = 5;
    spec.n_paths = 4;
    let pos = girf(&chain, &ds, &spec, 5).unwrap();
    let neg = girf(&chain, &ds, &spec.with_sign(-1), 6).unwrap();
    for (d, draw) in chain.draws.iter().enumerate() {
        let impact = draw.lambda_q.column(0) * draw.v_q[0].sqrt();
        let oracle = companion_irf(&draw.a, &impact, 8);
        for h in 0..=8 {
            for i in 0..2 {
                let o = oracle[h][i] * ds.standardization.sd[i];
                let tol = 3.0 * pos.mc_se[d][(h, i)] + 1e-9 * (1.0 + o.abs());
                assert!((pos.draws[d][(h, i)] - o).abs() <= tol, "draw {d} h {h} var {i}");
                assert!((-neg.draws[d][(h, i)] - o).abs() <= tol, "negative, draw {d} h {h} var {i}");
            }
        }
    }
}

#[test]
fn fixed_cell_pins_the_impact_response() {
    let ds = dataset(var_data(50, 4), 1, true);
    let sd1 = ds.standardization.sd[1];
    let draws: Vec<ParameterDraw> = (0..4)
        .map(|d| {
            linear_draw(
                DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.1, 0.2]),
                vec![0.4, 0.6],
                DMatrix::from_column_slice(2, 1, &[0.7 + d as f64, 0.25 / sd1]),
                vec![0.3 + d as f64],
            )
        })
        .collect();
    let mut chain = chain_of(draws, 1, ds.t_len());
    chain.lambda_q_constraints = vec![LoadingConstraint::Positive, LoadingConstraint::Fixed(0.25 / sd1)];
    let mut spec = ShockSpec::new(0, 1.0, 1, 2);
    spec.n_histories = 3;
    spec.n_paths = 2;
    let g = girf(&chain, &ds, &spec, 1).unwrap();
    for d in &g.draws {
        assert!((d[(0, 1)] - 0.25).abs() < 1e-12);
        assert!(d[(0, 0)] > 0.0);
    }
}

fn threshold_draw(x_rows: usize) -> ParameterDraw {
    let x = DMatrix::from_fn(x_rows, 1, |i, _| i as f64 / x_rows as f64 - 0.5);
    let cov = Covariates::from_matrix(&x);
    let tree = TreeNode::split(SplitRule { var: 0, cut: 0.0 }, TreeNode::leaf(-0.8), TreeNode::leaf(0.9));
    let ens = TreeEnsemble::from_parts(vec![tree], ResponseMap::IDENTITY, &cov);
    ParameterDraw {
        a: DMatrix::from_element(1, 1, 0.4),
        lambda_f: DMatrix::from_element(1, 1, 1.0),
        lambda_q: DMatrix::from_element(1, 1, 1.0),
        omega: DVector::from_element(1, 0.2),
        v_q: DVector::from_element(1, 1.0),
        v_f: DVector::from_element(1, 0.1),
        ensembles: vec![ens.snapshot()],
        f: None,
        q: None,
    }
}

#[test]
fn shared_noise_does_not_inflate_girf_variance() {
    let draw = threshold_draw(20);
    let ds = dataset(DMatrix::from_fn(30, 1, |t, _| ((t * 7 % 11) as f64 - 5.0) / 5.0), 1, false);
    let mut chain = chain_of(vec![draw.clone()], 1, ds.t_len());
    chain.lambda_q_constraints = vec![LoadingConstraint::Free];
    let mut spec = ShockSpec::new(0, 1.0, 1, 3);
    spec.n_histories = 1;
    spec.n_paths = 10;
    spec.antithetic = false;
    spec.history_rows = Some(vec![4]);
    let x0 = ds.lags_for(4).unwrap();
    let h = 3;

    let shared: Vec<f64> = (0..300)
        .map(|s| girf(&chain, &ds, &spec, s).unwrap().draws[0][(h, 0)])
        .collect();
    let independent: Vec<f64> = (0..300)
        .map(|s| {
            let mut rng = substream(5000 + s, &[]);
            let mut path = |imp: Option<&[f64]>| {
                let mut x = x0.clone();
                let mut y = DVector::zeros(1);
                for step in 0..=h {
                    let shocks = StepShocks::draw(1, 1, 1, &mut rng);
                    y = draw.step(&x, &shocks, if step == 0 { imp } else { None });
                    roll_lags(&mut x, y.as_slice());
                }
                y[0]
            };
            let mut diff = 0.0;
            for _ in 0..10 {
                diff += path(Some(&[1.0])) - path(None);
            }
            diff / 10.0
        })
        .collect();
    assert!(variance(&shared) <= variance(&independent));
}

#[test]
fn wider_bands_nest_narrower_ones() {
    let mut rng = substream(6, &[]);
    let mut v: Vec<f64> = (0..501).map(|_| std_normal(&mut rng).exp()).collect();
    v.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&v, p);
    assert!(q(0.05) <= q(0.16) && q(0.16) <= q(0.5) && q(0.5) <= q(0.84) && q(0.84) <= q(0.95));
}

#[test]
fn per_draw_mixture_uses_each_draws_paths() {
    use fbvar::forecast::{lpl_with, DensityEstimate, ForecastResult};
    let h2 = DMatrix::from_column_slice(6, 1, &[0.0, 1.0, 2.0, 10.0, 12.0, 14.0]);
    let fc = ForecastResult {
        origin: 0,
        draws: vec![DMatrix::zeros(6, 1), h2],
        h1_components: Vec::new(),
        n_per_draw: 3,
    };
    // Draw 1: mean 1, variance 1. Draw 2: mean 12, variance 4.
    let y = 3.0;
    let n1 = Normal::new(1.0, 1.0).unwrap().pdf(y);
    let n2 = Normal::new(12.0, 2.0).unwrap().pdf(y);
    let got = lpl_with(&fc, y, 2, 0, DensityEstimate::DrawMixture).unwrap().value;
    assert!((got - (0.5 * (n1 + n2)).ln()).abs() < 1e-12);
    let pooled = lpl_with(&fc, y, 2, 0, DensityEstimate::MomentMatched).unwrap().value;
    assert!((got - pooled).abs() > 0.1);
}
