//! Shared data generators for integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdid_core::panel::{PanelDataset, TreatmentDesign};

/// Rank-2 factor panel with one post period and selection on trends:
/// treated units load more heavily on a linear trend factor, so the arms
/// drift apart by `loading_gap · trend_gap` per period.
///
/// `Y_it = α_i + β_t + u_i1·v_t1 + u_i2·v_t2 + ε_it (+ δ in treated post)`.
pub struct FactorDesign {
    pub n: usize,
    pub n_treated: usize,
    pub t: usize,
    pub noise_sd: f64,
    pub delta: f64,
    pub trend_gap: f64,
    /// Mean loading gap between arms on the trend factor.
    pub loading_gap: f64,
    pub time_effect_sd: f64,
    /// Scale of the second (non-trending) factor.
    pub factor_sd: f64,
}

impl Default for FactorDesign {
    fn default() -> Self {
        Self {
            n: 200,
            n_treated: 50,
            t: 8,
            noise_sd: 0.5,
            delta: 1.0,
            trend_gap: 2.0,
            loading_gap: 0.2,
            time_effect_sd: 1.0,
            factor_sd: 1.0,
        }
    }
}

impl FactorDesign {
    /// No effect and no selection: both arms share the loading distribution.
    pub fn null() -> Self {
        Self {
            n_treated: 100,
            delta: 0.0,
            trend_gap: 0.25,
            loading_gap: 0.0,
            factor_sd: 0.5,
            ..Self::default()
        }
    }

    pub fn draw(&self, seed: u64) -> (PanelDataset, TreatmentDesign) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let noise = Normal::new(0.0, self.noise_sd).unwrap();
        let beta: Vec<f64> = (0..self.t).map(|_| self.time_effect_sd * std.sample(&mut rng)).collect();
        let v1: Vec<f64> = (0..self.t).map(|s| self.trend_gap * s as f64).collect();
        let v2: Vec<f64> = (0..self.t).map(|_| self.factor_sd * std.sample(&mut rng)).collect();
        let rows = (0..self.n)
            .map(|i| {
                let treated = i < self.n_treated;
                let alpha = 50.0 + 10.0 * std.sample(&mut rng);
                let u1 = std.sample(&mut rng) + if treated { self.loading_gap } else { 0.0 };
                let u2 = std.sample(&mut rng);
                (0..self.t)
                    .map(|s| {
                        let effect = if treated && s == self.t - 1 { self.delta } else { 0.0 };
                        alpha + beta[s] + u1 * v1[s] + u2 * v2[s] + noise.sample(&mut rng) + effect
                    })
                    .collect()
            })
            .collect();
        let units = (0..self.n).map(|i| format!("u{i:03}")).collect();
        let panel = PanelDataset::new(units, (1..=self.t as i64).collect(), rows).unwrap();
        let flags = (0..self.n).map(|i| i < self.n_treated).collect();
        let design = TreatmentDesign::new(flags, self.t - 1, self.t).unwrap();
        (panel, design)
    }

    /// Expected DiD bias: the treated loading gap times the trend factor's
    /// post-minus-pre-average change.
    pub fn did_bias(&self) -> f64 {
        let t_pre = self.t - 1;
        let pre_mean = self.trend_gap * (t_pre - 1) as f64 / 2.0;
        self.loading_gap * (self.trend_gap * t_pre as f64 - pre_mean)
    }
}

/// Uniform random panel with `n_tr` treated units and arbitrary values.
pub fn random_panel(rng: &mut impl Rng, n: usize, n_tr: usize, t: usize, t_pre: usize) -> (PanelDataset, TreatmentDesign) {
    let rows = (0..n).map(|_| (0..t).map(|_| rng.gen_range(0.0..100.0)).collect()).collect();
    let units = (0..n).map(|i| format!("u{i}")).collect();
    let panel = PanelDataset::new(units, (1..=t as i64).collect(), rows).unwrap();
    let design = TreatmentDesign::new((0..n).map(|i| i < n_tr).collect(), t_pre, t).unwrap();
    (panel, design)
}
