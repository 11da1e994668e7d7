//! Truncated hierarchy of Weyl-ordered moment equations for the quartic trap.
//!
//! The exact equations couple every `G^{a,b}` to higher orders. Keeping only
//! `a + b <= n_t` (higher moments set to zero) gives a closed nonlinear system
//! whose accuracy is measured against the full quantum evolution.

use serde::Serialize;

use crate::dynamics::{self, DecoherenceSpec, IntegratorConfig};
use crate::error::{Error, Result};
use crate::ode::{self, Accept, Tolerances};
use crate::operators::PotentialSpec;
use crate::states::{self, DensityMatrix};

/// Largest truncation order accepted (an even order 14 plus its odd companion).
pub const MAX_TRUNCATION_ORDER: usize = 15;

/// Magnitude beyond which a truncated run is declared unstable.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// First moments plus central Weyl moments `G^{a,b}` for `2 <= a + b <= n_t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentVector {
    pub mean_x: f64,
    pub mean_p: f64,
    n_t: usize,
    g: Vec<f64>,
}

fn order_offset(order: usize) -> usize {
    // number of stored entries with total order in 2..order
    if order <= 2 {
        0
    } else {
        order * (order + 1) / 2 - 3
    }
}

impl MomentVector {
    pub fn zeros(n_t: usize, mean_x: f64, mean_p: f64) -> Self {
        Self { mean_x, mean_p, n_t, g: vec![0.0; order_offset(n_t + 1)] }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    fn index(a: usize, b: usize) -> usize {
        order_offset(a + b) + a
    }

    /// `G^{a,b}`, with `G^{0,0} = 1`, first-order central moments `0`, and
    /// anything above `n_t` reported as `0`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        match a + b {
            0 => 1.0,
            1 => 0.0,
            n if n > self.n_t => 0.0,
            _ => self.g[Self::index(a, b)],
        }
    }

    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        assert!((2..=self.n_t).contains(&(a + b)), "moment ({a},{b}) not stored at order {}", self.n_t);
        self.g[Self::index(a, b)] = value;
    }

    /// Drops every moment above `n_t`.
    pub fn truncate_to(&mut self, n_t: usize) {
        self.g.truncate(order_offset(n_t + 1));
        self.n_t = n_t;
    }

    /// `<x^2> = G^{0,2} + <x>^2`.
    pub fn x2(&self) -> f64 {
        self.get(0, 2) + self.mean_x * self.mean_x
    }

    pub fn max_abs(&self) -> f64 {
        self.g.iter().fold(self.mean_x.abs().max(self.mean_p.abs()), |m, v| m.max(v.abs()))
    }

    fn to_state(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 + self.g.len());
        y.push(self.mean_x);
        y.push(self.mean_p);
        y.extend_from_slice(&self.g);
        y
    }

    fn from_state(n_t: usize, y: &[f64]) -> Self {
        Self { mean_x: y[0], mean_p: y[1], n_t, g: y[2..].to_vec() }
    }
}

/// Factor of a product term: `G^{a,b}` at a position in the state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    /// Power of `<x>` multiplying the term.
    pub mean_x_power: u8,
    /// State-vector indices of the `G` factors (`G^{0,0} = 1` is omitted).
    pub factors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSystem {
    pub n_t: usize,
    pub alpha: f64,
    /// Right-hand side of `d<p>/dt`.
    pub mean_p_rule: Vec<Term>,
    /// Right-hand side for every stored `G^{a,b}`, in state order.
    pub rules: Vec<((usize, usize), Vec<Term>)>,
}

enum Factor {
    One,
    Zero,
    At(usize),
}

fn factor(n_t: usize, a: i64, b: i64) -> Factor {
    if a < 0 || b < 0 {
        return Factor::Zero;
    }
    let (a, b) = (a as usize, b as usize);
    match a + b {
        0 => Factor::One,
        1 => Factor::Zero,
        n if n > n_t => Factor::Zero,
        _ => Factor::At(2 + MomentVector::index(a, b)),
    }
}

fn push_term(out: &mut Vec<Term>, n_t: usize, coefficient: f64, mean_x_power: u8, gs: &[(i64, i64)]) {
    if coefficient == 0.0 {
        return;
    }
    let mut factors = Vec::new();
    for &(a, b) in gs {
        match factor(n_t, a, b) {
            Factor::Zero => return,
            Factor::One => {}
            Factor::At(i) => factors.push(i),
        }
    }
    out.push(Term { coefficient, mean_x_power, factors });
}

/// Moment equations of `H = p²/4 + x⁴/α⁴`, truncated at total order `n_t`:
///
/// ```text
/// dG^{a,b}/dt = b G^{a+1,b-1} + 8a/α⁴ [3<x> G^{0,2} + G^{0,3}] G^{a-1,b}
///             - 8a/α⁴ [3<x>² G^{a-1,b+1} + 3<x> G^{a-1,b+2} + G^{a-1,b+3}]
///             + 8a(a-1)(a-2)/α⁴ [<x> G^{a-3,b} + G^{a-3,b+1}]
/// ```
pub fn build_moment_system(alpha: f64, n_t: usize) -> Result<MomentSystem> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(2..=MAX_TRUNCATION_ORDER).contains(&n_t) {
        return Err(Error::Domain(format!("truncation order must be in 2..={MAX_TRUNCATION_ORDER}, got {n_t}")));
    }
    let k = 8.0 / alpha.powi(4);
    let mut mean_p_rule = Vec::new();
    push_term(&mut mean_p_rule, n_t, -k, 3, &[]);
    push_term(&mut mean_p_rule, n_t, -3.0 * k, 1, &[(0, 2)]);
    push_term(&mut mean_p_rule, n_t, -k, 0, &[(0, 3)]);

    let mut rules = Vec::new();
    for order in 2..=n_t {
        for a in 0..=order {
            let b = order - a;
            let (ai, bi) = (a as i64, b as i64);
            let ka = k * a as f64;
            let kc = k * (a * a.saturating_sub(1) * a.saturating_sub(2)) as f64;
            let mut terms = Vec::new();
            push_term(&mut terms, n_t, b as f64, 0, &[(ai + 1, bi - 1)]);
            push_term(&mut terms, n_t, 3.0 * ka, 1, &[(0, 2), (ai - 1, bi)]);
            push_term(&mut terms, n_t, ka, 0, &[(0, 3), (ai - 1, bi)]);
            push_term(&mut terms, n_t, -3.0 * ka, 2, &[(ai - 1, bi + 1)]);
            push_term(&mut terms, n_t, -3.0 * ka, 1, &[(ai - 1, bi + 2)]);
            push_term(&mut terms, n_t, -ka, 0, &[(ai - 1, bi + 3)]);
            push_term(&mut terms, n_t, kc, 1, &[(ai - 3, bi)]);
            push_term(&mut terms, n_t, kc, 0, &[(ai - 3, bi + 1)]);
            rules.push(((a, b), terms));
        }
    }
    Ok(MomentSystem { n_t, alpha, mean_p_rule, rules })
}

impl MomentSystem {
    /// Size of the state vector (`<x>`, `<p>` and the stored moments).
    pub fn state_len(&self) -> usize {
        2 + self.rules.len()
    }

    pub fn rule(&self, a: usize, b: usize) -> Option<&[Term]> {
        self.rules.iter().find(|(ab, _)| *ab == (a, b)).map(|(_, t)| t.as_slice())
    }

    fn eval_terms(terms: &[Term], y: &[f64]) -> f64 {
        let mx = y[0];
        terms
            .iter()
            .map(|t| t.coefficient * mx.powi(t.mean_x_power as i32) * t.factors.iter().map(|&i| y[i]).product::<f64>())
            .sum()
    }

    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = Self::eval_terms(&self.mean_p_rule, y);
        for (k, (_, terms)) in self.rules.iter().enumerate() {
            dy[2 + k] = Self::eval_terms(terms, y);
        }
    }
}

/// Outcome of a moment integration; `instability` is set when the run was
/// cut short by a blow-up, with `moments` holding the samples up to that point.
#[derive(Clone, Debug)]
pub struct MomentRun {
    pub moments: Vec<MomentVector>,
    pub instability: Option<(f64, f64)>,
}

/// Integrates the truncated system, keeping whatever was computed before a blow-up.
pub fn integrate_moments_partial(sys: &MomentSystem, init: &MomentVector, t_grid: &[f64]) -> Result<MomentRun> {
    let mut start = init.clone();
    if start.n_t < sys.n_t {
        return Err(Error::Domain(format!(
            "initial moments carry order {} but the system needs {}",
            start.n_t, sys.n_t
        )));
    }
    start.truncate_to(sys.n_t);
    let tol = Tolerances { rel: 1e-10, abs: 1e-12, ..Default::default() };
    let mut moments = Vec::with_capacity(t_grid.len());
    let result = ode::integrate(
        |_, y, dy| sys.rhs(y, dy),
        &start.to_state(),
        t_grid,
        &tol,
        |_, _, y| {
            moments.push(MomentVector::from_state(sys.n_t, y));
            Ok(())
        },
        |t, y| {
            let magnitude = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(magnitude <= BLOW_UP_THRESHOLD) {
                return Err(Error::TruncationInstability { t, magnitude });
            }
            Ok(Accept::Unchanged)
        },
    );
    match result {
        Ok(_) => Ok(MomentRun { moments, instability: None }),
        Err(Error::TruncationInstability { t, magnitude }) => Ok(MomentRun { moments, instability: Some((t, magnitude)) }),
        Err(Error::Stiffness { t, step: _ }) => Ok(MomentRun { moments, instability: Some((t, f64::INFINITY)) }),
        Err(e) => Err(e),
    }
}

/// Moments on `t_grid`; a blow-up is an error.
pub fn integrate_moments(sys: &MomentSystem, init: &MomentVector, t_grid: &[f64]) -> Result<Vec<MomentVector>> {
    let run = integrate_moments_partial(sys, init, t_grid)?;
    match run.instability {
        None => Ok(run.moments),
        Some((t, magnitude)) => Err(Error::TruncationInstability { t, magnitude }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationRow {
    pub t: f64,
    pub n_t: usize,
    pub x2_truncated: f64,
    pub x2_quantum: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct TruncationReport {
    pub alpha: f64,
    /// Fock dimension used for the quantum reference.
    pub dim: usize,
    pub times: Vec<f64>,
    /// `<x^2>` from the full master equation (no decoherence).
    pub x2_quantum: Vec<f64>,
    /// One entry per requested order, in request order.
    pub series: Vec<TruncationSeries>,
}

#[derive(Clone, Debug)]
pub struct TruncationSeries {
    pub n_t: usize,
    /// `<x^2>` of the truncated hierarchy; shorter than `times` after a blow-up.
    pub x2_truncated: Vec<f64>,
    pub instability: Option<(f64, f64)>,
}

impl TruncationSeries {
    pub fn abs_error(&self, quantum: &[f64]) -> Vec<f64> {
        self.x2_truncated.iter().zip(quantum).map(|(a, b)| (a - b).abs()).collect()
    }
}

impl TruncationReport {
    pub fn series_for(&self, n_t: usize) -> Option<&TruncationSeries> {
        self.series.iter().find(|s| s.n_t == n_t)
    }

    /// Absolute error of order `n_t` at the grid point nearest to `t`.
    pub fn abs_error_at(&self, n_t: usize, t: f64) -> Option<f64> {
        let k = self.times.iter().position(|&s| (s - t).abs() < 1e-9)?;
        let s = self.series_for(n_t)?;
        s.x2_truncated.get(k).map(|v| (v - self.x2_quantum[k]).abs())
    }

    pub fn rows(&self) -> Vec<TruncationRow> {
        let mut rows = Vec::new();
        for s in &self.series {
            for (k, &x2t) in s.x2_truncated.iter().enumerate() {
                let q = self.x2_quantum[k];
                let abs_error = (x2t - q).abs();
                rows.push(TruncationRow {
                    t: self.times[k],
                    n_t: s.n_t,
                    x2_truncated: x2t,
                    x2_quantum: q,
                    abs_error,
                    rel_error: abs_error / q.abs().max(f64::MIN_POSITIVE),
                });
            }
        }
        rows
    }
}

/// Compares truncated hierarchies of several orders with the full quantum
/// evolution of `init_state` in the quartic trap (no decoherence).
pub fn truncation_error_report(
    alpha: f64,
    init_state: &DensityMatrix,
    n_t_list: &[usize],
    horizon: f64,
    dt: f64,
) -> Result<TruncationReport> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Domain("horizon and dt must be positive".into()));
    }
    let n_points = (horizon / dt + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..n_points).map(|k| k as f64 * dt).collect();
    let spec = PotentialSpec::Quartic { alpha };
    let dec = DecoherenceSpec::default();
    let cfg = IntegratorConfig::default();
    let dim = dynamics::converge_dimension(init_state, &spec, &dec, &cfg, horizon, dt)?;
    let traj = dynamics::make_trajectory_in(init_state, &spec, &dec, &cfg, dim, n_points, dt)?;
    let x0 = traj.initial_mean_x;
    let x2_quantum: Vec<f64> = traj.u1.iter().zip(&traj.u2).map(|(u1, u2)| u2 + (u1 + x0).powi(2)).collect();

    let max_order = n_t_list.iter().copied().max().unwrap_or(2);
    let init = states::weyl_moments(init_state, max_order)?;
    let mut series = Vec::with_capacity(n_t_list.len());
    for &n_t in n_t_list {
        let sys = build_moment_system(alpha, n_t)?;
        let run = integrate_moments_partial(&sys, &init, &times)?;
        series.push(TruncationSeries {
            n_t,
            x2_truncated: run.moments.iter().map(MomentVector::x2).collect(),
            instability: run.instability,
        });
    }
    Ok(TruncationReport { alpha, dim, times, x2_quantum, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fock1_init(order: usize) -> MomentVector {
        states::weyl_moments(&DensityMatrix::fock(2, 1).unwrap(), order).unwrap()
    }

    #[test]
    fn storage_layout() {
        let mut m = MomentVector::zeros(4, 0.5, -0.5);
        assert_eq!(m.g.len(), 3 + 4 + 5);
        m.set(0, 2, 3.0);
        m.set(4, 0, 7.0);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(4, 0), 7.0);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(5, 0), 0.0);
        assert_eq!(m.x2(), 3.25);
        m.truncate_to(2);
        assert_eq!(m.get(4, 0), 0.0);
        assert_eq!(m.g.len(), 3);
    }

    #[test]
    fn order_validation() {
        assert!(build_moment_system(5.0, 1).is_err());
        assert!(build_moment_system(5.0, 16).is_err());
        assert!(build_moment_system(0.0, 4).is_err());
        assert!(build_moment_system(5.0, 7).is_ok());
    }

    #[test]
    fn rule_shapes() {
        let sys = build_moment_system(5.0, 6).unwrap();
        let g02 = sys.rule(0, 2).unwrap();
        assert_eq!(g02.len(), 1);
        assert_eq!(g02[0].coefficient, 2.0);
        assert_eq!(g02[0].factors, vec![2 + MomentVector::index(1, 1)]);

        // (2,0): -16/α⁴ [3<x>² G11 + 3<x> G12 + G13]
        let k16 = 16.0 / 625.0;
        let g20 = sys.rule(2, 0).unwrap();
        let find = |pow: u8, a: usize, b: usize| {
            g20.iter()
                .find(|t| t.mean_x_power == pow && t.factors == vec![2 + MomentVector::index(a, b)])
                .map(|t| t.coefficient)
        };
        assert!((find(2, 1, 1).unwrap() + 3.0 * k16).abs() < 1e-15);
        assert!((find(1, 1, 2).unwrap() + 3.0 * k16).abs() < 1e-15);
        assert!((find(0, 1, 3).unwrap() + k16).abs() < 1e-15);

        // (3,0): the 48/α⁴ <x> G^{0,0} correction survives
        let g30 = sys.rule(3, 0).unwrap();
        assert!(g30
            .iter()
            .any(|t| (t.coefficient - 48.0 / 625.0).abs() < 1e-15 && t.mean_x_power == 1 && t.factors.is_empty()));
    }

    #[test]
    fn correction_line_vanishes_for_small_a() {
        let sys = build_moment_system(5.0, 8).unwrap();
        for a in 0..=2usize {
            for b in 0..=(8 - a) {
                if a + b < 2 {
                    continue;
                }
                let kc_terms = sys.rule(a, b).unwrap().iter().filter(|t| {
                    // correction terms reference G^{a-3,*}; none can exist for a <= 2
                    t.factors.iter().any(|&i| {
                        let idx = i - 2;
                        (2..=8).any(|o| (0..=o).any(|aa| MomentVector::index(aa, o - aa) == idx && aa + 3 == a))
                    })
                });
                assert_eq!(kc_terms.count(), 0);
            }
        }
    }

    #[test]
    fn fock_one_keeps_zero_mean() {
        let sys = build_moment_system(5.0, 8).unwrap();
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let run = integrate_moments(&sys, &fock1_init(8), &grid).unwrap();
        for m in &run {
            assert!(m.mean_x.abs() < 1e-10 && m.mean_p.abs() < 1e-10);
        }
    }

    #[test]
    fn second_derivative_of_position_variance() {
        // n_t = 2: G02'' = 2 G11' = 2 G20 = 6 for |1> (quartic terms need <x> or order > 2)
        let sys = build_moment_system(5.0, 2).unwrap();
        let init = fock1_init(2);
        let h = 1e-3;
        let run = integrate_moments(&sys, &init, &[0.0, h, 2.0 * h]).unwrap();
        let d2 = (run[2].get(0, 2) - 2.0 * run[1].get(0, 2) + run[0].get(0, 2)) / (h * h);
        assert!((d2 - 6.0).abs() < 1e-4, "{d2}");
    }

    #[test]
    fn odd_order_matches_lower_even_for_parity_states() {
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
        let init = fock1_init(7);
        let six = integrate_moments(&build_moment_system(5.0, 6).unwrap(), &init, &grid).unwrap();
        let seven = integrate_moments(&build_moment_system(5.0, 7).unwrap(), &init, &grid).unwrap();
        for (a, b) in six.iter().zip(&seven) {
            assert!((a.x2() - b.x2()).abs() < 1e-8 * a.x2().abs().max(1.0), "{} vs {}", a.x2(), b.x2());
        }
    }

    #[test]
    fn gaussian_limit_conserves_uncertainty_product() {
        let rho = states::sample_hs_state(3, 3, 4, 1);
        let mut init = states::weyl_moments(&rho, 2).unwrap();
        init.mean_x = 0.0;
        let sys = build_moment_system(1e6, 2).unwrap();
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let det = |m: &MomentVector| m.get(2, 0) * m.get(0, 2) - m.get(1, 1).powi(2);
        let d0 = det(&init);
        assert!(d0 >= 1.0);
        for m in integrate_moments(&sys, &init, &grid).unwrap() {
            assert!((det(&m) - d0).abs() < 1e-8 * d0);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = build_moment_system(5.0, 4).unwrap();
        let mut init = MomentVector::zeros(4, 0.0, 0.0);
        init.set(0, 2, 1.0);
        init.set(2, 0, 1.0);
        init.set(0, 4, 2.0 * BLOW_UP_THRESHOLD);
        let grid = [0.0, 1.0];
        let run = integrate_moments_partial(&sys, &init, &grid).unwrap();
        assert_eq!(run.moments.len(), 1);
        let (t, magnitude) = run.instability.unwrap();
        assert!(t > 0.0 && magnitude > BLOW_UP_THRESHOLD);
        assert!(matches!(integrate_moments(&sys, &init, &grid), Err(Error::TruncationInstability { .. })));
    }
}
