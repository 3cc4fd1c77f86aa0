//! Score-driven recursion for one intraday slot: the two dynamic parameters
//! evolve across days, driven by the standardized score of the log-density.
//!
//! State convention: `lam` carries the first dynamic parameter through its
//! link (`p1 = exp(lam)` for WPD/GPD/Pareto IV; `lam = σ` untransformed for
//! RPD) and `v` carries the second through `p2 = exp(v)`.
//!
//! The seasonal term `q_t` enters exactly one recursion, following the
//! family's law of motion: the scale equation for WPD and plain Pareto IV,
//! the second (shape-role) equation for GPD, the σ equation for RPD. The
//! transition that produces day t's state consumes `seasonal[t]`, and it is
//! added to the intercept first, so a run with seasonal q and intercept A is
//! bit-identical to a run with zero seasonal and day-varying intercept A+q.
//!
//! The likelihood increment for day t uses the state computed from
//! information through day t−1 (predictive convention); the recursion is
//! inherently serial in t, while independent slots run concurrently.

use crate::dist::{
    self, FamilyKind, GdParams, ScoreVector, ShapeInfo, X_FLOOR,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// σ is clamped here when the untransformed RPD recursion dips nonpositive.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Exp-linked states are clamped to ±this value (parameters to e^±30).
/// Any admissible model lives far inside; the clamp stops inf/NaN cascades
/// when an ill-fitted coefficient set meets out-of-sample data, and clamped
/// days are flagged on the path.
pub const LINK_BOUND: f64 = 30.0;

/// Standardized scores are winsorized at ±this value. Regular scores have
/// unit-order dispersion; kicks beyond this arise only from observations
/// pinned at the support floor (the shift boundary), where the raw score
/// grows like ln of the floor and would otherwise ignite the recursion.
/// Infinite scores (density overflow at runaway states) saturate to the
/// same cap; NaN still fails the step.
pub const SCORE_CLIP: f64 = 100.0;

/// Log-likelihood increments that overflow to −∞ at runaway states are
/// saturated here: a crushing but finite penalty, so estimation still
/// rejects the coefficients while the filter path itself can recover.
pub const LL_SATURATION: f64 = -1e15;

/// Coefficient set for one slot model: two recursions plus the static
/// inequality parameter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DcsCoefficients {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub alpha: f64,
}

impl DcsCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a1", self.a1),
            ("b1", self.b1),
            ("c1", self.c1),
            ("a2", self.a2),
            ("b2", self.b2),
            ("c2", self.c2),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.b1.abs() >= 1.0 || self.b2.abs() >= 1.0 {
            return Err(Error::InvalidParameter(
                "persistence coefficients must satisfy |B| < 1".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 7] {
        [self.a1, self.b1, self.c1, self.a2, self.b2, self.c2, self.alpha]
    }

    pub fn from_array(x: &[f64; 7]) -> Self {
        DcsCoefficients {
            a1: x[0],
            b1: x[1],
            c1: x[2],
            a2: x[3],
            b2: x[4],
            c2: x[5],
            alpha: x[6],
        }
    }
}

/// Link-scale filter state for one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub lam: f64,
    pub v: f64,
}

impl FilterState {
    /// Distribution parameters implied by the state.
    pub fn params(&self, kind: FamilyKind, alpha: f64) -> GdParams {
        match kind {
            FamilyKind::RayleighParetoIv => GdParams {
                alpha,
                p1: self.lam.max(SIGMA_FLOOR),
                p2: self.v.exp(),
            },
            FamilyKind::ParetoIv => GdParams {
                alpha,
                p1: self.lam.exp(),
                p2: 1.0,
            },
            _ => GdParams {
                alpha,
                p1: self.lam.exp(),
                p2: self.v.exp(),
            },
        }
    }

    /// Link-scale state implied by distribution parameters.
    pub fn from_params(kind: FamilyKind, params: &GdParams) -> Self {
        match kind {
            FamilyKind::RayleighParetoIv => FilterState {
                lam: params.p1,
                v: params.p2.ln(),
            },
            _ => FilterState {
                lam: params.p1.ln(),
                v: params.p2.ln(),
            },
        }
    }
}

/// One filtered path: per-day states, scores, and the total log-likelihood.
#[derive(Debug, Clone)]
pub struct FilterPath {
    pub states: Vec<FilterState>,
    pub scores: Vec<ScoreVector>,
    pub std_scores: Vec<(f64, f64)>,
    pub log_likelihood: f64,
    /// Days on which the RPD σ recursion was clamped at [`SIGMA_FLOOR`].
    pub clamped_days: Vec<usize>,
}

impl FilterPath {
    /// State the recursion assigns to the day after the sample, given that
    /// day's seasonal value.
    pub fn one_step_ahead(
        &self,
        kind: FamilyKind,
        coeffs: &DcsCoefficients,
        q_next: f64,
    ) -> FilterState {
        let last = *self.states.last().expect("path is nonempty");
        let s = *self.std_scores.last().expect("path is nonempty");
        advance(kind, coeffs, last, s, q_next).0
    }
}

/// Standardized scores (s_lam, s_v) at the given state and observation.
///
/// For exp-linked parameters the chain factor is the parameter itself, so
/// `s = ∇·p / (E[∂²]·p²)`; for RPD's untransformed σ the factor is 1. When
/// the Fisher term is divergent (WPD shape) the divisor is replaced by −1,
/// keeping the sign convention of the finite cases: `s_v = −∇·p2`.
pub fn standardized_score(
    kind: FamilyKind,
    state: FilterState,
    alpha: f64,
    x: f64,
) -> Result<(f64, f64)> {
    let params = state.params(kind, alpha);
    params.validate()?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("observation must be nonnegative, got {x}")));
    }
    let xf = x.max(X_FLOOR);
    let y = crate::dist::y_of(xf, alpha).max(crate::dist::Y_FLOOR);
    Ok(standardized_score_inner(kind, &params, y))
}

#[inline]
fn standardized_score_inner(kind: FamilyKind, params: &GdParams, y: f64) -> (f64, f64) {
    let sc = dist::score_with_y(kind, params, y);
    let fi = dist::fisher_scaling_unchecked(kind, params);
    let s_lam = match kind {
        FamilyKind::RayleighParetoIv => sc.d_p1 / fi.s_p1,
        _ => sc.d_p1 / (fi.s_p1 * params.p1),
    };
    let s_v = match fi.s_p2 {
        ShapeInfo::Finite(f) => sc.d_p2 / (f * params.p2),
        ShapeInfo::Divergent => -sc.d_p2 * params.p2,
    };
    (winsorize(s_lam), winsorize(s_v))
}

#[inline]
fn winsorize(s: f64) -> f64 {
    if s.is_nan() {
        s
    } else if s > SCORE_CLIP {
        SCORE_CLIP
    } else if s < -SCORE_CLIP {
        -SCORE_CLIP
    } else {
        s
    }
}

#[inline]
fn saturate_ll(ll: f64) -> f64 {
    if ll == f64::NEG_INFINITY || (ll.is_finite() && ll < LL_SATURATION) {
        LL_SATURATION
    } else {
        ll
    }
}

/// Advance the state one day. The seasonal value is folded into the
/// intercept of whichever recursion the family assigns it to.
#[inline]
fn advance(
    kind: FamilyKind,
    coeffs: &DcsCoefficients,
    state: FilterState,
    s: (f64, f64),
    q: f64,
) -> (FilterState, bool) {
    let (s_lam, s_v) = s;
    let (a1_eff, a2_eff) = match kind {
        FamilyKind::GammaParetoIv => (coeffs.a1, coeffs.a2 + q),
        _ => (coeffs.a1 + q, coeffs.a2),
    };
    let mut lam = a1_eff + coeffs.b1 * state.lam + coeffs.c1 * s_lam;
    let mut v = a2_eff + coeffs.b2 * state.v + coeffs.c2 * s_v;
    let mut clamped = false;
    // Non-finite states pass through and fail parameter validation at the
    // next step, carrying the day index; only finite runaways are clamped.
    match kind {
        FamilyKind::RayleighParetoIv => {
            if lam.is_finite() && lam < SIGMA_FLOOR {
                lam = SIGMA_FLOOR;
                clamped = true;
            }
            let sigma_cap = LINK_BOUND.exp();
            if lam.is_finite() && lam > sigma_cap {
                lam = sigma_cap;
                clamped = true;
            }
        }
        _ => {
            if lam.is_finite() && lam.abs() > LINK_BOUND {
                lam = lam.clamp(-LINK_BOUND, LINK_BOUND);
                clamped = true;
            }
        }
    }
    if v.is_finite() && v.abs() > LINK_BOUND {
        v = v.clamp(-LINK_BOUND, LINK_BOUND);
        clamped = true;
    }
    (FilterState { lam, v }, clamped)
}

/// One filter step: likelihood increment and scores at the current state,
/// then the transition using the *next* day's seasonal value.
pub fn filter_step(
    kind: FamilyKind,
    state: FilterState,
    coeffs: &DcsCoefficients,
    seasonal_q: f64,
    x: f64,
) -> Result<(FilterState, f64, ScoreVector, (f64, f64))> {
    coeffs.validate()?;
    let params = state.params(kind, coeffs.alpha);
    params.validate()?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("observation must be nonnegative, got {x}")));
    }
    let xf = x.max(X_FLOOR);
    let y = crate::dist::y_of(xf, coeffs.alpha).max(crate::dist::Y_FLOOR);
    let ll = saturate_ll(dist::log_density_with_y(kind, &params, xf, y));
    let sc = dist::score_with_y(kind, &params, y);
    let ss = standardized_score_inner(kind, &params, y);
    if !(ll.is_finite() && ss.0.is_finite() && ss.1.is_finite()) {
        return Err(Error::Filter {
            day: 0,
            reason: "non-finite likelihood or score".into(),
        });
    }
    let (next, _clamped) = advance(kind, coeffs, state, ss, seasonal_q);
    Ok((next, ll, sc, ss))
}

/// Run the filter with an explicit pre-sample state.
///
/// `init` is the state *before* the first observation; day 0's state is
/// produced by one intercept step (no score): `state₀ = A + B·init + q₀`.
/// With C₁ = C₂ = 0 the state path therefore never depends on the
/// observations, and with B = C = 0 it is the constant (A₁, A₂).
pub fn run_filter_with_init(
    kind: FamilyKind,
    series: &[f64],
    coeffs: &DcsCoefficients,
    seasonal: &[f64],
    init: FilterState,
) -> Result<FilterPath> {
    coeffs.validate()?;
    if series.is_empty() {
        return Err(Error::InsufficientData("filter needs at least one day".into()));
    }
    if seasonal.len() != series.len() {
        return Err(Error::Misaligned(format!(
            "seasonal length {} != series length {}",
            seasonal.len(),
            series.len()
        )));
    }

    let t_len = series.len();
    let mut states = Vec::with_capacity(t_len);
    let mut scores = Vec::with_capacity(t_len);
    let mut std_scores = Vec::with_capacity(t_len);
    let mut clamped_days = Vec::new();
    let mut log_likelihood = 0.0;

    let (state0, clamped0) = advance(kind, coeffs, init, (0.0, 0.0), seasonal[0]);
    if clamped0 {
        clamped_days.push(0);
    }
    let mut state = state0;

    for (t, &x) in series.iter().enumerate() {
        let params = state.params(kind, coeffs.alpha);
        params
            .validate()
            .map_err(|e| Error::Filter { day: t, reason: e.to_string() })?;
        if x.is_nan() || x < 0.0 {
            return Err(Error::Filter {
                day: t,
                reason: format!("observation must be nonnegative, got {x}"),
            });
        }
        let xf = x.max(X_FLOOR);
        let y = crate::dist::y_of(xf, coeffs.alpha).max(crate::dist::Y_FLOOR);
        let ll = saturate_ll(dist::log_density_with_y(kind, &params, xf, y));
        let sc = dist::score_with_y(kind, &params, y);
        let ss = standardized_score_inner(kind, &params, y);
        if !(ll.is_finite() && ss.0.is_finite() && ss.1.is_finite()) {
            return Err(Error::Filter {
                day: t,
                reason: "non-finite likelihood or score".into(),
            });
        }
        states.push(state);
        scores.push(sc);
        std_scores.push(ss);
        log_likelihood += ll;

        if t + 1 < t_len {
            let (next, clamped) = advance(kind, coeffs, state, ss, seasonal[t + 1]);
            if clamped {
                clamped_days.push(t + 1);
            }
            state = next;
        }
    }

    Ok(FilterPath {
        states,
        scores,
        std_scores,
        log_likelihood,
        clamped_days,
    })
}

/// Run the filter with the pre-sample state taken from a static ML fit of
/// the family to the series (link-transformed).
pub fn run_filter(
    kind: FamilyKind,
    series: &[f64],
    coeffs: &DcsCoefficients,
    seasonal: &[f64],
) -> Result<FilterPath> {
    coeffs.validate()?;
    let static_params = dist::fit_static(kind, series, coeffs.alpha)?;
    let init = FilterState::from_params(kind, &static_params);
    run_filter_with_init(kind, series, coeffs, seasonal, init)
}

/// Simulate a series from the model: each day draws x from the current
/// state's distribution by inverse transform, then advances the state with
/// the realized score. Returns the observations and the per-day states.
pub fn simulate(
    kind: FamilyKind,
    coeffs: &DcsCoefficients,
    t_len: usize,
    seasonal: &[f64],
    init: FilterState,
    seed: u64,
) -> Result<(Vec<f64>, Vec<FilterState>)> {
    coeffs.validate()?;
    if t_len == 0 {
        return Err(Error::InsufficientData("simulation needs t_len >= 1".into()));
    }
    if seasonal.len() != t_len {
        return Err(Error::Misaligned(format!(
            "seasonal length {} != t_len {t_len}",
            seasonal.len()
        )));
    }
    let mut rng = Rng::from_seed(seed);
    let mut xs = Vec::with_capacity(t_len);
    let mut states = Vec::with_capacity(t_len);
    let (mut state, _) = advance(kind, coeffs, init, (0.0, 0.0), seasonal[0]);
    for t in 0..t_len {
        let params = state.params(kind, coeffs.alpha);
        params
            .validate()
            .map_err(|e| Error::Filter { day: t, reason: e.to_string() })?;
        // Quantile draws at extreme states can overflow; cap at the largest
        // finite value so the recursion can respond and keep going.
        let x = dist::quantile(kind, &params, rng.next_open01())?.min(f64::MAX);
        let xf = x.max(X_FLOOR);
        let y = crate::dist::y_of(xf, coeffs.alpha).max(crate::dist::Y_FLOOR);
        let ss = standardized_score_inner(kind, &params, y);
        states.push(state);
        xs.push(x);
        if t + 1 < t_len {
            let (next, _) = advance(kind, coeffs, state, ss, seasonal[t + 1]);
            state = next;
        }
    }
    Ok((xs, states))
}
