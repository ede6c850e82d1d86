//! The quadratic form `B_𝓗`, the energy `E(u) = ½B_𝓗(u,u) - ∫F(u)`, its
//! gradient and a preconditioned descent for minimizers.
//!
//! Minimization runs over the dealiased subspace `V`, where the direct form
//! `⟨v, 𝓛u - P(uξ) + Cu⟩` is symmetric and equals the paracontrolled form
//! exactly. The paracontrolled route is used for reporting and checks.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::anderson::{Anderson, ParacontrolledTriple};
use crate::besov::{sobolev_norm_weighted, sobolev_weights};
use crate::error::{PcfError, Result};
use crate::field::{GridSpec, RealField, SpectralField};
use crate::noise::{band_limited_field, mix, NoiseEnhancement};

/// Local nonlinearity `f` with primitive `F(s) = ∫_0^s f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Zero,
    /// `f(s) = -c3 s³`.
    CubicMinus { c3: f64 },
    /// `f(s) = a s - b s³`.
    DoubleWell { a: f64, b: f64 },
    /// Piecewise-linear `f` through `(s_i, f_i)`, linearly extended.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

/// Constants of the growth assumptions
/// `F(s) ≤ C0 - C1|s|^k` and `|f'(s)| ≤ l + |s|^{k-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub k: f64,
    pub l: f64,
    pub c0: f64,
    pub c1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    pub constants: AssumptionConstants,
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::Zero,
            constants: AssumptionConstants { k: 4.0, l: 1.0, c0: 0.0, c1: 0.0 },
        }
    }

    pub fn cubic_minus(c3: f64) -> Self {
        Nonlinearity {
            kind: NonlinearityKind::CubicMinus { c3 },
            constants: AssumptionConstants { k: 4.0, l: 0.0, c0: 0.0, c1: c3 / 4.0 },
        }
    }

    /// Constants `C0 = a²/(2b)`, `C1 = b/8` bound the well from above.
    pub fn double_well(a: f64, b: f64) -> Self {
        let c0 = if b > 0.0 { a * a / (2.0 * b) } else { f64::INFINITY };
        Nonlinearity {
            kind: NonlinearityKind::DoubleWell { a, b },
            constants: AssumptionConstants { k: 4.0, l: 1.0, c0, c1: b / 8.0 },
        }
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(PcfError::ConfigValue {
                key: "nl".into(),
                msg: "table needs at least two (s, f) pairs".into(),
            });
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(PcfError::ConfigValue {
                key: "nl".into(),
                msg: "table knots must be finite and strictly increasing".into(),
            });
        }
        Ok(Nonlinearity {
            kind: NonlinearityKind::Tabulated { knots, values },
            constants: AssumptionConstants { k: 2.0, l: 1.0, c0: 0.0, c1: 0.0 },
        })
    }

    pub fn with_constants(mut self, constants: AssumptionConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Zero)
    }

    /// Segment index and slope of the table at `s`.
    fn segment(knots: &[f64], values: &[f64], s: f64) -> (usize, f64) {
        let i = match knots.partition_point(|&k| k <= s) {
            0 => 0,
            p if p >= knots.len() => knots.len() - 2,
            p => p - 1,
        };
        let slope = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
        (i, slope)
    }

    fn table_f(knots: &[f64], values: &[f64], s: f64) -> f64 {
        let (i, slope) = Self::segment(knots, values, s);
        values[i] + slope * (s - knots[i])
    }

    /// `∫_a^b f` for the piecewise-linear table.
    fn table_integral(knots: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        if b < a {
            return -Self::table_integral(knots, values, b, a);
        }
        let mut pts = vec![a];
        pts.extend(knots.iter().copied().filter(|&k| k > a && k < b));
        pts.push(b);
        pts.windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (Self::table_f(knots, values, w[0]) + Self::table_f(knots, values, w[1])))
            .sum()
    }

    pub fn f(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::CubicMinus { c3 } => -c3 * s * s * s,
            NonlinearityKind::DoubleWell { a, b } => a * s - b * s * s * s,
            NonlinearityKind::Tabulated { knots, values } => Self::table_f(knots, values, s),
        }
    }

    pub fn df(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::CubicMinus { c3 } => -3.0 * c3 * s * s,
            NonlinearityKind::DoubleWell { a, b } => a - 3.0 * b * s * s,
            NonlinearityKind::Tabulated { knots, values } => Self::segment(knots, values, s).1,
        }
    }

    /// `F(s) = ∫_0^s f`.
    pub fn primitive(&self, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::CubicMinus { c3 } => -0.25 * c3 * s.powi(4),
            NonlinearityKind::DoubleWell { a, b } => 0.5 * a * s * s - 0.25 * b * s.powi(4),
            NonlinearityKind::Tabulated { knots, values } => Self::table_integral(knots, values, 0.0, s),
        }
    }

    /// `F(s + h) - F(s)` without cancellation for the polynomial kinds.
    pub fn primitive_increment(&self, s: f64, h: f64) -> f64 {
        let quartic = h * (4.0 * s * s * s + h * (6.0 * s * s + h * (4.0 * s + h)));
        match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::CubicMinus { c3 } => -0.25 * c3 * quartic,
            NonlinearityKind::DoubleWell { a, b } => 0.5 * a * h * (2.0 * s + h) - 0.25 * b * quartic,
            NonlinearityKind::Tabulated { knots, values } => Self::table_integral(knots, values, s, s + h),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NonlinearityKind::Zero => write!(f, "zero"),
            NonlinearityKind::CubicMinus { c3 } => write!(f, "cubic:{c3}"),
            NonlinearityKind::DoubleWell { a, b } => write!(f, "double_well:{a},{b}"),
            NonlinearityKind::Tabulated { knots, values } => {
                write!(f, "table:")?;
                for (i, (s, v)) in knots.iter().zip(values).enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{s}={v}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = PcfError;

    /// `zero`, `cubic:C3`, `double_well:A,B` or `table:S=F,S=F,...`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = |msg: String| PcfError::ConfigValue { key: "nl".into(), msg };
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{t:?} is not a finite number")))
        };
        let (name, args) = text.split_once(':').unwrap_or((text, ""));
        match name.trim() {
            "zero" => Ok(Nonlinearity::zero()),
            "cubic" | "cubic_minus" => Ok(Nonlinearity::cubic_minus(num(args)?)),
            "double_well" => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| bad("double_well needs A,B".into()))?;
                Ok(Nonlinearity::double_well(num(a)?, num(b)?))
            }
            "table" => {
                let mut knots = Vec::new();
                let mut values = Vec::new();
                for pair in args.split(',') {
                    let (s, v) = pair
                        .split_once('=')
                        .ok_or_else(|| bad(format!("table entry {pair:?} is not S=F")))?;
                    knots.push(num(s)?);
                    values.push(num(v)?);
                }
                Nonlinearity::tabulated(knots, values)
            }
            other => Err(bad(format!("unknown nonlinearity {other:?}"))),
        }
    }
}

/// Sampled check of the growth assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub passes: bool,
    /// `min_s slack·(l + |s|^{k-2}) / |f'(s)|`; at least one on success.
    pub derivative_margin: f64,
    /// `min_s (C0 - C1|s|^k - F(s))`; nonnegative on success.
    pub growth_margin: f64,
    pub primitive_at_zero: f64,
    pub samples: usize,
}

pub const ASSUMPTION_SAMPLES: usize = 1024;

/// Samples `[-s_max, s_max]` and checks `|f'| ≤ slack(l + |s|^{k-2})` and
/// the upper bound `F(s) ≤ C0 - C1|s|^k` that keeps the energy bounded below.
pub fn check_assumptions(nl: &Nonlinearity, s_max: f64, slack: f64) -> Result<AssumptionReport> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(PcfError::OutOfRange {
            what: "s_max",
            value: s_max,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let c = nl.constants;
    let mut dmargin = f64::INFINITY;
    let mut gmargin = f64::INFINITY;
    for i in 0..ASSUMPTION_SAMPLES {
        let s = -s_max + 2.0 * s_max * i as f64 / (ASSUMPTION_SAMPLES - 1) as f64;
        let bound = slack * (c.l + s.abs().powf(c.k - 2.0));
        let d = nl.df(s).abs();
        if d > 0.0 {
            dmargin = dmargin.min(bound / d);
        }
        gmargin = gmargin.min(c.c0 - c.c1 * s.abs().powf(c.k) - nl.primitive(s));
    }
    let f0 = nl.primitive(0.0);
    Ok(AssumptionReport {
        passes: dmargin >= 1.0 && gmargin >= -1e-12 * (1.0 + c.c0.abs()) && f0 == 0.0,
        derivative_margin: dmargin,
        growth_margin: gmargin,
        primitive_at_zero: f0,
        samples: ASSUMPTION_SAMPLES,
    })
}

/// `E(u)` split into its two parts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `½B_𝓗(u,u)`.
    pub quadratic: f64,
    /// `-∫F(u)`.
    pub nonlinear: f64,
    /// `‖𝓛^{-1/2} DE(u)‖_{L²}`.
    pub grad_norm: f64,
}

/// `Σ_k (2π|k|)² Re(â conj b̂) = ⟨∇a, ∇b⟩`.
fn dirichlet(a: &SpectralField, b: &SpectralField) -> f64 {
    let g = a.grid;
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .enumerate()
        .map(|(idx, (x, y))| {
            let (k1, k2) = g.freq_of(idx);
            (g.symbol(k1, k2) - g.mu) * (x * y.conj()).re
        })
        .sum()
}

/// `B_𝓗(v,u) = ⟨∇v^ϑ,∇u^ϑ⟩ + μ⟨v^ϑ,u^ϑ⟩ + ⟨𝓛R(v),u^ϑ⟩ - D(v,ξ,u^ϑ)
///  + ⟨𝓛(v≺ϑ) - v≺ξ, u^ϑ⟩ - ⟨v, G(u)⟩`.
pub fn bilinear_b(model: &Anderson, v: &ParacontrolledTriple, u: &ParacontrolledTriple) -> Result<f64> {
    let g = model.g_term(u)?;
    model.g_term(v)?;
    let mu = model.enhancement().grid.mu;
    let us = &u.sharp;
    let grad = dirichlet(&v.sharp.spectral(), &us.spectral());
    let mass = mu * v.sharp.dot(us);
    let rem = v.remainder.apply_l().dot(us);
    let d = v.u.dot(&model.resonant_xi(us)) - model.para_lt_xi(&v.u).dot(us);
    let vlx = model.para_lt_xi(&v.u);
    let para = (&v.para.apply_l() - &vlx).dot(us);
    Ok(grad + mass + rem - d + para - v.u.dot(&g))
}

/// `⟨v, 𝓛u - P(uξ) + C u⟩`, symmetric on the dealiased subspace.
pub fn direct_form(enh: &NoiseEnhancement, v: &RealField, u: &RealField) -> Result<f64> {
    v.grid.ensure_same(&enh.grid)?;
    u.grid.ensure_same(&enh.grid)?;
    let mut h = u.apply_l();
    h -= &u.product(&enh.xi);
    h.axpy(enh.renorm_const, u);
    Ok(v.dot(&h))
}

/// `∫F(u)` with the grid quadrature.
pub fn integral_primitive(nl: &Nonlinearity, u: &RealField) -> f64 {
    u.values.iter().map(|&s| nl.primitive(s)).sum::<f64>() / u.grid.len() as f64
}

/// `‖𝓛^{-1/2} g‖_{L²}`.
pub fn preconditioned_norm(g: &RealField) -> f64 {
    let s = g.spectral();
    let grid = g.grid;
    s.coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let (k1, k2) = grid.freq_of(idx);
            c.norm_sqr() / grid.symbol(k1, k2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `P(𝓛u - uξ + Cu - f(u))`, the `L²` representer of `DE(u)` on the
/// dealiased subspace.
pub fn frechet_gradient(enh: &NoiseEnhancement, u: &RealField, nl: &Nonlinearity) -> Result<RealField> {
    u.grid.ensure_same(&enh.grid)?;
    let mut pointwise = u.pointwise(&enh.xi).scaled(-1.0);
    for (p, &s) in pointwise.values.iter_mut().zip(&u.values) {
        *p -= nl.f(s);
    }
    let mut g = u.apply_l();
    g.axpy(enh.renorm_const, u);
    g += &pointwise;
    Ok(g.dealias())
}

/// `E(u) = ½B_𝓗(u,u) - ∫F(u)` through the paracontrolled form.
pub fn energy(model: &Anderson, t: &ParacontrolledTriple, nl: &Nonlinearity) -> Result<EnergyReport> {
    let quadratic = 0.5 * bilinear_b(model, t, t)?;
    let nonlinear = -integral_primitive(nl, &t.u);
    let grad_norm = preconditioned_norm(&frechet_gradient(model.enhancement(), &t.u, nl)?);
    Ok(EnergyReport {
        total: quadratic + nonlinear,
        quadratic,
        nonlinear,
        grad_norm,
    })
}

/// Worst relative gap between central differences of the paracontrolled
/// energy along `dirs` and `⟨DE(u), v⟩`. The gap is scaled by
/// `|⟨g,v⟩| + ‖𝓛^{-1/2}g‖‖𝓛^{1/2}v‖`.
pub fn gradient_check(model: &Anderson, u: &RealField, nl: &Nonlinearity, dirs: &[RealField], h: f64) -> Result<f64> {
    let g = frechet_gradient(model.enhancement(), u, nl)?;
    let gn = preconditioned_norm(&g);
    let mut worst = 0.0f64;
    for v in dirs {
        let mut up = u.clone();
        up.axpy(h, v);
        let mut dn = u.clone();
        dn.axpy(-h, v);
        let ep = energy(model, &model.gamma_inverse(&up)?, nl)?.total;
        let em = energy(model, &model.gamma_inverse(&dn)?, nl)?.total;
        let fd = (ep - em) / (2.0 * h);
        let exact = g.dot(v);
        let vn = v.dot(&v.apply_l()).sqrt();
        worst = worst.max((fd - exact).abs() / (exact.abs() + gn * vn).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentConfig {
    pub max_iter: usize,
    /// Stop once `‖𝓛^{-1/2}g‖ < tol`.
    pub tol: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub min_step: f64,
    pub divergence: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iter: 5000,
            tol: 1e-6,
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            min_step: 1e-14,
            divergence: -1e12,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(PcfError::ConfigValue {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !(self.tol > 0.0) {
            return bad("tol", "must be > 0");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack", "must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo", "must lie in (0, 1)");
        }
        if !(self.initial_step > self.min_step && self.min_step > 0.0) {
            return bad("initial_step", "must exceed min_step > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub triple: ParacontrolledTriple,
    pub trace: Vec<TraceEntry>,
    /// Final `‖𝓛^{-1/2}g‖`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy of the final iterate, evaluated directly. Trace energies are
    /// accumulated from exact increments and drift by round-off of `E_0`.
    pub energy: f64,
}

impl MinimizeResult {
    pub fn energies(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.energy).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.energy
    }
}

/// Direct-form energy pieces of `u + t d` relative to `u`, computed without
/// subtracting large sums.
struct LineModel<'a> {
    u: &'a RealField,
    d: &'a RealField,
    xi: &'a RealField,
    c: f64,
    lin: f64,
    quad: f64,
}

impl LineModel<'_> {
    fn delta(&self, nl: &Nonlinearity, t: f64) -> f64 {
        let m = self.u.grid.len() as f64;
        let mut acc = 0.0;
        for ((&u, &d), &x) in self.u.values.iter().zip(&self.d.values).zip(&self.xi.values) {
            let h = t * d;
            let sq = h * (2.0 * u + h);
            acc += 0.5 * (self.c - x) * sq - nl.primitive_increment(u, h);
        }
        t * self.lin + 0.5 * t * t * self.quad + acc / m
    }
}

/// Direct-form energy `½⟨u, 𝓛u - uξ + Cu⟩ - ∫F(u)` for `u` in the dealiased
/// subspace.
pub fn energy_direct(enh: &NoiseEnhancement, u: &RealField, nl: &Nonlinearity) -> f64 {
    let s = u.spectral();
    let grid = u.grid;
    let lu: f64 = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let (k1, k2) = grid.freq_of(idx);
            grid.symbol(k1, k2) * c.norm_sqr()
        })
        .sum();
    let m = grid.len() as f64;
    let pot: f64 = u
        .values
        .iter()
        .zip(&enh.xi.values)
        .map(|(&v, &x)| v * v * (enh.renorm_const - x))
        .sum::<f64>()
        / m;
    0.5 * (lu + pot) - integral_primitive(nl, u)
}

/// Preconditioned gradient descent with Armijo backtracking over the
/// dealiased subspace, started from `P(init)`. The final iterate is split
/// with `gamma_inverse`.
pub fn minimize(
    init: &RealField,
    nl: &Nonlinearity,
    model: &Anderson,
    cfg: &DescentConfig,
) -> Result<MinimizeResult> {
    cfg.validate()?;
    let enh = model.enhancement();
    init.grid.ensure_same(&enh.grid)?;
    init.check_finite()?;
    let grid = enh.grid;
    let sigma: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let (k1, k2) = grid.freq_of(idx);
            grid.symbol(k1, k2)
        })
        .collect();
    let mut u = init.dealias();
    let mut energy = energy_direct(enh, &u, nl);
    let mut trace = Vec::new();
    let mut step = 0.0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=cfg.max_iter {
        let g = frechet_gradient(enh, &u, nl)?;
        let gs = g.spectral();
        let mut ds = gs.clone();
        let mut gnorm2 = 0.0;
        for ((c, s), gc) in ds.coeffs.iter_mut().zip(&sigma).zip(&gs.coeffs) {
            gnorm2 += gc.norm_sqr() / s;
            *c = -*c / *s;
        }
        residual = gnorm2.sqrt();
        if !residual.is_finite() || !energy.is_finite() {
            return Err(PcfError::Divergence(energy));
        }
        trace.push(TraceEntry {
            iter: it,
            energy,
            grad_norm: residual,
            step,
        });
        iterations = it;
        if residual < cfg.tol {
            converged = true;
            break;
        }
        if it == cfg.max_iter {
            break;
        }
        let d = ds.fft_inverse();
        let us = u.spectral();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for ((uc, dc), s) in us.coeffs.iter().zip(&ds.coeffs).zip(&sigma) {
            lin += s * (uc * dc.conj()).re;
            quad += s * dc.norm_sqr();
        }
        let line = LineModel {
            u: &u,
            d: &d,
            xi: &enh.xi,
            c: enh.renorm_const,
            lin,
            quad,
        };
        let slope = -gnorm2;
        let mut t = cfg.initial_step;
        let accepted = loop {
            let de = line.delta(nl, t);
            if de <= cfg.armijo * t * slope && de < 0.0 {
                break Some(de);
            }
            t *= cfg.backtrack;
            if t < cfg.min_step {
                break None;
            }
        };
        let Some(de) = accepted else {
            return Err(PcfError::LineSearch {
                iteration: it,
                min_step: cfg.min_step,
            });
        };
        u.axpy(t, &d);
        energy += de;
        step = t;
        if energy < cfg.divergence {
            return Err(PcfError::Divergence(cfg.divergence));
        }
    }
    let triple = model.gamma_inverse(&u)?;
    Ok(MinimizeResult {
        energy: energy_direct(enh, &u, nl),
        triple,
        trace,
        residual,
        iterations,
        converged,
    })
}

pub const WEAK_PROBE_SEED: u64 = 0x7765_616b;

/// `‖v‖_{H^α} + ‖v^ϑ‖_{H^1}`, with `α` the model's exponent.
pub fn paracontrolled_norm(model: &Anderson, t: &ParacontrolledTriple) -> f64 {
    let part = model.partition();
    model.gamma_norm(&t.u) + sobolev_norm_weighted(&t.sharp, &sobolev_weights(part, 1.0))
}

/// `max_v |B_𝓗(v,u) - ∫v f(u)| / ‖v‖_{𝓓^{α,1}}` over `Γ`-images of random
/// band-limited fields.
pub fn weak_residual(
    model: &Anderson,
    t: &ParacontrolledTriple,
    nl: &Nonlinearity,
    probe_count: usize,
) -> Result<f64> {
    let grid = t.u.grid;
    let fu = t.u.map(|s| nl.f(s));
    let mut worst = 0.0f64;
    for i in 0..probe_count {
        let f = band_limited_field(grid, mix(WEAK_PROBE_SEED, i as u64), 1.5);
        let (v, _) = model.gamma_map(&f)?;
        let b = bilinear_b(model, &v, t)?;
        let r = (b - v.u.dot(&fu)).abs() / paracontrolled_norm(model, &v);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// `P(𝓛x - xξ + Cx)` on the dealiased subspace.
fn apply_hamiltonian(enh: &NoiseEnhancement, x: &RealField) -> RealField {
    let mut h = x.apply_l();
    h -= &x.pointwise(&enh.xi);
    h.axpy(enh.renorm_const, x);
    h.dealias()
}

pub const GROUND_MAX_ITER: usize = 10_000;
const STALL_TOL: f64 = 1e-7;

/// Smallest eigenvalue of the discrete symmetric `𝓗` on the dealiased
/// subspace by locally optimal preconditioned (`𝓛⁻¹`) block iteration of
/// width one. Returns the eigenvalue and its normalized eigenvector.
pub fn ground_state(enh: &NoiseEnhancement, seed: u64, tol: f64) -> Result<(f64, RealField)> {
    let grid = enh.grid;
    let normalize = |f: &RealField| f.scaled(1.0 / f.norm_l2());
    let mut x = normalize(&band_limited_field(grid, seed, 2.0));
    let mut ax = apply_hamiltonian(enh, &x);
    let mut p: Option<(RealField, RealField)> = None;
    let mut rho = x.dot(&ax);
    let mut best_rn = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..GROUND_MAX_ITER {
        let mut r = ax.clone();
        r.axpy(-rho, &x);
        let rn = r.norm_l2();
        let scale = rho.abs().max(1.0);
        if rn <= tol * scale {
            return Ok((rho, x));
        }
        // The Ritz value saturates once the residual is near sqrt(eps).
        if rn < best_rn {
            best_rn = rn;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 20 && best_rn <= STALL_TOL * scale {
                return Ok((rho, x));
            }
        }
        let w = r.apply_l_inverse().dealias();
        let aw = apply_hamiltonian(enh, &w);
        // Orthonormal basis of span{x, w, p} with the images under 𝓗.
        let mut basis: Vec<(RealField, RealField)> = vec![(x.clone(), ax.clone())];
        let mut candidates = vec![(w, aw)];
        if let Some(pp) = p.take() {
            candidates.push(pp);
        }
        for (mut v, mut av) in candidates {
            for _ in 0..2 {
                for (b, ab) in &basis {
                    let c = v.dot(b);
                    v.axpy(-c, b);
                    av.axpy(-c, ab);
                }
            }
            let nv = v.norm_l2();
            if nv > 1e-10 {
                basis.push((v.scaled(1.0 / nv), av.scaled(1.0 / nv)));
            }
        }
        let m = basis.len();
        let mut h = Matrix3::<f64>::identity();
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] = 0.5 * (basis[i].0.dot(&basis[j].1) + basis[j].0.dot(&basis[i].1));
            }
        }
        let eig = SymmetricEigen::new(h.fixed_view::<3, 3>(0, 0).into_owned());
        let mut best = 0;
        for i in 0..m {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        let c = eig.eigenvectors.column(best);
        let mut nx = RealField::zeros(grid);
        let mut np = RealField::zeros(grid);
        let mut nap = RealField::zeros(grid);
        for i in 0..m {
            nx.axpy(c[i], &basis[i].0);
            if i > 0 {
                np.axpy(c[i], &basis[i].0);
                nap.axpy(c[i], &basis[i].1);
            }
        }
        // Recomputing 𝓗x keeps the residual from drifting to a roundoff floor.
        x = nx.scaled(1.0 / nx.norm_l2());
        ax = apply_hamiltonian(enh, &x);
        p = Some((np, nap));
        rho = x.dot(&ax);
        if !rho.is_finite() {
            return Err(PcfError::Divergence(rho));
        }
    }
    Err(PcfError::NonConvergence {
        what: "ground state",
        iterations: GROUND_MAX_ITER,
        residual: rho,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub c_est: f64,
    pub lambda_est: f64,
    pub ground_energy: f64,
    /// `min (B(u,u) + λ‖u‖²) / ‖u‖²` over the probes.
    pub min_shifted: f64,
}

pub const COERCIVITY_PROBES: usize = 100;
pub const COERCIVITY_SEED: u64 = 0x636f_6572;

/// Random dealiased probe fields with mixed smoothness.
pub fn coercivity_probes(grid: GridSpec, count: usize, seed: u64) -> Vec<RealField> {
    (0..count)
        .map(|i| band_limited_field(grid, mix(seed, i as u64), 1.0 + (i % 3) as f64 * 0.5))
        .collect()
}

/// `B(u,u) + λ‖u‖²` and `‖u‖²_{𝓓^{α,1}}` for one probe.
pub fn shifted_form(model: &Anderson, u: &RealField, lambda: f64) -> Result<(f64, f64)> {
    let t = model.gamma_inverse(u)?;
    let b = bilinear_b(model, &t, &t)?;
    let dn = paracontrolled_norm(model, &t);
    Ok((b + lambda * u.dot(u), dn * dn))
}

/// Ground energy of `𝓗`, the shift `λ = max(0, -ground) + 0.1` and the
/// coercivity constant regressed from `B(u,u) + λ‖u‖² ≈ c‖u‖²_{𝓓^{α,1}}`.
pub fn coercivity_probe(model: &Anderson, probes: &[RealField]) -> Result<CoercivityReport> {
    let enh = model.enhancement();
    let (ground, _) = ground_state(enh, COERCIVITY_SEED, 1e-9)?;
    let lambda = (-ground).max(0.0) + 0.1;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    let mut min_shifted = f64::INFINITY;
    for u in probes {
        let (y, x) = shifted_form(model, u, lambda)?;
        sxy += x * y;
        sxx += x * x;
        min_shifted = min_shifted.min(y / u.dot(u));
    }
    Ok(CoercivityReport {
        c_est: sxy / sxx,
        lambda_est: lambda,
        ground_energy: ground,
        min_shifted,
    })
}
