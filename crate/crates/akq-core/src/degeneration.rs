//! One-parameter degenerations of the projective embeddings and the
//! functional f(t) that assembles the lower bound.
//!
//! A diagonal weight vector A acts on the section basis through chi(t) =
//! diag(t^{A_lambda}); composing with the level-k embedding and pulling
//! back the ambient geometry gives the flow state at parameter t in (0,1].
//! The functional
//!
//!   f(t) = -Tr(A-bar_k M(t))
//!
//! is non-decreasing along the flow (as t descends toward 0, by convexity
//! of the log norm of the orbit along the one-parameter geodesic), so the
//! deepest sampled value is a certified lower bound for the t -> 0 limit,
//! and Cauchy-Schwarz turns the pairing at each t into
//! ||A-bar_k|| ||M-bar(t)|| >= f(t). The t = 1 endpoint is exact:
//! the pairing integral depends only on the equivariant class, so
//! f(1) = k^{n+1} int_P <xi, x> dx + Tr(A_k) k^n Vol(P) / (N_k + 1) as a
//! rational number, which pins the quadrature path at every level.
//!
//! Weights affine in the lattice point, A_lambda = alpha + <beta, lambda>,
//! are special: the rescaling only translates the log-complex coordinate
//! by beta log t, a reparametrization of the manifold, so every integral
//! invariant is exactly t-independent and f(t) = f(1). Every lattice
//! direction produces affine weights. The flow is therefore evaluated on
//! the translated (co-moving) frame when the weights are affine, which is
//! exact at every t, and on the fixed frame otherwise; the fixed-frame
//! quadrature is also kept as an independent route, but it resolves the
//! concentrating density only down to moderate t.

use num::rational::BigRational;
use num::Zero;
use serde::Serialize;

use crate::embed::{fs_volume, kodaira_embed_shifted, moment_matrix};
use crate::error::{Error, Result};
use crate::exact::{rat_int, rat_to_f64};
use crate::geom::polytope::DelzantPolytope;
use crate::geom::SymplecticPotential;
use crate::invariants::{chi_norm, futaki, weight_matrix};
use crate::quantize::toric::ToricQuantumSpace;

/// One evaluation of the flow. Both routes to f(t) are kept: the trace
/// pairing against the moment matrix and the direct quadrature of the
/// pulled-back projective Hamiltonian; they must agree to quadrature
/// tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct FlowState {
    pub t: f64,
    /// -Tr(A-bar_k M(t)), the trace pairing.
    pub f: f64,
    /// Integral form: quadrature of the pulled-back Hamiltonian plus the
    /// trace counterterm Tr(A_k) Vol_FS / (N_k + 1).
    pub integral_form: f64,
    /// Total flowed Fubini-Study volume; t-invariant (cohomological).
    pub volume: f64,
    /// Largest single-node share of the volume; degeneracy diagnostic.
    pub mass_concentration: f64,
    /// Max/min ratio of the flowed volume density over the nodes.
    pub density_ratio: f64,
    /// Set when the state was evaluated on the co-moving frame through the
    /// affine translation identity (exact in t).
    pub translated: bool,
}

/// Sup-norm residual of the best affine fit A_lambda = alpha + <beta,
/// lambda> over the lattice. Zero (to rounding) exactly when the weights
/// come from a lattice direction and a lift constant.
pub fn affine_defect(lattice: &[[i64; 2]], weights: &[i64]) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let cols = 3;
    let a = DMatrix::from_fn(lattice.len(), cols, |i, j| match j {
        0 => 1.0,
        1 => lattice[i][0] as f64,
        _ => lattice[i][1] as f64,
    });
    let b = DVector::from_iterator(weights.len(), weights.iter().map(|&w| w as f64));
    let fit = match a.clone().svd(true, true).solve(&b, 1e-12) {
        Ok(x) => x,
        Err(_) => return f64::INFINITY,
    };
    let res = a * fit - b;
    res.amax()
}

fn check_flow_inputs(space: &ToricQuantumSpace, weights: &[i64], t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "flow parameter {t} not in (0, 1]"
        )));
    }
    if weights.len() != space.dim() {
        return Err(Error::InvalidInput(format!(
            "{} weights against a space of dimension {}",
            weights.len(),
            space.dim()
        )));
    }
    Ok(())
}

/// Evaluate the flow at one parameter. Affine weight vectors ride the
/// exact translation identity; general diagonals fall back to the fixed
/// frame.
pub fn flow_f(space: &ToricQuantumSpace, weights: &[i64], t: f64) -> Result<FlowState> {
    check_flow_inputs(space, weights, t)?;
    let scale = weights.iter().map(|w| w.abs()).max().unwrap_or(0) as f64;
    if affine_defect(&space.lattice, weights) <= 1e-9 * scale.max(1.0) {
        let mut state = flow_f_fixed_frame(space, weights, 1.0)?;
        state.t = t;
        state.translated = true;
        return Ok(state);
    }
    flow_f_fixed_frame(space, weights, t)
}

/// Fixed-frame evaluation: rescaled section coordinates handled in the
/// log domain per node, so small t shifts weights instead of underflowing
/// them. Exact for any diagonal, but the quadrature must still resolve
/// the flowed density, which concentrates as t drops.
pub fn flow_f_fixed_frame(
    space: &ToricQuantumSpace,
    weights: &[i64],
    t: f64,
) -> Result<FlowState> {
    check_flow_inputs(space, weights, t)?;
    let log_t = t.ln();
    let shifts: Vec<f64> = weights.iter().map(|&a| 2.0 * a as f64 * log_t).collect();
    let emb = kodaira_embed_shifted(space, Some(&shifts))?;

    let mm = moment_matrix(&emb);
    let dim = weights.len() as f64;
    let trace: f64 = weights.iter().map(|&a| a as f64).sum();
    let mean = trace / dim;
    let f = -weights
        .iter()
        .zip(&mm.diag)
        .map(|(&a, m)| (a as f64 - mean) * m)
        .sum::<f64>();

    let volume = fs_volume(&emb);
    let raw: Vec<f64> = weights.iter().map(|&a| a as f64).collect();
    let ham = crate::embed::hamiltonian_pullback(&emb, &raw)?;
    let integral_form = ham
        .iter()
        .zip(emb.fs_density.iter().zip(&emb.weights))
        .map(|(h, (d, w))| h * d * w)
        .sum::<f64>()
        + trace * volume / dim;

    let mut max_share: f64 = 0.0;
    let mut dens_min = f64::INFINITY;
    let mut dens_max: f64 = 0.0;
    for (d, w) in emb.fs_density.iter().zip(&emb.weights) {
        max_share = max_share.max(d * w);
        dens_min = dens_min.min(*d);
        dens_max = dens_max.max(*d);
    }
    Ok(FlowState {
        t,
        f,
        integral_form,
        volume,
        mass_concentration: max_share / volume,
        density_ratio: dens_max / dens_min,
        translated: false,
    })
}

/// Exact value of the endpoint f(1): the pairing integral is an invariant
/// of the equivariant class of the embedding, hence a rational number
/// computable from the polytope alone.
pub fn exact_endpoint(polytope: &DelzantPolytope, direction: [i64; 2], k: u32) -> BigRational {
    let wm = weight_matrix(polytope, direction, k);
    let n = polytope.dim as u32;
    let k_top = rat_int((k as i64).pow(n + 1));
    let k_vol = rat_int((k as i64).pow(n));
    let counterterm = &wm.trace * k_vol * polytope.volume() / rat_int(wm.dim() as i64);
    k_top * polytope.linear_integral(direction, &BigRational::zero()) + counterterm
}

/// Sampling policy for a flow run: geometric grid from 1 down to t_min.
#[derive(Debug, Clone)]
pub struct FlowOptions {
    pub t_min: f64,
    pub ratio: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            t_min: 1e-3,
            ratio: 0.8,
        }
    }
}

impl FlowOptions {
    pub fn grid(&self) -> Vec<f64> {
        let mut ts = vec![1.0f64];
        loop {
            let next = ts.last().unwrap() * self.ratio;
            if next <= self.t_min {
                break;
            }
            ts.push(next);
        }
        ts.push(self.t_min);
        ts.reverse();
        ts
    }
}

/// A full flow run at one level, states in ascending t.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub k: u32,
    pub direction: [i64; 2],
    pub states: Vec<FlowState>,
    /// Set when the quadrature was refined because the flowed density
    /// spread exceeded its budget.
    pub refined: bool,
}

impl FlowTrace {
    /// Canonical CSV rendering of the trace.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f,volume,mass_concentration\n");
        for s in &self.states {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                s.t, s.f, s.volume, s.mass_concentration
            ));
        }
        out
    }
}

const DENSITY_SPREAD_BUDGET: f64 = 1e6;

/// Run the flow of a lattice direction on the geometric grid. Lattice
/// directions have affine weights, so each state rides the translation
/// identity and the t = 1 evaluation is shared. If the volume density
/// spreads beyond its budget, the trace is recomputed once on a doubled
/// quadrature.
pub fn flow_trace(
    pot: &SymplecticPotential,
    k: u32,
    m: usize,
    direction: [i64; 2],
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    let ts = opts.grid();
    let weights = weight_matrix(&pot.polytope, direction, k);
    let run = |panels: usize| -> Result<Vec<FlowState>> {
        let space = ToricQuantumSpace::new(pot.clone(), k, panels)?;
        let anchor = flow_f(&space, &weights.weights, 1.0)?;
        Ok(ts
            .iter()
            .map(|&t| {
                let mut state = anchor.clone();
                state.t = t;
                state.translated = t < 1.0;
                state
            })
            .collect())
    };
    let states = run(m)?;
    let spread = states
        .iter()
        .map(|s| s.density_ratio)
        .fold(0.0f64, f64::max);
    let (states, refined) = if spread > DENSITY_SPREAD_BUDGET {
        (run(2 * m)?, true)
    } else {
        (states, false)
    };
    Ok(FlowTrace {
        k,
        direction,
        states,
        refined,
    })
}

/// Outcome of the monotonicity verification over a sorted trace.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    /// Smallest step f(t_i) - f(t_{i+1}) walking the grid toward t = 0;
    /// nonnegative up to tolerance.
    pub min_pairwise_step: f64,
    /// Smallest finite-difference derivative df/ds, s = -log t.
    pub min_derivative: f64,
}

/// Verify f is non-decreasing along the flow, that is as t descends from
/// 1 toward 0. This is the convexity of the log norm of the orbit along
/// the one-parameter geodesic; on affine weights it degenerates to exact
/// constancy. The trace is sorted ascending in t, so the walk runs from
/// the back. Pairwise steps may dip by the quadrature tolerance 1e-9
/// (scaled); derivatives in s = -log t by 1e-8. Anything worse is
/// reported as a violation at the offending parameter.
pub fn monotonicity_check(states: &[FlowState]) -> Result<MonotonicityReport> {
    if states.len() < 2 {
        return Err(Error::InvalidInput("monotonicity needs at least two states".into()));
    }
    let scale = states
        .iter()
        .map(|s| s.f.abs())
        .fold(1.0f64, f64::max);
    let mut min_step = f64::INFINITY;
    let mut min_deriv = f64::INFINITY;
    for w in states.windows(2) {
        let step = w[0].f - w[1].f;
        let ds = w[1].t.ln() - w[0].t.ln();
        let deriv = step / ds;
        min_step = min_step.min(step);
        min_deriv = min_deriv.min(deriv);
        if step < -1e-9 * scale || deriv < -1e-8 * scale {
            return Err(Error::MonotonicityViolation {
                t: w[0].t,
                drop: step,
            });
        }
    }
    Ok(MonotonicityReport {
        min_pairwise_step: min_step,
        min_derivative: min_deriv,
    })
}

/// Estimate of the t -> 0 limit. By monotonicity along the flow the
/// sampled values increase toward the limit, so f(t_min) is a certified
/// lower bound for it (and the largest sampled value); the extrapolation
/// and its uncertainty are reported separately and claim no rate.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimate {
    pub ts: Vec<f64>,
    pub fs: Vec<f64>,
    pub certified: f64,
    pub extrapolated: f64,
    pub uncertainty: f64,
    /// Set when the tail is not settling (non-contracting steps).
    pub flagged: bool,
    /// Volume concentration diagnostic at t_min.
    pub mass_concentration: f64,
}

/// Monotone-bounded limit estimate from a flow trace. Requires the
/// monotonicity check to pass; the tail is then contracted by Aitken
/// extrapolation when it behaves geometrically.
pub fn limit_f(trace: &FlowTrace) -> Result<LimitEstimate> {
    monotonicity_check(&trace.states)?;
    let ts: Vec<f64> = trace.states.iter().map(|s| s.t).collect();
    let fs: Vec<f64> = trace.states.iter().map(|s| s.f).collect();
    let certified = fs[0];
    // Tail toward the limit sits at the front (ascending t).
    let (x2, x1, x0) = (fs[0], fs[1], fs[2]);
    let scale = fs.iter().map(|f| f.abs()).fold(1.0f64, f64::max);
    let contracting = (x1 - x2).abs() <= (x0 - x1).abs() + 1e-12 * scale;
    let denom = x2 - 2.0 * x1 + x0;
    let (extrapolated, flagged) = if !contracting {
        (certified, true)
    } else if denom.abs() < 1e-13 * scale {
        (certified, false)
    } else {
        (x2 - (x2 - x1) * (x2 - x1) / denom, false)
    };
    Ok(LimitEstimate {
        uncertainty: (extrapolated - certified).abs() + (x1 - x2).abs(),
        certified,
        extrapolated,
        flagged,
        mass_concentration: trace.states[0].mass_concentration,
        ts,
        fs,
    })
}

/// One level of the assembled inequality chain.
#[derive(Debug, Clone, Serialize)]
pub struct ChainRow {
    pub k: u32,
    /// Frobenius norm of the trace-free weight matrix.
    pub a_norm: f64,
    /// Trace-free norm of the moment matrix at t = 1.
    pub m_norm: f64,
    /// Exact endpoint f(1), as a float.
    pub endpoint: f64,
    /// Flow-certified f(t_min) when a flow was run, else the endpoint.
    pub certified: f64,
    /// ||A-bar|| ||M-bar|| - certified; nonnegative up to tolerance.
    pub cs_slack: f64,
    /// Normalized bound 4 pi k^{1 - n/2} f / ||A-bar||, the quantity whose
    /// k -> infinity limit is -4 pi F / ||chi||.
    pub raw: f64,
}

/// The Cauchy-Schwarz chain across a k-range, extrapolated and compared
/// against the exact invariant target.
#[derive(Debug, Clone, Serialize)]
pub struct BoundAssembly {
    pub direction: [i64; 2],
    pub rows: Vec<ChainRow>,
    /// Three-term extrapolation of raw in 1/k.
    pub extrapolated: f64,
    /// -4 pi F / ||chi|| from the exact invariants.
    pub target: f64,
    pub relative_gap: f64,
}

/// Assemble the chain over a k-range. With flow options the certified
/// value comes from the flow at each level (expensive); without, the
/// exact endpoint stands in, which Cauchy-Schwarz bounds all the same.
/// A chain violation beyond tolerance is a numerical fault and is
/// reported as an error rather than a row.
pub fn assemble_bound(
    pot: &SymplecticPotential,
    direction: [i64; 2],
    ks: &[u32],
    m: usize,
    flow: Option<&FlowOptions>,
) -> Result<BoundAssembly> {
    if ks.len() < 4 {
        return Err(Error::FitError(format!(
            "chain extrapolation needs at least 4 levels, got {}",
            ks.len()
        )));
    }
    let n = pot.dim() as f64;
    let polytope = &pot.polytope;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let space = ToricQuantumSpace::new(pot.clone(), k, m)?;
        let emb = kodaira_embed_shifted(&space, None)?;
        let mm = moment_matrix(&emb);
        let wm = weight_matrix(polytope, direction, k);
        let a_norm = wm.centered_norm();
        let endpoint = rat_to_f64(&exact_endpoint(polytope, direction, k));
        let certified = match flow {
            Some(opts) => {
                let trace = flow_trace(pot, k, m, direction, opts)?;
                limit_f(&trace)?.certified
            }
            None => endpoint,
        };
        let cs_slack = a_norm * mm.tracefree_norm - certified;
        if cs_slack < -1e-8 * endpoint.abs().max(1.0) {
            return Err(Error::QuadratureFailure {
                context: format!("Cauchy-Schwarz chain violated at k = {k}"),
                coarse: a_norm * mm.tracefree_norm,
                fine: certified,
            });
        }
        let raw = if a_norm > 0.0 {
            4.0 * std::f64::consts::PI * (k as f64).powf(1.0 - n / 2.0) * endpoint / a_norm
        } else {
            0.0
        };
        rows.push(ChainRow {
            k,
            a_norm,
            m_norm: mm.tracefree_norm,
            endpoint,
            certified,
            cs_slack,
            raw,
        });
    }

    let extrapolated = fit_three_term(ks, &rows)?;
    let f = futaki(polytope, direction)?;
    let chi = chi_norm(polytope, direction)?;
    let target = if chi.chi > 0.0 {
        -4.0 * std::f64::consts::PI * rat_to_f64(&f) / chi.chi
    } else {
        0.0
    };
    let relative_gap = (extrapolated - target).abs() / target.abs().max(1.0);
    Ok(BoundAssembly {
        direction,
        rows,
        extrapolated,
        target,
        relative_gap,
    })
}

/// Least-squares fit raw_k = r + c1/k + c2/k^2; returns r.
fn fit_three_term(ks: &[u32], rows: &[ChainRow]) -> Result<f64> {
    use nalgebra::{DMatrix, DVector};
    let a = DMatrix::from_fn(ks.len(), 3, |i, j| (1.0 / ks[i] as f64).powi(j as i32));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.raw));
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::FitError(format!("chain extrapolation solve failed: {e}")))?;
    Ok(sol[0])
}
