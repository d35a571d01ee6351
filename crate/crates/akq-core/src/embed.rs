//! Kodaira embeddings into projective space, with Fubini-Study pullbacks,
//! moment matrices, and Hamiltonian pullbacks.
//!
//! In the action-angle chart (y, theta) with y the Legendre dual coordinate,
//! the pullback of the Fubini-Study form through the coordinate map
//! Z_lam = s_lam / ||s_lam|| has matrix V = 2 Cov_pi(lam), where pi is the
//! normalized weight distribution pi_lam(x) = |Z_lam|^2 / sum |Z|^2. The
//! covariance identity is exact, so pullback values carry no differentiation
//! error; five-point stencil differentiation with Richardson extrapolation
//! is kept as an independent cross-check of both the identity and the
//! closedness of the pulled-back form.
//!
//! The reference form in the same frame has matrix G^{-1} (inverse Hessian
//! of the symplectic potential), and the Fubini-Study volume density with
//! respect to dx is det(V) det(G).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::decay_fit;
use crate::error::{Error, Result};
use crate::geom::curvature::ScalarCurvatureSamples;
use crate::geom::potential::{invert_metric, Mat2, SymplecticPotential, Vec2};
use crate::quantize::spectral::SpectralQuantumSpace;
use crate::quantize::toric::{log_sum_exp, ToricQuantumSpace};

/// Conversion between the Abreu scalar curvature (second derivatives of the
/// inverse Hessian) and the curvature units in which the expansion
/// coefficient of the Bergman density reads s/(4 pi): s = PI * S_abreu.
/// Fixed by matching the measured coefficient c1 = S_abreu / 4 (see the
/// calibration in the bergman module) against c1 = s/(4 pi).
pub const CURVATURE_UNIT: f64 = std::f64::consts::PI;

/// Projective embedding data sampled at quadrature nodes.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub k: u32,
    pub complex_dim: usize,
    /// Number of homogeneous coordinates, N_k + 1.
    pub dim_h: usize,
    pub nodes: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// pi[i][j] = |Z_i|^2 / |Z|^2 at node j: squared normalized coordinates.
    pub pi: Vec<Vec<f64>>,
    /// E_pi[lam] per node.
    pub mean: Vec<Vec2>,
    /// Pullback FS form matrix in the (dy, dtheta) frame; the pullback FS
    /// metric is the same matrix repeated on the dy and dtheta blocks.
    pub fs_form: Vec<Mat2>,
    pub base_hessian: Vec<Mat2>,
    pub base_metric_inv: Vec<Mat2>,
    /// det(fs_form) det(hessian): FS volume density against dx.
    pub fs_density: Vec<f64>,
    pub log_b: Vec<f64>,
    /// Distance proxy to the boundary: min facet value per node.
    pub facet_margin: Vec<f64>,
}

/// Default interior margin for sup-norm rate measurements. The asymptotic
/// expansion of the weight distribution is uniform on interior compacta;
/// in the boundary layer of width O(1/k) the residuals carry a slower rate
/// (the lattice distribution there is discrete rather than Gaussian), so
/// rate fits exclude it.
pub const INTERIOR_MARGIN: f64 = 0.05;

fn det(m: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        m[0][0]
    } else {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Evaluate the embedding of a toric space at its quadrature nodes.
/// The lattice basis is orthogonal with known norms, so the coordinates
/// are already with respect to an orthonormal frame.
pub fn kodaira_embed(space: &ToricQuantumSpace) -> Result<Embedding> {
    kodaira_embed_shifted(space, None)
}

/// Embedding with per-section logarithmic rescalings added to the section
/// weights; the entry point for one-parameter subgroup flows, which rescale
/// section lambda by t^{A_lambda} (a shift of 2 A_lambda log t here). With
/// no shifts this is the plain embedding.
pub fn kodaira_embed_shifted(
    space: &ToricQuantumSpace,
    shifts: Option<&[f64]>,
) -> Result<Embedding> {
    let n = space.potential.dim();
    let dim_h = space.dim();
    if let Some(s) = shifts {
        if s.len() != dim_h {
            return Err(Error::InvalidInput(format!(
                "{} shifts for {} sections",
                s.len(),
                dim_h
            )));
        }
    }
    let nodes = space.quad.nodes.clone();
    let m = nodes.len();
    // Coordinate vector is zero only on total underflow of every section.
    let floor = -745.0;

    struct NodeData {
        logp: Vec<f64>,
        mean: Vec2,
        fs: Mat2,
        hess: Mat2,
        hinv: Mat2,
        dens: f64,
        log_b: f64,
    }
    let per_node: Result<Vec<NodeData>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let lw: Vec<f64> = (0..dim_h)
                .map(|li| {
                    space.log_weights[li][j] - space.log_norms2[li]
                        + shifts.map_or(0.0, |s| s[li])
                })
                .collect();
            let log_b = log_sum_exp(lw.iter().copied());
            if !log_b.is_finite() || log_b < floor {
                // Along a flow the failure mode is coordinate underflow at
                // the node; without shifts it is a base point of the system.
                return Err(if shifts.is_some() {
                    Error::UnderflowAtNode {
                        node: nodes[j],
                        log_weight: log_b,
                    }
                } else {
                    Error::BasePointFailure {
                        dim: dim_h,
                        node: nodes[j],
                        floor,
                    }
                });
            }
            let logp: Vec<f64> = lw.iter().map(|v| v - log_b).collect();
            let mut mean = [0.0; 2];
            let mut second = [[0.0; 2]; 2];
            for (li, lp) in logp.iter().enumerate() {
                let p = lp.exp();
                for a in 0..n {
                    let la = space.lattice[li][a] as f64;
                    mean[a] += p * la;
                    for b in 0..n {
                        second[a][b] += p * la * space.lattice[li][b] as f64;
                    }
                }
            }
            let mut fs = [[0.0; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    fs[a][b] = 2.0 * (second[a][b] - mean[a] * mean[b]);
                }
            }
            let hess = space.potential.hessian(nodes[j]);
            let hinv = invert_metric(&hess, n)?;
            let dens = det(&fs, n) * det(&hess, n);
            Ok(NodeData {
                logp,
                mean,
                fs,
                hess,
                hinv,
                dens,
                log_b,
            })
        })
        .collect();
    let per_node = per_node?;

    let mut pi = vec![vec![0.0; m]; dim_h];
    for (j, nd) in per_node.iter().enumerate() {
        for (li, lp) in nd.logp.iter().enumerate() {
            pi[li][j] = lp.exp();
        }
    }
    let facet_margin = nodes
        .iter()
        .map(|&x| space.potential.polytope.min_facet_value(x))
        .collect();
    Ok(Embedding {
        k: space.k,
        complex_dim: n,
        dim_h,
        weights: space.quad.weights.clone(),
        nodes,
        pi,
        mean: per_node.iter().map(|d| d.mean).collect(),
        fs_form: per_node.iter().map(|d| d.fs).collect(),
        base_hessian: per_node.iter().map(|d| d.hess).collect(),
        base_metric_inv: per_node.iter().map(|d| d.hinv).collect(),
        fs_density: per_node.iter().map(|d| d.dens).collect(),
        log_b: per_node.iter().map(|d| d.log_b).collect(),
        facet_margin,
    })
}

/// Sup-norm of (1/k) V - G^{-1}, entrywise, over nodes at least `margin`
/// inside the polytope (pass 0.0 for the full closed-polytope sup).
pub fn fs_pullback_residual(emb: &Embedding, margin: f64) -> f64 {
    let kf = emb.k as f64;
    let n = emb.complex_dim;
    let mut sup = 0.0f64;
    for (j, (v, ginv)) in emb.fs_form.iter().zip(&emb.base_metric_inv).enumerate() {
        if emb.facet_margin[j] < margin {
            continue;
        }
        for a in 0..n {
            for b in 0..n {
                sup = sup.max((v[a][b] / kf - ginv[a][b]).abs());
            }
        }
    }
    sup
}

/// Total Fubini-Study volume of the image, int (Phi* omega_FS)^n / n!.
pub fn fs_volume(emb: &Embedding) -> f64 {
    emb.fs_density
        .iter()
        .zip(&emb.weights)
        .map(|(d, w)| d * w)
        .sum()
}

/// Residual sups across a k-range with a fitted decay exponent.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualTable {
    pub ks: Vec<u32>,
    pub sups: Vec<f64>,
    pub exponent: Option<f64>,
    pub at_floor: bool,
}

pub fn fs_residual_table(
    pot: &SymplecticPotential,
    ks: &[u32],
    m: usize,
    margin: f64,
) -> Result<ResidualTable> {
    let mut sups = Vec::with_capacity(ks.len());
    for &k in ks {
        let space = ToricQuantumSpace::new(pot.clone(), k, m)?;
        sups.push(fs_pullback_residual(&kodaira_embed(&space)?, margin));
    }
    let (exponent, at_floor) = decay_fit(ks, &sups, 1e-11);
    Ok(ResidualTable {
        ks: ks.to_vec(),
        sups,
        exponent,
        at_floor,
    })
}

/// Embedding of a spectral space: eigensection values at lattice sites.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub k: u32,
    pub side: usize,
    pub coords: DMatrix<Complex64>,
    pub bergman: Vec<f64>,
}

/// A genuine base point shows up as a density at the discretization floor,
/// orders of magnitude below the O(1) values of a base-point-free system.
const SPECTRAL_BASE_POINT_FLOOR: f64 = 1e-2;

pub fn kodaira_embed_spectral(space: &SpectralQuantumSpace) -> Result<SpectralEmbedding> {
    let bergman = space.bergman_at_sites();
    let mean = bergman.iter().sum::<f64>() / bergman.len() as f64;
    for (site, b) in bergman.iter().enumerate() {
        if b / mean < SPECTRAL_BASE_POINT_FLOOR {
            let h = 1.0 / space.side as f64;
            return Err(Error::BasePointFailure {
                dim: space.dim(),
                node: [(site / space.side) as f64 * h, (site % space.side) as f64 * h],
                floor: SPECTRAL_BASE_POINT_FLOOR,
            });
        }
    }
    Ok(SpectralEmbedding {
        k: space.k,
        side: space.side,
        coords: space.sections.clone(),
        bergman,
    })
}

/// Sup-norm of (1/k) Phi* omega_FS - omega on the flat two-torus, measured
/// relative to omega. Uses the identity Phi* omega_FS = k omega + dd^c log B,
/// so only the scalar Bergman density is differentiated (five-point periodic
/// stencils); no connection bookkeeping enters.
pub fn fs_pullback_residual_spectral(emb: &SpectralEmbedding) -> f64 {
    let nn = emb.side;
    let h = 1.0 / nn as f64;
    let logb: Vec<f64> = emb.bergman.iter().map(|b| b.ln()).collect();
    let idx = |x: usize, y: usize| (x % nn) * nn + (y % nn);
    let mut sup = 0.0f64;
    for x in 0..nn {
        for y in 0..nn {
            let mut lap = 0.0;
            for axis in 0..2 {
                let at = |d: i64| {
                    let (dx, dy) = if axis == 0 { (d, 0) } else { (0, d) };
                    logb[idx(
                        (x as i64 + dx).rem_euclid(nn as i64) as usize,
                        (y as i64 + dy).rem_euclid(nn as i64) as usize,
                    )]
                };
                lap += (-at(-2) + 16.0 * at(-1) - 30.0 * at(0) + 16.0 * at(1) - at(2))
                    / (12.0 * h * h);
            }
            // dd^c log B = (lap/2) dx1 dx2 against omega = 2 pi dx1 dx2.
            sup = sup.max(lap.abs() / (4.0 * std::f64::consts::PI * emb.k as f64));
        }
    }
    sup
}

fn second_derivative_stencil(vals: [f64; 5], h: f64) -> f64 {
    (-vals[0] + 16.0 * vals[1] - 30.0 * vals[2] + 16.0 * vals[3] - vals[4]) / (12.0 * h * h)
}

fn first_derivative_stencil(vals: [f64; 5], h: f64) -> f64 {
    (vals[0] - 8.0 * vals[1] + 8.0 * vals[3] - vals[4]) / (12.0 * h)
}

/// log sum_lam |Z_lam|^2 as a function of the dual coordinate y; globally
/// defined and analytic, so stencils in y never leave the chart.
fn log_coord_norm(space: &ToricQuantumSpace, y: Vec2) -> f64 {
    let n = space.potential.dim();
    log_sum_exp(space.lattice.iter().zip(&space.log_norms2).map(|(lam, ln2)| {
        let mut dot = 0.0;
        for a in 0..n {
            dot += lam[a] as f64 * y[a];
        }
        2.0 * dot - ln2
    }))
}

fn fs_form_at_y(space: &ToricQuantumSpace, y: Vec2) -> Mat2 {
    let n = space.potential.dim();
    let logp: Vec<f64> = {
        let raw: Vec<f64> = space
            .lattice
            .iter()
            .zip(&space.log_norms2)
            .map(|(lam, ln2)| {
                let mut dot = 0.0;
                for a in 0..n {
                    dot += lam[a] as f64 * y[a];
                }
                2.0 * dot - ln2
            })
            .collect();
        let z = log_sum_exp(raw.iter().copied());
        raw.iter().map(|v| v - z).collect()
    };
    let mut mean = [0.0; 2];
    let mut second = [[0.0; 2]; 2];
    for (li, lp) in logp.iter().enumerate() {
        let p = lp.exp();
        for a in 0..n {
            let la = space.lattice[li][a] as f64;
            mean[a] += p * la;
            for b in 0..n {
                second[a][b] += p * la * space.lattice[li][b] as f64;
            }
        }
    }
    let mut fs = [[0.0; 2]; 2];
    for a in 0..n {
        for b in 0..n {
            fs[a][b] = 2.0 * (second[a][b] - mean[a] * mean[b]);
        }
    }
    fs
}

/// Cross-check the covariance identity: five-point second derivatives of
/// log |Z|^2 in y (Richardson-extrapolated from spacings h and h/2) against
/// the analytic matrix 2 Cov. Returns the max entrywise disagreement.
pub fn fs_form_stencil_check(space: &ToricQuantumSpace, x0: Vec2, h: f64) -> Result<f64> {
    let n = space.potential.dim();
    let y0 = space.potential.gradient(x0);
    let shift = |a: usize, s: f64| {
        let mut y = y0;
        y[a] += s;
        y
    };
    let second_at = |a: usize, b: usize, h: f64| -> f64 {
        if a == b {
            let vals = [
                log_coord_norm(space, shift(a, -2.0 * h)),
                log_coord_norm(space, shift(a, -h)),
                log_coord_norm(space, y0),
                log_coord_norm(space, shift(a, h)),
                log_coord_norm(space, shift(a, 2.0 * h)),
            ];
            second_derivative_stencil(vals, h)
        } else {
            let at = |sa: f64, sb: f64| {
                let mut y = y0;
                y[a] += sa;
                y[b] += sb;
                log_coord_norm(space, y)
            };
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        }
    };
    let analytic = fs_form_at_y(space, y0);
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let coarse = second_at(a, b, h);
            let fine = second_at(a, b, h / 2.0);
            let richardson = if a == b {
                (16.0 * fine - coarse) / 15.0
            } else {
                (4.0 * fine - coarse) / 3.0
            };
            if !richardson.is_finite() {
                return Err(Error::StencilError(format!(
                    "non-finite stencil value at x = {x0:?}"
                )));
            }
            // V = 2 Cov = (1/2) d^2/dy^2 log |Z|^2.
            worst = worst.max((richardson / 2.0 - analytic[a][b]).abs());
        }
    }
    Ok(worst)
}

/// Exterior-derivative residual of the pulled-back form: the antisymmetrized
/// y-gradient of V, with d/dy via x-space stencils and the chain rule.
/// Stencil points must stay inside the polytope.
pub fn fs_closedness_residual(space: &ToricQuantumSpace, x0: Vec2, h: f64) -> Result<f64> {
    let n = space.potential.dim();
    if n == 1 {
        return Ok(0.0);
    }
    let p = &space.potential.polytope;
    let v_at = |x: Vec2| fs_form_at_y(space, space.potential.gradient(x));
    let dv_dx = |d: usize, h: f64| -> Result<Mat2> {
        let mut samples = Vec::with_capacity(5);
        for step in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let mut x = x0;
            x[d] += step * h;
            if !p.contains(x, 0.0) {
                return Err(Error::StencilError(format!(
                    "stencil leaves the moment polytope: x = {x:?} (probe {x0:?}, spacing {h})"
                )));
            }
            samples.push(v_at(x));
        }
        let mut out = [[0.0; 2]; 2];
        for a in 0..n {
            for b in 0..n {
                let vals = [
                    samples[0][a][b],
                    samples[1][a][b],
                    samples[2][a][b],
                    samples[3][a][b],
                    samples[4][a][b],
                ];
                out[a][b] = first_derivative_stencil(vals, h);
            }
        }
        Ok(out)
    };
    // Richardson-extrapolated x-derivatives of every V entry.
    let mut dv = Vec::with_capacity(n);
    for d in 0..n {
        let coarse = dv_dx(d, h)?;
        let fine = dv_dx(d, h / 2.0)?;
        let mut r = [[0.0; 2]; 2];
        for a in 0..n {
            for b in 0..n {
                r[a][b] = (16.0 * fine[a][b] - coarse[a][b]) / 15.0;
            }
        }
        dv.push(r);
    }
    let hinv = invert_metric(&space.potential.hessian(x0), n)?;
    // dV_ab/dy_c = sum_d dV_ab/dx_d (G^{-1})_{dc}; closedness of
    // sum V_ab dy_a ^ dtheta_b demands symmetry of dV_ab/dy_c in (c, a).
    let dy = |c: usize, a: usize, b: usize| -> f64 {
        (0..n).map(|d| dv[d][a][b] * hinv[d][c]).sum()
    };
    let mut worst = 0.0f64;
    for b in 0..n {
        for c in 0..n {
            for a in 0..c {
                worst = worst.max((dy(c, a, b) - dy(a, c, b)).abs());
            }
        }
    }
    Ok(worst)
}

/// Moment matrix of the embedding in the lattice basis, where circle
/// equivariance makes it diagonal: M_ii = int pi_i (FS volume density) dx.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub dim: usize,
    pub diag: Vec<f64>,
    pub trace: f64,
    pub tracefree_norm: f64,
}

/// Trace-free Frobenius data of a Hermitian matrix: returns (trace real
/// part, hermiticity defect, ||M - (tr/n) I||_F).
pub fn hermitian_tracefree_norm(m: &DMatrix<Complex64>) -> (f64, f64, f64) {
    let n = m.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    let trace: Complex64 = (0..n).map(|i| m[(i, i)]).sum();
    let shift = trace / n as f64;
    let mut frob = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { m[(i, j)] - shift } else { m[(i, j)] };
            frob += v.norm_sqr();
        }
    }
    (trace.re, defect, frob.sqrt())
}

pub fn moment_matrix(emb: &Embedding) -> MomentMatrix {
    let diag: Vec<f64> = emb
        .pi
        .par_iter()
        .map(|row| {
            row.iter()
                .zip(&emb.fs_density)
                .zip(&emb.weights)
                .map(|((p, d), w)| p * d * w)
                .sum()
        })
        .collect();
    let trace: f64 = diag.iter().sum();
    let shift = trace / emb.dim_h as f64;
    let tracefree_norm = diag
        .iter()
        .map(|m| (m - shift) * (m - shift))
        .sum::<f64>()
        .sqrt();
    MomentMatrix {
        dim: emb.dim_h,
        diag,
        trace,
        tracefree_norm,
    }
}

/// Pullback of the projective Hamiltonian of a diagonal weight matrix A:
/// Phi*(h_A) = -sum_i A_ii pi_i pointwise.
pub fn hamiltonian_pullback(emb: &Embedding, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != emb.dim_h {
        return Err(Error::InvalidInput(format!(
            "weight vector length {} vs {} coordinates",
            weights.len(),
            emb.dim_h
        )));
    }
    let m = emb.nodes.len();
    let mut out = vec![0.0; m];
    for (row, a) in emb.pi.iter().zip(weights) {
        for (o, p) in out.iter_mut().zip(row) {
            *o -= a * p;
        }
    }
    Ok(out)
}

/// Left and right side of the trace-free moment-matrix bound
/// ||Mbar|| <= (k^{n/2-1}/(4 pi)) ||s - s_mean||_{L2} (1 + 10/k).
pub fn tracefree_bound_sides(
    pot: &SymplecticPotential,
    k: u32,
    m: usize,
) -> Result<(f64, f64)> {
    let space = ToricQuantumSpace::new(pot.clone(), k, m)?;
    let emb = kodaira_embed(&space)?;
    let mm = moment_matrix(&emb);
    let curv = ScalarCurvatureSamples::new(pot, 96)?;
    let l2 = CURVATURE_UNIT * curv.l2_norm_centered();
    let n = pot.dim() as f64;
    let kf = k as f64;
    let rhs = kf.powf(n / 2.0 - 1.0) / (4.0 * std::f64::consts::PI) * l2 * (1.0 + 10.0 / kf);
    Ok((mm.tracefree_norm, rhs))
}

/// Geometry-only embedding snapshot for the binary container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingSnapshot {
    pub k: u32,
    pub complex_dim: usize,
    pub dim_h: usize,
    pub nodes: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub fs_form: Vec<Mat2>,
    pub base_hessian: Vec<Mat2>,
    pub fs_density: Vec<f64>,
    pub log_b: Vec<f64>,
}

impl Embedding {
    pub fn snapshot(&self) -> EmbeddingSnapshot {
        EmbeddingSnapshot {
            k: self.k,
            complex_dim: self.complex_dim,
            dim_h: self.dim_h,
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            fs_form: self.fs_form.clone(),
            base_hessian: self.base_hessian.clone(),
            fs_density: self.fs_density.clone(),
            log_b: self.log_b.clone(),
        }
    }
}
