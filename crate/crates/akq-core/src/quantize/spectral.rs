//! Magnetic lattice discretization of the renormalized Bochner Laplacian on
//! flat tori, with low-eigencluster extraction.
//!
//! The prequantum line bundle of flux k over T^2 (or flux k in each of two
//! planes over T^4) is realized by Landau-gauge link phases on a periodic
//! N^(2n) site lattice (Peierls substitution): hopping along the second axis
//! of a flux plane picks up exp(2 pi i k i1 / N^2), and the wrap link of the
//! first axis closes the cocycle with exp(-2 pi i k i2 / N). Every plaquette
//! then carries exactly the continuum flux 2 pi k / N^2.
//!
//! The operator is assembled from the weak form
//!   Q(psi) = 1/2 sum_{x, +/-} g^{ab}(x) (D_a psi)* (D_b psi) / h^2,
//! which keeps it Hermitian and gauge covariant by construction. The almost
//! Kahler deformation on T^4 tilts the metric of the first flux plane to
//!   g = [[1, a], [a, 1 + a^2]],  a = eps sin(2 pi xi_3),
//! unit determinant, so the volume element stays flat and the weak form is
//! the honest Bochner quadratic form. After subtracting the 2 pi n k trend
//! the ground cluster sits near 0 and the first excited level near 4 pi k.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::quantize::eigen::{lobpcg_with, BlockPreconditioner, CsrHermitian, EigenPairs};

use std::f64::consts::PI;
use std::sync::Arc;

/// Link phases on a periodic lattice: u[axis][site] transports a section
/// from `site` to `site + e_axis`.
#[derive(Debug, Clone)]
pub struct LinkField {
    pub side: usize,
    pub naxes: usize,
    pub u: Vec<Vec<Complex64>>,
}

impl LinkField {
    fn sites(&self) -> usize {
        self.side.pow(self.naxes as u32)
    }

    /// Decompose a site index into axis coordinates.
    fn coords(&self, mut idx: usize) -> [usize; 4] {
        let mut c = [0usize; 4];
        for a in (0..self.naxes).rev() {
            c[a] = idx % self.side;
            idx /= self.side;
        }
        c
    }

    fn index(&self, c: &[usize; 4]) -> usize {
        let mut idx = 0;
        for a in 0..self.naxes {
            idx = idx * self.side + (c[a] % self.side);
        }
        idx
    }

    fn neighbor(&self, idx: usize, axis: usize, step: i32) -> usize {
        let mut c = self.coords(idx);
        c[axis] = (c[axis] + self.side + if step > 0 { 1 } else { self.side - 1 }) % self.side;
        self.index(&c)
    }

    /// Max deviation of the plaquette holonomy in plane (a, b) from the
    /// prescribed flux phase exp(2 pi i flux / N^2).
    pub fn plaquette_defect(&self, a: usize, b: usize, flux: i64) -> f64 {
        let expected = Complex64::from_polar(1.0, 2.0 * PI * flux as f64 / (self.side * self.side) as f64);
        let mut worst: f64 = 0.0;
        for idx in 0..self.sites() {
            let xa = self.neighbor(idx, a, 1);
            let xb = self.neighbor(idx, b, 1);
            // u_a(x) u_b(x+e_a) conj(u_a(x+e_b)) conj(u_b(x)).
            let hol = self.u[a][idx] * self.u[b][xa] * self.u[a][xb].conj() * self.u[b][idx].conj();
            worst = worst.max((hol - expected).norm());
        }
        worst
    }

    /// Gauge transform by site phases: links conjugate as
    /// u_a(x) -> exp(i chi(x+e_a)) u_a(x) exp(-i chi(x)).
    pub fn rephased(&self, chi: &[f64]) -> LinkField {
        let mut out = self.clone();
        for a in 0..self.naxes {
            for idx in 0..self.sites() {
                let nb = self.neighbor(idx, a, 1);
                out.u[a][idx] =
                    Complex64::from_polar(1.0, chi[nb]) * self.u[a][idx] * Complex64::from_polar(1.0, -chi[idx]);
            }
        }
        out
    }
}

/// Landau-gauge links for flux k in the (a0, a0+1) plane.
fn landau_plane(links: &mut LinkField, a0: usize, k: u32) {
    let n = links.side;
    for idx in 0..links.sites() {
        let c = links.coords(idx);
        // Second axis of the plane: phase grows with the first coordinate.
        links.u[a0 + 1][idx] *=
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 * c[a0] as f64 / (n * n) as f64);
        // First axis: trivial except the wrap link closing the cocycle.
        if c[a0] == n - 1 {
            links.u[a0][idx] *=
                Complex64::from_polar(1.0, -2.0 * PI * k as f64 * c[a0 + 1] as f64 / n as f64);
        }
    }
}

pub fn landau_links(side: usize, naxes: usize, k: u32) -> LinkField {
    let mut links = LinkField {
        side,
        naxes,
        u: vec![vec![Complex64::ONE; side.pow(naxes as u32)]; naxes],
    };
    landau_plane(&mut links, 0, k);
    if naxes == 4 {
        landau_plane(&mut links, 2, k);
    }
    links
}

/// Discretized renormalized Bochner Laplacian with its magnetic data.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub side: usize,
    /// Complex dimension n (1 for T^2, 2 for T^4).
    pub complex_dim: usize,
    pub k: u32,
    pub deformation: f64,
    /// Renormalization 2 pi n k already subtracted from the diagonal.
    pub shift: f64,
    pub links: LinkField,
    pub op: CsrHermitian,
}

fn resolution_checks(side: usize, k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "prequantization requires flux k >= 1".into(),
        ));
    }
    let flux_per_plaquette = 2.0 * PI * k as f64 / (side * side) as f64;
    if flux_per_plaquette > 0.5 {
        return Err(Error::ResolutionError(format!(
            "flux per plaquette {flux_per_plaquette:.3} > 1/2 at side {side}, k {k}"
        )));
    }
    Ok(())
}

/// Whether the grid resolves the magnetic length comfortably (16k sites per
/// period). Coarser grids still assemble; cluster positions drift O(h^2).
pub fn resolution_adequate(side: usize, k: u32) -> bool {
    side >= 16 * k as usize
}

/// Metric inverse at a site: identity except the (0,1) block on deformed
/// T^4, where g^{-1} = [[1+a^2, -a], [-a, 1]] with a = eps sin(2 pi xi_3).
fn metric_inverse_entry(
    naxes: usize,
    deformation: f64,
    coords: &[usize; 4],
    side: usize,
    a: usize,
    b: usize,
) -> f64 {
    if naxes == 2 || (a >= 2 && b >= 2) {
        return if a == b { 1.0 } else { 0.0 };
    }
    if a >= 2 || b >= 2 {
        return 0.0;
    }
    let t = deformation * (2.0 * PI * coords[2] as f64 / side as f64).sin();
    match (a, b) {
        (0, 0) => 1.0 + t * t,
        (1, 1) => 1.0,
        _ => -t,
    }
}

/// Assemble the renormalized magnetic Laplacian on T^{2n} from the weak
/// form. naxes = 2 or 4; deformation active only for naxes = 4.
pub fn assemble_laplacian(
    side: usize,
    naxes: usize,
    k: u32,
    deformation: f64,
) -> Result<SpectralProblem> {
    assert!(naxes == 2 || naxes == 4);
    resolution_checks(side, k)?;
    let links = landau_links(side, naxes, k);
    let sites = links.sites();
    let h2 = 1.0 / (side * side) as f64; // h^2 with h = 1/N
    let complex_dim = naxes / 2;
    let shift = 2.0 * PI * complex_dim as f64 * k as f64;
    // Active (a, b) metric pairs; off-diagonal only in the deformed block.
    let mut pairs: Vec<(usize, usize)> = (0..naxes).map(|a| (a, a)).collect();
    if deformation != 0.0 && naxes == 4 {
        pairs.push((0, 1));
        pairs.push((1, 0));
    }
    let mut trip: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sites * naxes * 6);
    for idx in 0..sites {
        let c = links.coords(idx);
        for &step in &[1i32, -1] {
            // D_a^s psi = s (U psi(x + s e_a) - psi(x)) / h, where for the
            // backward difference U is the conjugated link from x - e_a.
            let hop = |axis: usize| -> (usize, Complex64) {
                if step > 0 {
                    (links.neighbor(idx, axis, 1), links.u[axis][idx])
                } else {
                    let nb = links.neighbor(idx, axis, -1);
                    (nb, links.u[axis][nb].conj())
                }
            };
            for &(a, b) in &pairs {
                let g = metric_inverse_entry(naxes, deformation, &c, side, a, b);
                if g == 0.0 {
                    continue;
                }
                let coef = 0.5 * g / h2;
                let (pa, ua) = hop(a);
                let (pb, ub) = hop(b);
                // (ua psi(pa) - psi(x))* (ub psi(pb) - psi(x)), the step
                // signs s_a s_b cancel for a == b and multiply to s^2 = 1
                // within one s-branch.
                trip.push((pa, pb, Complex64::from(coef) * ua.conj() * ub));
                trip.push((pa, idx, -Complex64::from(coef) * ua.conj()));
                trip.push((idx, pb, -Complex64::from(coef) * ub));
                trip.push((idx, idx, Complex64::from(coef)));
            }
        }
    }
    // Renormalization: subtract 2 pi n k on the diagonal.
    for idx in 0..sites {
        trip.push((idx, idx, Complex64::from(-shift)));
    }
    let op = CsrHermitian::from_triplets(sites, trip);
    Ok(SpectralProblem {
        side,
        complex_dim,
        k,
        deformation,
        shift,
        links,
        op,
    })
}

/// Spectral window report for the ground cluster.
#[derive(Debug, Clone)]
pub struct SpectralCluster {
    /// Renormalized eigenvalues inside the window (-C1, C1).
    pub eigenvalues: Vec<f64>,
    pub window: f64,
    pub spread: f64,
    pub next_eigenvalue: f64,
    /// (first eigenvalue above the window) / k; ~ 4 pi for flat structures.
    pub gap_ratio: f64,
}

/// Quantum space carried by lattice eigensections, orthonormal in the
/// discrete (k omega)^n/n! inner product.
#[derive(Debug, Clone)]
pub struct SpectralQuantumSpace {
    pub k: u32,
    pub complex_dim: usize,
    pub side: usize,
    pub eigenvalues: Vec<f64>,
    /// Columns are sections; site values scaled so <s_i, s_j>_mu = delta_ij.
    pub sections: nalgebra::DMatrix<Complex64>,
}

impl SpectralQuantumSpace {
    pub fn dim(&self) -> usize {
        self.sections.ncols()
    }

    /// Discrete measure weight per site: h^{2n} k^n.
    pub fn site_measure(&self) -> f64 {
        let h2n = 1.0 / (self.side as f64).powi(2 * self.complex_dim as i32);
        h2n * (self.k as f64).powi(self.complex_dim as i32)
    }

    /// Bergman density at every site: sum_i |s_i(x)|^2.
    pub fn bergman_at_sites(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sections.nrows()];
        for j in 0..self.sections.ncols() {
            for (i, v) in self.sections.column(j).iter().enumerate() {
                out[i] += v.norm_sqr();
            }
        }
        out
    }

    /// max |<s_i, s_j> - delta_ij| in the discrete inner product.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.sections.adjoint() * &self.sections * Complex64::from(self.site_measure());
        let mut worst: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::from(target)).norm());
            }
        }
        worst
    }
}

/// Shifted free-field inverse (L_free + 2 pi k)^{-1} as an eigensolver
/// preconditioner on T^2. The free lattice Laplacian is circulant, so the
/// inverse acts diagonally in the 2D Fourier basis; it matches the magnetic
/// operator's 1/h^2 high-frequency growth, which is what stalls the
/// unpreconditioned iteration on fine grids. The +2 pi k shift keeps the
/// symbol strictly positive.
pub struct FreeFieldPreconditioner {
    side: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// 1 / (nu_pq + 2 pi k) with nu the free symbol
    /// (4/h^2)(sin^2(pi p/N) + sin^2(pi q/N)).
    inverse_symbol: Vec<f64>,
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

impl FreeFieldPreconditioner {
    pub fn new(side: usize, k: u32) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(side);
        let inv = planner.plan_fft_inverse(side);
        let h2 = 1.0 / (side * side) as f64;
        let mut inverse_symbol = vec![0.0; side * side];
        for p in 0..side {
            for q in 0..side {
                let sp = (PI * p as f64 / side as f64).sin();
                let sq = (PI * q as f64 / side as f64).sin();
                let nu = 4.0 / h2 * (sp * sp + sq * sq);
                inverse_symbol[p * side + q] = 1.0 / (nu + 2.0 * PI * k as f64);
            }
        }
        FreeFieldPreconditioner {
            side,
            fwd,
            inv,
            inverse_symbol,
        }
    }

    /// In-place 2D transform of a side x side row-major buffer: the plan
    /// processes all rows in one call, so each axis is rows + transpose.
    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        plan.process(buf);
        transpose_square(buf, self.side);
        plan.process(buf);
        transpose_square(buf, self.side);
    }
}

impl BlockPreconditioner for FreeFieldPreconditioner {
    fn apply_block(&self, r: &mut DMatrix<Complex64>) {
        let n2 = self.side * self.side;
        assert_eq!(r.nrows(), n2);
        // Forward + inverse over both axes gains side^2; fold the
        // normalization into the final pass.
        let norm = Complex64::from(1.0 / n2 as f64);
        let ncols = r.ncols();
        let data = r.as_mut_slice();
        for j in 0..ncols {
            let buf = &mut data[j * n2..(j + 1) * n2];
            self.fft2(buf, &self.fwd);
            for (v, &s) in buf.iter_mut().zip(&self.inverse_symbol) {
                *v *= s;
            }
            self.fft2(buf, &self.inv);
            for v in buf.iter_mut() {
                *v *= norm;
            }
        }
    }
}

/// Extract the ground cluster. C1 defaults to min(1, gap/4) with the gap
/// taken from a coarse pre-solve, per the window convention.
pub fn low_cluster(
    problem: &SpectralProblem,
    c1_override: Option<f64>,
    seed: u64,
) -> Result<(SpectralQuantumSpace, SpectralCluster)> {
    let expected = (problem.k as usize).pow(problem.complex_dim as u32);
    let extra = 4;
    // Residual targets scale with the spectral radius: demanding absolute
    // 1e-8 at operator norm ~1e5 (fine grids) is below floating-point
    // reach, and discretization error O(h^2) dominates long before it.
    let scale = problem.op.gershgorin_bound().max(1.0);
    let coarse_tol = (1e-8 * scale).max(1e-3);
    let tol = (1e-10 * scale).max(1e-8);
    // The circulant preconditioner is built for the flat T^2 stencil; T^4
    // problems stay small enough to converge without one.
    let pre = (problem.complex_dim == 1)
        .then(|| FreeFieldPreconditioner::new(problem.side, problem.k));
    let pre_dyn = pre.as_ref().map(|p| p as &dyn BlockPreconditioner);
    // The coarse pre-solve fixes the window; its vectors warm-start the
    // fine solve, which only needs to polish them.
    let mut warm: Option<DMatrix<Complex64>> = None;
    let c1 = match c1_override {
        Some(c) => c,
        None => {
            let coarse = lobpcg_with(
                &problem.op,
                expected + 1,
                extra,
                seed ^ 0x5eed,
                coarse_tol,
                400,
                pre_dyn,
                None,
            )?;
            let gap = coarse.values[expected] - coarse.values[expected - 1];
            let window = (gap / 4.0).min(1.0);
            warm = Some(coarse.vectors);
            window
        }
    };
    let solved: EigenPairs = lobpcg_with(
        &problem.op,
        expected + 1,
        extra,
        seed,
        tol,
        800,
        pre_dyn,
        warm.as_ref(),
    )?;
    let inside: Vec<f64> = solved
        .values
        .iter()
        .copied()
        .filter(|v| v.abs() < c1)
        .collect();
    // Boundary ambiguity: an eigenvalue within 10% of the window edge makes
    // the reported dimension depend on the window choice.
    for &v in &solved.values {
        if (v.abs() - c1).abs() < 0.1 * c1 {
            let below = solved
                .values
                .iter()
                .copied()
                .filter(|x| x.abs() < c1)
                .fold(f64::NEG_INFINITY, f64::max);
            let above = solved
                .values
                .iter()
                .copied()
                .filter(|x| x.abs() >= c1)
                .fold(f64::INFINITY, f64::min);
            return Err(Error::AmbiguousWindow {
                cutoff: c1,
                below,
                above,
            });
        }
    }
    let count = inside.len();
    let next = solved
        .values
        .iter()
        .copied()
        .find(|v| v.abs() >= c1)
        .unwrap_or(f64::INFINITY);
    let cluster = SpectralCluster {
        spread: if count > 0 {
            inside[count - 1] - inside[0]
        } else {
            0.0
        },
        eigenvalues: inside,
        window: c1,
        next_eigenvalue: next,
        gap_ratio: next / problem.k as f64,
    };
    // Mu-orthonormalize: eigenvectors are l2-orthonormal already.
    let h2n = 1.0 / (problem.side as f64).powi(2 * problem.complex_dim as i32);
    let scale = (h2n * (problem.k as f64).powi(problem.complex_dim as i32)).sqrt();
    let sections = solved.vectors.columns(0, count).clone_owned() / Complex64::from(scale);
    Ok((
        SpectralQuantumSpace {
            k: problem.k,
            complex_dim: problem.complex_dim,
            side: problem.side,
            eigenvalues: cluster.eigenvalues.clone(),
            sections,
        },
        cluster,
    ))
}

/// Exact continuum Bergman density of flat T^2 at flux k, from the
/// theta-function description of the lowest Landau level in Landau gauge:
/// sections Theta_j = sum_m exp(-2 pi i (mk + j) y) exp(-pi k (x - m - j/k)^2)
/// with ||Theta_j||^2 = sqrt(k/2) in the (k omega)/1! inner product. The
/// density oscillates at order exp(-c k) around 1; it is NOT constant.
pub fn theta_bergman(k: u32, x: f64, y: f64) -> f64 {
    let kk = k as f64;
    let norm = (kk / 2.0).sqrt();
    let mut total = 0.0;
    for j in 0..k {
        let mut re = 0.0;
        let mut im = 0.0;
        for m in -4i64..=4 {
            let center = m as f64 + j as f64 / kk;
            let amp = (-PI * kk * (x - center) * (x - center)).exp();
            let phase = -2.0 * PI * (m as f64 * kk + j as f64) * y;
            re += amp * phase.cos();
            im += amp * phase.sin();
        }
        total += re * re + im * im;
    }
    total / norm
}

/// Compare a computed dimension against the analytic count.
pub fn dim_count(computed: usize, expected: usize, context: &str) -> Result<usize> {
    if computed != expected {
        return Err(Error::DimensionAnomaly {
            computed,
            expected,
            context: context.to_string(),
        });
    }
    Ok(computed)
}

/// Random gauge rephasing of a spectral problem; the spectrum must be
/// exactly invariant, which property tests verify to 1e-10.
pub fn rephased_problem(problem: &SpectralProblem, seed: u64) -> SpectralProblem {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sites = problem.op.n;
    let chi: Vec<f64> = (0..sites).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
    let links = problem.links.rephased(&chi);
    // Conjugate the assembled operator entrywise: A' = D A D^*.
    let mut trip = Vec::with_capacity(problem.op.nnz());
    for r in 0..problem.op.n {
        for idx in problem.op.indptr[r]..problem.op.indptr[r + 1] {
            let c = problem.op.indices[idx];
            let phase = Complex64::from_polar(1.0, chi[r] - chi[c]);
            trip.push((r, c, problem.op.data[idx] * phase));
        }
    }
    SpectralProblem {
        links,
        op: CsrHermitian::from_triplets(problem.op.n, trip),
        ..(*problem).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::eigen::{dense_low_eigen, lobpcg};

    #[test]
    fn plaquette_cocycle_is_exact() {
        let links = landau_links(16, 2, 3);
        assert!(links.plaquette_defect(0, 1, 3) < 1e-13);
        let links4 = landau_links(6, 4, 2);
        assert!(links4.plaquette_defect(0, 1, 2) < 1e-13);
        assert!(links4.plaquette_defect(2, 3, 2) < 1e-13);
        // No flux in mixed planes.
        assert!(links4.plaquette_defect(0, 2, 0) < 1e-13);
        assert!(links4.plaquette_defect(1, 3, 0) < 1e-13);
    }

    #[test]
    fn operator_is_hermitian_and_flux_zero_rejected() {
        let p = assemble_laplacian(20, 2, 2, 0.0).unwrap();
        assert!(p.op.hermiticity_defect() < 1e-12);
        assert!(matches!(
            assemble_laplacian(20, 2, 0, 0.0),
            Err(Error::InvalidInput(_))
        ));
        // 2 pi k / N^2 > 1/2: coarse grid cannot carry the flux.
        assert!(matches!(
            assemble_laplacian(4, 2, 3, 0.0),
            Err(Error::ResolutionError(_))
        ));
    }

    #[test]
    fn ground_cluster_on_t2_matches_landau_structure() {
        // k = 2 on a 32^2 grid: cluster of exactly 2 near 0, next near 8 pi.
        let p = assemble_laplacian(32, 2, 2, 0.0).unwrap();
        let (space, cluster) = low_cluster(&p, None, 42).unwrap();
        assert_eq!(space.dim(), 2);
        assert!(cluster.spread < 1e-9, "spread {}", cluster.spread);
        assert!(
            cluster.eigenvalues[0].abs() < 0.2,
            "cluster at {}",
            cluster.eigenvalues[0]
        );
        let expect_next = 4.0 * PI * 2.0;
        assert!(
            (cluster.next_eigenvalue - expect_next).abs() < 0.05 * expect_next,
            "next {} vs {}",
            cluster.next_eigenvalue,
            expect_next
        );
        assert!(space.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn lobpcg_matches_dense_on_a_small_magnetic_operator() {
        let p = assemble_laplacian(12, 2, 1, 0.0).unwrap();
        let dense = dense_low_eigen(&p.op, 3);
        let sparse = lobpcg(&p.op, 3, 4, 9, 1e-9, 500).unwrap();
        for i in 0..3 {
            assert!(
                (dense.values[i] - sparse.values[i]).abs() < 1e-7,
                "eig {i}: {} vs {}",
                dense.values[i],
                sparse.values[i]
            );
        }
    }

    #[test]
    fn gauge_rephasing_preserves_the_spectrum() {
        let p = assemble_laplacian(20, 2, 2, 0.0).unwrap();
        let q = rephased_problem(&p, 1234);
        assert!(q.op.hermiticity_defect() < 1e-12);
        let ep = lobpcg(&p.op, 3, 4, 5, 1e-9, 500).unwrap();
        let eq = lobpcg(&q.op, 3, 4, 5, 1e-9, 500).unwrap();
        for i in 0..3 {
            assert!((ep.values[i] - eq.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn bergman_density_matches_theta_reference() {
        // Translations by a single site are NOT magnetic symmetries (the
        // transverse Wilson loop shifts by exp(2 pi i k / N)), so B
        // oscillates at order exp(-ck); it must match the theta description
        // pointwise, with sup error decreasing under grid refinement.
        let mut sups = Vec::new();
        for n in [16usize, 24, 32] {
            let p = assemble_laplacian(n, 2, 2, 0.0).unwrap();
            let (space, _) = low_cluster(&p, None, 7).unwrap();
            let b = space.bergman_at_sites();
            let mut sup: f64 = 0.0;
            for (idx, &v) in b.iter().enumerate() {
                let (i, j) = (idx / n, idx % n);
                let exact = theta_bergman(2, i as f64 / n as f64, j as f64 / n as f64);
                sup = sup.max((v - exact).abs());
            }
            // Integral of B dmu is the dimension regardless of resolution.
            let total: f64 = b.iter().sum::<f64>() * space.site_measure();
            assert!((total - 2.0).abs() < 1e-9);
            sups.push(sup);
        }
        assert!(sups[2] < 0.02, "sup disagreement {} at N=32", sups[2]);
        // O(h^2) convergence: N 16 -> 32 should shrink the error ~4x.
        let rate = sups[0] / sups[2];
        assert!(
            (2.5..8.0).contains(&rate),
            "refinement 16->32 improved only {rate:.2}x ({:?})",
            sups
        );
    }
}
