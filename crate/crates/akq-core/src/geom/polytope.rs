//! Delzant polytopes with exact rational vertex and moment data.
//!
//! A compact toric manifold in (real) dimension 2n is encoded by its moment
//! polytope: facets l_i(x) = <n_i, x> + c_i >= 0 with primitive integer
//! normals n_i and rational offsets c_i, every vertex simple and unimodular.
//! Dimensions n = 1 and n = 2 are supported.
//!
//! Everything countable or polynomial here stays in exact arithmetic:
//! lattice point enumeration, volumes, moments of linear and quadratic
//! functions, boundary lattice measure. These are the oracles the floating
//! pipeline is tested against.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{rat_int, rat_to_f64};
use crate::quad::AffineSlab;

/// Exact rational point, dim <= 2 (second coordinate zero in dim 1).
pub type RatPoint = [BigRational; 2];

#[derive(Debug, Clone)]
pub struct DelzantPolytope {
    pub dim: usize,
    pub normals: Vec<[i64; 2]>,
    pub offsets: Vec<BigRational>,
    /// Vertices in counterclockwise order (dim 2) or [a, b] endpoints (dim 1).
    vertices: Vec<RatPoint>,
}

/// Serialization image: offsets as "p/q" strings so no exactness is lost.
#[derive(Serialize, Deserialize)]
struct PolytopeData {
    dim: usize,
    normals: Vec<[i64; 2]>,
    offsets: Vec<String>,
}

impl Serialize for DelzantPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeData {
            dim: self.dim,
            normals: self.normals.clone(),
            offsets: self.offsets.iter().map(|c| c.to_string()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DelzantPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = PolytopeData::deserialize(d)?;
        let offsets: std::result::Result<Vec<BigRational>, _> = data
            .offsets
            .iter()
            .map(|s| s.parse::<BigRational>().map_err(serde::de::Error::custom))
            .collect();
        DelzantPolytope::new(data.dim, data.normals, offsets?).map_err(serde::de::Error::custom)
    }
}

fn gcd64(a: i64, b: i64) -> i64 {
    a.unsigned_abs().gcd(&b.unsigned_abs()) as i64
}

impl DelzantPolytope {
    /// Validate the half-space description and enumerate vertices.
    pub fn new(dim: usize, normals: Vec<[i64; 2]>, offsets: Vec<BigRational>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::DelzantViolation(format!(
                "dimension {dim} not supported (expected 1 or 2)"
            )));
        }
        if normals.len() != offsets.len() {
            return Err(Error::DelzantViolation(format!(
                "{} normals vs {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        for n in &normals {
            let tail = if dim == 1 { n[1] } else { 0 };
            if tail != 0 {
                return Err(Error::DelzantViolation(
                    "1-dimensional facet normal has a second component".into(),
                ));
            }
            let g = gcd64(n[0], n[1]);
            if g == 0 {
                return Err(Error::DelzantViolation("zero facet normal".into()));
            }
            if g != 1 {
                return Err(Error::DelzantViolation(format!(
                    "facet normal {n:?} is not primitive (gcd {g})"
                )));
            }
        }
        let mut poly = DelzantPolytope {
            dim,
            normals,
            offsets,
            vertices: Vec::new(),
        };
        poly.vertices = poly.enumerate_vertices()?;
        Ok(poly)
    }

    fn ell_exact(&self, x: &RatPoint, i: usize) -> BigRational {
        let n = self.normals[i];
        &x[0] * rat_int(n[0]) + &x[1] * rat_int(n[1]) + &self.offsets[i]
    }

    fn enumerate_vertices(&self) -> Result<Vec<RatPoint>> {
        if self.dim == 1 {
            // Exactly one facet pointing each way; interval [a, b].
            let mut lo = None;
            let mut hi = None;
            for (n, c) in self.normals.iter().zip(&self.offsets) {
                match n[0] {
                    1 => lo = Some(-c.clone()),
                    -1 => hi = Some(c.clone()),
                    _ => {
                        return Err(Error::DelzantViolation(format!(
                            "interval facet normal {} must be +1 or -1",
                            n[0]
                        )))
                    }
                }
            }
            let (a, b) = match (lo, hi) {
                (Some(a), Some(b)) if a < b => (a, b),
                (Some(a), Some(b)) => {
                    return Err(Error::DelzantViolation(format!(
                        "empty interval [{a}, {b}]"
                    )))
                }
                _ => {
                    return Err(Error::DelzantViolation(
                        "interval needs one facet on each side".into(),
                    ))
                }
            };
            return Ok(vec![
                [a, BigRational::zero()],
                [b, BigRational::zero()],
            ]);
        }
        let f = self.normals.len();
        let mut verts: Vec<(usize, usize, RatPoint)> = Vec::new();
        for i in 0..f {
            for j in (i + 1)..f {
                let (ni, nj) = (self.normals[i], self.normals[j]);
                let det = ni[0] * nj[1] - ni[1] * nj[0];
                if det == 0 {
                    continue;
                }
                // Solve <n_i,v> = -c_i, <n_j,v> = -c_j by Cramer's rule.
                let d = rat_int(det);
                let vx = (-&self.offsets[i] * rat_int(nj[1]) + &self.offsets[j] * rat_int(ni[1])) / &d;
                let vy = (-&self.offsets[j] * rat_int(ni[0]) + &self.offsets[i] * rat_int(nj[0])) / &d;
                let v = [vx, vy];
                let feasible = (0..f).all(|m| {
                    m == i || m == j || !self.ell_exact(&v, m).is_negative()
                });
                if !feasible {
                    continue;
                }
                // A vertex must be simple: exactly its two defining facets active.
                let active: Vec<usize> =
                    (0..f).filter(|&m| self.ell_exact(&v, m).is_zero()).collect();
                if active.len() != 2 {
                    return Err(Error::DelzantViolation(format!(
                        "vertex at ({}, {}) lies on {} facets (must be simple)",
                        v[0],
                        v[1],
                        active.len()
                    )));
                }
                if det.abs() != 1 {
                    return Err(Error::DelzantViolation(format!(
                        "corner of facets {i} and {j} has |det| = {} (must be unimodular)",
                        det.abs()
                    )));
                }
                if !verts.iter().any(|(_, _, u)| u == &v) {
                    verts.push((i, j, v));
                }
            }
        }
        if verts.len() < 3 {
            return Err(Error::DelzantViolation(format!(
                "only {} vertices found; polytope unbounded or empty",
                verts.len()
            )));
        }
        // Every facet must support exactly one edge, i.e. two vertices.
        for i in 0..f {
            let count = verts
                .iter()
                .filter(|(_, _, v)| self.ell_exact(v, i).is_zero())
                .count();
            if count != 2 {
                return Err(Error::DelzantViolation(format!(
                    "facet {i} carries {count} vertices (must be 2); redundant or unbounded"
                )));
            }
        }
        // Order counterclockwise around the centroid.
        let fcount = rat_int(verts.len() as i64);
        let cx = verts.iter().map(|(_, _, v)| v[0].clone()).sum::<BigRational>() / &fcount;
        let cy = verts.iter().map(|(_, _, v)| v[1].clone()).sum::<BigRational>() / &fcount;
        let mut pts: Vec<RatPoint> = verts.into_iter().map(|(_, _, v)| v).collect();
        pts.sort_by(|a, b| {
            let ang = |p: &RatPoint| {
                (rat_to_f64(&(&p[1] - &cy))).atan2(rat_to_f64(&(&p[0] - &cx)))
            };
            ang(a).partial_cmp(&ang(b)).unwrap()
        });
        Ok(pts)
    }

    pub fn vertices(&self) -> &[RatPoint] {
        &self.vertices
    }

    pub fn num_facets(&self) -> usize {
        self.normals.len()
    }

    /// Facet affine functions at a floating point, l_i(x) = <n_i,x> + c_i.
    pub fn facet_values(&self, x: [f64; 2]) -> Vec<f64> {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, c)| n[0] as f64 * x[0] + n[1] as f64 * x[1] + rat_to_f64(c))
            .collect()
    }

    /// Distance-like interiority measure: min_i l_i(x).
    pub fn min_facet_value(&self, x: [f64; 2]) -> f64 {
        self.facet_values(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: [f64; 2], slack: f64) -> bool {
        self.min_facet_value(x) >= -slack
    }

    /// Lattice points of the k-th dilate kP, lexicographically ordered.
    /// Exact membership test: <n_i, v> + k c_i >= 0 in rational arithmetic.
    pub fn lattice_points(&self, k: u32) -> Vec<[i64; 2]> {
        let kq = rat_int(k as i64);
        let scaled: Vec<RatPoint> = self
            .vertices
            .iter()
            .map(|v| [&v[0] * &kq, &v[1] * &kq])
            .collect();
        let floor_min = |axis: usize| {
            scaled
                .iter()
                .map(|v| v[axis].floor().to_integer())
                .min()
                .unwrap()
        };
        let ceil_max = |axis: usize| {
            scaled
                .iter()
                .map(|v| v[axis].ceil().to_integer())
                .max()
                .unwrap()
        };
        let (x0, x1) = (floor_min(0), ceil_max(0));
        let (y0, y1) = if self.dim == 2 {
            (floor_min(1), ceil_max(1))
        } else {
            (BigInt::zero(), BigInt::zero())
        };
        let to_i64 = |b: &BigInt| b.to_i64().expect("lattice bound fits in i64");
        let mut pts = Vec::new();
        for a in to_i64(&x0)..=to_i64(&x1) {
            for b in to_i64(&y0)..=to_i64(&y1) {
                let inside = self.normals.iter().zip(&self.offsets).all(|(n, c)| {
                    let lhs = rat_int(n[0] * a + n[1] * b) + c * &kq;
                    !lhs.is_negative()
                });
                if inside {
                    pts.push([a, b]);
                }
            }
        }
        pts
    }

    /// Exact integral of x^a y^b over P, by fan triangulation from the first
    /// vertex and expansion on the standard simplex.
    pub fn monomial_integral(&self, a: u32, b: u32) -> BigRational {
        if self.dim == 1 {
            // int_{v0}^{v1} x^a dx.
            let (p, q) = (&self.vertices[0][0], &self.vertices[1][0]);
            let e = a + 1;
            return (pow_rat(q, e) - pow_rat(p, e)) / rat_int(e as i64);
        }
        let mut total = BigRational::zero();
        let v0 = &self.vertices[0];
        for w in self.vertices.windows(2).skip(1) {
            total += triangle_monomial_integral(v0, &w[0], &w[1], a, b);
        }
        total
    }

    /// Exact Euclidean/lattice volume of P (length in dim 1, area in dim 2).
    pub fn volume(&self) -> BigRational {
        self.monomial_integral(0, 0)
    }

    /// Exact integral of an affine function <d, x> + e over P.
    pub fn linear_integral(&self, d: [i64; 2], e: &BigRational) -> BigRational {
        rat_int(d[0]) * self.monomial_integral(1, 0)
            + rat_int(d[1]) * self.monomial_integral(0, 1)
            + e * self.volume()
    }

    /// Average of <d, x> over P, exact.
    pub fn mean_linear(&self, d: [i64; 2]) -> BigRational {
        self.linear_integral(d, &BigRational::zero()) / self.volume()
    }

    /// Exact integral of (<d,x> - mean)^2 over P.
    pub fn centered_quadratic_integral(&self, d: [i64; 2]) -> BigRational {
        let mean = self.mean_linear(d);
        let dx = rat_int(d[0]);
        let dy = rat_int(d[1]);
        // (<d,x> - m)^2 = d0^2 x^2 + 2 d0 d1 xy + d1^2 y^2 - 2m<d,x> + m^2.
        &dx * &dx * self.monomial_integral(2, 0)
            + rat_int(2) * &dx * &dy * self.monomial_integral(1, 1)
            + &dy * &dy * self.monomial_integral(0, 2)
            - rat_int(2) * &mean * self.linear_integral(d, &BigRational::zero())
            + &mean * &mean * self.volume()
    }

    /// Edges as (start, end, primitive integer tangent, lattice length).
    /// The boundary lattice measure assigns length 1 to a primitive segment.
    pub fn lattice_edges(&self) -> Vec<(RatPoint, RatPoint, [i64; 2], BigRational)> {
        if self.dim == 1 {
            // The "boundary" of an interval: two points of measure 1 each.
            return vec![
                (
                    self.vertices[0].clone(),
                    self.vertices[0].clone(),
                    [0, 0],
                    BigRational::one(),
                ),
                (
                    self.vertices[1].clone(),
                    self.vertices[1].clone(),
                    [0, 0],
                    BigRational::one(),
                ),
            ];
        }
        let m = self.vertices.len();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let p = self.vertices[i].clone();
            let q = self.vertices[(i + 1) % m].clone();
            let diff = [&q[0] - &p[0], &q[1] - &p[1]];
            // Clear denominators, then divide by the gcd to get the
            // primitive integer tangent d; q - p = s d fixes the length s.
            let lcm = diff[0].denom().lcm(diff[1].denom());
            let ix = (diff[0].numer() * (&lcm / diff[0].denom())).clone();
            let iy = (diff[1].numer() * (&lcm / diff[1].denom())).clone();
            let g = ix.gcd(&iy);
            let d = [
                (&ix / &g).to_i64().expect("primitive tangent fits in i64"),
                (&iy / &g).to_i64().expect("primitive tangent fits in i64"),
            ];
            let s = if d[0] != 0 {
                &diff[0] / rat_int(d[0])
            } else {
                &diff[1] / rat_int(d[1])
            };
            out.push((p, q, d, s));
        }
        out
    }

    /// Lattice perimeter: total boundary measure (vertex count 2 in dim 1).
    pub fn lattice_perimeter(&self) -> BigRational {
        self.lattice_edges().into_iter().map(|(_, _, _, s)| s).sum()
    }

    /// Exact integral of <d, x> + e over the boundary with respect to the
    /// lattice measure. Affine integrands make the trapezoid rule exact.
    pub fn boundary_linear_integral(&self, d: [i64; 2], e: &BigRational) -> BigRational {
        let h = |p: &RatPoint| rat_int(d[0]) * &p[0] + rat_int(d[1]) * &p[1] + e;
        self.lattice_edges()
            .into_iter()
            .map(|(p, q, _, s)| {
                if self.dim == 1 {
                    // Point masses: s = 1 at each endpoint, p == q.
                    h(&p)
                } else {
                    s * (h(&p) + h(&q)) / rat_int(2)
                }
            })
            .sum()
    }

    /// Horizontal slab decomposition for product quadrature (dim 2 only).
    pub fn slabs(&self) -> Vec<AffineSlab> {
        assert_eq!(self.dim, 2, "slab decomposition needs a polygon");
        let m = self.vertices.len();
        let mut ys: Vec<f64> = self.vertices.iter().map(|v| rat_to_f64(&v[1])).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let edges: Vec<([f64; 2], [f64; 2])> = (0..m)
            .map(|i| {
                let p = &self.vertices[i];
                let q = &self.vertices[(i + 1) % m];
                (
                    [rat_to_f64(&p[0]), rat_to_f64(&p[1])],
                    [rat_to_f64(&q[0]), rat_to_f64(&q[1])],
                )
            })
            .collect();
        let mut out = Vec::new();
        for band in ys.windows(2) {
            let (y0, y1) = (band[0], band[1]);
            if y1 - y0 < 1e-14 {
                continue;
            }
            let ym = 0.5 * (y0 + y1);
            // Each band is cut by exactly two non-horizontal edges.
            let mut bounds: Vec<[f64; 2]> = Vec::new();
            for &(p, q) in &edges {
                let (ya, yb) = (p[1].min(q[1]), p[1].max(q[1]));
                if yb - ya < 1e-14 || ym < ya || ym > yb {
                    continue;
                }
                let slope = (q[0] - p[0]) / (q[1] - p[1]);
                bounds.push([p[0] - slope * p[1], slope]);
            }
            assert_eq!(bounds.len(), 2, "convex band must have two side edges");
            let at = |b: &[f64; 2]| b[0] + b[1] * ym;
            if at(&bounds[0]) > at(&bounds[1]) {
                bounds.swap(0, 1);
            }
            out.push(AffineSlab {
                y0,
                y1,
                lo: bounds[0],
                hi: bounds[1],
            });
        }
        out
    }

    /// Uniform interior grid: bounding-box lattice with spacing picked so the
    /// longest axis gets `per_axis` points, filtered to min_i l_i >= delta.
    pub fn interior_grid(&self, delta: f64, per_axis: usize) -> Vec<[f64; 2]> {
        let vf: Vec<[f64; 2]> = self
            .vertices
            .iter()
            .map(|v| [rat_to_f64(&v[0]), rat_to_f64(&v[1])])
            .collect();
        let min = |axis: usize| vf.iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
        let max = |axis: usize| vf.iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
        if self.dim == 1 {
            let (a, b) = (min(0) + delta, max(0) - delta);
            return (0..per_axis)
                .map(|i| [a + (b - a) * i as f64 / (per_axis as f64 - 1.0), 0.0])
                .collect();
        }
        let mut pts = Vec::new();
        let n = per_axis as f64 - 1.0;
        for i in 0..per_axis {
            for j in 0..per_axis {
                let x = [
                    min(0) + (max(0) - min(0)) * i as f64 / n,
                    min(1) + (max(1) - min(1)) * j as f64 / n,
                ];
                if self.min_facet_value(x) >= delta {
                    pts.push(x);
                }
            }
        }
        pts
    }
}

fn pow_rat(x: &BigRational, e: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= x;
    }
    acc
}

/// Exact integral of x^a y^b over the triangle (v0, v1, v2): substitute the
/// affine simplex chart, expand, and use
/// int_simplex u^p w^q du dw = p! q! / (p + q + 2)!.
fn triangle_monomial_integral(
    v0: &RatPoint,
    v1: &RatPoint,
    v2: &RatPoint,
    a: u32,
    b: u32,
) -> BigRational {
    let e = [&v1[0] - &v0[0], &v1[1] - &v0[1]];
    let f = [&v2[0] - &v0[0], &v2[1] - &v0[1]];
    let jac = (&e[0] * &f[1] - &e[1] * &f[0]).abs();
    if jac.is_zero() {
        return BigRational::zero();
    }
    // x(u,w) and y(u,w) as sparse polynomials in (u, w).
    let x_poly = affine_poly(&v0[0], &e[0], &f[0]);
    let y_poly = affine_poly(&v0[1], &e[1], &f[1]);
    let mut prod: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
    prod.insert((0, 0), BigRational::one());
    for _ in 0..a {
        prod = poly_mul(&prod, &x_poly);
    }
    for _ in 0..b {
        prod = poly_mul(&prod, &y_poly);
    }
    let mut total = BigRational::zero();
    for ((p, q), c) in prod {
        total += c * simplex_moment(p, q);
    }
    total * jac
}

fn affine_poly(
    c: &BigRational,
    cu: &BigRational,
    cw: &BigRational,
) -> BTreeMap<(u32, u32), BigRational> {
    let mut m = BTreeMap::new();
    if !c.is_zero() {
        m.insert((0, 0), c.clone());
    }
    if !cu.is_zero() {
        m.insert((1, 0), cu.clone());
    }
    if !cw.is_zero() {
        m.insert((0, 1), cw.clone());
    }
    m
}

fn poly_mul(
    a: &BTreeMap<(u32, u32), BigRational>,
    b: &BTreeMap<(u32, u32), BigRational>,
) -> BTreeMap<(u32, u32), BigRational> {
    let mut out: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
    for ((pa, qa), ca) in a {
        for ((pb, qb), cb) in b {
            let key = (pa + pb, qa + qb);
            let term = ca * cb;
            out.entry(key)
                .and_modify(|v| *v += &term)
                .or_insert(term);
        }
    }
    out
}

fn simplex_moment(p: u32, q: u32) -> BigRational {
    let fact = |n: u32| -> BigInt {
        (1..=n as u64).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
    };
    BigRational::new(fact(p) * fact(q), fact(p + q + 2))
}

/// Moment polytope of CP^1 with unit-area normalization: [0, 1].
pub fn projective_line() -> DelzantPolytope {
    DelzantPolytope::new(1, vec![[1, 0], [-1, 0]], vec![rat_int(0), rat_int(1)]).unwrap()
}

/// CP^1 with doubled symplectic form: [0, 2].
pub fn projective_line_doubled() -> DelzantPolytope {
    DelzantPolytope::new(1, vec![[1, 0], [-1, 0]], vec![rat_int(0), rat_int(2)]).unwrap()
}

/// CP^1 x CP^1: the unit square.
pub fn product_of_lines() -> DelzantPolytope {
    DelzantPolytope::new(
        2,
        vec![[1, 0], [-1, 0], [0, 1], [0, -1]],
        vec![rat_int(0), rat_int(1), rat_int(0), rat_int(1)],
    )
    .unwrap()
}

/// CP^2: the standard unit triangle.
pub fn projective_plane() -> DelzantPolytope {
    DelzantPolytope::new(
        2,
        vec![[1, 0], [0, 1], [-1, -1]],
        vec![rat_int(0), rat_int(0), rat_int(1)],
    )
    .unwrap()
}

/// First Hirzebruch surface: conv{(0,0), (2,0), (1,1), (0,1)}.
pub fn hirzebruch_surface() -> DelzantPolytope {
    DelzantPolytope::new(
        2,
        vec![[1, 0], [0, 1], [0, -1], [-1, -1]],
        vec![rat_int(0), rat_int(0), rat_int(1), rat_int(2)],
    )
    .unwrap()
}
