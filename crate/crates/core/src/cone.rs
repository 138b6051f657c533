//! Solvency-cone algebra: proportional-cost matrices, the polar section
//! Lambda of the solvency cone, the induced partial order and liquidation
//! values.
//!
//! The cone is parameterized by the (1+dc) x (1+dc) matrix of cost rates
//! lambda[i][j] charged when transferring from account i to account j.
//! Account 0 is the numeraire/cash account, accounts 1..=dc are the costly
//! assets. The polar section is the polytope
//! `Lambda = { xi >= 0 : xi[j] <= xi[i] (1 + lambda[i][j]), xi[0] = 1 }`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Tolerance used to deduplicate enumerated vertices.
pub const VERTEX_DEDUP_TOL: f64 = 1e-10;
/// Tolerance at which every vertex must satisfy the H-representation.
pub const H_FEASIBILITY_TOL: f64 = 1e-12;
/// Hard cap on the number of costly assets for vertex enumeration.
pub const MAX_DC: usize = 8;

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("cost matrix must be ({n} x {n}) for dc = {dc}")]
    BadShape { n: usize, dc: usize },
    #[error("cost rate lambda[{i}][{j}] = {value} is negative")]
    NegativeRate { i: usize, j: usize, value: f64 },
    #[error("diagonal cost rate lambda[{i}][{i}] = {value} must be zero")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("free round trip {i} -> {j} -> {i}: the costly-asset model is degenerate")]
    FreeRoundTrip { i: usize, j: usize },
    #[error("efficiency (Hlambda) violated after normalization: lambda[{i}][{j}] + lambda[{j}][{i}] = 0")]
    EfficiencyViolated { i: usize, j: usize },
    #[error("cost matrix is not normalized; call normalize() first")]
    NotNormalized,
    #[error("dc = {dc} exceeds the vertex-enumeration cap of {MAX_DC}")]
    DimensionTooLarge { dc: usize },
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Proportional transaction-cost coefficients for 1 + dc accounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    dc: usize,
    /// Row-major (1+dc)^2 table of cost rates; diagonal is zero.
    lambda: Vec<f64>,
}

impl CostMatrix {
    pub fn new(dc: usize, rows: &[Vec<f64>]) -> Result<Self, ConeError> {
        let n = 1 + dc;
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(ConeError::BadShape { n, dc });
        }
        let mut lambda = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(ConeError::NegativeRate { i, j, value: v });
                }
                if i == j && v != 0.0 {
                    return Err(ConeError::NonzeroDiagonal { i, value: v });
                }
                lambda.push(v);
            }
        }
        Ok(Self { dc, lambda })
    }

    pub fn dc(&self) -> usize {
        self.dc
    }

    /// Number of accounts, 1 + dc.
    pub fn dim(&self) -> usize {
        1 + self.dc
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.lambda[i * self.dim() + j]
    }

    /// Checks the triangle condition (1+l[i][j]) <= (1+l[i][k])(1+l[k][j]).
    pub fn is_normalized(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let direct = 1.0 + self.rate(i, j);
                    let via = (1.0 + self.rate(i, k)) * (1.0 + self.rate(k, j));
                    if direct > via * (1.0 + 1e-12) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Min-product closure over transfer chains: replaces each (1+lambda)
    /// factor by the cheapest chain product. Returns the normalized matrix
    /// and whether any entry changed. Rejects matrices that admit a free
    /// round trip or violate (Hlambda) after closure.
    pub fn normalize(&self) -> Result<(CostMatrix, bool), ConeError> {
        let n = self.dim();
        let w0: Vec<f64> = (0..n * n).map(|idx| 1.0 + self.lambda[idx]).collect();
        let mut w = w0.clone();
        // Floyd-Warshall with multiplicative weights.
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = w[i * n + k] * w[k * n + j];
                    if via < w[i * n + j] {
                        w[i * n + j] = via;
                    }
                }
            }
        }
        for i in 0..n {
            if w[i * n + i] < 1.0 - 1e-12 {
                // A profitable cycle through i exists; find a witness j.
                let j = (0..n)
                    .find(|&j| j != i && w[i * n + j] * w[j * n + i] < 1.0 - 1e-12)
                    .unwrap_or((i + 1) % n);
                return Err(ConeError::FreeRoundTrip { i, j });
            }
        }
        let mut changed = false;
        let mut lambda = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                // Entries the closure did not improve keep their exact input
                // rate (avoids 1+lambda round-trip noise).
                lambda[idx] = if i == j {
                    0.0
                } else if w[idx] == w0[idx] {
                    self.lambda[idx]
                } else {
                    changed = true;
                    (w[idx] - 1.0).max(0.0)
                };
            }
        }
        let out = CostMatrix { dc: self.dc, lambda };
        for i in 0..n {
            for j in i + 1..n {
                if out.rate(i, j) + out.rate(j, i) <= 0.0 {
                    return Err(ConeError::EfficiencyViolated { i, j });
                }
            }
        }
        Ok((out, changed))
    }
}

/// One half-space of the H-representation: `xi[j] <= factor * xi[i]`
/// with `factor = 1 + lambda[i][j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfSpace {
    pub i: usize,
    pub j: usize,
    pub factor: f64,
}

/// H- and V-representations of the section `Lambda = { xi in K* : xi[0] = 1 }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarSection {
    dc: usize,
    constraints: Vec<HalfSpace>,
    /// Full (1+dc)-vectors with first component 1, sorted lexicographically.
    vertices: Vec<Vec<f64>>,
}

impl PolarSection {
    /// Builds the section from a normalized cost matrix. Exact subset
    /// enumeration for dc <= 3; incremental half-space cutting (a double
    /// description style sweep starting from the box given by the cash
    /// constraints) for 4 <= dc <= 8.
    pub fn build(costs: &CostMatrix) -> Result<Self, ConeError> {
        if costs.dc > MAX_DC {
            return Err(ConeError::DimensionTooLarge { dc: costs.dc });
        }
        if !costs.is_normalized() {
            return Err(ConeError::NotNormalized);
        }
        // (Hlambda) must hold for the interval structure to be nondegenerate.
        let n = costs.dim();
        for i in 0..n {
            for j in i + 1..n {
                if costs.rate(i, j) + costs.rate(j, i) <= 0.0 {
                    return Err(ConeError::EfficiencyViolated { i, j });
                }
            }
        }

        let mut constraints = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    constraints.push(HalfSpace {
                        i,
                        j,
                        factor: 1.0 + costs.rate(i, j),
                    });
                }
            }
        }
        // Reduced form over y = (xi[1], ..., xi[dc]): rows a . y <= b.
        let dc = costs.dc;
        let rows: Vec<(Vec<f64>, f64)> = constraints
            .iter()
            .map(|h| {
                // xi[j] - factor * xi[i] <= 0 with xi[0] = 1 substituted.
                let mut a = vec![0.0; dc];
                let mut b = 0.0;
                if h.j >= 1 {
                    a[h.j - 1] += 1.0;
                } else {
                    b -= 1.0;
                }
                if h.i >= 1 {
                    a[h.i - 1] -= h.factor;
                } else {
                    b += h.factor;
                }
                (a, b)
            })
            .collect();

        let mut verts_y = if dc <= 3 {
            enumerate_by_subsets(dc, &rows)
        } else {
            enumerate_incremental(dc, costs, &rows)
        };
        dedup_and_sort(&mut verts_y);

        let vertices: Vec<Vec<f64>> = verts_y
            .into_iter()
            .map(|y| {
                let mut v = Vec::with_capacity(1 + dc);
                v.push(1.0);
                v.extend(y);
                v
            })
            .collect();
        debug_assert!(!vertices.is_empty());
        Ok(Self {
            dc,
            constraints,
            vertices,
        })
    }

    pub fn dc(&self) -> usize {
        self.dc
    }

    pub fn dim(&self) -> usize {
        1 + self.dc
    }

    pub fn constraints(&self) -> &[HalfSpace] {
        &self.constraints
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// True iff the full vector xi (with xi[0] free) satisfies every
    /// half-space within `tol`.
    pub fn satisfies_h(&self, xi: &[f64], tol: f64) -> bool {
        xi.iter().all(|&v| v >= -tol)
            && self
                .constraints
                .iter()
                .all(|h| xi[h.j] <= h.factor * xi[h.i] + tol)
    }

    /// Cone partial order x >= y, i.e. x - y in K: checks
    /// `min over vertices xi of xi . (x - y) >= -tol`.
    pub fn cone_geq(&self, x: &[f64], y: &[f64], tol: f64) -> Result<bool, ConeError> {
        if x.len() != self.dim() {
            return Err(ConeError::DimensionMismatch {
                got: x.len(),
                expected: self.dim(),
            });
        }
        if y.len() != self.dim() {
            return Err(ConeError::DimensionMismatch {
                got: y.len(),
                expected: self.dim(),
            });
        }
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(self.liquidation_value(&diff)? >= -tol)
    }

    /// Scalarized solvency check: `min over vertices xi of xi . x`.
    /// `x` is in K iff the result is nonnegative.
    pub fn liquidation_value(&self, x: &[f64]) -> Result<f64, ConeError> {
        if x.len() != self.dim() {
            return Err(ConeError::DimensionMismatch {
                got: x.len(),
                expected: self.dim(),
            });
        }
        Ok(self
            .vertices
            .iter()
            .map(|v| dot(v, x))
            .fold(f64::INFINITY, f64::min))
    }

    /// Writes the vertex list as CSV (one vertex per row).
    pub fn vertices_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|i| format!("xi_{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for v in &self.vertices {
            let row: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact vertex enumeration: solve every dc-subset of tight constraints,
/// keep feasible solutions.
fn enumerate_by_subsets(dc: usize, rows: &[(Vec<f64>, f64)]) -> Vec<Vec<f64>> {
    let m = rows.len();
    let mut verts = Vec::new();
    let mut idx = vec![0usize; dc];
    fn rec(
        dc: usize,
        rows: &[(Vec<f64>, f64)],
        m: usize,
        start: usize,
        depth: usize,
        idx: &mut Vec<usize>,
        verts: &mut Vec<Vec<f64>>,
    ) {
        if depth == dc {
            let a: Vec<Vec<f64>> = idx.iter().map(|&k| rows[k].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&k| rows[k].1).collect();
            if let Some(y) = linalg::solve(&a, &b, 1e-12) {
                if is_feasible(&y, rows, 1e-9) {
                    verts.push(y);
                }
            }
            return;
        }
        for k in start..m {
            idx[depth] = k;
            rec(dc, rows, m, k + 1, depth + 1, idx, verts);
        }
    }
    rec(dc, rows, m, 0, 0, &mut idx, &mut verts);
    verts
}

fn is_feasible(y: &[f64], rows: &[(Vec<f64>, f64)], tol: f64) -> bool {
    rows.iter().all(|(a, b)| dot(a, y) <= b + tol) && y.iter().all(|&v| v > 0.0)
}

/// Incremental cutting: start from the box implied by the cash-leg
/// constraints 1/(1+l[j][0]) <= y_j <= 1+l[0][j], then clip with every
/// cross constraint. New vertices are generated on segments between kept
/// and cut vertices and filtered by a full-rank active-set test.
fn enumerate_incremental(
    dc: usize,
    costs: &CostMatrix,
    rows: &[(Vec<f64>, f64)],
) -> Vec<Vec<f64>> {
    let lo: Vec<f64> = (1..=dc).map(|j| 1.0 / (1.0 + costs.rate(j, 0))).collect();
    let hi: Vec<f64> = (1..=dc).map(|j| 1.0 + costs.rate(0, j)).collect();
    // Box corners.
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(1 << dc);
    for mask in 0..(1usize << dc) {
        let v: Vec<f64> = (0..dc)
            .map(|k| if mask & (1 << k) != 0 { hi[k] } else { lo[k] })
            .collect();
        verts.push(v);
    }
    // Processed constraints so far: the box bounds.
    let mut active_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for k in 0..dc {
        let mut a = vec![0.0; dc];
        a[k] = 1.0;
        active_rows.push((a.clone(), hi[k]));
        a[k] = -1.0;
        active_rows.push((a, -lo[k]));
    }
    for (a, b) in rows {
        // Skip pure box rows (already encoded).
        let nonzero: Vec<usize> = (0..dc).filter(|&k| a[k] != 0.0).collect();
        if nonzero.len() <= 1 {
            active_rows.push((a.clone(), *b));
            verts.retain(|v| dot(a, v) <= b + 1e-9);
            continue;
        }
        let vals: Vec<f64> = verts.iter().map(|v| dot(a, v) - b).collect();
        if vals.iter().all(|&v| v <= 1e-12) {
            active_rows.push((a.clone(), *b));
            continue;
        }
        let mut next: Vec<Vec<f64>> = Vec::new();
        for (v, &val) in verts.iter().zip(&vals) {
            if val <= 1e-12 {
                next.push(v.clone());
            }
        }
        // Candidate new vertices on kept-cut segments.
        for (vk, &valk) in verts.iter().zip(&vals) {
            if valk > 1e-12 {
                continue;
            }
            for (vc, &valc) in verts.iter().zip(&vals) {
                if valc <= 1e-12 {
                    continue;
                }
                let t = -valk / (valc - valk);
                let p: Vec<f64> = vk
                    .iter()
                    .zip(vc)
                    .map(|(x, y)| x + t * (y - x))
                    .collect();
                if !is_feasible_rows(&p, &active_rows, 1e-9) {
                    continue;
                }
                // Active set must have rank dc for p to be a vertex.
                let mut act: Vec<Vec<f64>> = vec![a.clone()];
                for (ar, br) in &active_rows {
                    if (dot(ar, &p) - br).abs() <= 1e-8 {
                        act.push(ar.clone());
                    }
                }
                if linalg::rank(&act, 1e-9) == dc {
                    next.push(p);
                }
            }
        }
        active_rows.push((a.clone(), *b));
        dedup_and_sort(&mut next);
        verts = next;
    }
    verts.retain(|v| is_feasible(v, rows, 1e-9));
    verts
}

fn is_feasible_rows(y: &[f64], rows: &[(Vec<f64>, f64)], tol: f64) -> bool {
    rows.iter().all(|(a, b)| dot(a, y) <= b + tol)
}

fn dedup_and_sort(verts: &mut Vec<Vec<f64>>) {
    verts.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    });
    verts.dedup_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= VERTEX_DEDUP_TOL)
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(dc: usize, rows: &[&[f64]]) -> CostMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        CostMatrix::new(dc, &rows).unwrap()
    }

    fn section_1d(l01: f64, l10: f64) -> PolarSection {
        let c = mat(1, &[&[0.0, l01], &[l10, 0.0]]);
        PolarSection::build(&c).unwrap()
    }

    #[test]
    fn normalize_identity_on_triangle_satisfying_matrix() {
        let c = mat(1, &[&[0.0, 0.1], &[0.05, 0.0]]);
        let (n, changed) = c.normalize().unwrap();
        assert!(!changed);
        assert_eq!(n, c);
    }

    #[test]
    fn normalize_shortcuts_expensive_leg() {
        // dc=2: direct 0->2 rate 2.0, but 0->1->2 costs 1.5*1.5 - 1 = 1.25.
        let c = mat(
            2,
            &[
                &[0.0, 0.5, 2.0],
                &[0.5, 0.0, 0.5],
                &[0.5, 0.5, 0.0],
            ],
        );
        let (n, changed) = c.normalize().unwrap();
        assert!(changed);
        assert!((n.rate(0, 2) - 1.25).abs() < 1e-12);
        assert!(n.is_normalized());
        // Idempotent.
        let (n2, changed2) = n.normalize().unwrap();
        assert!(!changed2);
        assert_eq!(n2, n);
    }

    #[test]
    fn normalize_keeps_one_sided_costs() {
        let c = mat(1, &[&[0.0, 0.1], &[0.0, 0.0]]);
        let (n, changed) = c.normalize().unwrap();
        assert!(!changed);
        assert!((n.rate(0, 1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn free_round_trip_rejected() {
        // 0 -> 1 at no cost and 1 -> 0 at negative effective cost cannot be
        // encoded directly (rates are nonnegative), but a cycle with product
        // < 1 can arise through chains only if some rate were negative; the
        // degenerate frictionless pair is caught by (Hlambda) instead.
        let c = mat(1, &[&[0.0, 0.0], &[0.0, 0.0]]);
        match c.normalize() {
            Err(ConeError::EfficiencyViolated { .. }) => {}
            other => panic!("expected efficiency violation, got {other:?}"),
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let rows = vec![vec![0.0, -0.1], vec![0.0, 0.0]];
        assert!(matches!(
            CostMatrix::new(1, &rows),
            Err(ConeError::NegativeRate { .. })
        ));
    }

    #[test]
    fn dc1_vertices_are_interval_endpoints() {
        let s = section_1d(0.1, 0.05);
        let vs = s.vertices();
        assert_eq!(vs.len(), 2);
        assert!((vs[0][1] - 1.0 / 1.05).abs() < 1e-12);
        assert!((vs[1][1] - 1.1).abs() < 1e-12);
        for v in vs {
            assert!((v[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn frictionless_pair_rejected() {
        let c = mat(1, &[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(PolarSection::build(&c).is_err());
    }

    #[test]
    fn dc2_vertices_match_subset_bruteforce() {
        let c = mat(
            2,
            &[
                &[0.0, 0.1, 0.1],
                &[0.1, 0.0, 0.1],
                &[0.1, 0.1, 0.0],
            ],
        );
        let s = PolarSection::build(&c).unwrap();
        // Every vertex satisfies the H-representation tightly enough and the
        // all-ones vector lies inside.
        for v in s.vertices() {
            assert!(s.satisfies_h(v, H_FEASIBILITY_TOL));
        }
        assert!(s.satisfies_h(&[1.0, 1.0, 1.0], 0.0));
        assert!(s.vertices().len() >= 3);
    }

    #[test]
    fn dc4_incremental_matches_h_representation() {
        let mut rows = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    rows[i][j] = 0.05 + 0.01 * ((i * 5 + j) as f64);
                }
            }
        }
        let c = CostMatrix::new(4, &rows).unwrap();
        let (c, _) = c.normalize().unwrap();
        let s = PolarSection::build(&c).unwrap();
        assert!(!s.vertices().is_empty());
        for v in s.vertices() {
            assert!(s.satisfies_h(v, 1e-8), "vertex {v:?} infeasible");
        }
    }

    #[test]
    fn dc_cap_enforced() {
        let n = 10;
        let mut rows = vec![vec![0.1; n]; n];
        for (i, r) in rows.iter_mut().enumerate() {
            r[i] = 0.0;
        }
        let c = CostMatrix::new(9, &rows).unwrap();
        assert!(matches!(
            PolarSection::build(&c),
            Err(ConeError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn cone_geq_examples() {
        let s = section_1d(0.1, 0.05);
        assert!(s.cone_geq(&[1.0, 2.0], &[1.0, 2.0], 0.0).unwrap());
        assert!(s.cone_geq(&[1.0, 0.0], &[0.0, 0.9], 0.0).unwrap());
        assert!(!s.cone_geq(&[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap());
    }

    #[test]
    fn liquidation_value_examples() {
        let s = section_1d(0.1, 0.05);
        assert_eq!(s.liquidation_value(&[0.0, 0.0]).unwrap(), 0.0);
        let v = s.liquidation_value(&[-1.0, 1.2]).unwrap();
        assert!((v - (1.2 / 1.05 - 1.0)).abs() < 1e-12);
        assert!(s.liquidation_value(&[0.3, 0.7]).unwrap() >= 0.0);
    }

    #[test]
    fn cone_geq_matches_liquidation_sign() {
        let mut rng = crate::testutil::rng(42);
        for _ in 0..200 {
            let dc = 1 + (crate::testutil::uniform(&mut rng) * 3.0) as usize % 3;
            let s = crate::testutil::random_section(&mut rng, dc);
            let d = s.dim();
            let x: Vec<f64> = (0..d).map(|_| crate::testutil::uniform(&mut rng) * 4.0 - 2.0).collect();
            let y: Vec<f64> = (0..d).map(|_| crate::testutil::uniform(&mut rng) * 4.0 - 2.0).collect();
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let geq = s.cone_geq(&x, &y, 0.0).unwrap();
            let lv = s.liquidation_value(&diff).unwrap();
            assert_eq!(geq, lv >= 0.0);
            // Scaling invariance.
            let alpha = 0.25 + crate::testutil::uniform(&mut rng) * 4.0;
            let xs: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * alpha).collect();
            assert_eq!(s.cone_geq(&xs, &ys, 1e-12).unwrap(), s.cone_geq(&x, &y, 1e-12 / alpha).unwrap());
        }
    }

    #[test]
    fn cone_order_transitive() {
        let mut rng = crate::testutil::rng(7);
        let mut checked = 0;
        while checked < 50 {
            let s = crate::testutil::random_section(&mut rng, 2);
            let d = s.dim();
            let base: Vec<f64> = (0..d).map(|_| crate::testutil::uniform(&mut rng) * 2.0 - 1.0).collect();
            // x = y + k1, y = z + k2 with k1, k2 in K by construction
            // (nonnegative vectors are in K).
            let k1: Vec<f64> = (0..d).map(|_| crate::testutil::uniform(&mut rng)).collect();
            let k2: Vec<f64> = (0..d).map(|_| crate::testutil::uniform(&mut rng)).collect();
            let z = base.clone();
            let y: Vec<f64> = z.iter().zip(&k2).map(|(a, b)| a + b).collect();
            let x: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + b).collect();
            if s.cone_geq(&x, &y, 0.0).unwrap() && s.cone_geq(&y, &z, 0.0).unwrap() {
                assert!(s.cone_geq(&x, &z, 1e-12).unwrap());
                checked += 1;
            }
        }
    }
}
