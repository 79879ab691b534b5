use nalgebra::{DMatrix, DVector};

use super::{big_m_values, flow_matrix, Dims, Disturbance, MicrogridSpec, ModelError};

/// Column layout of the stacked vector `[v; q; w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub dims: Dims,
}

impl VarLayout {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }
    pub fn nv(&self) -> usize {
        2 * self.dims.t + self.dims.s + self.dims.r
    }
    pub fn nq(&self) -> usize {
        self.dims.t + self.dims.s + 2 * self.dims.r + 1
    }
    pub fn nw(&self) -> usize {
        self.dims.r + self.dims.d
    }
    pub fn ncols(&self) -> usize {
        self.nv() + self.nq() + self.nw()
    }

    pub fn u_t(&self, i: usize) -> usize {
        i
    }
    pub fn u_s(&self, i: usize) -> usize {
        self.dims.t + i
    }
    pub fn u_r(&self, i: usize) -> usize {
        self.dims.t + self.dims.s + i
    }
    pub fn delta_t(&self, i: usize) -> usize {
        self.dims.t + self.dims.s + self.dims.r + i
    }

    /// Offsets below are relative to the start of `q`.
    pub fn q_p_t(&self, i: usize) -> usize {
        i
    }
    pub fn q_p_s(&self, i: usize) -> usize {
        self.dims.t + i
    }
    pub fn q_p_r(&self, i: usize) -> usize {
        self.dims.t + self.dims.s + i
    }
    pub fn q_delta_r(&self, i: usize) -> usize {
        self.dims.t + self.dims.s + self.dims.r + i
    }
    pub fn q_rho(&self) -> usize {
        self.nq() - 1
    }

    pub fn p_t(&self, i: usize) -> usize {
        self.nv() + self.q_p_t(i)
    }
    pub fn p_s(&self, i: usize) -> usize {
        self.nv() + self.q_p_s(i)
    }
    pub fn p_r(&self, i: usize) -> usize {
        self.nv() + self.q_p_r(i)
    }
    pub fn delta_r(&self, i: usize) -> usize {
        self.nv() + self.q_delta_r(i)
    }
    pub fn rho(&self) -> usize {
        self.nv() + self.q_rho()
    }
    pub fn w_r(&self, i: usize) -> usize {
        self.nv() + self.nq() + i
    }
    pub fn w_d(&self, i: usize) -> usize {
        self.nv() + self.nq() + self.dims.r + i
    }
}

/// Origin of a constraint row, used for diagnostics and violation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    RenewableBound(usize),
    RenewableMin(usize),
    ConventionalBound(usize),
    StorageBound(usize),
    ConventionalSharing(usize),
    LineLimit(usize),
    StorageSharing(usize),
    PowerBalance,
}

/// Matrices of the control-oriented model
///
/// ```text
/// x⁺ = x + B q
/// H1 x ≤ h1
/// H2 [v; q; w] ≤ h2
/// G  [v; q; w] = g
/// ```
///
/// assembled for one fixed disturbance, since the renewable big-M rows carry
/// `w_r` as a coefficient of `δ_r`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub layout: VarLayout,
    pub b: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h1_rhs: DVector<f64>,
    pub h2: DMatrix<f64>,
    pub h2_rhs: DVector<f64>,
    pub h2_kinds: Vec<RowKind>,
    pub g: DMatrix<f64>,
    pub g_rhs: DVector<f64>,
    pub g_kinds: Vec<RowKind>,
}

struct RowBuilder {
    ncols: usize,
    rows: Vec<(Vec<(usize, f64)>, f64, RowKind)>,
}

impl RowBuilder {
    fn push(&mut self, kind: RowKind, coeffs: &[(usize, f64)], rhs: f64) {
        self.rows.push((coeffs.to_vec(), rhs, kind));
    }

    fn finish(self) -> (DMatrix<f64>, DVector<f64>, Vec<RowKind>) {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        let mut rhs = DVector::zeros(self.rows.len());
        let mut kinds = Vec::with_capacity(self.rows.len());
        for (r, (coeffs, b, kind)) in self.rows.into_iter().enumerate() {
            for (c, v) in coeffs {
                m[(r, c)] += v;
            }
            rhs[r] = b;
            kinds.push(kind);
        }
        (m, rhs, kinds)
    }
}

pub fn assemble_constraints(
    spec: &MicrogridSpec,
    w: &Disturbance,
) -> Result<ConstraintSystem, ModelError> {
    spec.validate()?;
    let dims = spec.dims();
    w.check(dims)?;
    let l = VarLayout::new(dims);
    let bm = big_m_values(spec);

    let mut b = DMatrix::zeros(dims.s, l.nq());
    for i in 0..dims.s {
        b[(i, l.q_p_s(i))] = -spec.ts;
    }
    let mut h1 = DMatrix::zeros(2 * dims.s, dims.s);
    let mut h1_rhs = DVector::zeros(2 * dims.s);
    for i in 0..dims.s {
        h1[(i, i)] = 1.0;
        h1_rhs[i] = spec.x_max[i];
        h1[(dims.s + i, i)] = -1.0;
        h1_rhs[dims.s + i] = 0.0;
    }

    let mut ineq = RowBuilder {
        ncols: l.ncols(),
        rows: Vec::new(),
    };
    for i in 0..dims.r {
        let k = RowKind::RenewableBound(i);
        let (lo, hi) = (spec.p_r_min[i], spec.p_r_max[i]);
        ineq.push(k, &[(l.p_r(i), 1.0)], hi);
        ineq.push(k, &[(l.p_r(i), -1.0)], -lo);
        ineq.push(k, &[(l.u_r(i), 1.0)], hi);
        ineq.push(k, &[(l.u_r(i), -1.0)], -lo);
    }
    for i in 0..dims.r {
        let k = RowKind::RenewableMin(i);
        let wr = w.w_r[i];
        ineq.push(k, &[(l.p_r(i), 1.0), (l.u_r(i), -1.0)], 0.0);
        ineq.push(
            k,
            &[
                (l.p_r(i), -1.0),
                (l.u_r(i), 1.0),
                (l.delta_r(i), wr - bm.big_m_r),
            ],
            0.0,
        );
        ineq.push(k, &[(l.p_r(i), 1.0), (l.w_r(i), -1.0)], 0.0);
        ineq.push(k, &[(l.p_r(i), -1.0), (l.delta_r(i), wr - bm.m_r)], -bm.m_r);
    }
    for i in 0..dims.t {
        let k = RowKind::ConventionalBound(i);
        let (lo, hi) = (spec.p_t_min[i], spec.p_t_max[i]);
        for col in [l.p_t(i), l.u_t(i)] {
            ineq.push(k, &[(col, 1.0), (l.delta_t(i), -hi)], 0.0);
            ineq.push(k, &[(col, -1.0), (l.delta_t(i), lo)], 0.0);
        }
    }
    for i in 0..dims.s {
        let k = RowKind::StorageBound(i);
        let (lo, hi) = (spec.p_s_min[i], spec.p_s_max[i]);
        for col in [l.p_s(i), l.u_s(i)] {
            ineq.push(k, &[(col, 1.0)], hi);
            ineq.push(k, &[(col, -1.0)], -lo);
        }
    }
    for i in 0..dims.t {
        let k = RowKind::ConventionalSharing(i);
        let kt = 1.0 / spec.chi_t[i];
        let (m, big) = (bm.m_t, bm.big_m_t);
        let (p, u, dl, rho) = (l.p_t(i), l.u_t(i), l.delta_t(i), l.rho());
        ineq.push(k, &[(p, kt), (u, -kt), (dl, -big)], 0.0);
        ineq.push(k, &[(p, -kt), (u, kt), (dl, m)], 0.0);
        ineq.push(k, &[(p, kt), (u, -kt), (rho, -1.0), (dl, -m)], -m);
        ineq.push(k, &[(p, -kt), (u, kt), (rho, 1.0), (dl, big)], big);
    }
    if !matches!(spec.network, super::Network::SingleBus) {
        let f = flow_matrix(spec)?;
        let (lo, hi) = spec.network.line_limits();
        for e in 0..f.nrows() {
            let mut coeffs = Vec::new();
            for j in 0..f.ncols() {
                let c = f[(e, j)];
                if c == 0.0 {
                    continue;
                }
                coeffs.push((injection_column(&l, j), c));
            }
            let neg: Vec<_> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
            ineq.push(RowKind::LineLimit(e), &coeffs, hi[e]);
            ineq.push(RowKind::LineLimit(e), &neg, -lo[e]);
        }
    }
    let (h2, h2_rhs, h2_kinds) = ineq.finish();

    let mut eq = RowBuilder {
        ncols: l.ncols(),
        rows: Vec::new(),
    };
    for i in 0..dims.s {
        let ks = 1.0 / spec.chi_s[i];
        eq.push(
            RowKind::StorageSharing(i),
            &[(l.p_s(i), ks), (l.u_s(i), -ks), (l.rho(), -1.0)],
            0.0,
        );
    }
    let mut balance = Vec::new();
    for i in 0..dims.t {
        balance.push((l.p_t(i), 1.0));
    }
    for i in 0..dims.s {
        balance.push((l.p_s(i), 1.0));
    }
    for i in 0..dims.r {
        balance.push((l.p_r(i), 1.0));
    }
    for i in 0..dims.d {
        balance.push((l.w_d(i), -1.0));
    }
    eq.push(RowKind::PowerBalance, &balance, 0.0);
    let (g, g_rhs, g_kinds) = eq.finish();

    Ok(ConstraintSystem {
        layout: l,
        b,
        h1,
        h1_rhs,
        h2,
        h2_rhs,
        h2_kinds,
        g,
        g_rhs,
        g_kinds,
    })
}

/// Column of `[v; q; w]` holding the `j`-th entry of `[p; w_d]`.
fn injection_column(l: &VarLayout, j: usize) -> usize {
    let d = l.dims;
    if j < d.t {
        l.p_t(j)
    } else if j < d.t + d.s {
        l.p_s(j - d.t)
    } else if j < d.units() {
        l.p_r(j - d.t - d.s)
    } else {
        l.w_d(j - d.units())
    }
}

impl ConstraintSystem {
    /// Inequality rows of `H2` exceeded by more than `tol` at the point `z = [v; q; w]`.
    pub fn violated_rows(&self, z: &[f64], tol: f64) -> Vec<RowKind> {
        let z = DVector::from_column_slice(z);
        let lhs = &self.h2 * z;
        let mut out = Vec::new();
        for r in 0..lhs.len() {
            if lhs[r] > self.h2_rhs[r] + tol && !out.contains(&self.h2_kinds[r]) {
                out.push(self.h2_kinds[r]);
            }
        }
        out
    }

    /// `G z - g` at the point `z = [v; q; w]`.
    pub fn equality_residuals(&self, z: &[f64]) -> DVector<f64> {
        &self.g * DVector::from_column_slice(z) - &self.g_rhs
    }
}
