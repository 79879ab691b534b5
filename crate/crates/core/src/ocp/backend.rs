use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

/// Sparse linear row `Σ a_k x_k (≤|=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(j, a)| a * x[*j]).sum()
    }
}

/// Affine term `a·x + c` appearing squared in a [`QuadraticRow`].
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredTerm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

/// Convex quadratic row `Σ_k (a_k·x + c_k)² + l·x ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRow {
    pub squares: Vec<SquaredTerm>,
    pub linear: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl QuadraticRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let sq: f64 = self
            .squares
            .iter()
            .map(|s| {
                (s.coeffs.iter().map(|(j, a)| a * x[*j]).sum::<f64>() + s.constant).powi(2)
            })
            .sum();
        sq + self.linear.iter().map(|(j, a)| a * x[*j]).sum::<f64>()
    }
}

/// Convex program handed to a [`ConvexBackend`]:
///
/// ```text
/// minimize    ½ xᵀPx + cᵀx + c0
/// subject to  equalities, inequalities (≤), quadratic rows, lower ≤ x ≤ upper
/// ```
///
/// `quadratic_objective` holds upper-triangular entries of `P`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexProgram {
    pub num_vars: usize,
    pub objective: Vec<(usize, f64)>,
    pub quadratic_objective: Vec<(usize, usize, f64)>,
    pub objective_constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub quadratic: Vec<QuadraticRow>,
}

impl ConvexProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            ..Self::default()
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.num_vars += 1;
        self.lower.push(lower);
        self.upper.push(upper);
        self.num_vars - 1
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().map(|(j, c)| c * x[*j]).sum();
        let quad: f64 = self
            .quadratic_objective
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    0.5 * v * x[i] * x[i]
                } else {
                    v * x[i] * x[j]
                }
            })
            .sum();
        lin + quad + self.objective_constant
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for r in &self.equalities {
            worst = worst.max((r.eval(x) - r.rhs).abs());
        }
        for r in &self.inequalities {
            worst = worst.max(r.eval(x) - r.rhs);
        }
        for r in &self.quadratic {
            worst = worst.max(r.eval(x) - r.rhs);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSolution {
    pub status: BackendStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

impl BackendSolution {
    fn without_point(status: BackendStatus) -> Self {
        Self {
            status,
            objective: f64::NAN,
            x: Vec::new(),
        }
    }
}

/// Solver for convex programs with linear objective or convex quadratic
/// objective, linear rows, convex quadratic rows and box bounds.
///
/// Returned optimal points must satisfy every row within `1e-7`.
pub trait ConvexBackend: Sync {
    fn solve(&self, program: &ConvexProgram) -> BackendSolution;
}

/// Interior-point backend built on the Clarabel conic solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelBackend {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 200,
        }
    }
}

struct ConeRows {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl ConeRows {
    /// Appends the row `s = rhs − a·x`.
    fn push(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let r = self.b.len();
        for &(j, a) in coeffs {
            if a != 0.0 {
                self.rows.push(r);
                self.cols.push(j);
                self.vals.push(a);
            }
        }
        self.b.push(rhs);
    }
}

impl ConvexBackend for ClarabelBackend {
    fn solve(&self, p: &ConvexProgram) -> BackendSolution {
        let n = p.num_vars;
        if let Some(j) = (0..n).find(|&j| p.lower[j] > p.upper[j]) {
            log::debug!("empty bounds on variable {j}");
            return BackendSolution::without_point(BackendStatus::Infeasible);
        }
        let mut a = ConeRows {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
        };
        let mut cones = Vec::new();

        let zero_start = a.b.len();
        for r in &p.equalities {
            a.push(&r.coeffs, r.rhs);
        }
        for j in 0..n {
            if p.lower[j] == p.upper[j] {
                a.push(&[(j, 1.0)], p.lower[j]);
            }
        }
        if a.b.len() > zero_start {
            cones.push(SupportedConeT::ZeroConeT(a.b.len() - zero_start));
        }

        let nonneg_start = a.b.len();
        for r in &p.inequalities {
            a.push(&r.coeffs, r.rhs);
        }
        for j in 0..n {
            if p.lower[j] == p.upper[j] {
                continue;
            }
            if p.upper[j].is_finite() {
                a.push(&[(j, 1.0)], p.upper[j]);
            }
            if p.lower[j].is_finite() {
                a.push(&[(j, -1.0)], -p.lower[j]);
            }
        }
        if a.b.len() > nonneg_start {
            cones.push(SupportedConeT::NonnegativeConeT(a.b.len() - nonneg_start));
        }

        // ‖y‖² ≤ s  ⇔  ‖(s − 1, 2y)‖ ≤ s + 1, with s = rhs − l·x.
        for q in &p.quadratic {
            a.push(&q.linear, q.rhs + 1.0);
            a.push(&q.linear, q.rhs - 1.0);
            for sq in &q.squares {
                let neg: Vec<(usize, f64)> = sq.coeffs.iter().map(|&(j, v)| (j, -2.0 * v)).collect();
                a.push(&neg, 2.0 * sq.constant);
            }
            cones.push(SupportedConeT::SecondOrderConeT(2 + q.squares.len()));
        }

        let m = a.b.len();
        let amat = CscMatrix::new_from_triplets(m, n, a.rows, a.cols, a.vals);
        let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = {
            let mut i = Vec::new();
            let mut j = Vec::new();
            let mut v = Vec::new();
            for &(r, c, val) in &p.quadratic_objective {
                let (r, c) = if r <= c { (r, c) } else { (c, r) };
                i.push(r);
                j.push(c);
                v.push(val);
            }
            (i, j, v)
        };
        let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
        let mut c = vec![0.0; n];
        for &(j, v) in &p.objective {
            c[j] += v;
        }

        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .tol_feas(self.tolerance)
            .presolve_enable(false)
            .build()
        {
            Ok(s) => s,
            Err(e) => return BackendSolution::without_point(BackendStatus::Failed(e.to_string())),
        };
        let mut solver = match DefaultSolver::new(&pmat, &c, &amat, &a.b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return BackendSolution::without_point(BackendStatus::Failed(e.to_string())),
        };
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => BackendSolution {
                status: BackendStatus::Optimal,
                objective: sol.obj_val + p.objective_constant,
                x: sol.x.clone(),
            },
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BackendSolution::without_point(BackendStatus::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendSolution::without_point(BackendStatus::Unbounded)
            }
            other => BackendSolution::without_point(BackendStatus::Failed(format!("{other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_with_bounds() {
        // min -x - y  s.t. x + y ≤ 1.5, 0 ≤ x,y ≤ 1
        let mut p = ConvexProgram::new(2);
        p.objective = vec![(0, -1.0), (1, -1.0)];
        p.lower = vec![0.0, 0.0];
        p.upper = vec![1.0, 1.0];
        p.inequalities.push(LinearRow::new(vec![(0, 1.0), (1, 1.0)], 1.5));
        let s = ClarabelBackend::default().solve(&p);
        assert_eq!(s.status, BackendStatus::Optimal);
        assert!((s.objective + 1.5).abs() < 1e-7);
        assert!(p.max_violation(&s.x) < 1e-7);
    }

    #[test]
    fn quadratic_row_epigraph() {
        // min s  s.t. (x - 1)² + (y + 2)² ≤ s, x + y = 0
        let mut p = ConvexProgram::new(3);
        p.objective = vec![(2, 1.0)];
        p.equalities.push(LinearRow::new(vec![(0, 1.0), (1, 1.0)], 0.0));
        p.quadratic.push(QuadraticRow {
            squares: vec![
                SquaredTerm {
                    coeffs: vec![(0, 1.0)],
                    constant: -1.0,
                },
                SquaredTerm {
                    coeffs: vec![(1, 1.0)],
                    constant: 2.0,
                },
            ],
            linear: vec![(2, -1.0)],
            rhs: 0.0,
        });
        let s = ClarabelBackend::default().solve(&p);
        assert_eq!(s.status, BackendStatus::Optimal);
        // x = -y, minimize (x-1)² + (2-x)² → x = 1.5, value 0.5
        assert!((s.objective - 0.5).abs() < 1e-7, "{}", s.objective);
        assert!((s.x[0] - 1.5).abs() < 1e-5);
        assert!(p.max_violation(&s.x) < 1e-7);
    }

    #[test]
    fn qp_objective() {
        // min ½·2x² - 2x → x = 1, value -1
        let mut p = ConvexProgram::new(1);
        p.quadratic_objective = vec![(0, 0, 2.0)];
        p.objective = vec![(0, -2.0)];
        let s = ClarabelBackend::default().solve(&p);
        assert!((s.objective + 1.0).abs() < 1e-8);
        assert!((p.objective_value(&s.x) + 1.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_and_fixed() {
        let mut p = ConvexProgram::new(1);
        p.objective = vec![(0, 1.0)];
        p.lower = vec![1.0];
        p.upper = vec![1.0];
        let s = ClarabelBackend::default().solve(&p);
        assert_eq!(s.status, BackendStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        p.inequalities.push(LinearRow::new(vec![(0, 1.0)], 0.5));
        assert_eq!(ClarabelBackend::default().solve(&p).status, BackendStatus::Infeasible);
    }
}
