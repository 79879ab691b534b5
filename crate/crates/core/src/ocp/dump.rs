use std::io::{self, Write};

use super::build::RiskAverseProblem;
use super::LinearRow;

fn terms(coeffs: &[(usize, f64)]) -> String {
    if coeffs.is_empty() {
        return "0".into();
    }
    coeffs
        .iter()
        .map(|(j, a)| format!("{a:+} x{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn linear(out: &mut impl Write, tag: &str, op: &str, rows: &[LinearRow]) -> io::Result<()> {
    for (k, r) in rows.iter().enumerate() {
        writeln!(out, "{tag}{k}: {} {op} {}", terms(&r.coeffs), r.rhs)?;
    }
    Ok(())
}

/// Human-readable listing of every variable, row and binary of the program.
pub fn write_problem_dump(problem: &RiskAverseProblem, mut out: impl Write) -> io::Result<()> {
    let p = &problem.program;
    writeln!(
        out,
        "# nodes {} vars {} binaries {} eq {} ineq {} quad {}",
        problem.tree.len(),
        p.num_vars,
        problem.binaries.len(),
        p.equalities.len(),
        p.inequalities.len(),
        p.quadratic.len()
    )?;
    writeln!(out, "# alpha {} formulation {:?}", problem.alpha.value(), problem.options.formulation)?;
    writeln!(out, "minimize {} + {}", terms(&p.objective), p.objective_constant)?;
    writeln!(out, "bounds")?;
    for j in 0..p.num_vars {
        writeln!(out, "  {} <= x{j} <= {}", p.lower[j], p.upper[j])?;
    }
    writeln!(out, "binaries")?;
    let ids: Vec<String> = problem.binaries.iter().map(|j| format!("x{j}")).collect();
    writeln!(out, "  {}", ids.join(" "))?;
    writeln!(out, "nodes")?;
    for (i, n) in problem.nodes.iter().enumerate() {
        writeln!(
            out,
            "  node {i} stage {} u_t {:?} u_s {:?} u_r {:?} delta_t {:?} x {:?} p_t {:?} p_s {:?} p_r {:?} delta_r {:?} rho {:?} t {:?} xi {:?}",
            problem.tree.stage(i),
            n.u_t, n.u_s, n.u_r, n.delta_t, n.x, n.p_t, n.p_s, n.p_r, n.delta_r, n.rho, n.t, n.xi
        )?;
    }
    writeln!(out, "subject to")?;
    linear(&mut out, "  e", "=", &p.equalities)?;
    linear(&mut out, "  i", "<=", &p.inequalities)?;
    for (k, q) in p.quadratic.iter().enumerate() {
        let sq: Vec<String> = q
            .squares
            .iter()
            .map(|s| format!("({} {:+})^2", terms(&s.coeffs), s.constant))
            .collect();
        writeln!(out, "  q{k}: {} {} <= {}", sq.join(" + "), terms(&q.linear), q.rhs)?;
    }
    Ok(())
}
