use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MpcError;
use crate::cost::average_metrics;
use crate::model::{ControlInput, Disturbance};
use crate::plant::Violations;

/// Which limit classes were violated in one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationClasses {
    pub unit: bool,
    pub line: bool,
    pub state: bool,
}

impl ViolationClasses {
    pub fn any(&self) -> bool {
        self.unit || self.line || self.state
    }

    pub fn count(&self) -> usize {
        [self.unit, self.line, self.state].iter().filter(|v| **v).count()
    }

    pub fn code(&self) -> String {
        let mut s: String = [(self.unit, 'u'), (self.line, 'l'), (self.state, 's')]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, c)| *c)
            .collect();
        if s.is_empty() {
            s.push('-');
        }
        s
    }

    pub fn parse(code: &str) -> Option<Self> {
        if code == "-" {
            return Some(Self::default());
        }
        if code.is_empty() || code.chars().any(|c| !"uls".contains(c)) {
            return None;
        }
        Some(Self {
            unit: code.contains('u'),
            line: code.contains('l'),
            state: code.contains('s'),
        })
    }
}

impl From<&Violations> for ViolationClasses {
    fn from(v: &Violations) -> Self {
        Self {
            unit: v.unit(),
            line: v.line(),
            state: v.state(),
        }
    }
}

/// One closed-loop step. `x` is the state when the step starts and `cost_s`
/// is the soft-band cost of the state it ends in.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub input: ControlInput,
    pub disturbance: Disturbance,
    pub p_t: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_r: Vec<f64>,
    pub rho: f64,
    pub flows: Vec<f64>,
    pub violations: ViolationClasses,
    pub cost_o: f64,
    pub cost_s: f64,
    /// Wall-clock seconds spent in the optimiser.
    pub solve_time: f64,
    pub status: String,
}

/// Early end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    pub k: usize,
    pub x: Vec<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub terminal: Option<Terminal>,
    /// Optimal values of each step's tree at α = 0, 0.5 and 1 (diagnostic runs only).
    pub diagnostics: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    pub avg_cost_o: f64,
    pub avg_cost_s: f64,
    /// Steps with at least one violated limit.
    pub violations: usize,
    pub unit_violations: usize,
    pub line_violations: usize,
    pub state_violations: usize,
    pub switching_actions: f64,
    pub fallback_steps: usize,
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
    pub terminal: Option<String>,
}

impl TrajectoryLog {
    /// Summary metrics; `delta_prev` is the switch state before the first step.
    pub fn metrics(&self, delta_prev: &[f64]) -> Metrics {
        let costs: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.cost_o, r.cost_s)).collect();
        let (avg_cost_o, avg_cost_s) = average_metrics(&costs).unwrap_or((f64::NAN, f64::NAN));
        let count = |f: &dyn Fn(&ViolationClasses) -> bool| {
            self.rows.iter().filter(|r| f(&r.violations)).count()
        };
        let mut prev = delta_prev.to_vec();
        let mut switching_actions = 0.0;
        for r in &self.rows {
            switching_actions += r
                .input
                .delta_t
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            prev = r.input.delta_t.clone();
        }
        let times: Vec<f64> = self.rows.iter().map(|r| r.solve_time).collect();
        let mean_solve_time = if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        };
        Metrics {
            steps: self.rows.len(),
            avg_cost_o,
            avg_cost_s,
            violations: count(&|v| v.any()),
            unit_violations: count(&|v| v.unit),
            line_violations: count(&|v| v.line),
            state_violations: count(&|v| v.state),
            switching_actions,
            fallback_steps: self
                .rows
                .iter()
                .filter(|r| r.status.starts_with("fallback"))
                .count(),
            mean_solve_time,
            max_solve_time: times.iter().copied().fold(0.0, f64::max),
            terminal: self.terminal.as_ref().map(|t| t.status.clone()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MpcError> {
        let Some(first) = self.rows.first().map(Shape::of).or_else(|| {
            self.terminal.as_ref().map(|t| Shape {
                s: t.x.len(),
                ..Shape::default()
            })
        }) else {
            return Err(MpcError::Config("cannot write an empty trajectory".into()));
        };
        let shape = first;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(shape.header())?;
        for r in &self.rows {
            let mut rec = vec![r.k.to_string()];
            let nums = r
                .x
                .iter()
                .chain(&r.input.u_t)
                .chain(&r.input.u_s)
                .chain(&r.input.u_r)
                .chain(&r.input.delta_t)
                .chain(&r.disturbance.w_r)
                .chain(&r.disturbance.w_d)
                .chain(&r.p_t)
                .chain(&r.p_s)
                .chain(&r.p_r)
                .chain(std::iter::once(&r.rho))
                .chain(&r.flows);
            rec.extend(nums.map(|v| v.to_string()));
            rec.push(r.violations.code());
            rec.push(r.cost_o.to_string());
            rec.push(r.cost_s.to_string());
            rec.push(r.solve_time.to_string());
            rec.push(r.status.clone());
            w.write_record(&rec)?;
        }
        if let Some(t) = &self.terminal {
            let mut rec = vec![t.k.to_string()];
            rec.extend(t.x.iter().map(|v| v.to_string()));
            rec.resize(shape.width() - 1, String::new());
            rec.push(t.status.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, MpcError> {
        let mut rd = csv::Reader::from_reader(input);
        let shape = Shape::from_header(rd.headers()?)?;
        let mut log = TrajectoryLog::default();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if log.terminal.is_some() {
                return Err(MpcError::Parse {
                    line,
                    detail: "rows after the terminal status".into(),
                });
            }
            if rec.len() != shape.width() {
                return Err(MpcError::Parse {
                    line,
                    detail: format!("expected {} fields, found {}", shape.width(), rec.len()),
                });
            }
            let num = |j: usize| -> Result<f64, MpcError> {
                rec[j].parse().map_err(|e| MpcError::Parse {
                    line,
                    detail: format!("`{}`: {e}", &rec[j]),
                })
            };
            let k: usize = rec[0].parse().map_err(|e| MpcError::Parse {
                line,
                detail: format!("`{}`: {e}", &rec[0]),
            })?;
            let mut col = 1;
            let mut take = |n: usize| -> Result<Vec<f64>, MpcError> {
                let v = (col..col + n).map(num).collect();
                col += n;
                v
            };
            let x = take(shape.s)?;
            let status = rec[shape.width() - 1].to_string();
            if rec[1 + shape.s].is_empty() {
                log.terminal = Some(Terminal { k, x, status });
                continue;
            }
            let input = ControlInput {
                u_t: take(shape.t)?,
                u_s: take(shape.s)?,
                u_r: take(shape.r)?,
                delta_t: take(shape.t)?,
            };
            let disturbance = Disturbance {
                w_r: take(shape.r)?,
                w_d: take(shape.d)?,
            };
            let p_t = take(shape.t)?;
            let p_s = take(shape.s)?;
            let p_r = take(shape.r)?;
            let rho = take(1)?[0];
            let flows = take(shape.e)?;
            let violations = ViolationClasses::parse(&rec[col]).ok_or_else(|| MpcError::Parse {
                line,
                detail: format!("bad violation code `{}`", &rec[col]),
            })?;
            let c = col;
            log.rows.push(LogRow {
                k,
                x,
                input,
                disturbance,
                p_t,
                p_s,
                p_r,
                rho,
                flows,
                violations,
                cost_o: num(c + 1)?,
                cost_s: num(c + 2)?,
                solve_time: num(c + 3)?,
                status,
            });
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Shape {
    t: usize,
    s: usize,
    r: usize,
    d: usize,
    e: usize,
}

fn named(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}_{i}")).collect()
    }
}

impl Shape {
    fn of(r: &LogRow) -> Self {
        Self {
            t: r.input.u_t.len(),
            s: r.x.len(),
            r: r.input.u_r.len(),
            d: r.disturbance.w_d.len(),
            e: r.flows.len(),
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["k".to_string()];
        for (p, n) in [
            ("x", self.s),
            ("u_t", self.t),
            ("u_s", self.s),
            ("u_r", self.r),
            ("delta_t", self.t),
            ("w_r", self.r),
            ("w_d", self.d),
            ("p_t", self.t),
            ("p_s", self.s),
            ("p_r", self.r),
            ("rho", 1),
        ] {
            h.extend(named(p, n));
        }
        h.extend((1..=self.e).map(|i| format!("pe_{i}")));
        for c in ["viol_flags", "cost_o", "cost_s", "solve_time", "status"] {
            h.push(c.to_string());
        }
        h
    }

    fn width(&self) -> usize {
        7 + 3 * self.t + 3 * self.s + 3 * self.r + self.d + self.e
    }

    fn from_header(h: &csv::StringRecord) -> Result<Self, MpcError> {
        let n = |p: &str| {
            h.iter()
                .filter(|c| *c == p || c.strip_prefix(p).is_some_and(|s| s.starts_with('_') && s[1..].parse::<usize>().is_ok()))
                .count()
        };
        let shape = Self {
            t: n("u_t"),
            s: n("x"),
            r: n("u_r"),
            d: n("w_d"),
            e: n("pe"),
        };
        if shape.header().iter().map(String::as_str).ne(h.iter()) {
            return Err(MpcError::Parse {
                line: 1,
                detail: "unrecognised trajectory header".into(),
            });
        }
        Ok(shape)
    }
}

/// One replica of a sensitivity study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha: f64,
    pub replica: usize,
    pub avg_cost_o: f64,
    pub avg_cost_s: f64,
    pub violations: usize,
}

/// Writes `alpha,replica,avg_cost_o,avg_cost_s,violations` rows.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), MpcError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["alpha", "replica", "avg_cost_o", "avg_cost_s", "violations"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>, MpcError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<Vec<SummaryRow>, _>>()?)
}

/// Per-node decisions of a solved problem: `node, stage, ancestor,
/// probability`, the node state, then the inputs of non-leaf nodes and the
/// auxiliary variables of non-root nodes. Cells that do not apply are empty.
pub fn write_node_decisions_csv<W: Write>(
    problem: &crate::ocp::RiskAverseProblem,
    solution: &[f64],
    out: W,
) -> Result<(), MpcError> {
    let d = problem.spec.dims();
    let mut header = vec!["node".to_string(), "stage".into(), "ancestor".into(), "probability".into()];
    let mut cols = |name: &str, n: usize| {
        header.extend((1..=n).map(|i| format!("{name}_{i}")));
    };
    cols("x", d.s);
    cols("u_t", d.t);
    cols("u_s", d.s);
    cols("u_r", d.r);
    cols("delta_t", d.t);
    cols("p_t", d.t);
    cols("p_s", d.s);
    cols("p_r", d.r);
    cols("delta_r", d.r);
    header.push("rho".into());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    let tree = &problem.tree;
    let num = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let blank = |n: usize| vec![String::new(); n];
    for i in 0..tree.len() {
        let mut rec = vec![
            i.to_string(),
            tree.stage(i).to_string(),
            tree.ancestor(i).map(|a| a.to_string()).unwrap_or_default(),
            tree.probability(i).to_string(),
        ];
        rec.extend(num(&problem.state(i, solution)));
        if tree.is_leaf(i) {
            rec.extend(blank(d.t + d.s + d.r + d.t));
        } else {
            let v = problem.decision(i, solution);
            for part in [&v.u_t, &v.u_s, &v.u_r, &v.delta_t] {
                rec.extend(num(part));
            }
        }
        if i == 0 {
            rec.extend(blank(d.t + d.s + 2 * d.r + 1));
        } else {
            let q = problem.auxiliary(i, solution);
            for part in [&q.p_t, &q.p_s, &q.p_r, &q.delta_r] {
                rec.extend(num(part));
            }
            rec.push(q.rho.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
