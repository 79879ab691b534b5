use std::io::{Read, Write};

use super::{Result, ScenarioFan, ScenarioTree, UncertaintyError};

fn value_headers(r: usize, d: usize) -> Vec<String> {
    let named = |prefix: &str, n: usize| -> Vec<String> {
        if n == 1 {
            vec![prefix.to_string()]
        } else {
            (1..=n).map(|i| format!("{prefix}_{i}")).collect()
        }
    };
    let mut h = named("w_r", r);
    h.extend(named("w_d", d));
    h
}

fn count_values(headers: &csv::StringRecord, skip: usize) -> (usize, usize) {
    let cols: Vec<&str> = headers.iter().skip(skip).collect();
    let r = cols.iter().filter(|c| c.starts_with("w_r")).count();
    let d = cols.iter().filter(|c| c.starts_with("w_d")).count();
    (r, d)
}

fn parse<T: std::str::FromStr>(field: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e: T::Err| UncertaintyError::Parse {
        line,
        detail: format!("`{field}`: {e}"),
    })
}

/// Writes `scenario,step,w_r,w_d` rows, steps counted from 1.
pub fn write_fan_csv<W: Write>(fan: &ScenarioFan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario".to_string(), "step".to_string()];
    header.extend(value_headers(fan.r(), fan.d()));
    w.write_record(&header)?;
    for m in 0..fan.len() {
        for k in 0..fan.horizon() {
            let mut rec = vec![m.to_string(), (k + 1).to_string()];
            rec.extend(fan.value(m, k).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_fan_csv<R: Read>(input: R) -> Result<ScenarioFan> {
    let mut rd = csv::Reader::from_reader(input);
    let (r, d) = count_values(rd.headers()?, 2);
    let mut paths: Vec<Vec<f64>> = Vec::new();
    let mut horizon = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let m: usize = parse(&rec[0], line)?;
        let k: usize = parse(&rec[1], line)?;
        if m > paths.len() || k == 0 {
            return Err(UncertaintyError::Parse {
                line,
                detail: "rows must be grouped by scenario with steps from 1".into(),
            });
        }
        if m == paths.len() {
            paths.push(Vec::new());
        }
        if k != paths[m].len() / (r + d).max(1) + 1 {
            return Err(UncertaintyError::Parse {
                line,
                detail: format!("unexpected step {k}"),
            });
        }
        horizon = horizon.max(k);
        for f in rec.iter().skip(2) {
            paths[m].push(parse(f, line)?);
        }
    }
    ScenarioFan::new(r, d, horizon, paths)
}

/// Writes `node,stage,ancestor,probability,w_r,w_d` rows; the root has empty
/// ancestor and disturbance fields.
pub fn write_tree_csv<W: Write>(tree: &ScenarioTree, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let vh = value_headers(tree.r(), tree.d());
    let mut header = vec![
        "node".to_string(),
        "stage".to_string(),
        "ancestor".to_string(),
        "probability".to_string(),
    ];
    header.extend(vh.iter().cloned());
    w.write_record(&header)?;
    for i in 0..tree.len() {
        let mut rec = vec![
            i.to_string(),
            tree.stage(i).to_string(),
            tree.ancestor(i).map(|a| a.to_string()).unwrap_or_default(),
            tree.probability(i).to_string(),
        ];
        if i == 0 {
            rec.extend(vh.iter().map(|_| String::new()));
        } else {
            rec.extend(tree.value(i).iter().map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tree_csv<R: Read>(input: R) -> Result<ScenarioTree> {
    let mut rd = csv::Reader::from_reader(input);
    let (r, d) = count_values(rd.headers()?, 4);
    let mut ancestor = Vec::new();
    let mut probability = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let node: usize = parse(&rec[0], line)?;
        if node != i {
            return Err(UncertaintyError::Parse {
                line,
                detail: format!("expected node {i}, found {node}"),
            });
        }
        ancestor.push(if rec[2].is_empty() {
            None
        } else {
            Some(parse(&rec[2], line)?)
        });
        probability.push(parse(&rec[3], line)?);
        let v = rec
            .iter()
            .skip(4)
            .filter(|f| !f.is_empty())
            .map(|f| parse(f, line))
            .collect::<Result<Vec<f64>>>()?;
        values.push(v);
    }
    ScenarioTree::new(r, d, ancestor, probability, values)
}
