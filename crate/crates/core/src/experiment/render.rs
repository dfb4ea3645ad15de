use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::report::{Aggregate, ExperimentReport, SweepKind};
use super::svg::{bar_chart, heatmap};
use crate::error::{Error, Result};
use crate::metrics::Mode;

/// A named output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: String, contents: String) -> Self {
        Artifact { name, contents }
    }
}

struct Table {
    rows: Vec<String>,
    cols: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
    stds: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn build<R: Ord + Copy + ToString, C: Ord + Copy + ToString>(
        aggs: &[&Aggregate],
        row: impl Fn(&Aggregate) -> R,
        col: impl Fn(&Aggregate) -> C,
        value: impl Fn(&Aggregate) -> (f64, Option<f64>),
    ) -> Table {
        let rk: Vec<R> = aggs.iter().map(|a| row(a)).collect::<BTreeSet<_>>().into_iter().collect();
        let ck: Vec<C> = aggs.iter().map(|a| col(a)).collect::<BTreeSet<_>>().into_iter().collect();
        let mut values = vec![vec![None; ck.len()]; rk.len()];
        let mut stds = vec![vec![None; ck.len()]; rk.len()];
        for a in aggs {
            let r = rk.binary_search(&row(a)).expect("row key present");
            let c = ck.binary_search(&col(a)).expect("column key present");
            let (v, s) = value(a);
            values[r][c] = Some(v);
            stds[r][c] = s;
        }
        Table {
            rows: rk.iter().map(ToString::to_string).collect(),
            cols: ck.iter().map(ToString::to_string).collect(),
            values,
            stds,
        }
    }

    fn csv(&self, corner: &str) -> String {
        let mut s = String::from(corner);
        for c in &self.cols {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (r, label) in self.rows.iter().enumerate() {
            s.push_str(label);
            for v in &self.values[r] {
                let _ = write!(s, ",{}", v.map(|x| x.to_string()).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }
}

fn gated_mode(report: &ExperimentReport) -> Mode {
    if report.config.modes.contains(&Mode::OpenGan) {
        Mode::OpenGan
    } else {
        *report.config.modes.last().expect("report has modes")
    }
}

/// CSV tables and SVG plots for one report. Output depends only on the report.
pub fn render_report(report: &ExperimentReport, stem: &str) -> Result<Vec<Artifact>> {
    if report.cells.is_empty() || report.aggregates.is_empty() {
        return Err(Error::Data("report holds an empty grid".into()));
    }
    let mut out = vec![
        Artifact::new(format!("{stem}.cells.csv"), report.cells_csv()),
        Artifact::new(format!("{stem}.aggregates.csv"), report.aggregates_csv()),
    ];
    let all: Vec<&Aggregate> = report.aggregates.iter().collect();
    match report.kind {
        SweepKind::Evaluate | SweepKind::Ratio => {
            let t = Table::build(&all, |a| a.key.n_unknown, |a| a.key.mode, |a| (a.aer.mean, a.aer.std));
            out.push(Artifact::new(format!("{stem}.aer.csv"), t.csv("n_unknown\\mode")));
            let n_known = all[0].key.n_known;
            let groups: Vec<String> = t
                .rows
                .iter()
                .map(|u| format!("1:{}", (u.parse::<f64>().unwrap_or(0.0) / n_known as f64 * 100.0).round() / 100.0))
                .collect();
            let series: Vec<(String, Vec<f64>)> = t
                .cols
                .iter()
                .enumerate()
                .map(|(c, m)| (m.clone(), t.values.iter().map(|row| row[c].unwrap_or(0.0)).collect()))
                .collect();
            out.push(Artifact::new(
                format!("{stem}.aer.svg"),
                bar_chart("AER by known:unknown ratio", "AER", &groups, &series),
            ));
        }
        SweepKind::Known => {
            for mode in report.config.modes.iter().copied().filter(|&m| m != Mode::Close) {
                let aggs: Vec<&Aggregate> = report.aggregates_for(mode).collect();
                let t = Table::build(&aggs, |a| a.key.n_known, |a| a.key.n_unknown, |a| (a.acc.mean, a.acc.std));
                out.push(Artifact::new(format!("{stem}.acc.{mode}.csv"), t.csv("n_known\\n_unknown")));
                out.push(Artifact::new(
                    format!("{stem}.acc.{mode}.svg"),
                    heatmap(
                        &format!("{mode} accuracy (rows: known, columns: unknown)"),
                        &t.rows,
                        &t.cols,
                        &t.values,
                        Some(&t.stds),
                        &[],
                    ),
                ));
            }
        }
        SweepKind::CrossMatrix => {
            let mode = gated_mode(report);
            let aggs: Vec<&Aggregate> = report.aggregates_for(mode).collect();
            let t = Table::build(&aggs, |a| a.key.gate_unknown, |a| a.key.n_unknown, |a| (a.aer.mean, a.aer.std));
            out.push(Artifact::new(format!("{stem}.aer.{mode}.csv"), t.csv("gate_unknown\\n_unknown")));
            let marked: Vec<(usize, usize)> = report
                .column_best
                .iter()
                .filter_map(|b| {
                    let r = t.rows.iter().position(|x| *x == b.gate_unknown.to_string())?;
                    let c = t.cols.iter().position(|x| *x == b.n_unknown.to_string())?;
                    Some((r, c))
                })
                .collect();
            out.push(Artifact::new(
                format!("{stem}.aer.{mode}.svg"),
                heatmap(
                    &format!("{mode} AER (rows: gate unknowns, columns: evaluation unknowns)"),
                    &t.rows,
                    &t.cols,
                    &t.values,
                    Some(&t.stds),
                    &marked,
                ),
            ));
        }
        SweepKind::CrossDomain => {
            let mode = gated_mode(report);
            let counts: BTreeSet<usize> = report.aggregates.iter().map(|a| a.key.n_unknown).collect();
            for u in counts {
                let aggs: Vec<&Aggregate> = report.aggregates_for(mode).filter(|a| a.key.n_unknown == u).collect();
                let metrics: [(&str, fn(&Aggregate) -> (f64, Option<f64>)); 2] =
                    [("aer", |a| (a.aer.mean, a.aer.std)), ("arr", |a| (a.arr.mean, a.arr.std))];
                for (name, value) in metrics {
                    let t = Table::build(
                        &aggs,
                        |a| a.key.train_subject.unwrap_or(0),
                        |a| a.key.test_subject.unwrap_or(0),
                        value,
                    );
                    let base = format!("{stem}.{name}.{mode}.u{u}");
                    out.push(Artifact::new(format!("{base}.csv"), t.csv("train\\test")));
                    out.push(Artifact::new(
                        format!("{base}.svg"),
                        heatmap(
                            &format!("{mode} {} (rows: train subject, columns: test subject)", name.to_uppercase()),
                            &t.rows,
                            &t.cols,
                            &t.values,
                            Some(&t.stds),
                            &[],
                        ),
                    ));
                }
            }
        }
    }
    Ok(out)
}
