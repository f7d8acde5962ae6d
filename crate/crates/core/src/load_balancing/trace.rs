use std::io::{Read, Write};

use super::{metrics, LbMode};
use crate::consensus::trace_fmt as fmt_f64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbMetrics {
    /// `sqrt(sum_i (x_i - x*)^2 / n)`.
    pub err: f64,
    /// `max_i |x_i - mean load|`.
    pub d_abs: f64,
    /// `max_i q_i / p_i`.
    pub completion: f64,
}

/// Trajectory of one load-balancing run. Queues have `T + 1` rows, the
/// per-step quantities `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LbTrace {
    pub mode: LbMode,
    pub redistribute: bool,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Capacity left unused because the queue ran dry.
    pub idle: Vec<Vec<f64>>,
}

impl LbTrace {
    pub(super) fn new(mode: LbMode, redistribute: bool, q0: Vec<f64>) -> Self {
        Self { mode, redistribute, q: vec![q0], p: Vec::new(), z: Vec::new(), u: Vec::new(), idle: Vec::new() }
    }

    pub(super) fn push(&mut self, p: Vec<f64>, z: Vec<f64>, u: Vec<f64>, idle: Vec<f64>, next: Vec<f64>) {
        self.p.push(p);
        self.z.push(z);
        self.u.push(u);
        self.idle.push(idle);
        self.q.push(next);
    }

    pub fn horizon(&self) -> usize {
        self.p.len()
    }

    /// Productivity in force at row `t` of `q` (the last step's value for the final row).
    fn p_at(&self, t: usize) -> &[f64] {
        &self.p[t.min(self.p.len().saturating_sub(1))]
    }

    /// Metrics for every row of `q`.
    pub fn metrics(&self, x_star: Option<f64>) -> Vec<LbMetrics> {
        if self.p.is_empty() {
            return Vec::new();
        }
        (0..self.q.len()).map(|t| metrics(&self.q[t], self.p_at(t), x_star)).collect()
    }

    /// Mean queue length per step.
    pub fn mean_queue(&self) -> Vec<f64> {
        self.q.iter().map(|q| q.iter().sum::<f64>() / q.len() as f64).collect()
    }

    /// CSV with columns `t,agent,q,p,load,z,u,mode`. The final row carries the
    /// last productivity and empty `z`, `u`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "agent", "q", "p", "load", "z", "u", "mode"])?;
        if self.p.is_empty() {
            out.flush()?;
            return Ok(());
        }
        let mode = if self.redistribute { self.mode.as_str() } else { "none" };
        for (t, q) in self.q.iter().enumerate() {
            let p = self.p_at(t);
            for (i, qi) in q.iter().enumerate() {
                let (z, u) = match (self.z.get(t), self.u.get(t)) {
                    (Some(z), Some(u)) => (fmt_f64(z[i]), fmt_f64(u[i])),
                    _ => (String::new(), String::new()),
                };
                out.write_record([
                    t.to_string(),
                    i.to_string(),
                    fmt_f64(*qi),
                    fmt_f64(p[i]),
                    fmt_f64(qi / p[i]),
                    z,
                    u,
                    mode.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`LbTrace::write_csv`]; idle capacity is recomputed.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let mut trace = LbTrace::new(LbMode::Transfer, true, Vec::new());
        trace.q.clear();
        let mut p_rows: Vec<Vec<f64>> = Vec::new();
        for (row, rec) in input.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let get = |k: usize| rec.get(k).ok_or_else(|| Error::Parse { line, msg: format!("missing column {k}") });
            let num = |k: usize| -> Result<f64> {
                get(k)?.parse().map_err(|_| Error::Parse { line, msg: format!("bad number in column {k}") })
            };
            let t: usize = get(0)?.parse().map_err(|_| Error::Parse { line, msg: "bad step".into() })?;
            let agent: usize = get(1)?.parse().map_err(|_| Error::Parse { line, msg: "bad agent".into() })?;
            (trace.mode, trace.redistribute) = match get(7)? {
                "state" => (LbMode::State, true),
                "transfer" => (LbMode::Transfer, true),
                "none" => (trace.mode, false),
                other => return Err(Error::Parse { line, msg: format!("unknown mode {other:?}") }),
            };
            if agent == 0 {
                trace.q.push(Vec::new());
                p_rows.push(Vec::new());
            }
            if t + 1 != trace.q.len() || agent != trace.q[t].len() {
                return Err(Error::Parse { line, msg: format!("rows out of order at t={t}, agent={agent}") });
            }
            trace.q[t].push(num(2)?);
            p_rows[t].push(num(3)?);
            if !get(5)?.is_empty() {
                if agent == 0 {
                    trace.z.push(Vec::new());
                    trace.u.push(Vec::new());
                }
                trace.z[t].push(num(5)?);
                trace.u[t].push(num(6)?);
            }
        }
        p_rows.truncate(trace.z.len());
        trace.p = p_rows;
        trace.idle = (0..trace.z.len())
            .map(|t| super::queue_step(&trace.q[t], &trace.p[t], &trace.z[t], &trace.u[t]).1)
            .collect();
        Ok(trace)
    }
}

/// CSV with columns `t,err,d_abs,completion,arm`.
pub fn write_metrics_csv<W: Write>(w: W, arms: &[(&str, &[LbMetrics])]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "err", "d_abs", "completion", "arm"])?;
    for (arm, rows) in arms {
        for (t, m) in rows.iter().enumerate() {
            out.write_record([
                t.to_string(),
                fmt_f64(m.err),
                fmt_f64(m.d_abs),
                fmt_f64(m.completion),
                arm.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut tr = LbTrace::new(LbMode::State, true, vec![4.0, 0.0]);
        tr.push(vec![1.0, 2.0], vec![0.5, 0.0], vec![-1.0, 1.0], vec![0.0, 0.0], vec![2.5, 0.0]);
        tr.push(vec![1.0, 2.0], vec![0.0, 1.0 / 3.0], vec![0.25, -0.25], vec![0.0, 0.0], vec![1.75, 0.0]);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = LbTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.q, tr.q);
        assert_eq!(back.p, tr.p);
        assert_eq!(back.z, tr.z);
        assert_eq!(back.u, tr.u);
        assert_eq!(back.mode, LbMode::State);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn metrics_csv_layout() {
        let m = [LbMetrics { err: 1.0, d_abs: 0.5, completion: 2.0 }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[("with", &m), ("without", &m)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with(",without"));
    }
}
