use std::io::{Read, Write};

use crate::{Error, Result};

/// Trajectory of one stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// `states[t]` for `t = 0..=T`.
    pub states: Vec<Vec<f64>>,
    /// `controls[t]` for `t = 0..T`.
    pub controls: Vec<Vec<f64>>,
    /// Own noisy readings `y^{i,i}` for `t = 0..T`.
    pub own_readings: Vec<Vec<f64>>,
}

impl SimTrace {
    pub(crate) fn start(x0: &[f64]) -> Self {
        Self { states: vec![x0.to_vec()], controls: Vec::new(), own_readings: Vec::new() }
    }

    pub(crate) fn record(&mut self, step: super::StepRecord, next: &[f64]) {
        self.controls.push(step.u);
        self.own_readings.push(step.y_self);
        self.states.push(next.to_vec());
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace holds the initial state")
    }

    /// `sqrt(sum_i (x_t^i - x*)^2 / n)` for every `t`.
    pub fn residuals(&self, x_star: f64) -> Vec<f64> {
        self.states
            .iter()
            .map(|x| (x.iter().map(|v| (v - x_star).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
            .collect()
    }

    /// CSV with columns `t,agent,x,u,y_self`; the final state has empty `u` and `y_self`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "agent", "x", "u", "y_self"])?;
        for (t, x) in self.states.iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                let (u, y) = match (self.controls.get(t), self.own_readings.get(t)) {
                    (Some(u), Some(y)) => (fmt_f64(u[i]), fmt_f64(y[i])),
                    _ => (String::new(), String::new()),
                };
                out.write_record([t.to_string(), i.to_string(), fmt_f64(*xi), u, y])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let mut states: Vec<Vec<f64>> = Vec::new();
        let mut controls: Vec<Vec<f64>> = Vec::new();
        let mut own: Vec<Vec<f64>> = Vec::new();
        for (row, rec) in input.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let field = |k: usize| rec.get(k).ok_or_else(|| Error::Parse { line, msg: format!("missing column {k}") });
            let t: usize = parse(field(0)?, line)?;
            let agent: usize = parse(field(1)?, line)?;
            if t == states.len() {
                states.push(Vec::new());
            }
            if t + 1 != states.len() || agent != states[t].len() {
                return Err(Error::Parse { line, msg: format!("rows out of order at t={t}, agent={agent}") });
            }
            states[t].push(parse(field(2)?, line)?);
            let (u, y) = (field(3)?, field(4)?);
            if !u.is_empty() {
                if agent == 0 {
                    controls.push(Vec::new());
                    own.push(Vec::new());
                }
                controls[t].push(parse(u, line)?);
                own[t].push(parse(y, line)?);
            }
        }
        if states.is_empty() {
            return Err(Error::Parse { line: 1, msg: "empty trace".into() });
        }
        Ok(Self { states, controls, own_readings: own })
    }
}

/// Shortest-round-trip-safe scientific notation (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse {s:?}") })
}
