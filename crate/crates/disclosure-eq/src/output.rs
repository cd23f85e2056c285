//! CSV artifacts. Floats use Rust's shortest round-trip formatting.

use std::path::Path;

use anyhow::Result;
use disclosure_core::limit::{FrontierRow, PayoffCurves, Thresholds};
use disclosure_core::{EquilibriumOutcome, FiniteInstance};

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// One row per active type.
pub fn write_outcome(path: &Path, inst: &FiniteInstance, outcome: &EquilibriumOutcome) -> Result<()> {
    let ts = inst.types();
    let mut w = writer(path)?;
    let mut header: Vec<String> = (1..=ts.dim()).map(|d| format!("count_{d}")).collect();
    header.extend(["n", "posterior_mean", "payoff", "step", "is_message_min"].map(String::from));
    w.write_record(&header)?;
    for i in inst.active_indices() {
        let mut row: Vec<String> = ts.counts(i).iter().map(|c| c.to_string()).collect();
        row.push(ts.size_of(i).to_string());
        row.push(num(inst.y()[i]));
        row.push(num(outcome.payoff(i)));
        row.push(outcome.step_of(i).to_string());
        row.push(outcome.is_message(i).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pools(path: &Path, outcome: &EquilibriumOutcome) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "value", "n_members", "n_messages"])?;
    for s in &outcome.steps {
        w.write_record([s.index.to_string(), num(s.value), s.members.len().to_string(), s.messages.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves(path: &Path, curves: &PayoffCurves) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["state", "mu", "payoff", "segment_kind"])?;
    for (j, (pay, kind)) in curves.payoff.iter().zip(&curves.kind).enumerate() {
        for ((mu, u), k) in curves.mu.iter().zip(pay).zip(kind) {
            w.write_record([j.to_string(), num(*mu), num(*u), k.as_str().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_frontier(path: &Path, rows: &[FrontierRow], n_states: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["v".to_string()];
    header.extend((1..=n_states).map(|k| format!("mu_hat_{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![num(r.v)];
        row.extend(r.burden.iter().map(|&b| num(b)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A state's payoff is below its value under `z_star_star`, equal to it on
/// `[z_star_star, z_star]` and above it past `z_star`.
pub fn write_thresholds(path: &Path, thresholds: &[Thresholds]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["state", "z_star", "z_star_star"])?;
    for (j, t) in thresholds.iter().enumerate() {
        w.write_record([j.to_string(), num(t.high), num(t.low)])?;
    }
    w.flush()?;
    Ok(())
}
