//! Error norms for comparing predictions against a reference field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::InputShape { expected: truth.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Precondition("error norms need at least one sample".into()));
    }
    Ok(())
}

/// Relative ℓ₂ error ‖pred − truth‖₂ / ‖truth‖₂.
pub fn rel_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    let den: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Precondition("reference field has zero norm".into()));
    }
    Ok(num / den)
}

/// Relative ℓ₁ error Σ|pred − truth| / Σ|truth|.
pub fn rel_l1(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    let den: f64 = truth.iter().map(|t| t.abs()).sum();
    if den == 0.0 {
        return Err(Error::Precondition("reference field has zero norm".into()));
    }
    Ok(num / den)
}

/// Absolute ℓ∞ error max|pred − truth|.
pub fn linf(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub rel_l2: f64,
    pub rel_l1: f64,
    pub linf: f64,
}

pub fn error_triple(pred: &[f64], truth: &[f64]) -> Result<ErrorTriple> {
    Ok(ErrorTriple {
        rel_l2: rel_l2(pred, truth)?,
        rel_l1: rel_l1(pred, truth)?,
        linf: linf(pred, truth)?,
    })
}

// Row labels of the strategy-comparison table: two relative norms and the
// absolute sup-norm, in this order.
const TABLE_ROWS: [(&str, fn(&ErrorTriple) -> f64); 3] = [
    ("Relative l2", |t| t.rel_l2),
    ("Relative l1", |t| t.rel_l1),
    ("linf-norm", |t| t.linf),
];

fn check_table(labels: &[String], triples: &[ErrorTriple]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Precondition("comparison table needs at least one column".into()));
    }
    if labels.len() != triples.len() {
        return Err(Error::InputShape { expected: labels.len(), got: triples.len() });
    }
    Ok(())
}

/// Strategy-comparison table as Markdown: corner cell names the problem,
/// one column per strategy, three error rows. Cells use two-digit mantissas
/// (`9.90e-1`); the CSV twin keeps full precision.
pub fn comparison_table_markdown(
    corner: &str,
    labels: &[String],
    triples: &[ErrorTriple],
) -> Result<String> {
    check_table(labels, triples)?;
    let mut out = format!("| {corner} |");
    for l in labels {
        out.push_str(&format!(" {l} |"));
    }
    out.push('\n');
    out.push_str(&"| --- ".repeat(labels.len() + 1));
    out.push_str("|\n");
    for (name, get) in TABLE_ROWS {
        out.push_str(&format!("| {name} |"));
        for t in triples {
            out.push_str(&format!(" {:.2e} |", get(t)));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Same table as CSV with full-precision values, so downstream checks can
/// recompute the norms exactly.
pub fn comparison_table_csv(
    corner: &str,
    labels: &[String],
    triples: &[ErrorTriple],
) -> Result<String> {
    check_table(labels, triples)?;
    let mut out = String::from(corner);
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (name, get) in TABLE_ROWS {
        out.push_str(name);
        for t in triples {
            out.push_str(&format!(",{}", get(t)));
        }
        out.push('\n');
    }
    Ok(out)
}
