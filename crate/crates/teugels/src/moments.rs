//! Moment functionals of the jump measure and the batch table feeding the
//! inner products and compensators.
//!
//! Convention: for |p| >= 2 the entry is the pure jump integral of x^p over
//! the (truncated) measure; for p = e_i it is the expectation rate of the
//! full coordinate process, drift included. The compensator drift of a
//! first-order Teugels martingale is recovered as drift - rate, which equals
//! minus the jump integral of x_i.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_model::{LevyModel, MomentMethod};
use crate::multiindex::{enumerate_up_to, MultiIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub value: f64,
    pub method: MomentMethod,
    pub error_bound: f64,
}

/// One moment functional m_p of the model.
pub fn moment(model: &LevyModel, p: &MultiIndex) -> Result<MomentEntry> {
    if p.len() != model.dim() {
        return Err(Error::Dimension("moment index dimension mismatch".into()));
    }
    if let Some(i) = p.as_unit() {
        let (jump, method, err) = model.jump_moment(p)?;
        return Ok(MomentEntry {
            value: model.drift()[i] + jump,
            method,
            error_bound: err,
        });
    }
    let (value, method, error_bound) = model.jump_moment(p)?;
    Ok(MomentEntry {
        value,
        method,
        error_bound,
    })
}

/// Cache of moment functionals, keyed in graded-lex order.
#[derive(Debug, Clone)]
pub struct MomentTable {
    dim: usize,
    coverage: u32,
    drift: Vec<f64>,
    entries: BTreeMap<MultiIndex, MomentEntry>,
    fingerprint: u64,
}

/// Build the table for all 1 <= |p| <= 2 * max_degree (inner products need
/// degree sums). Entries are computed independently in parallel; the result
/// is identical for any worker count.
pub fn moment_table(model: &LevyModel, max_degree: u32) -> Result<MomentTable> {
    if max_degree < 1 {
        return Err(Error::Parameter("max_degree must be >= 1".into()));
    }
    let coverage = 2 * max_degree;
    let indices = enumerate_up_to(model.dim(), coverage)?;
    let computed: Vec<(MultiIndex, Result<MomentEntry>)> = indices
        .into_par_iter()
        .map(|p| {
            let e = moment(model, &p);
            (p, e)
        })
        .collect();
    let mut entries = BTreeMap::new();
    for (p, e) in computed {
        let entry = e.map_err(|err| Error::Numeric(format!("moment m_{p} failed: {err}")))?;
        entries.insert(p, entry);
    }
    Ok(MomentTable {
        dim: model.dim(),
        coverage,
        drift: model.drift().to_vec(),
        entries,
        fingerprint: model.fingerprint(),
    })
}

impl MomentTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest total degree present.
    pub fn coverage(&self) -> u32 {
        self.coverage
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, p: &MultiIndex) -> Result<&MomentEntry> {
        self.entries.get(p).ok_or_else(|| {
            Error::Coverage(format!(
                "moment m_{p} (degree {}) not in table covering degree {}",
                p.degree(),
                self.coverage
            ))
        })
    }

    pub fn value(&self, p: &MultiIndex) -> Result<f64> {
        Ok(self.get(p)?.value)
    }

    /// Compensator drift rate of dY^p: minus the jump integral of x^p. For
    /// first-order indices this is drift_i - m_{e_i}.
    pub fn compensator_rate(&self, p: &MultiIndex) -> Result<f64> {
        let v = self.value(p)?;
        if let Some(i) = p.as_unit() {
            Ok(self.drift[i] - v)
        } else {
            Ok(-v)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &MomentEntry)> {
        self.entries.iter()
    }

    /// CSV export: index (JSON array string), value, method, error_bound.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,value,method,error_bound")?;
        for (p, e) in &self.entries {
            let idx = serde_json::to_string(p).expect("index serializes");
            let method = match e.method {
                MomentMethod::ExactSum => "exact-sum".to_string(),
                MomentMethod::Series { k_max } => format!("series(k_max={k_max})"),
                MomentMethod::Quadrature => "quadrature".to_string(),
            };
            writeln!(w, "\"{}\",{:.17e},{},{:.3e}", idx, e.value, method, e.error_bound)?;
        }
        Ok(())
    }
}
