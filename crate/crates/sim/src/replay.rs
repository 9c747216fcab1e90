//! Replay logs for semi-synthetic runs.
//!
//! CSV layout, one row per item, rows of a round sharing `t`:
//!
//! ```text
//! t,item_id,f1,...,fd,revenue[,chosen]
//! ```
//!
//! The optional `chosen` column marks the purchased item with 1 (all zeros
//! for no purchase) and is only needed to fit a ground-truth parameter.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use dpmnl_core::mle::{solve_with_noise, InteractionLog, MleError, SolverOptions};
use dpmnl_core::mnl::ModelParameter;
use nalgebra::{DMatrix, DVector};

use crate::SimError;

/// Ridge of the non-private ground-truth fit.
pub const FIT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRound {
    pub t: u64,
    pub item_ids: Vec<String>,
    /// `d × n`, one column per item.
    pub features: DMatrix<f64>,
    pub revenues: Vec<f64>,
    /// 0 for no purchase, `i + 1` for the `i`-th item of the round.
    pub chosen: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayData {
    dim: usize,
    rounds: Vec<ReplayRound>,
}

struct Row {
    item: String,
    x: Vec<f64>,
    revenue: f64,
    chosen: Option<bool>,
    line: u64,
}

impl ReplayData {
    pub fn new(dim: usize, rounds: Vec<ReplayRound>) -> Self {
        Self { dim, rounds }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rounds(&self) -> &[ReplayRound] {
        &self.rounds
    }

    pub fn has_choices(&self) -> bool {
        !self.rounds.is_empty() && self.rounds.iter().all(|r| r.chosen.is_some())
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let file = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| SimError::Replay(format!("line 1: {e}")))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        let with_chosen = cols.last() == Some(&"chosen");
        let fixed = if with_chosen { 4 } else { 3 };
        if cols.len() < fixed + 1 || cols[0] != "t" || cols[1] != "item_id" {
            return Err(SimError::Replay(
                "line 1: header must be t,item_id,f1..fd,revenue[,chosen]".into(),
            ));
        }
        let dim = cols.len() - fixed;
        for (j, c) in cols[2..2 + dim].iter().enumerate() {
            if *c != format!("f{}", j + 1) {
                return Err(SimError::Replay(format!("line 1: expected column f{}, found {c}", j + 1)));
            }
        }
        if cols[2 + dim] != "revenue" {
            return Err(SimError::Replay(format!("line 1: expected column revenue, found {}", cols[2 + dim])));
        }

        let mut groups: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                SimError::Replay(format!("line {line}: {e}"))
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).unwrap_or("");
            let parse = |i: usize| -> Result<f64, SimError> {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| SimError::Replay(format!("line {line}: bad number {:?} in column {}", field(i), cols[i])))
            };
            let t: u64 = field(0)
                .parse()
                .map_err(|_| SimError::Replay(format!("line {line}: bad round index {:?}", field(0))))?;
            let x = (0..dim).map(|j| parse(2 + j)).collect::<Result<Vec<_>, _>>()?;
            let revenue = parse(2 + dim)?;
            let chosen = if with_chosen {
                Some(match field(3 + dim) {
                    "1" => true,
                    "0" => false,
                    other => return Err(SimError::Replay(format!("line {line}: chosen must be 0 or 1, got {other:?}"))),
                })
            } else {
                None
            };
            groups.entry(t).or_default().push(Row {
                item: field(1).to_string(),
                x,
                revenue,
                chosen,
                line,
            });
        }
        if groups.is_empty() {
            return Err(SimError::Replay("replay file has no rows".into()));
        }

        let mut rounds = Vec::with_capacity(groups.len());
        for (t, rows) in groups {
            let line = rows[0].line;
            let n = rows.len();
            let features = DMatrix::from_fn(dim, n, |i, j| rows[j].x[i]);
            if features.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Replay(format!("line {line}: round {t} has non-finite features")));
            }
            let revenues: Vec<f64> = rows.iter().map(|r| r.revenue).collect();
            if revenues.iter().any(|r| !r.is_finite() || r.abs() > 1.0) {
                return Err(SimError::Replay(format!("line {line}: round {t} has a revenue outside [-1, 1]")));
            }
            let chosen = if with_chosen {
                let picks: Vec<usize> = rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.chosen == Some(true))
                    .map(|(i, _)| i + 1)
                    .collect();
                match picks.as_slice() {
                    [] => Some(0),
                    [p] => Some(*p),
                    _ => return Err(SimError::Replay(format!("line {line}: round {t} marks several chosen items"))),
                }
            } else {
                None
            };
            rounds.push(ReplayRound {
                t,
                item_ids: rows.into_iter().map(|r| r.item).collect(),
                features,
                revenues,
                chosen,
            });
        }
        Ok(Self { dim, rounds })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let with_chosen = self.has_choices();
        let mut header = vec!["t".to_string(), "item_id".to_string()];
        header.extend((1..=self.dim).map(|j| format!("f{j}")));
        header.push("revenue".into());
        if with_chosen {
            header.push("chosen".into());
        }
        w.write_record(&header).map_err(SimError::from)?;
        for r in &self.rounds {
            for (i, id) in r.item_ids.iter().enumerate() {
                let mut row = vec![r.t.to_string(), id.clone()];
                row.extend(r.features.column(i).iter().map(|v| format!("{v:.16e}")));
                row.push(format!("{:.16e}", r.revenues[i]));
                if with_chosen {
                    row.push(if r.chosen == Some(i + 1) { "1" } else { "0" }.into());
                }
                w.write_record(&row).map_err(SimError::from)?;
            }
        }
        w.flush().map_err(|e| SimError::Replay(e.to_string()))?;
        Ok(())
    }
}

/// Non-private MLE (ridge `10⁻⁶`, no perturbation) over every logged round,
/// treating all items of a round as the offered assortment.
pub fn fit_ground_truth(data: &ReplayData) -> Result<ModelParameter, SimError> {
    if data.rounds().is_empty() {
        return Err(SimError::Replay("replay file has no rounds".into()));
    }
    if !data.has_choices() {
        return Err(SimError::Replay("fitting needs a chosen column".into()));
    }
    let d = data.dim();
    let mut log = InteractionLog::new(d);
    for r in data.rounds() {
        let items: Vec<&[f64]> = (0..r.features.ncols())
            .map(|i| &r.features.as_slice()[i * d..(i + 1) * d])
            .collect();
        log.push_items(&items, r.chosen.unwrap_or(0))?;
    }
    let options = SolverOptions {
        max_iterations: 1000,
        ..SolverOptions::default()
    };
    match solve_with_noise(&log, FIT_RIDGE, DVector::zeros(d), None, &options) {
        Ok(r) => Ok(r.theta_hat),
        Err(MleError::NonConvergence { best, .. }) if best.is_finite() => Ok(best),
        Err(e) => Err(e.into()),
    }
}
