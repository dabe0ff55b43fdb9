//! Classical optimization of the banded-QFT phases, the improvement table
//! and the Grover reference curve.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqft::{AqftInstance, OverlapModel};
use crate::error::{Error, Result};
use crate::grover::reference_max_success;

/// Points per phase axis in the coarse scan.
pub const SCAN_POINTS: usize = 64;
/// Target phase resolution of the local refinement, in radians.
pub const PHASE_RESOLUTION: f64 = 1e-4;
/// Inputs used by the coarse scan on registers larger than this.
const SCAN_INPUTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_phases: Vec<f64>,
    pub best_value: f64,
    pub baseline_value: f64,
    /// `100 * (best - baseline) / baseline`
    pub improvement_percent: f64,
    pub evaluations: usize,
}

/// Maximizes the average trial pass probability over the band's phases.
///
/// A full grid scan ([`SCAN_POINTS`] per axis) locates the basin, then
/// golden-section search (one phase) or Nelder-Mead (two or three) refines
/// it on the exact objective. Deterministic.
pub fn optimize_phases(instance: &AqftInstance) -> Result<OptimizationResult> {
    let m = instance.band;
    if !(1..=3).contains(&m) {
        return Err(Error::Config(format!(
            "phase optimization supports bands 1..=3, got {m}"
        )));
    }
    let n = instance.n_qubits;
    let exact = OverlapModel::new(n, m)?;
    let scan = if exact.n_inputs() > SCAN_INPUTS {
        OverlapModel::strided(n, m, SCAN_INPUTS)?
    } else {
        exact.clone()
    };
    let standard = AqftInstance::standard(n, m)?.phases;
    let baseline_value = exact.average(&standard);
    let mut evaluations = 1;

    let step = TAU / SCAN_POINTS as f64;
    let total = SCAN_POINTS.pow(m as u32);
    let (best_idx, _) = (0..total)
        .into_par_iter()
        .map(|idx| (idx, scan.average(&grid_point(idx, m, step))))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                // lowest index wins ties so the result is schedule independent
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    evaluations += total;
    let start = grid_point(best_idx, m, step);

    let mut objective = |p: &[f64]| {
        evaluations += 1;
        exact.average(p)
    };
    let (mut best_phases, mut best_value) = if m == 1 {
        let (x, v) = golden_section_max(&mut |x| objective(&[x]), start[0] - step, start[0] + step);
        (vec![x], v)
    } else {
        nelder_mead_max(&mut objective, &start, step)
    };
    if best_value < baseline_value {
        best_phases = standard;
        best_value = baseline_value;
    }
    for p in best_phases.iter_mut() {
        *p = p.rem_euclid(TAU);
    }
    Ok(OptimizationResult {
        improvement_percent: 100.0 * (best_value - baseline_value) / baseline_value,
        best_phases,
        best_value,
        baseline_value,
        evaluations,
    })
}

fn grid_point(mut idx: usize, dims: usize, step: f64) -> Vec<f64> {
    let mut p = vec![0.0; dims];
    for d in (0..dims).rev() {
        p[d] = (idx % SCAN_POINTS) as f64 * step;
        idx /= SCAN_POINTS;
    }
    p
}

fn golden_section_max(f: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > PHASE_RESOLUTION {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn nelder_mead_max(f: &mut impl FnMut(&[f64]) -> f64, start: &[f64], step: f64) -> (Vec<f64>, f64) {
    let dims = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dims + 1);
    simplex.push((start.to_vec(), f(start)));
    for d in 0..dims {
        let mut p = start.to_vec();
        p[d] += step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    for _ in 0..10_000 {
        // best first
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if size < PHASE_RESOLUTION {
            break;
        }
        let centroid: Vec<f64> = (0..dims)
            .map(|d| simplex[..dims].iter().map(|(p, _)| p[d]).sum::<f64>() / dims as f64)
            .collect();
        let (worst, worst_v) = simplex[dims].clone();
        let reflected = combine(&centroid, &worst, -1.0);
        let rv = f(&reflected);
        if rv > simplex[0].1 {
            let expanded = combine(&centroid, &worst, -2.0);
            let ev = f(&expanded);
            simplex[dims] = if ev > rv {
                (expanded, ev)
            } else {
                (reflected, rv)
            };
        } else if rv > simplex[dims - 1].1 {
            simplex[dims] = (reflected, rv);
        } else {
            let contracted = if rv > worst_v {
                combine(&centroid, &reflected, 0.5)
            } else {
                combine(&centroid, &worst, 0.5)
            };
            let cv = f(&contracted);
            if cv > rv.max(worst_v) {
                simplex[dims] = (contracted, cv);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let p = combine(&best, &vertex.0, 0.5);
                    let v = f(&p);
                    *vertex = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex.swap_remove(0)
}

/// One cell of the improvement table; `result` is `None` where the band
/// exceeds the register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub n_qubits: usize,
    pub band: usize,
    pub result: Option<OptimizationResult>,
}

/// Optimizes every `(n, m)` combination, rows ordered by qubits then band.
pub fn improvement_table(qubits: &[usize], bands: &[usize]) -> Result<Vec<TableCell>> {
    let cells: Vec<(usize, usize)> = qubits
        .iter()
        .flat_map(|&n| bands.iter().map(move |&m| (n, m)))
        .collect();
    cells
        .into_par_iter()
        .map(|(n, m)| {
            let result = if m + 1 > n {
                None
            } else {
                Some(optimize_phases(&AqftInstance::standard(n, m)?)?)
            };
            Ok(TableCell {
                n_qubits: n,
                band: m,
                result,
            })
        })
        .collect()
}

pub fn write_table_csv<W: Write>(out: &mut W, table: &[TableCell]) -> Result<()> {
    let max_band = table.iter().map(|c| c.band).max().unwrap_or(0);
    writeln!(
        out,
        "# improvement_percent = 100 * (optimum - baseline) / baseline"
    )?;
    write!(out, "n_qubits,band,baseline,optimum,improvement_percent")?;
    for j in 1..=max_band {
        write!(out, ",phase_{j}")?;
    }
    writeln!(out)?;
    for cell in table {
        write!(out, "{},{}", cell.n_qubits, cell.band)?;
        match &cell.result {
            Some(r) => {
                write!(
                    out,
                    ",{},{},{}",
                    r.baseline_value, r.best_value, r.improvement_percent
                )?;
                for j in 0..max_band {
                    match r.best_phases.get(j) {
                        Some(p) => write!(out, ",{p}")?,
                        None => write!(out, ",")?,
                    }
                }
            }
            None => {
                write!(out, ",,,")?;
                for _ in 0..max_band {
                    write!(out, ",")?;
                }
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub n_elements: usize,
    pub v_ts: f64,
    pub max_success: f64,
}

/// `(V_ts, max success)` per register size, sorted by decreasing `V_ts`.
pub fn grover_reference_curve(n_elements: &[usize]) -> Result<Vec<ReferencePoint>> {
    let mut sizes = n_elements.to_vec();
    if let Some(&bad) = sizes.iter().find(|&&n| n < 2) {
        return Err(Error::Config(format!(
            "need at least 2 elements, got {bad}"
        )));
    }
    sizes.sort_unstable();
    sizes.dedup();
    Ok(sizes
        .into_iter()
        .map(|n| ReferencePoint {
            n_elements: n,
            v_ts: 1.0 / (n as f64).sqrt(),
            max_success: reference_max_success(n),
        })
        .collect())
}

pub fn write_reference_csv<W: Write>(out: &mut W, curve: &[ReferencePoint]) -> Result<()> {
    writeln!(out, "n_elements,v_ts,max_success")?;
    for p in curve {
        writeln!(out, "{},{},{}", p.n_elements, p.v_ts, p.max_success)?;
    }
    Ok(())
}
