//! Error norms, observed rates and Richardson comparisons across grid ladders.

pub mod studies;

use std::fmt;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::CutCellGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("field lengths differ: {0} vs {1}")]
    Mismatch(usize, usize),
    #[error("observed rate undefined: {0}")]
    Rate(String),
    #[error("grids are not a 2:1 refinement pair")]
    NotNested,
    #[error("no coarse cell has four valid children")]
    NothingComparable,
}

/// Unweighted `L1`, `L2`, `L∞` norms over valid cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NormTriple {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl NormTriple {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return NormTriple::default();
        }
        let n = values.len() as f64;
        NormTriple {
            l1: values.iter().map(|v| v.abs()).sum::<f64>() / n,
            l2: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            linf: values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.linf]
    }

    /// Componentwise `self <= other + tol`.
    pub fn le(&self, other: &NormTriple, tol: f64) -> bool {
        self.as_array().iter().zip(other.as_array()).all(|(a, b)| *a <= b + tol)
    }
}

impl fmt::Display for NormTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L1 {:.3e}  L2 {:.3e}  Linf {:.3e}", self.l1, self.l2, self.linf)
    }
}

pub fn error_norms(field: &[f64], exact: &[f64]) -> Result<NormTriple, VerifyError> {
    if field.len() != exact.len() {
        return Err(VerifyError::Mismatch(field.len(), exact.len()));
    }
    let e: Vec<f64> = field.iter().zip(exact).map(|(a, b)| a - b).collect();
    Ok(NormTriple::of(&e))
}

/// `log_r(e_coarse / e_fine)`.
pub fn observed_rate(coarse: f64, fine: f64, r: f64) -> Result<f64, VerifyError> {
    if !(coarse > 0.0 && fine > 0.0) {
        return Err(VerifyError::Rate(format!("norms {coarse:e} and {fine:e} must be positive")));
    }
    if !(r > 1.0) {
        return Err(VerifyError::Rate(format!("refinement ratio {r} must exceed 1")));
    }
    Ok((coarse / fine).ln() / r.ln())
}

pub fn observed_rates(coarse: &NormTriple, fine: &NormTriple, r: f64) -> Result<[f64; 3], VerifyError> {
    let (c, f) = (coarse.as_array(), fine.as_array());
    Ok([
        observed_rate(c[0], f[0], r)?,
        observed_rate(c[1], f[1], r)?,
        observed_rate(c[2], f[2], r)?,
    ])
}

/// Volume-weighted average of the four children of every coarse valid cell;
/// `None` where a child is invalid.
pub fn restrict(fine: &CutCellGrid, field: &[f64], coarse: &CutCellGrid) -> Result<Vec<Option<f64>>, VerifyError> {
    let (fs, cs) = (&fine.spec, &coarse.spec);
    let nested = fs.nx == 2 * cs.nx
        && fs.ny == 2 * cs.ny
        && (fs.h * 2.0 - cs.h).abs() <= 1e-14 * cs.h
        && (fs.origin[0] - cs.origin[0]).abs() <= 1e-14
        && (fs.origin[1] - cs.origin[1]).abs() <= 1e-14;
    if !nested {
        return Err(VerifyError::NotNested);
    }
    if field.len() != fine.num_valid() {
        return Err(VerifyError::Mismatch(field.len(), fine.num_valid()));
    }
    Ok(coarse
        .cells()
        .iter()
        .map(|c| {
            let [i, j] = c.ij.map(|k| 2 * k as isize);
            let mut num = 0.0;
            let mut den = 0.0;
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let v = fine.cell_at(i + di, j + dj)?;
                let vol = fine.cell(v).volume;
                num += vol * field[v];
                den += vol;
            }
            Some(num / den)
        })
        .collect())
}

/// Differences `R(u_fine) - u_coarse` on comparable coarse cells.
pub fn restricted_difference(
    coarse: &CutCellGrid,
    u_coarse: &[f64],
    fine: &CutCellGrid,
    u_fine: &[f64],
) -> Result<(Vec<f64>, usize), VerifyError> {
    let r = restrict(fine, u_fine, coarse)?;
    let mut diff = Vec::new();
    let mut excluded = 0;
    for (uc, rf) in u_coarse.iter().zip(r) {
        match rf {
            Some(v) => diff.push(v - uc),
            None => excluded += 1,
        }
    }
    if diff.is_empty() {
        return Err(VerifyError::NothingComparable);
    }
    Ok((diff, excluded))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub norms: NormTriple,
    pub rates: Option<[f64; 3]>,
}

/// Norms per level and the rates between consecutive rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub ratio: f64,
    pub rows: Vec<TableRow>,
}

impl ConvergenceTable {
    pub fn new(ratio: f64) -> Self {
        ConvergenceTable { ratio, rows: Vec::new() }
    }

    /// Append a level; the rate is computed against the previous row when both are positive.
    pub fn push(&mut self, n: usize, norms: NormTriple) {
        let rates = self
            .rows
            .last()
            .and_then(|prev| observed_rates(&prev.norms, &norms, self.ratio).ok());
        self.rows.push(TableRow { n, norms, rates });
    }

    /// Rates of the last row.
    pub fn final_rates(&self) -> Option<[f64; 3]> {
        self.rows.last().and_then(|r| r.rates)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "N,L1,rate1,L2,rate2,Linf,rateInf")?;
        for row in &self.rows {
            let r = |k: usize| row.rates.map(|r| format!("{:.3}", r[k])).unwrap_or_default();
            writeln!(
                w,
                "{},{:.3e},{},{:.3e},{},{:.3e},{}",
                row.n,
                row.norms.l1,
                r(0),
                row.norms.l2,
                r(1),
                row.norms.linf,
                r(2)
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7}", "N", "L1", "rate", "L2", "rate", "Linf", "rate")?;
        for row in &self.rows {
            let r = |k: usize| row.rates.map(|r| format!("{:.3}", r[k])).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:>6} {:>11.3e} {:>7} {:>11.3e} {:>7} {:>11.3e} {:>7}",
                row.n,
                row.norms.l1,
                r(0),
                row.norms.l2,
                r(1),
                row.norms.linf,
                r(2)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cases::Circle;
    use crate::geometry::{GridOptions, GridSpec};
    use std::sync::Arc;

    #[test]
    fn norms_of_simple_vectors() {
        assert_eq!(NormTriple::of(&[0.0; 5]), NormTriple::default());
        let c = NormTriple::of(&[-2.0; 7]);
        assert!((c.l1 - 2.0).abs() < 1e-15 && (c.l2 - 2.0).abs() < 1e-15 && c.linf == 2.0);
        let e = error_norms(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap();
        assert_eq!((e.l1, e.l2, e.linf), (0.25, 0.5, 1.0));
        assert!(error_norms(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rates_reproduce_reference_table() {
        // tabulated norms carry four digits, so rates agree to about 1e-3
        let r = observed_rate(3.676e-7, 1.421e-8, 2.0).unwrap();
        assert!((r - 4.693).abs() < 1e-3, "{r}");
        let r = observed_rate(9.529e-10, 5.467e-11, 2.0).unwrap();
        assert!((r - 4.123).abs() < 1e-3, "{r}");
        assert_eq!(observed_rate(1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!(observed_rate(1.0, 0.0, 2.0).is_err());
    }

    fn disk(n: usize) -> CutCellGrid {
        CutCellGrid::build(Arc::new(Circle::inside([0.5, 0.5], 0.3)), GridSpec::unit_square(n), &GridOptions::default()).unwrap()
    }

    #[test]
    fn restriction_conserves_and_reproduces_linear_fields() {
        let (c, f) = (disk(16), disk(32));
        let uf = f.cell_averages(|x| 2.0 * x[0] - x[1] + 0.5);
        let uc = c.cell_averages(|x| 2.0 * x[0] - x[1] + 0.5);
        let (d, excluded) = restricted_difference(&c, &uc, &f, &uf).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-13));
        assert!(excluded > 0);
        let r = restrict(&f, &uf, &c).unwrap();
        for (v, rv) in r.iter().enumerate() {
            if let Some(rv) = rv {
                let [i, j] = c.cell(v).ij.map(|k| 2 * k as isize);
                let children: f64 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .iter()
                    .map(|(a, b)| {
                        let k = f.cell_at(i + a, j + b).unwrap();
                        f.cell(k).volume * uf[k]
                    })
                    .sum();
                assert!((rv * c.cell(v).volume - children).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn synthetic_fourth_order_error_is_recovered() {
        let mut table = ConvergenceTable::new(2.0);
        for n in [16usize, 32, 64] {
            let h = 1.0 / n as f64;
            let err: Vec<f64> = (0..10).map(|k| 3.0 * h.powi(4) * (1.0 + k as f64)).collect();
            table.push(n, NormTriple::of(&err));
        }
        let r = table.final_rates().unwrap();
        assert!(r.iter().all(|v| (v - 4.0).abs() < 0.01));
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("N,L1,rate1"));
    }
}
