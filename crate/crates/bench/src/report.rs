//! CSV report writers. CSV is the contract; formatting is fixed so identical
//! runs produce byte-identical files.

use std::fs;
use std::path::Path;

use tamp_core::learn::CurvePoint;

#[derive(Debug, Clone)]
pub struct TableRow {
    pub setting: String,
    pub system: String,
    pub solve_pct: f64,
    pub train_iters_to50: Option<u64>,
    pub search_effort: Option<f64>,
    pub train_hours: Option<f64>,
}

pub const TABLE_HEADER: &str = "Setting,System,SolvePct,TrainItersTo50,SearchEffort,TrainHours";

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let iters = r.train_iters_to50.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        let effort = r.search_effort.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
        let hours = r.train_hours.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        out.push_str(&format!("{},{},{:.1},{},{},{}\n", r.setting, r.system, r.solve_pct, iters, effort, hours));
    }
    out
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, table_csv(rows))?;
    Ok(())
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("iteration,evalSolvePct\n");
    for p in curve {
        out.push_str(&format!("{},{:.1}\n", p.iter, p.eval_solve_pct));
    }
    out
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, curve_csv(curve))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_header_and_missing_values() {
        let rows = vec![
            TableRow {
                setting: "3 obj.".into(),
                system: "random".into(),
                solve_pct: 24.0,
                train_iters_to50: None,
                search_effort: Some(52.2),
                train_hours: None,
            },
            TableRow {
                setting: "3 obj.".into(),
                system: "meta-ad".into(),
                solve_pct: 100.0,
                train_iters_to50: Some(500),
                search_effort: Some(2.5),
                train_hours: Some(4.3),
            },
        ];
        let csv = table_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "Setting,System,SolvePct,TrainItersTo50,SearchEffort,TrainHours");
        assert_eq!(lines.next().unwrap(), "3 obj.,random,24.0,n/a,52.20,n/a");
        assert_eq!(lines.next().unwrap(), "3 obj.,meta-ad,100.0,500,2.50,4.3000");
    }

    #[test]
    fn curve_rows_are_monotone_in_iteration() {
        let curve = vec![
            CurvePoint { iter: 0, eval_solve_pct: 5.0 },
            CurvePoint { iter: 50, eval_solve_pct: 40.0 },
            CurvePoint { iter: 100, eval_solve_pct: 60.0 },
        ];
        let csv = curve_csv(&curve);
        let iters: Vec<u64> =
            csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(iters.windows(2).all(|w| w[0] < w[1]));
        assert!(csv.starts_with("iteration,evalSolvePct\n"));
    }
}
