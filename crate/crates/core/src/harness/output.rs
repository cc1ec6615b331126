//! CSV outputs of a campaign.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::campaign::CampaignReport;
use crate::Result;

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `campaign.csv`, `runs/<seed>.csv` and `summary.csv` under `dir`.
pub fn write_campaign(dir: impl AsRef<Path>, report: &CampaignReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("runs"))?;

    let mut w = BufWriter::new(fs::File::create(dir.join("campaign.csv"))?);
    writeln!(w, "time_s,rms_error_m,n_live_runs")?;
    for ((t, r), n) in report.times.iter().zip(&report.rms).zip(&report.n_live) {
        writeln!(w, "{},{},{n}", format_float(*t), format_float(*r))?;
    }
    w.flush()?;

    for run in report.runs.iter().filter_map(|r| r.report()) {
        let mut w = BufWriter::new(fs::File::create(dir.join("runs").join(format!("{}.csv", run.seed)))?);
        writeln!(w, "time_s,error_m,aided_flag")?;
        for ((t, e), a) in run.times.iter().zip(&run.errors).zip(&run.aided) {
            writeln!(w, "{},{},{}", format_float(*t), format_float(*e), u8::from(*a))?;
        }
        w.flush()?;
    }

    let mut w = BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    writeln!(w, "mean_error_m,divergence_rate,config_hash")?;
    writeln!(w, "{},{},{}", format_float(report.mean_error), format_float(report.divergence_rate), report.config_hash)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 12345.678901234567, 1e-300] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }
}
