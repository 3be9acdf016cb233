//! CSV emitters with fixed headers and 17-significant-digit numbers.

use std::fmt::Write as _;

use metaopt_core::analysis::TraceRow;
use metaopt_core::baselines::TuneReport;
use metaopt_core::meta::{HistoryRow, LossCurve, SearchTrial};

/// Scientific notation with 17 significant digits, `inf`, `-inf` or `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Steps `1..=steps` of every named curve.
pub fn curves(named: &[(String, LossCurve)]) -> String {
    let mut out = String::from("name,step,mean,q25,q75,diverged\n");
    for (name, curve) in named {
        for p in &curve.points[1..] {
            let _ = writeln!(out, "{name},{},{},{},{},{}", p.step, num(p.mean), num(p.q25), num(p.q75), p.diverged);
        }
    }
    out
}

pub fn tuning(named: &[(String, TuneReport)]) -> String {
    let mut out = String::from("name,kind,rate,mean_final_loss,diverged,selected\n");
    for (name, report) in named {
        for s in &report.scores {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{}",
                report.kind.name(),
                num(s.rate),
                num(s.mean_final_loss),
                s.diverged,
                u8::from(s.rate == report.best_rate)
            );
        }
    }
    out
}

pub fn history(rows: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,meta_iteration,train_loss,validation_loss,diverged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            r.meta_iterations,
            num(r.train_loss),
            num(r.validation_loss),
            r.diverged
        );
    }
    out
}

pub fn search(trials: &[SearchTrial]) -> String {
    let mut out = String::from("trial,meta_learning_rate,best_validation\n");
    for (i, t) in trials.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", num(t.meta_learning_rate), num(t.best_validation));
    }
    out
}

/// `names` label the update columns in the order of `TraceRow::updates`.
pub fn trace(names: &[String], rows: &[TraceRow]) -> String {
    let mut out = String::from("coord,step,grad");
    for n in names {
        let _ = write!(out, ",upd_{n}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.coord, r.step, num(r.grad));
        for &u in &r.updates {
            let _ = write!(out, ",{}", num(u));
        }
        out.push('\n');
    }
    out
}

pub fn sweep(points: &[(f64, f64)]) -> String {
    let mut out = String::from("grad,update\n");
    for &(g, u) in points {
        let _ = writeln!(out, "{},{}", num(g), num(u));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(f64::NAN), "nan");
    }
}
