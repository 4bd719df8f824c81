//! CSV and plot-script emission. Every CSV opens with a `#` provenance line
//! (tool version, seed, parameters as JSON) followed by a header row.
//! Floats use Rust's shortest round-trip formatting, so equal inputs give
//! byte-identical files.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::{ConvergenceReport, LyapunovEntry, MarginalReport};
use crate::trajectory::{DensityTable, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Provenance {
    pub seed: u64,
    pub params: serde_json::Value,
}

impl Provenance {
    pub fn new(seed: u64, params: &impl Serialize) -> Self {
        let params = serde_json::to_value(params).unwrap_or(serde_json::Value::Null);
        Provenance { seed, params }
    }

    pub fn line(&self) -> String {
        format!("# qtorus {VERSION} seed={} params={}", self.seed, self.params)
    }
}

pub fn write_trajectories<W: Write>(w: &mut W, prov: &Provenance, trajectories: &[Trajectory]) -> io::Result<()> {
    writeln!(w, "{}", prov.line())?;
    writeln!(w, "trial,step,q")?;
    for t in trajectories {
        for (step, q) in t.q.iter().enumerate() {
            writeln!(w, "{},{step},{q}", t.trial_seed)?;
        }
    }
    Ok(())
}

pub fn write_marginals<W: Write>(w: &mut W, prov: &Provenance, reports: &[MarginalReport]) -> io::Result<()> {
    writeln!(w, "{}", prov.line())?;
    writeln!(w, "step,bin,bin_center,density,classical_density,tv,trials")?;
    for r in reports {
        let bins = r.histogram.bins();
        for b in 0..bins {
            let center = (b as f64 + 0.5) / bins as f64;
            writeln!(
                w,
                "{},{b},{center},{},{},{},{}",
                r.step,
                r.histogram.densities()[b],
                r.classical.densities()[b],
                r.tv_vs_classical,
                r.trials
            )?;
        }
    }
    Ok(())
}

pub fn write_convergence<W: Write>(w: &mut W, prov: &Provenance, report: &ConvergenceReport) -> io::Result<()> {
    writeln!(w, "{}", prov.line())?;
    writeln!(w, "N,step,tv,noise_tv,ehrenfest,trials,seed")?;
    for (i, n) in report.n_values.iter().enumerate() {
        for (step, tv) in report.tv[i].iter().enumerate() {
            writeln!(w, "{n},{step},{tv},{},{},{},{}", report.noise_tv[i][step], report.ehrenfest[i], report.trials, report.seed)?;
        }
    }
    Ok(())
}

pub fn write_lyapunov<W: Write>(w: &mut W, prov: &Provenance, entries: &[LyapunovEntry]) -> io::Result<()> {
    writeln!(w, "{}", prov.line())?;
    writeln!(w, "a,b,c,d,gamma,ehrenfest,step,tv,breakdown_step,censored")?;
    for e in entries {
        let [a, b, c, d] = e.matrix.entries();
        for r in &e.reports {
            writeln!(
                w,
                "{a},{b},{c},{d},{},{},{},{},{},{}",
                e.gamma, e.ehrenfest, r.step, r.tv_vs_classical, e.breakdown.step, e.breakdown.censored
            )?;
        }
    }
    Ok(())
}

/// One row per grid point: `q0[,q1,…],density`.
pub fn write_density<W: Write>(w: &mut W, prov: &Provenance, table: &DensityTable) -> io::Result<()> {
    writeln!(w, "{}", prov.line())?;
    let cols: Vec<String> = (0..=table.n_steps).map(|i| format!("q{i}")).collect();
    writeln!(w, "{},density", cols.join(","))?;
    let dims = table.n_steps + 1;
    for (flat, v) in table.values.iter().enumerate() {
        let mut idx = vec![0; dims];
        let mut rest = flat;
        for slot in idx.iter_mut().rev() {
            *slot = rest % table.q_count;
            rest /= table.q_count;
        }
        let coords: Vec<String> = idx.iter().map(|&i| table.point(i).to_string()).collect();
        writeln!(w, "{},{v}", coords.join(","))?;
    }
    Ok(())
}

/// gnuplot script drawing TV against N, one curve per step.
pub fn convergence_plot_script(csv_name: &str, report: &ConvergenceReport) -> String {
    let steps = report.tv.first().map_or(0, |r| r.len());
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset logscale x\nset xlabel 'N'\nset ylabel 'total variation'\nset key outside right\n");
    let curves: Vec<String> = (0..steps)
        .map(|k| format!("'{csv_name}' using ($2=={k} ? $1 : 1/0):3 with linespoints title 'step {k}'"))
        .collect();
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s
}

/// gnuplot script overlaying histograms and classical densities per step.
pub fn marginal_plot_script(csv_name: &str, steps: usize) -> String {
    let mut s = String::from("set datafile separator ','\nset xlabel 'q'\nset ylabel 'density'\n");
    s.push_str(&format!("set multiplot layout {},1\n", steps.max(1)));
    for k in 0..steps {
        s.push_str(&format!(
            "set title 'step {k}'\nplot '{csv_name}' using ($1=={k} ? $3 : 1/0):4 with boxes title 'quantum', '' using ($1=={k} ? $3 : 1/0):5 with lines title 'classical'\n"
        ));
    }
    s.push_str("unset multiplot\n");
    s
}

/// Plain-text summary of a marginal experiment.
pub fn marginal_summary(prov: &Provenance, reports: &[MarginalReport], gamma: f64, ehrenfest: f64) -> String {
    let mut s = format!("{}\nlyapunov {gamma}\nehrenfest {ehrenfest}\nstep tv noise_tv\n", prov.line());
    for r in reports {
        s.push_str(&format!("{} {:.4} {:.4}\n", r.step, r.tv_vs_classical, r.noise_tv));
    }
    s
}
