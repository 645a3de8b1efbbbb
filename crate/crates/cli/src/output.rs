//! Bit-stable text outputs. Floats use `{:.16e}`, which round-trips `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use biot_core::assembly::permeability::PermeabilityModel;
use biot_core::diagnostics::{EnergyLedger, OperatorAuditRow, RatesTable, TemporalStudy};
use biot_core::mesh::TriMesh;
use biot_core::solver::{PicardReport, StepState, Trajectory};
use biot_core::spaces::Field;
use biot_core::VERSION;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), float)
}

/// `#` block with the version and every resolved setting.
pub fn header(command: &str, settings: &[(&str, String)]) -> String {
    let mut s = format!("# biotlab {VERSION}\n# command = {command}\n");
    for (k, v) in settings {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

pub fn energy_csv(head: &str, ledger: &EnergyLedger, holds: bool) -> String {
    let mut s = head.to_string();
    let _ = writeln!(s, "# bound_variant = {}", ledger.variant.name());
    for (k, v) in [
        ("f0_sq", ledger.f0_sq),
        ("ft_sq", ledger.ft_sq),
        ("df_sq", ledger.df_sq),
        ("source_sq", ledger.source_sq),
        ("initial_term", ledger.initial_term),
        ("d0_sq", ledger.d0_sq),
        ("growth", ledger.growth),
    ] {
        let _ = writeln!(s, "# {k} = {}", float(v));
    }
    let _ = writeln!(s, "# inequality_holds = {holds}");
    s.push_str("step,time,u_energy,dissipation_cum,lhs,rhs,margin\n");
    for r in &ledger.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.step,
            float(r.time),
            float(r.u_energy),
            float(r.dissipation_cum),
            float(r.lhs),
            float(r.rhs),
            float(r.margin)
        );
    }
    s
}

pub fn picard_csv(head: &str, report: &PicardReport) -> String {
    let mut s = head.to_string();
    let _ = writeln!(s, "# mode = {}", report.mode.name());
    let _ = writeln!(s, "# converged = {}", report.converged);
    if !report.step_residuals.is_empty() {
        let counts: Vec<String> = report.step_residuals.iter().map(|r| r.len().to_string()).collect();
        let _ = writeln!(s, "# iterations per step = {}", counts.join(" "));
    }
    s.push_str("iteration,residual\n");
    for (i, r) in report.residuals.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, float(*r));
    }
    s
}

pub fn rates_csv(head: &str, table: &RatesTable) -> String {
    let mut s = head.to_string();
    s.push_str("level,n,h,err_u_h1,err_p_l2,err_p_h1semi,order_u,order_p\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.level,
            r.n,
            float(r.h),
            float(r.errors.u_h1),
            float(r.errors.p_l2),
            float(r.errors.p_h1semi),
            opt_float(r.order_u),
            opt_float(r.order_p)
        );
    }
    s
}

pub fn temporal_csv(head: &str, study: &TemporalStudy) -> String {
    let mut s = head.to_string();
    s.push_str("dt,err_p_l2l2,gap,order\n");
    for (i, dt) in study.dts.iter().enumerate() {
        let gap = study.gaps.get(i).copied();
        let order = i.checked_sub(1).and_then(|j| study.orders.get(j)).copied();
        let _ = writeln!(s, "{},{},{},{}", float(*dt), float(study.pressure_errors[i]), opt_float(gap), opt_float(order));
    }
    s
}

pub fn operators_csv(head: &str, rows: &[OperatorAuditRow]) -> String {
    let mut s = head.to_string();
    s.push_str("n,layout,dim,zero_count,min_eigenvalue,smallest_nonzero,largest,symmetry_residual,kernel_residual,drift\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.layout.name(),
            r.dim,
            r.zero_count,
            float(r.min_eigenvalue),
            float(r.smallest_nonzero),
            float(r.largest),
            float(r.symmetry_residual),
            float(r.kernel_residual),
            opt_float(r.drift)
        );
    }
    s
}

fn values_line(s: &mut String, label: &str, values: &[f64]) {
    s.push_str(label);
    for v in values {
        s.push(' ');
        s.push_str(&float(*v));
    }
    s.push('\n');
}

/// Plain-text trajectory: the initial dilation, then per step the time,
/// multiplier and the `u`, `p`, `zeta`, `z` coefficient vectors.
pub fn trajectory_dat(head: &str, traj: &Trajectory) -> String {
    let mut s = head.to_string();
    let _ = writeln!(s, "steps {} dt {}", traj.len(), float(traj.dt));
    values_line(&mut s, "d0", &traj.initial_dilation.coefficients);
    for (i, st) in traj.steps.iter().enumerate() {
        let _ = writeln!(s, "step {} time {} multiplier {}", i + 1, float(traj.times[i + 1]), float(st.multiplier));
        values_line(&mut s, "u", &st.u.coefficients);
        values_line(&mut s, "p", &st.p.coefficients);
        values_line(&mut s, "zeta", &st.zeta.coefficients);
        values_line(&mut s, "z", &st.z.coefficients);
    }
    s
}

/// Inverse of [`trajectory_dat`].
pub fn read_trajectory(text: &str) -> Result<Trajectory, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| format!("trajectory ends before {what}"));
    let head: Vec<&str> = next("the step count")?.split_whitespace().collect();
    let (steps, dt) = match head.as_slice() {
        ["steps", n, "dt", dt] => (
            n.parse::<usize>().map_err(|e| format!("step count: {e}"))?,
            dt.parse::<f64>().map_err(|e| format!("dt: {e}"))?,
        ),
        _ => return Err("expected `steps <N> dt <dt>`".into()),
    };
    let values = |line: &str, label: &str| -> Result<Vec<f64>, String> {
        let mut it = line.split_whitespace();
        if it.next() != Some(label) {
            return Err(format!("expected `{label}` line"));
        }
        it.map(|v| v.parse::<f64>().map_err(|e| format!("{label}: {e}"))).collect()
    };
    let d0 = values(next("d0")?, "d0")?;
    let mut times = vec![0.0];
    let mut states = Vec::with_capacity(steps);
    for n in 1..=steps {
        let meta: Vec<&str> = next("a step header")?.split_whitespace().collect();
        let (time, multiplier) = match meta.as_slice() {
            ["step", k, "time", t, "multiplier", m] if k.parse::<usize>() == Ok(n) => (
                t.parse::<f64>().map_err(|e| format!("time: {e}"))?,
                m.parse::<f64>().map_err(|e| format!("multiplier: {e}"))?,
            ),
            _ => return Err(format!("expected header of step {n}")),
        };
        times.push(time);
        let u = values(next("u")?, "u")?;
        let p = values(next("p")?, "p")?;
        let zeta = values(next("zeta")?, "zeta")?;
        let z = values(next("z")?, "z")?;
        states.push(StepState {
            u: Field::displacement(u),
            p: Field::pressure(p),
            zeta: Field::pressure(zeta),
            z: Field::pressure(z),
            multiplier,
        });
    }
    Ok(Trajectory { dt, times, initial_dilation: Field::pressure(d0), steps: states })
}

/// Legacy ASCII VTK of one state on the vertex mesh. Displacement is
/// sampled at the vertices; `perm` is `k(ζ)`.
pub fn vtk(title: &str, mesh: &TriMesh, state: &StepState, model: &PermeabilityModel) -> String {
    let nv = mesh.vertices().len();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title);
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", float(v[0]), float(v[1]), float(0.0));
    }
    let nt = mesh.triangles().len();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    s.push_str("VECTORS u double\n");
    for i in 0..nv {
        let _ = writeln!(s, "{} {} {}", float(state.u.coefficients[2 * i]), float(state.u.coefficients[2 * i + 1]), float(0.0));
    }
    let scalar = |s: &mut String, name: &str, values: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            s.push_str(&float(v));
            s.push('\n');
        }
    };
    scalar(&mut s, "p", &mut state.p.coefficients.iter().copied());
    scalar(&mut s, "zeta", &mut state.zeta.coefficients.iter().copied());
    // ζ is finite for every stored state, so evaluation cannot fail
    scalar(&mut s, "perm", &mut state.zeta.coefficients.iter().map(|z| model.eval(*z).unwrap_or(f64::NAN)));
    s
}
