//! CSV output. Reals are written with 17 significant digits so they
//! round-trip exactly; absent values are empty fields.

use std::io::{self, Write};

use crate::estimator::EstimateReport;
use crate::montecarlo::{CltExperimentResult, ReplicationRecord};
use crate::processes::Dataset;
use crate::split::SplitTrajectory;

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn line(out: &mut impl Write, fields: &[String]) -> io::Result<()> {
    writeln!(out, "{}", fields.join(","))
}

pub fn write_trajectory(out: &mut impl Write, traj: &SplitTrajectory) -> io::Result<()> {
    writeln!(out, "t,x,w,y")?;
    for t in 0..traj.x.len() {
        let w = traj.w.as_ref().map(|w| real(w[t])).unwrap_or_default();
        line(out, &[t.to_string(), real(traj.x[t]), w, (traj.y[t] as u8).to_string()])?;
    }
    Ok(())
}

pub fn write_dataset(out: &mut impl Write, data: &Dataset) -> io::Result<()> {
    writeln!(out, "t,x,w,z")?;
    for t in 0..data.len() {
        line(out, &[t.to_string(), real(data.x[t]), real(data.w[t]), real(data.z[t])])?;
    }
    Ok(())
}

pub fn write_curve(out: &mut impl Write, rows: &[EstimateReport]) -> io::Result<()> {
    writeln!(out, "x_eval,f_hat,h,sum_k,t_c,p_hat_c,studentized")?;
    for r in rows {
        line(
            out,
            &[
                real(r.x_eval),
                real(r.f_hat),
                real(r.h),
                real(r.sum_k),
                r.t_c.to_string(),
                real(r.p_hat_c),
                opt_real(r.studentized),
            ],
        )?;
    }
    Ok(())
}

pub fn write_replications(out: &mut impl Write, records: &[ReplicationRecord]) -> io::Result<()> {
    writeln!(out, "rep,seed,n_or_local_count,x_eval,h,sum_k,f_hat,studentized,status")?;
    for r in records {
        let x_eval = if r.x_eval.is_nan() { String::new() } else { real(r.x_eval) };
        line(
            out,
            &[
                r.rep.to_string(),
                r.seed.to_string(),
                r.n_or_local_count.to_string(),
                x_eval,
                opt_real(r.h),
                opt_real(r.sum_k),
                opt_real(r.f_hat),
                opt_real(r.studentized),
                r.status.as_str().to_string(),
            ],
        )?;
    }
    Ok(())
}

pub fn write_summary(out: &mut impl Write, results: &[CltExperimentResult]) -> io::Result<()> {
    writeln!(out, "protocol_id,size,reps,admitted,ks_distance,mean,sd")?;
    for r in results {
        line(
            out,
            &[
                r.protocol.id.clone(),
                r.size().to_string(),
                r.attempted.to_string(),
                r.admitted.to_string(),
                real(r.ks_distance),
                real(r.mean),
                real(r.sd),
            ],
        )?;
    }
    Ok(())
}
