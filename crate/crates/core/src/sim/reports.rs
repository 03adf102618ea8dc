//! Plot-ready CSV outputs: training loss curves, per-step interaction
//! traces (observed vs commanded) and reaching-error histograms.

use super::PipelineError;
use crate::control::InteractionLog;
use crate::kinematics::JointAngleTrajectory;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub fn write_loss_curve_csv(path: &Path, losses: &[f64]) -> Result<(), PipelineError> {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(out, "{epoch},{loss}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-step trace of one replayed interaction. When the subject's recorded
/// angle trajectory is given, its values appear alongside the commands for
/// an observed-vs-commanded comparison.
pub fn write_interaction_csv(
    path: &Path,
    log: &InteractionLog,
    observed: Option<&JointAngleTrajectory>,
) -> Result<(), PipelineError> {
    let mut out = String::from(
        "t,z,cmd_yaw,cmd_pitch,cmd_roll,cmd_elbow,\
         obs_yaw,obs_pitch,obs_roll,obs_elbow,\
         fk_x,fk_y,fk_z,hand_x,hand_y,hand_z,pred_x,pred_y,pred_z,target_x,target_y,target_z\n",
    );
    for step in &log.steps {
        let obs = observed
            .and_then(|traj| traj.samples.get(step.t))
            .map(|q| q.to_array());
        let obs_cols = match obs {
            Some(q) => format!("{},{},{},{}", q[0], q[1], q[2], q[3]),
            None => ",,,".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            step.t,
            step.z,
            step.command_q[0],
            step.command_q[1],
            step.command_q[2],
            step.command_q[3],
            obs_cols,
            step.fk_position[0],
            step.fk_position[1],
            step.fk_position[2],
            step.h_obs[0],
            step.h_obs[1],
            step.h_obs[2],
            step.h_hat[0],
            step.h_hat[1],
            step.h_hat[2],
            step.h_star[0],
            step.h_star[1],
            step.h_star[2],
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Equal-width histogram over [min, max] of the reaching errors.
pub fn write_error_histogram_csv(
    path: &Path,
    errors: &[f64],
    bins: usize,
) -> Result<(), PipelineError> {
    if errors.is_empty() || bins == 0 {
        return Err(PipelineError::NoInput("nothing to histogram".into()));
    }
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for &e in errors {
        let idx = (((e - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, count) in counts.iter().enumerate() {
        let low = lo + i as f64 * width;
        writeln!(out, "{low},{},{count}", low + width).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn loss_curve_csv_has_one_row_per_epoch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_curve_csv(&path, &[0.5, 0.25, 0.125]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "epoch,loss");
        assert_eq!(lines[2], "1,0.25");
    }

    #[test]
    fn histogram_counts_every_error_once() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        let errors = [0.01, 0.02, 0.02, 0.05, 0.09];
        write_error_histogram_csv(&path, &errors, 4).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let total: usize = text
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, errors.len());
    }
}
