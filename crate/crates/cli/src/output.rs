//! CSV and JSON writers for run artifacts.
//!
//! Floating-point values serialize with 17 significant digits so a parsed
//! value reproduces the original bit pattern. Vehicle and pair ids in all
//! output files are 1-based, matching configuration labels.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use flatform_core::flat::layout;
use flatform_core::sim::SimTrace;
use flatform_core::ReferenceTrajectory;

pub type IoResult<T> = std::io::Result<T>;

/// 17 significant digits, lossless for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> IoResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Per-vehicle kinematic rows of the planned trajectory.
pub fn write_plan_csv(
    path: &Path,
    reference: &ReferenceTrajectory,
    stride: usize,
) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(
        w,
        "t,uav_id,x,y,z,psi,vx,vy,vz,psid,ax,ay,az,psidd,jx,jy,jz,jpsi"
    )?;
    let n = reference.n_uavs();
    for j in (0..reference.len()).step_by(stride.max(1)) {
        let t = reference.time(j);
        let s = reference.state(j);
        let u = reference.control(j);
        for i in 0..n {
            write_state_row(&mut w, t, i, n, s, u)?;
            writeln!(w)?;
        }
    }
    w.flush()
}

fn write_state_row<W: Write>(
    w: &mut W,
    t: f64,
    i: usize,
    n: usize,
    s: &nalgebra::DVector<f64>,
    u: &nalgebra::DVector<f64>,
) -> IoResult<()> {
    let p = layout::pos(n, i);
    let v = layout::vel(n, i);
    let a = layout::acc(n, i);
    write!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(t),
        i + 1,
        fmt_f64(s[p]),
        fmt_f64(s[p + 1]),
        fmt_f64(s[p + 2]),
        fmt_f64(s[layout::yaw(n, i)]),
        fmt_f64(s[v]),
        fmt_f64(s[v + 1]),
        fmt_f64(s[v + 2]),
        fmt_f64(s[layout::yaw_rate(n, i)]),
        fmt_f64(s[a]),
        fmt_f64(s[a + 1]),
        fmt_f64(s[a + 2]),
        fmt_f64(s[layout::yaw_acc(n, i)]),
        fmt_f64(u[3 * i]),
        fmt_f64(u[3 * i + 1]),
        fmt_f64(u[3 * i + 2]),
        fmt_f64(u[3 * n + i]),
    )
}

/// Tracked state rows with the planned reference position appended.
pub fn write_track_csv(path: &Path, trace: &SimTrace, stride: usize) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(
        w,
        "t,uav_id,x,y,z,psi,vx,vy,vz,psid,ax,ay,az,psidd,jx,jy,jz,jpsi,ref_x,ref_y,ref_z"
    )?;
    let n = trace.n_uavs;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        for i in 0..n {
            write_state_row(&mut w, rec.t, i, n, &rec.state, &rec.control)?;
            let p = layout::pos(n, i);
            writeln!(
                w,
                ",{},{},{}",
                fmt_f64(rec.reference[p]),
                fmt_f64(rec.reference[p + 1]),
                fmt_f64(rec.reference[p + 2])
            )?;
        }
    }
    w.flush()
}

/// Unordered pair distances and regions.
pub fn write_distances_csv(path: &Path, trace: &SimTrace, stride: usize) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,i,j,dist,region")?;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        for p in &rec.pairs {
            if p.i < p.j {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fmt_f64(rec.t),
                    p.i + 1,
                    p.j + 1,
                    fmt_f64(p.dist),
                    p.region.as_str()
                )?;
            }
        }
    }
    w.flush()
}

/// Ordered pair penalties with directional weights.
pub fn write_penalties_csv(path: &Path, trace: &SimTrace, stride: usize) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,i,j,dist,region,weight,v,weighted_v")?;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        for p in &rec.pairs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(rec.t),
                p.i + 1,
                p.j + 1,
                fmt_f64(p.dist),
                p.region.as_str(),
                fmt_f64(p.weight),
                fmt_f64(p.penalty),
                fmt_f64(p.weighted_penalty)
            )?;
        }
    }
    w.flush()
}

/// Physical quantities recovered through the flatness map.
pub fn write_physical_csv(path: &Path, trace: &SimTrace, stride: usize) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,uav_id,thrust,roll,pitch,yaw,wx,wy,wz,u2,u3,u4")?;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        for (i, q) in rec.physical.iter().enumerate() {
            let m = q.moments.unwrap_or_else(nalgebra::Vector3::zeros);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(rec.t),
                i + 1,
                fmt_f64(q.thrust),
                fmt_f64(q.roll),
                fmt_f64(q.pitch),
                fmt_f64(q.yaw),
                fmt_f64(q.body_rates.x),
                fmt_f64(q.body_rates.y),
                fmt_f64(q.body_rates.z),
                fmt_f64(m.x),
                fmt_f64(m.y),
                fmt_f64(m.z)
            )?;
        }
    }
    w.flush()
}

/// Total penalty and tracking value function time series.
pub fn write_vhat_csv(path: &Path, trace: &SimTrace, stride: usize) -> IoResult<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,vhat,n_z")?;
    for rec in trace.records.iter().step_by(stride.max(1)) {
        writeln!(
            w,
            "{},{},{}",
            fmt_f64(rec.t),
            fmt_f64(rec.vhat),
            fmt_f64(rec.value_function)
        )?;
    }
    w.flush()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> IoResult<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}
