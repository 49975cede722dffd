//! Trace and event writers. All numbers are formatted with fixed precision so
//! identical runs produce byte-identical files.

use crate::error::Result;
use crate::CarId;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "time,car_id,x,y,heading,v,s,d,edge_id,flags")?;
        Ok(TraceWriter { out })
    }

    /// One row per (tick, car). `frenet` is (s, d, edge id) when the car is
    /// localized on its route.
    #[allow(clippy::too_many_arguments)]
    pub fn row(
        &mut self,
        time: f64,
        car: CarId,
        x: f64,
        y: f64,
        heading: f64,
        v: f64,
        frenet: Option<(f64, f64, &str)>,
        flags: &str,
    ) -> Result<()> {
        match frenet {
            Some((s, d, edge)) => writeln!(
                self.out,
                "{time:.3},{},{x:.6},{y:.6},{heading:.6},{v:.6},{s:.6},{d:.6},{edge},{flags}",
                car.0
            )?,
            None => writeln!(
                self.out,
                "{time:.3},{},{x:.6},{y:.6},{heading:.6},{v:.6},,,,{flags}",
                car.0
            )?,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// JSON-lines event log: route completions, deadlocks, separation
/// violations, and message fates.
pub struct EventWriter {
    out: BufWriter<File>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event<'a> {
    RouteCompleted {
        t: f64,
        car: u32,
        goal: &'a str,
        travel_time: f64,
    },
    Deadlock {
        t: f64,
    },
    SeparationViolation {
        t: f64,
        a: u32,
        b: u32,
        distance: f64,
    },
    Msg {
        t: f64,
        msg_id: u64,
        msg_kind: &'a str,
        sender: String,
        created: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        delivered: Option<f64>,
        #[serde(skip_serializing_if = "std::ops::Not::not")]
        dropped: bool,
    },
}

impl EventWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(EventWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn event(&mut self, e: &Event) -> Result<()> {
        serde_json::to_writer(&mut self.out, e)?;
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
