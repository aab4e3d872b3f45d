use std::io::Write;

use super::label::Label;
use super::population::DivisionEvent;
use crate::fmt::g12;
use crate::model::{CellTrait, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Division,
    Snapshot,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Division => "division",
            EventKind::Snapshot => "snapshot",
        }
    }
}

/// One line of the simulation CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub replica: u64,
    pub time: f64,
    pub label: Option<Label>,
    pub size: f64,
    pub status: Status,
    pub kind: EventKind,
}

impl CsvRow {
    /// Row for a division, carrying the parent's label, status and size at death.
    pub fn division(replica: u64, ev: &DivisionEvent) -> Self {
        CsvRow {
            replica,
            time: ev.time,
            label: Some(ev.parent.clone()),
            size: ev.parent_size,
            status: ev.parent_status,
            kind: EventKind::Division,
        }
    }

    /// Row for an alive individual at a snapshot; labels are not tracked there.
    pub fn snapshot(replica: u64, time: f64, at: &CellTrait) -> Self {
        CsvRow { replica, time, label: None, size: at.size(), status: at.status(), kind: EventKind::Snapshot }
    }
}

pub const CSV_HEADER: &str = "replica,time,label,size,status,event_type";

/// Writes the header and the rows, numbers with 12 significant digits.
pub fn write_csv<W: Write>(mut w: W, rows: &[CsvRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let label = r.label.as_ref().map(Label::to_string).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.replica,
            g12(r.time),
            label,
            g12(r.size),
            r.status.index(),
            r.kind.as_str()
        )?;
    }
    Ok(())
}
