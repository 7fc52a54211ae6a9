use std::io::Write;

use super::run::SnapshotSink;
use super::session::Session;
use crate::error::Result;

/// Per-tick trajectory as CSV.
///
/// Columns: `tick, t, q0 … q(2n+1), gap0 … gap(n), status, fx, fy, fz`,
/// where `status` is 0 (free), 1 (near contact) or 2 (stuck) and `f` is the
/// device feedback force. Numbers use the shortest exact decimal form, so
/// identical runs give identical files. A mesh change mid-run starts a new
/// header line.
pub struct CsvRecorder<W: Write> {
    out: W,
    n_dofs: Option<usize>,
    line: String,
}

impl<W: Write> CsvRecorder<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            n_dofs: None,
            line: String::new(),
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn header(&mut self, n_dofs: usize, n_nodes: usize) -> Result<()> {
        let mut header = String::from("tick,t");
        for i in 0..n_dofs {
            header.push_str(&format!(",q{i}"));
        }
        for i in 0..n_nodes {
            header.push_str(&format!(",gap{i}"));
        }
        header.push_str(",status,fx,fy,fz\n");
        self.out.write_all(header.as_bytes())?;
        Ok(())
    }
}

impl<W: Write> SnapshotSink for CsvRecorder<W> {
    fn tick(&mut self, session: &Session) -> Result<()> {
        use std::fmt::Write as _;
        let state = session.state();
        if self.n_dofs != Some(state.q.len()) {
            self.header(state.q.len(), session.gaps().len())?;
            self.n_dofs = Some(state.q.len());
        }
        let line = &mut self.line;
        line.clear();
        let _ = write!(line, "{},{:e}", session.tick_count() - 1, state.time);
        for v in state.q.iter() {
            let _ = write!(line, ",{v:e}");
        }
        for g in session.gaps() {
            let _ = write!(line, ",{:e}", g.gap);
        }
        let f = session.last_frame().feedback;
        let _ = writeln!(line, ",{},{:e},{:e},{:e}", session.status().severity(), f.x, f.y, f.z);
        self.out.write_all(line.as_bytes())?;
        Ok(())
    }

    fn finish(&mut self, _session: &Session, _report: &super::run::ExitReport) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
