//! Line protocol for out-of-process executables.
//!
//! For every invocation the harness writes the visible instance into a
//! fresh directory (`schema.sql` plus one `<table>.csv` per table, renamed
//! tables under their dummy name, voided tables header-only) and sends
//!
//! ```text
//! RUN <dir>
//! ```
//!
//! on the child's stdin. The child answers with one line, either
//! `OK <path-to-result.csv>` or `ERR <CODE> <message>`, where `CODE` is
//! `RESOLUTION` for unknown-table or unknown-column failures. Result files
//! follow the format of [`super::write_result_csv`].

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use super::wire::{read_result_csv, write_result_csv};
use super::EngineError;
use crate::minisql::{execute, parse_sql, ExecError, QueryIR};
use crate::relcore::{load::parse_table_csv, load::table_csv, parse_ddl, DatabaseState, ResultSet, SchemaCatalog};

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

pub(crate) struct ExternalProcess {
    command: String,
    workdir: PathBuf,
    timeout: Duration,
    running: Option<Running>,
    seq: usize,
}

/// The catalog as the executable sees it: renamed tables carry their
/// dummy name, including in foreign keys pointing at them.
fn visible_catalog(db: &DatabaseState) -> SchemaCatalog {
    let mut cat = db.catalog().clone();
    let rename = |n: &str| db.renames().get(&n.to_ascii_lowercase()).cloned();
    for t in &mut cat.tables {
        if let Some(d) = rename(&t.name) {
            t.name = d;
        }
        for fk in &mut t.foreign_keys {
            if let Some(d) = rename(&fk.ref_table) {
                fk.ref_table = d;
            }
        }
    }
    cat
}

/// Writes the visible state of `db` as an executable would load it.
pub fn dump_visible(db: &DatabaseState, dir: &Path) -> std::io::Result<()> {
    let io = |e: crate::relcore::RelError| std::io::Error::other(e.to_string());
    std::fs::create_dir_all(dir)?;
    let cat = visible_catalog(db);
    std::fs::write(dir.join("schema.sql"), cat.to_ddl())?;
    for (orig, vis) in db.catalog().tables.iter().zip(&cat.tables) {
        let text = table_csv(db, &orig.name).map_err(io)?;
        std::fs::write(dir.join(format!("{}.csv", vis.name)), text)?;
    }
    Ok(())
}

fn load_visible(dir: &Path) -> Result<DatabaseState, String> {
    let ddl = std::fs::read_to_string(dir.join("schema.sql")).map_err(|e| e.to_string())?;
    let cat = parse_ddl(&ddl).map_err(|e| e.to_string())?;
    let mut db = DatabaseState::new(cat.clone());
    for t in &cat.tables {
        let p = dir.join(format!("{}.csv", t.name));
        if let Ok(text) = std::fs::read_to_string(&p) {
            parse_table_csv(&mut db, &t.name, &text).map_err(|e| e.to_string())?;
        }
    }
    Ok(db)
}

impl ExternalProcess {
    pub(crate) fn new(command: &str, workdir: PathBuf, timeout: Duration) -> Self {
        ExternalProcess { command: command.to_string(), workdir, timeout, running: None, seq: 0 }
    }

    pub(crate) fn respawn(&self) -> Self {
        Self::new(&self.command, self.workdir.join("fresh"), self.timeout)
    }

    fn spawn(&mut self) -> Result<&mut Running, EngineError> {
        if self.running.is_none() {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(&self.command)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| EngineError::Protocol(format!("cannot start executable: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    match line {
                        Ok(l) => {
                            if tx.send(l).is_err() {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            });
            self.running = Some(Running { child, stdin, lines: rx });
        }
        Ok(self.running.as_mut().expect("just spawned"))
    }

    fn kill(&mut self) {
        if let Some(mut r) = self.running.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
        }
    }

    pub(crate) fn request(&mut self, db: &DatabaseState) -> Result<ResultSet, EngineError> {
        let dir = self.workdir.join(format!("req-{:06}", self.seq));
        self.seq += 1;
        dump_visible(db, &dir).map_err(|e| EngineError::Protocol(format!("dump failed: {e}")))?;
        let timeout = self.timeout;
        let r = self.spawn()?;
        let sent = writeln!(r.stdin, "RUN {}", dir.display()).and_then(|_| r.stdin.flush());
        if let Err(e) = sent {
            self.kill();
            return Err(EngineError::Protocol(format!("executable closed its input: {e}")));
        }
        let line = match r.lines.recv_timeout(timeout) {
            Ok(l) => l,
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(EngineError::Timeout(timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                return Err(EngineError::Protocol("executable exited".into()));
            }
        };
        let out = parse_reply(&line);
        if out.is_ok() {
            let _ = std::fs::remove_dir_all(&dir);
        }
        out
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        if let Some(r) = &mut self.running {
            let _ = writeln!(r.stdin, "QUIT");
        }
        self.kill();
    }
}

fn parse_reply(line: &str) -> Result<ResultSet, EngineError> {
    let line = line.trim_end();
    if let Some(path) = line.strip_prefix("OK ") {
        let text = std::fs::read_to_string(path.trim()).map_err(|e| EngineError::Protocol(format!("cannot read result {path}: {e}")))?;
        return read_result_csv(&text).map_err(EngineError::Protocol);
    }
    if let Some(rest) = line.strip_prefix("ERR ") {
        let (code, msg) = rest.split_once(' ').unwrap_or((rest, ""));
        return Err(match code {
            "RESOLUTION" => EngineError::Resolution(msg.to_string()),
            "TIMEOUT" => EngineError::Protocol(format!("executable reported timeout: {msg}")),
            _ => EngineError::Execution(format!("{code} {msg}")),
        });
    }
    Err(EngineError::Protocol(format!("unexpected reply: {line}")))
}

fn answer(q: &QueryIR, dir: &Path) -> String {
    let db = match load_visible(dir) {
        Ok(db) => db,
        Err(e) => return format!("ERR LOAD {}", e.replace('\n', " ")),
    };
    match execute(q, &db) {
        Ok(rs) => {
            let p = dir.join("result.csv");
            match std::fs::write(&p, write_result_csv(&rs)) {
                Ok(()) => format!("OK {}", p.display()),
                Err(e) => format!("ERR IO {e}"),
            }
        }
        Err(ExecError::Resolution(m)) => format!("ERR RESOLUTION {}", m.replace('\n', " ")),
        Err(e) => format!("ERR EXECUTION {}", e.to_string().replace('\n', " ")),
    }
}

/// Serves the protocol for `sql` on the given streams until `QUIT` or end
/// of input. This is what `hqe oracle-shim` runs.
pub fn serve_shim(sql: &str, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    let q = parse_sql(sql).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line == "QUIT" {
            break;
        }
        let reply = match line.strip_prefix("RUN ") {
            Some(dir) => answer(&q, Path::new(dir.trim())),
            None => format!("ERR PROTOCOL unknown request {line}"),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relcore::FitClass;
    use crate::tpch;

    #[test]
    fn shim_answers_in_process() {
        let dir = tempfile::tempdir().unwrap();
        let mut db = tpch::q0_instance();
        dump_visible(&db, &dir.path().join("a")).unwrap();
        db.rename_table("customer", "customer_x").unwrap();
        dump_visible(&db, &dir.path().join("b")).unwrap();
        let req = format!("RUN {}\nRUN {}\nQUIT\n", dir.path().join("a").display(), dir.path().join("b").display());
        let mut out = Vec::new();
        serve_shim(tpch::Q0_SQL, req.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let rs = parse_reply(lines[0]).unwrap();
        assert_eq!(rs.fit(), FitClass::Fit);
        assert!(parse_reply(lines[1]).unwrap_err().is_resolution());
    }

    #[test]
    fn voided_table_dumps_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut db = tpch::q0_instance();
        db.void_tables(&["orders".into()]).unwrap();
        dump_visible(&db, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("orders.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn timeout_kills_a_silent_child() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ExternalProcess::new("cat > /dev/null", dir.path().to_path_buf(), Duration::from_millis(200));
        let err = p.request(&tpch::q0_instance()).unwrap_err();
        assert_eq!(err, EngineError::Timeout(Duration::from_millis(200)));
    }
}
