use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Comma separated table with a header row.
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Shortest round-trip representation, identical across runs.
pub fn num(v: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{v:e}");
    s
}
