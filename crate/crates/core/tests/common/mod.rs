#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden_study() -> PathBuf {
    fixture("golden_study")
}

pub fn golden_report() -> PathBuf {
    fixture("golden_report.json")
}

/// Recursively copies `from` into a new directory `to`.
pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// Every regular file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut std::collections::BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Rewrites the `ratings.csv` of a bundle so that annotator `a1` gives
/// `a[i]` and `a2` gives `b[i]` on dqual for the i-th rated summary.
pub fn plant_dqual(dir: &Path, a: &[u8], b: &[u8]) {
    let path = dir.join("ratings.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut out = vec![lines.next().unwrap().to_owned()];
    let (mut ia, mut ib) = (0, 0);
    for line in lines {
        let mut cols: Vec<String> = line.split(',').map(str::to_owned).collect();
        let planted = match cols[3].as_str() {
            "a1" => {
                ia += 1;
                a[(ia - 1) % a.len()]
            }
            _ => {
                ib += 1;
                b[(ib - 1) % b.len()]
            }
        };
        cols[4] = planted.to_string();
        out.push(cols.join(","));
    }
    std::fs::write(&path, out.join("\n") + "\n").unwrap();
}

/// `(t, df, two-sided p)` computed with scipy before the implementation
/// existed; see `tests/oracles/scipy_reference.py`.
pub const T_GRID: [(f64, f64, f64); 20] = [
    (0.0, 1.0, 1.0),
    (0.5, 1.0, 0.7048327646991336),
    (1.0, 2.0, 0.42264973081037427),
    (2.0, 2.0, 0.1835034190722739),
    (3.4641016151377544, 2.0, 0.07417990022744854),
    (1.7320508075688772, 2.0, 0.22540333075851657),
    (0.25, 3.0, 0.8187292224288296),
    (2.5, 4.0, 0.06676654481198813),
    (-1.3, 5.0, 0.25030063417067716),
    (2.2281388519649385, 10.0, 0.05000000000180862),
    (0.1, 12.0, 0.9219955704568259),
    (1.9, 15.0, 0.07683102571600864),
    (3.0, 20.0, 0.007075898791211097),
    (-2.5, 29.0, 0.01832534433842607),
    (4.0, 30.0, 0.0003818456360837564),
    (1.0, 50.0, 0.3221256451002447),
    (6.5, 7.0, 0.00033413336256094824),
    (10.0, 3.0, 0.0021283990584141494),
    (0.75, 100.0, 0.4550156404055796),
    (2.7, 8.5, 0.02564438940589993),
];
