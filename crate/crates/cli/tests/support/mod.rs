#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psyman_oracles as oracle;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psyman"))
}

pub fn spawn(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn psyman")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// In-process run; returns the exit code.
pub fn run(args: &[&str]) -> i32 {
    psyman::run(std::iter::once("psyman").chain(args.iter().copied()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn ratings_csv(ids: &[String], names: &[String], rows: &[Vec<f64>]) -> String {
    let mut text = format!("image_id,{}\n", names.join(","));
    for (id, row) in ids.iter().zip(rows) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    text
}

pub fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

/// Ratings for `n_images` images whose attributes load on one latent factor
/// per block, so within-block correlations are high and cross-block ones small.
/// Returns the CSV text and the block of each attribute.
pub fn two_factor_ratings(seed: u64, n_images: usize) -> (String, Vec<usize>) {
    let mut g = oracle::Gen::new(seed);
    let sizes = [g.int(2, 5), g.int(2, 5)];
    let mut block: Vec<usize> = (0..sizes[0]).map(|_| 0).chain((0..sizes[1]).map(|_| 1)).collect();
    let perm = g.permutation(block.len());
    block = perm.iter().map(|&p| block[p]).collect();
    let names: Vec<String> = (0..block.len()).map(|j| format!("attr{j}")).collect();
    let ids: Vec<String> = (0..n_images).map(|i| format!("img{i:03}")).collect();
    let rows: Vec<Vec<f64>> = (0..n_images)
        .map(|_| {
            let z = [g.gaussian(), g.gaussian()];
            block.iter().map(|&b| 5.0 + 1.5 * z[b] + 0.4 * g.gaussian()).collect()
        })
        .collect();
    (ratings_csv(&ids, &names, &rows), block)
}

/// Left-to-right leaf order of merges recorded as `(left, right, height, size)`.
pub fn oracle_leaf_order(merges: &[oracle::OracleMerge], n: usize) -> Vec<usize> {
    fn walk(node: usize, n: usize, merges: &[oracle::OracleMerge], out: &mut Vec<usize>) {
        if node < n {
            out.push(node);
        } else {
            let m = merges[node - n];
            walk(m.0, n, merges, out);
            walk(m.1, n, merges, out);
        }
    }
    let mut out = Vec::new();
    walk(2 * n - 2, n, merges, &mut out);
    out
}

/// File name to bytes for every file in `dir`.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

pub fn contiguous(order: &[usize], block: &[usize]) -> bool {
    order.windows(2).filter(|w| block[w[0]] != block[w[1]]).count() == 1
}
