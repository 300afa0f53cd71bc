//! Plain-text artifact formats.
//!
//! Every matrix row is one line. Floats are printed with Rust's shortest
//! round-trip representation, so `parse(format(x)) == x` bit for bit. Blank
//! lines and lines starting with `#` are ignored by the parsers.

use std::fmt::Write as _;
use std::str::FromStr;

use sphface_core::dictionary::AtomIndex;
use sphface_core::pca::PcaModel;
use sphface_core::pursuit::SparseSupport;
use sphface_core::recognition::LdaModel;
use sphface_core::sphere::{SphereGrid, SphericalSignal};
use sphface_core::{PointCloud3D, ScanGrid};

use crate::error::{Error, Result};

struct Rows<'a> {
    name: &'a str,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Rows<'a> {
    fn new(name: &'a str, text: &'a str) -> Self {
        Self { name, lines: text.lines().enumerate(), last: 0 }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { source_name: self.name.to_string(), line, msg: msg.into() }
    }

    fn next_row(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.lines.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t.split_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, what: impl FnOnce() -> String) -> Result<(usize, Vec<&'a str>)> {
        match self.next_row() {
            Some(r) => Ok(r),
            None => Err(self.err(self.last + 1, format!("unexpected end of input: missing {}", what()))),
        }
    }

    /// A row of exactly `n` tokens.
    fn expect_n(&mut self, n: usize, what: impl Fn() -> String) -> Result<(usize, Vec<&'a str>)> {
        let (line, toks) = self.expect(&what)?;
        if toks.len() != n {
            return Err(
                self.err(line, format!("non-rectangular data: {} has {} values, expected {n}", what(), toks.len()))
            );
        }
        Ok((line, toks))
    }

    fn finish(&mut self) -> Result<()> {
        match self.next_row() {
            Some((line, _)) => Err(self.err(line, "unexpected trailing data")),
            None => Ok(()),
        }
    }

    fn num<T: FromStr>(&self, line: usize, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(line, format!("invalid number '{tok}'")))
    }

    fn bit(&self, line: usize, tok: &str) -> Result<bool> {
        match tok {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.err(line, format!("mask values must be 0 or 1, found '{tok}'"))),
        }
    }

    fn nums<T: FromStr>(&mut self, n: usize, what: impl Fn() -> String) -> Result<Vec<T>> {
        let (line, toks) = self.expect_n(n, what)?;
        toks.iter().map(|t| self.num(line, t)).collect()
    }

    fn matrix<T: FromStr>(&mut self, rows: usize, cols: usize, section: &str) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            out.extend(self.nums::<T>(cols, || format!("{section} row {}", r + 1))?);
        }
        Ok(out)
    }

    fn mask(&mut self, rows: usize, cols: usize, section: &str) -> Result<Vec<bool>> {
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (line, toks) = self.expect_n(cols, || format!("{section} row {}", r + 1))?;
            for t in toks {
                out.push(self.bit(line, t)?);
            }
        }
        Ok(out)
    }

    /// Header `keyword a b ...` with `n` numeric fields.
    fn header(&mut self, keyword: &str, n: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, toks) = self.expect(|| format!("'{keyword}' header"))?;
        if toks.first() != Some(&keyword) || toks.len() != n + 1 {
            return Err(self.err(line, format!("expected header '{keyword}' followed by {n} fields")));
        }
        Ok((line, toks[1..].to_vec()))
    }
}

fn push_row<T: std::fmt::Display>(out: &mut String, row: impl IntoIterator<Item = T>) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn push_matrix<T: std::fmt::Display + Copy>(out: &mut String, data: &[T], cols: usize) {
    for row in data.chunks(cols) {
        push_row(out, row.iter().copied());
    }
}

fn bits(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| b as u8).collect()
}

fn optional(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |n| n.to_string())
}

fn parse_optional(rows: &Rows, line: usize, tok: &str) -> Result<Option<usize>> {
    if tok == "-" {
        Ok(None)
    } else {
        rows.num(line, tok).map(Some)
    }
}

/// Grid-text scan: `rows cols`, then the mask, X, Y and Z matrices.
pub fn format_grid(scan: &ScanGrid) -> String {
    let (rows, cols) = (scan.rows(), scan.cols());
    let mut out = format!("{rows} {cols}\n");
    push_matrix(&mut out, &bits(scan.mask()), cols);
    push_matrix(&mut out, scan.x(), cols);
    push_matrix(&mut out, scan.y(), cols);
    push_matrix(&mut out, scan.z_raw(), cols);
    out
}

pub fn parse_grid(text: &str, name: &str) -> Result<ScanGrid> {
    let mut rows = Rows::new(name, text);
    let (line, head) = rows.expect_n(2, || "'rows cols' header".into())?;
    let (r, c): (usize, usize) = (rows.num(line, head[0])?, rows.num(line, head[1])?);
    if r == 0 || c == 0 {
        return Err(rows.err(line, "grid needs at least one row and one column"));
    }
    let mask = rows.mask(r, c, "mask")?;
    let x = rows.matrix(r, c, "X")?;
    let y = rows.matrix(r, c, "Y")?;
    let z = rows.matrix(r, c, "Z")?;
    rows.finish()?;
    ScanGrid::new(r, c, x, y, z, mask).map_err(|e| rows.err(1, e.to_string()))
}

/// One `x y z` line per point.
pub fn format_xyz(cloud: &PointCloud3D) -> String {
    let mut out = String::new();
    for p in &cloud.points {
        push_row(&mut out, p.iter().copied());
    }
    out
}

pub fn parse_xyz(text: &str, name: &str) -> Result<PointCloud3D> {
    let mut rows = Rows::new(name, text);
    let mut points = Vec::new();
    while let Some((line, toks)) = rows.next_row() {
        if toks.len() != 3 {
            return Err(rows.err(line, format!("expected 'x y z', found {} values", toks.len())));
        }
        let p = [rows.num(line, toks[0])?, rows.num(line, toks[1])?, rows.num(line, toks[2])?];
        if p.iter().any(|v: &f64| !v.is_finite()) {
            return Err(rows.err(line, "coordinates must be finite"));
        }
        points.push(p);
    }
    Ok(PointCloud3D::new(points))
}

/// `n_theta n_phi`, the values row by row, then the coverage mask.
pub fn format_signal(s: &SphericalSignal) -> String {
    let g = s.grid();
    let mut out = format!("{} {}\n", g.n_theta, g.n_phi);
    push_matrix(&mut out, s.values(), g.n_phi);
    push_matrix(&mut out, &bits(s.coverage()), g.n_phi);
    out
}

pub fn parse_signal(text: &str, name: &str) -> Result<SphericalSignal> {
    let mut rows = Rows::new(name, text);
    let (line, head) = rows.expect_n(2, || "'n_theta n_phi' header".into())?;
    let grid = SphereGrid::new(rows.num(line, head[0])?, rows.num(line, head[1])?)
        .map_err(|e| rows.err(line, e.to_string()))?;
    let values = rows.matrix(grid.n_theta, grid.n_phi, "values")?;
    let coverage = rows.mask(grid.n_theta, grid.n_phi, "coverage")?;
    rows.finish()?;
    Ok(SphericalSignal::new(grid, values, coverage)?)
}

/// `support n_theta n_phi K`, then one `tau nu psi alpha beta` line per atom
/// in selection order.
pub fn format_support(s: &SparseSupport) -> String {
    let g = s.grid();
    let mut out = format!("support {} {} {}\n", g.n_theta, g.n_phi, s.len());
    for a in s.atoms() {
        push_row(&mut out, [a.tau, a.nu, a.psi, a.alpha, a.beta]);
    }
    out
}

pub fn parse_support(text: &str, name: &str) -> Result<SparseSupport> {
    let mut rows = Rows::new(name, text);
    let (line, head) = rows.header("support", 3)?;
    let grid = SphereGrid::new(rows.num(line, head[0])?, rows.num(line, head[1])?)
        .map_err(|e| rows.err(line, e.to_string()))?;
    let k: usize = rows.num(line, head[2])?;
    let mut atoms = Vec::with_capacity(k);
    for i in 0..k {
        let v: Vec<f64> = rows.nums(5, || format!("atom {}", i + 1))?;
        atoms.push(AtomIndex { tau: v[0], nu: v[1], psi: v[2], alpha: v[3], beta: v[4] });
    }
    rows.finish()?;
    Ok(SparseSupport::from_atoms(grid, atoms)?)
}

/// `pca dim d clamped_from`, mean, eigenvalues, then `d` basis rows.
pub fn format_pca(m: &PcaModel) -> String {
    let mut out = format!("pca {} {} {}\n", m.dim(), m.d(), optional(m.clamped_from));
    push_row(&mut out, m.mean.iter());
    push_row(&mut out, m.eigenvalues.iter());
    for b in &m.basis {
        push_row(&mut out, b.iter());
    }
    out
}

pub fn parse_pca(text: &str, name: &str) -> Result<PcaModel> {
    let mut rows = Rows::new(name, text);
    let (line, head) = rows.header("pca", 3)?;
    let dim: usize = rows.num(line, head[0])?;
    let d: usize = rows.num(line, head[1])?;
    let clamped_from = parse_optional(&rows, line, head[2])?;
    let mean = rows.nums(dim, || "mean".into())?;
    let eigenvalues = rows.nums(d, || "eigenvalues".into())?;
    let basis = (0..d).map(|i| rows.nums(dim, || format!("basis row {}", i + 1))).collect::<Result<_>>()?;
    rows.finish()?;
    Ok(PcaModel { mean, basis, eigenvalues, clamped_from })
}

/// `lda K d classes clamped_from`, class labels, eigenvalues, global mean,
/// `d` rows of W, then one class mean per class.
pub fn format_lda(m: &LdaModel) -> String {
    let mut out = format!("lda {} {} {} {}\n", m.input_dim(), m.d(), m.class_labels.len(), optional(m.clamped_from));
    push_row(&mut out, m.class_labels.iter());
    push_row(&mut out, m.eigenvalues.iter());
    push_row(&mut out, m.global_mean.iter());
    for w in &m.w {
        push_row(&mut out, w.iter());
    }
    for c in &m.class_means {
        push_row(&mut out, c.iter());
    }
    out
}

pub fn parse_lda(text: &str, name: &str) -> Result<LdaModel> {
    let mut rows = Rows::new(name, text);
    let (line, head) = rows.header("lda", 4)?;
    let k: usize = rows.num(line, head[0])?;
    let d: usize = rows.num(line, head[1])?;
    let classes: usize = rows.num(line, head[2])?;
    let clamped_from = parse_optional(&rows, line, head[3])?;
    let class_labels = rows.nums(classes, || "class labels".into())?;
    let eigenvalues = rows.nums(d, || "eigenvalues".into())?;
    let global_mean = rows.nums(k, || "global mean".into())?;
    let w = (0..d).map(|i| rows.nums(k, || format!("W row {}", i + 1))).collect::<Result<_>>()?;
    let class_means = (0..classes).map(|i| rows.nums(k, || format!("class mean {}", i + 1))).collect::<Result<_>>()?;
    rows.finish()?;
    Ok(LdaModel { w, eigenvalues, class_labels, class_means, global_mean, clamped_from })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_two_by_two() {
        let text = "2 2\n1 1\n1 1\n0 1\n0 1\n0 0\n1 1\n1 2\n3 4\n";
        let g = parse_grid(text, "t").unwrap();
        assert_eq!(g.valid_count(), 4);
        assert_eq!(g.z_raw(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(format_grid(&g), text);
    }

    #[test]
    fn missing_row_is_reported() {
        let text = "4 1\n1\n1\n1\n";
        match parse_grid(text, "t") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("mask row 4"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_non_numeric() {
        let ragged = "2 2\n1 1\n1\n";
        assert!(matches!(parse_grid(ragged, "t"), Err(Error::Parse { line: 3, .. })));
        let bad = "1 1\n1\n0\n0\nx\n";
        match parse_grid(bad, "t") {
            Err(Error::Parse { line, msg, .. }) => assert_eq!((line, msg.contains("'x'")), (5, true)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_grid("1 1\n2\n0\n0\n0\n", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_grid("1\n", "t"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn xyz_three_points() {
        let c = parse_xyz("0 0 0\n1 0 0\n0 1 0\n", "t").unwrap();
        assert_eq!(c.len(), 3);
        assert!(matches!(parse_xyz("0 0\n", "t"), Err(Error::Parse { line: 1, .. })));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
    }

    proptest! {
        #[test]
        fn grid_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), dx in 0.1..5.0f64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let z = (0..rows * cols).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let mask = (0..rows * cols).map(|_| rng.gen_bool(0.7)).collect();
            let g = ScanGrid::from_depth(rows, cols, (rng.gen_range(-9.0..9.0), 1.5), (dx, dx * 0.5), z, mask).unwrap();
            prop_assert_eq!(parse_grid(&format_grid(&g), "t").unwrap(), g);
        }

        #[test]
        fn xyz_round_trip(pts in proptest::collection::vec([finite(), finite(), finite()], 0..20)) {
            let c = PointCloud3D::new(pts);
            prop_assert_eq!(parse_xyz(&format_xyz(&c), "t").unwrap(), c);
        }

        #[test]
        fn signal_round_trip(vals in proptest::collection::vec(finite(), 12), cov in proptest::collection::vec(any::<bool>(), 12)) {
            let s = SphericalSignal::new(SphereGrid::new(3, 4).unwrap(), vals, cov).unwrap();
            prop_assert_eq!(parse_signal(&format_signal(&s), "t").unwrap(), s);
        }
    }

    #[test]
    fn model_round_trips() {
        let pca = PcaModel {
            mean: vec![0.1, -2.5, 3.0],
            basis: vec![vec![1.0 / 3.0, 0.0, -0.7]],
            eigenvalues: vec![12.25],
            clamped_from: Some(4),
        };
        assert_eq!(parse_pca(&format_pca(&pca), "t").unwrap(), pca);
        let lda = LdaModel {
            w: vec![vec![0.5, f64::MIN_POSITIVE]],
            eigenvalues: vec![3.0],
            class_labels: vec![0, 7],
            class_means: vec![vec![1.0, 2.0], vec![-1.0, 1e-300]],
            global_mean: vec![0.0, 1.5],
            clamped_from: None,
        };
        assert_eq!(parse_lda(&format_lda(&lda), "t").unwrap(), lda);
        let grid = SphereGrid::new(16, 16).unwrap();
        let atoms = vec![
            AtomIndex { tau: 0.0, nu: 0.0, psi: 0.0, alpha: 1.0, beta: 1.0 },
            AtomIndex { tau: 1.2, nu: -0.4, psi: 0.3, alpha: 2.0, beta: 1.0 },
        ];
        let s = SparseSupport::from_atoms(grid, atoms).unwrap();
        assert_eq!(parse_support(&format_support(&s), "t").unwrap(), s);
    }
}
