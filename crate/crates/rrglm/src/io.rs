//! File ingestion and report emission. CSV (with a header row) is the
//! only data format; fitted models, solution paths, and tuning reports
//! use a line-oriented text layout in which every float is written with
//! 17 significant digits. Writers are deterministic: the same inputs
//! produce byte-identical files, so reports never embed timestamps or
//! environment details.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::glm::{column_standardization, DataSet, Family};
use crate::linalg::ThinSvd;
use crate::solve::{CoefficientEstimate, PathEntry, SolutionPath};
use crate::textfmt::{fmt_f64, parse_f64};
use crate::threshold::ThresholdRule;
use crate::tune::PcvReport;

/// Columnwise affine transform recorded at load time so that new data
/// can be pushed through the same coordinates at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Array1<f64>,
    pub sds: Array1<f64>,
}

impl Standardization {
    /// Centers and rescales `x` columnwise; `x` must have one column
    /// per recorded predictor.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::input(format!(
                "matrix has {} columns but the standardization was fit on {}",
                x.ncols(),
                self.means.len()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.means[j], self.sds[j]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        Ok(out)
    }
}

/// A dataset plus the standardization applied while loading it, if any.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: DataSet,
    pub standardization: Option<Standardization>,
}

/// Everything needed to reuse a fit later: the data conventions it was
/// produced under and the estimate itself.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub family: Family,
    pub intercept: bool,
    pub standardization: Option<Standardization>,
    pub rule: ThresholdRule,
    pub estimate: CoefficientEstimate,
}

/// A solution path plus the shared data conventions of its entries.
#[derive(Debug, Clone)]
pub struct PathFile {
    pub family: Family,
    pub intercept: bool,
    pub standardization: Option<Standardization>,
    pub path: SolutionPath,
}

/// Reads a numeric CSV: a header row followed by rows of numbers.
/// Lines starting with `#` are skipped. Errors name the data row and
/// column of the first offending cell.
pub fn read_csv_matrix(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(Error::input(format!("{}: no columns", path.display())));
    }
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let parsed: f64 = cell.parse().map_err(|_| {
                Error::input(format!(
                    "{}: data row {}, column {:?}: cannot parse {cell:?} as a number",
                    path.display(),
                    i + 1,
                    headers.get(j).map(String::as_str).unwrap_or("?"),
                ))
            })?;
            values.push(parsed);
        }
        rows += 1;
    }
    let matrix = Array2::from_shape_vec((rows, headers.len()), values)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok((headers, matrix))
}

/// Writes a matrix as CSV with generated headers `prefix1..prefixK` and
/// full-precision values.
pub fn write_csv_matrix(path: &Path, prefix: &str, a: ArrayView2<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let headers: Vec<String> = (1..=a.ncols()).map(|j| format!("{prefix}{j}")).collect();
    writer.write_record(&headers)?;
    for row in a.rows() {
        writer.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a design and response CSV pair into a [`DataSet`]. The design
/// must not contain an intercept column; one is prepended unless
/// `intercept` is false. With `standardize`, predictors are centered
/// and scaled to unit standard deviation first, and the transform is
/// returned alongside the data.
pub fn load_dataset(
    design_path: &Path,
    response_path: &Path,
    family: Family,
    intercept: bool,
    standardize: bool,
) -> Result<LoadedData> {
    let (_, predictors) = read_csv_matrix(design_path)?;
    let (_, response) = read_csv_matrix(response_path)?;
    if predictors.nrows() != response.nrows() {
        return Err(Error::input(format!(
            "design {} has {} rows but response {} has {}",
            design_path.display(),
            predictors.nrows(),
            response_path.display(),
            response.nrows()
        )));
    }
    let (predictors, standardization) = if standardize {
        let st = {
            let (means, sds) = column_standardization(predictors.view())?;
            Standardization { means, sds }
        };
        (st.apply(predictors.view())?, Some(st))
    } else {
        (predictors, None)
    };
    let data = DataSet::new(predictors, response, family, intercept)?;
    Ok(LoadedData { data, standardization })
}

// ---------------------------------------------------------------------
// Report layout helpers. Each report is a sequence of lines; a line is
// a tag followed by space-separated fields. Matrices occupy one line
// per row after a `tag rows cols` header.

fn push_matrix(out: &mut String, tag: &str, a: &Array2<f64>) {
    let _ = writeln!(out, "{tag} {} {}", a.nrows(), a.ncols());
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn push_vector(out: &mut String, tag: &str, v: &Array1<f64>) {
    let line: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
    let _ = writeln!(out, "{tag} {} {}", v.len(), line.join(" "));
}

fn push_standardization(out: &mut String, st: &Option<Standardization>) {
    match st {
        None => {
            let _ = writeln!(out, "standardize none");
        }
        Some(st) => {
            let _ = writeln!(out, "standardize {}", st.means.len());
            let means: Vec<String> = st.means.iter().map(|&v| fmt_f64(v)).collect();
            let sds: Vec<String> = st.sds.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(out, "{}", means.join(" "));
            let _ = writeln!(out, "{}", sds.join(" "));
        }
    }
}

fn push_estimate(out: &mut String, rule: &ThresholdRule, est: &CoefficientEstimate) {
    let _ = writeln!(out, "rule {}", rule.spec_string());
    let _ = writeln!(out, "k0 {}", fmt_f64(est.k0));
    let _ = writeln!(out, "rank {}", est.rank);
    let _ = writeln!(out, "objective {}", fmt_f64(est.objective));
    let _ = writeln!(out, "iterations {}", est.iterations);
    let _ = writeln!(out, "converged {}", est.converged);
    let _ = writeln!(out, "fixed_point_residual {}", fmt_f64(est.fixed_point_residual));
    let trace: Vec<String> = est.objective_trace.iter().map(|&v| fmt_f64(v)).collect();
    let _ = writeln!(out, "objective_trace {} {}", trace.len(), trace.join(" "));
    let ranks: Vec<String> = est.iterate_ranks.iter().map(|r| r.to_string()).collect();
    let _ = writeln!(out, "iterate_ranks {} {}", ranks.len(), ranks.join(" "));
    push_matrix(out, "b", &est.b);
    push_matrix(out, "svd_u", &est.svd_slope.u);
    push_vector(out, "svd_s", &est.svd_slope.s);
    push_matrix(out, "svd_v", &est.svd_slope.v);
}

/// Sequential reader over report lines that turns every surprise into
/// an input error naming the line.
struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { lines: text.lines(), line_no: 0 }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::input("report ended early".to_string()))
    }

    fn fail(&self, what: &str) -> Error {
        Error::input(format!("report line {}: {what}", self.line_no))
    }

    /// Next line split into fields, with the leading tag checked.
    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(t) if t == tag => Ok(fields.collect()),
            Some(t) => Err(self.fail(&format!("expected tag {tag:?}, found {t:?}"))),
            None => Err(self.fail(&format!("expected tag {tag:?} on a blank line"))),
        }
    }

    fn tagged_f64(&mut self, tag: &str) -> Result<f64> {
        let fields = self.tagged(tag)?;
        let [field] = fields.as_slice() else {
            return Err(self.fail(&format!("{tag} takes exactly one value")));
        };
        parse_f64(field).ok_or_else(|| self.fail(&format!("bad float {field:?}")))
    }

    fn tagged_usize(&mut self, tag: &str) -> Result<usize> {
        let fields = self.tagged(tag)?;
        let [field] = fields.as_slice() else {
            return Err(self.fail(&format!("{tag} takes exactly one value")));
        };
        field.parse().map_err(|_| self.fail(&format!("bad count {field:?}")))
    }

    fn tagged_bool(&mut self, tag: &str) -> Result<bool> {
        let fields = self.tagged(tag)?;
        match fields.as_slice() {
            ["true"] => Ok(true),
            ["false"] => Ok(false),
            _ => Err(self.fail(&format!("{tag} takes true or false"))),
        }
    }

    fn float_row(&mut self, expect: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let row: Option<Vec<f64>> = line.split_whitespace().map(parse_f64).collect();
        match row {
            Some(row) if row.len() == expect => Ok(row),
            Some(row) => Err(self.fail(&format!("expected {expect} values, found {}", row.len()))),
            None => Err(self.fail("bad float")),
        }
    }

    fn matrix(&mut self, tag: &str) -> Result<Array2<f64>> {
        let fields = self.tagged(tag)?;
        let [rows, cols] = fields.as_slice() else {
            return Err(self.fail(&format!("{tag} takes rows and cols")));
        };
        let rows: usize = rows.parse().map_err(|_| self.fail("bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| self.fail("bad column count"))?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            values.extend(self.float_row(cols)?);
        }
        Array2::from_shape_vec((rows, cols), values).map_err(|e| self.fail(&e.to_string()))
    }

    fn vector(&mut self, tag: &str) -> Result<Array1<f64>> {
        let fields = self.tagged(tag)?;
        let (len, rest) = fields
            .split_first()
            .ok_or_else(|| self.fail(&format!("{tag} takes a length")))?;
        let len: usize = len.parse().map_err(|_| self.fail("bad length"))?;
        if rest.len() != len {
            return Err(self.fail(&format!("expected {len} values, found {}", rest.len())));
        }
        let values: Option<Vec<f64>> = rest.iter().map(|f| parse_f64(f)).collect();
        values
            .map(Array1::from_vec)
            .ok_or_else(|| self.fail("bad float"))
    }

    fn standardization(&mut self) -> Result<Option<Standardization>> {
        let fields = self.tagged("standardize")?;
        match fields.as_slice() {
            ["none"] => Ok(None),
            [count] => {
                let p: usize = count.parse().map_err(|_| self.fail("bad predictor count"))?;
                let means = Array1::from_vec(self.float_row(p)?);
                let sds = Array1::from_vec(self.float_row(p)?);
                Ok(Some(Standardization { means, sds }))
            }
            _ => Err(self.fail("standardize takes none or a predictor count")),
        }
    }

    fn estimate(&mut self) -> Result<(ThresholdRule, CoefficientEstimate)> {
        let rule_fields = self.tagged("rule")?;
        let [spec] = rule_fields.as_slice() else {
            return Err(self.fail("rule takes one spec string"));
        };
        let rule = ThresholdRule::from_str(spec)?;
        let k0 = self.tagged_f64("k0")?;
        let rank = self.tagged_usize("rank")?;
        let objective = self.tagged_f64("objective")?;
        let iterations = self.tagged_usize("iterations")?;
        let converged = self.tagged_bool("converged")?;
        let fixed_point_residual = self.tagged_f64("fixed_point_residual")?;
        let objective_trace = self.vector("objective_trace")?.to_vec();
        let rank_fields = self.tagged("iterate_ranks")?;
        let (len, rest) = rank_fields
            .split_first()
            .ok_or_else(|| self.fail("iterate_ranks takes a length"))?;
        let len: usize = len.parse().map_err(|_| self.fail("bad length"))?;
        if rest.len() != len {
            return Err(self.fail(&format!("expected {len} ranks, found {}", rest.len())));
        }
        let iterate_ranks: Vec<usize> = rest
            .iter()
            .map(|f| f.parse().map_err(|_| self.fail(&format!("bad rank {f:?}"))))
            .collect::<Result<_>>()?;
        let b = self.matrix("b")?;
        let u = self.matrix("svd_u")?;
        let s = self.vector("svd_s")?;
        let v = self.matrix("svd_v")?;
        let intercept = b.nrows() == u.nrows() + 1;
        Ok((
            rule,
            CoefficientEstimate {
                b,
                intercept,
                k0,
                svd_slope: ThinSvd { u, s, v },
                rank,
                objective,
                objective_trace,
                iterate_ranks,
                iterations,
                converged,
                fixed_point_residual,
            },
        ))
    }
}

/// Serializes a fitted model.
pub fn model_to_string(model: &ModelFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rrglm model v1");
    let _ = writeln!(out, "family {}", model.family);
    let _ = writeln!(out, "intercept {}", model.intercept);
    push_standardization(&mut out, &model.standardization);
    push_estimate(&mut out, &model.rule, &model.estimate);
    let _ = writeln!(out, "end");
    out
}

/// Parses a file produced by [`model_to_string`].
pub fn model_from_string(text: &str) -> Result<ModelFile> {
    let mut cur = Cursor::new(text);
    if cur.next_line()? != "rrglm model v1" {
        return Err(cur.fail("not a model file"));
    }
    let family_fields = cur.tagged("family")?;
    let [family] = family_fields.as_slice() else {
        return Err(cur.fail("family takes one name"));
    };
    let family = Family::from_str(family)?;
    let intercept = cur.tagged_bool("intercept")?;
    let standardization = cur.standardization()?;
    let (rule, mut estimate) = cur.estimate()?;
    estimate.intercept = intercept;
    cur.tagged("end")?;
    Ok(ModelFile { family, intercept, standardization, rule, estimate })
}

/// Serializes a solution path with its shared data conventions.
pub fn path_to_string(file: &PathFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rrglm path v1");
    let _ = writeln!(out, "family {}", file.family);
    let _ = writeln!(out, "intercept {}", file.intercept);
    push_standardization(&mut out, &file.standardization);
    let _ = writeln!(out, "entries {}", file.path.entries.len());
    for (i, entry) in file.path.entries.iter().enumerate() {
        match &entry.result {
            Ok(est) => {
                let _ = writeln!(out, "entry {i} ok");
                push_estimate(&mut out, &entry.rule, est);
            }
            Err(msg) => {
                let _ = writeln!(out, "entry {i} error");
                let _ = writeln!(out, "rule {}", entry.rule.spec_string());
                let _ = writeln!(out, "message {}", msg.replace('\n', "; "));
            }
        }
    }
    let _ = writeln!(out, "end");
    out
}

/// Parses a file produced by [`path_to_string`].
pub fn path_from_string(text: &str) -> Result<PathFile> {
    let mut cur = Cursor::new(text);
    if cur.next_line()? != "rrglm path v1" {
        return Err(cur.fail("not a path file"));
    }
    let family_fields = cur.tagged("family")?;
    let [family] = family_fields.as_slice() else {
        return Err(cur.fail("family takes one name"));
    };
    let family = Family::from_str(family)?;
    let intercept = cur.tagged_bool("intercept")?;
    let standardization = cur.standardization()?;
    let count = cur.tagged_usize("entries")?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let fields = cur.tagged("entry")?;
        match fields.as_slice() {
            [idx, "ok"] if idx.parse() == Ok(i) => {
                let (rule, mut est) = cur.estimate()?;
                est.intercept = intercept;
                entries.push(PathEntry { rule, result: Ok(est) });
            }
            [idx, "error"] if idx.parse() == Ok(i) => {
                let rule_fields = cur.tagged("rule")?;
                let [spec] = rule_fields.as_slice() else {
                    return Err(cur.fail("rule takes one spec string"));
                };
                let rule = ThresholdRule::from_str(spec)?;
                let line = cur.next_line()?;
                let message = line
                    .strip_prefix("message ")
                    .or_else(|| (line == "message").then_some(""))
                    .ok_or_else(|| cur.fail("expected a message line"))?;
                entries.push(PathEntry { rule, result: Err(message.to_string()) });
            }
            _ => return Err(cur.fail(&format!("expected entry {i}"))),
        }
    }
    cur.tagged("end")?;
    Ok(PathFile { family, intercept, standardization, path: SolutionPath { entries } })
}

/// Serializes a tuning report: one line per candidate plus the
/// selection.
pub fn pcv_report_to_string(report: &PcvReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rrglm tune v1");
    let _ = writeln!(out, "seed {}", report.seed);
    let _ = writeln!(out, "folds {}", report.folds);
    let _ = writeln!(out, "bic {}", report.used_bic);
    let _ = writeln!(out, "candidates {}", report.candidates.len());
    for (i, c) in report.candidates.iter().enumerate() {
        let _ = writeln!(
            out,
            "candidate {i} rule {} rank {} cv_deviance {} score {} fold_failures {}",
            c.rule.spec_string(),
            c.rank,
            fmt_f64(c.cv_deviance),
            fmt_f64(c.score),
            c.fold_failures
        );
    }
    let _ = writeln!(out, "selected {}", report.selected);
    let _ = writeln!(out, "end");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::{fit_path, FitOptions};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::fs;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn csv_loader_reads_values_and_skips_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "m.csv",
            "a,b\n# a comment\n1.5,2\n-3,4e-2\n",
        );
        let (headers, m) = read_csv_matrix(&path).unwrap();
        assert_eq!(headers, vec!["a", "b"]);
        assert_eq!(m, array![[1.5, 2.0], [-3.0, 0.04]]);
    }

    #[test]
    fn csv_loader_names_the_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "m.csv", "a,b\n1,2\n3,oops\n");
        let err = read_csv_matrix(&path).unwrap_err().to_string();
        assert!(err.contains("data row 2"), "{err}");
        assert!(err.contains("\"b\""), "{err}");
        assert!(err.contains("oops"), "{err}");
    }

    #[test]
    fn csv_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let a = array![[std::f64::consts::PI, 1e-300], [-0.1, 2.0 / 3.0]];
        let path = dir.path().join("out.csv");
        write_csv_matrix(&path, "c", a.view()).unwrap();
        let (headers, back) = read_csv_matrix(&path).unwrap();
        assert_eq!(headers, vec!["c1", "c2"]);
        for (x, y) in a.iter().zip(back.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn dataset_loading_checks_row_counts_and_adds_the_intercept() {
        let dir = tempfile::tempdir().unwrap();
        let design = write_file(dir.path(), "x.csv", "x1,x2\n1,2\n3,4\n5,6\n");
        let response = write_file(dir.path(), "y.csv", "y1\n0\n1\n1\n");
        let loaded =
            load_dataset(&design, &response, Family::BernoulliLogit, true, false).unwrap();
        assert_eq!(loaded.data.x().ncols(), 3);
        assert!(loaded.data.x().column(0).iter().all(|&v| v == 1.0));
        assert!(loaded.standardization.is_none());

        let short = write_file(dir.path(), "y2.csv", "y1\n0\n1\n");
        let err = load_dataset(&design, &short, Family::BernoulliLogit, true, false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("3 rows") && err.contains("has 2"), "{err}");

        let no_int =
            load_dataset(&design, &response, Family::BernoulliLogit, false, false).unwrap();
        assert_eq!(no_int.data.x().ncols(), 2);
    }

    #[test]
    fn standardized_columns_have_zero_mean_and_unit_sd() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut design = String::from("x1,x2,x3\n");
        let mut response = String::from("y1\n");
        for _ in 0..40 {
            let row: Vec<String> = (0..3)
                .map(|j| format!("{}", rng.gen_range(-2.0..2.0) * (j as f64 + 1.0) + 0.7))
                .collect();
            design.push_str(&format!("{}\n", row.join(",")));
            response.push_str(&format!("{}\n", rng.gen_range(-1.0..1.0)));
        }
        let dpath = write_file(dir.path(), "x.csv", &design);
        let rpath = write_file(dir.path(), "y.csv", &response);
        let loaded = load_dataset(&dpath, &rpath, Family::Gaussian, true, true).unwrap();
        let slope = loaded.data.x_slope();
        for col in slope.axis_iter(Axis(1)) {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-10, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() <= 1e-10, "sd {}", var.sqrt());
        }
        let st = loaded.standardization.unwrap();
        assert_eq!(st.means.len(), 3);
    }

    fn toy_dataset(seed: u64) -> DataSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((25, 4), || rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((25, 3), || rng.gen_range(-1.0..1.0));
        DataSet::new(x, y, Family::Gaussian, true).unwrap()
    }

    #[test]
    fn model_file_roundtrips_byte_for_byte() {
        let data = toy_dataset(31);
        let rule = ThresholdRule::Soft { lambda: 0.2 };
        let path = fit_path(&data, &[rule.clone()], &FitOptions::default(), 1).unwrap();
        let est = path.entries[0].result.as_ref().unwrap().clone();
        let model = ModelFile {
            family: Family::Gaussian,
            intercept: true,
            standardization: Some(Standardization {
                means: array![0.1, -0.2, 0.3, 7.0],
                sds: array![1.0, 2.0, 0.5, 3.0],
            }),
            rule,
            estimate: est,
        };
        let text = model_to_string(&model);
        let back = model_from_string(&text).unwrap();
        assert_eq!(model_to_string(&back), text);
        assert_eq!(back.intercept, model.intercept);
        assert_eq!(back.standardization, model.standardization);
        assert_eq!(back.estimate.b.view(), model.estimate.b.view());
    }

    #[test]
    fn path_file_roundtrips_with_mixed_outcomes() {
        let data = toy_dataset(32);
        let rules = vec![
            ThresholdRule::Soft { lambda: 0.1 },
            ThresholdRule::Hard { lambda: 0.4 },
        ];
        let mut path = fit_path(&data, &rules, &FitOptions::default(), 1).unwrap();
        path.entries.push(PathEntry {
            rule: ThresholdRule::Ridge { lambda: 1.0 },
            result: Err("synthetic failure\nwith a second line".to_string()),
        });
        let file = PathFile {
            family: Family::Gaussian,
            intercept: true,
            standardization: None,
            path,
        };
        let text = path_to_string(&file);
        let back = path_from_string(&text).unwrap();
        assert_eq!(path_to_string(&back), text);
        assert_eq!(back.path.entries.len(), 3);
        assert!(back.path.entries[2].result.is_err());
    }

    #[test]
    fn report_parsers_name_the_offending_line() {
        let err = model_from_string("rrglm model v1\nfamily gaussian\nintercept maybe\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = path_from_string("rrglm tune v1\n").unwrap_err().to_string();
        assert!(err.contains("not a path file"), "{err}");
    }

    #[test]
    fn tune_report_lists_candidates_in_grid_order() {
        use crate::tune::{pcv, lambda_grid};
        let data = toy_dataset(33);
        let k0 = crate::glm::scale_factor(
            Family::Gaussian,
            data.x(),
            &ThresholdRule::Soft { lambda: 0.0 },
        )
        .unwrap();
        let grid = lambda_grid(&data, 4, 1e-2, k0).unwrap();
        let rules: Vec<ThresholdRule> = grid
            .iter()
            .map(|&l| ThresholdRule::Soft { lambda: l })
            .collect();
        let path = fit_path(&data, &rules, &FitOptions::default(), 1).unwrap();
        let report = pcv(&data, &path, 3, 0.0, true, 9).unwrap();
        let text = pcv_report_to_string(&report);
        assert!(text.starts_with("rrglm tune v1\nseed 9\nfolds 3\nbic true\n"), "{text}");
        assert_eq!(text.matches("\ncandidate ").count(), 4);
        let again = pcv_report_to_string(&pcv(&data, &path, 3, 0.0, true, 9).unwrap());
        assert_eq!(text, again);
    }
}
