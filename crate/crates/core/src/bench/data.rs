use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Mat;
use crate::property::InputBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureMeta {
    pub name: String,
    pub binary: bool,
    pub protected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
    pub task: Task,
    pub bx: InputBox,
    pub features: Vec<FeatureMeta>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>, task: Task, bx: InputBox, features: Vec<FeatureMeta>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Data(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        if features.len() != x.cols() {
            return Err(Error::Data(format!(
                "{} columns but {} feature descriptions",
                x.cols(),
                features.len()
            )));
        }
        bx.validate_dim(x.cols())?;
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains NaN or infinite values".into()));
        }
        for r in 0..x.rows() {
            if !bx.contains(x.row(r), 1e-9) {
                return Err(Error::Data(format!("row {r} lies outside the input box")));
            }
        }
        if task == Task::Binary && y.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Data("binary task needs 0/1 targets".into()));
        }
        Ok(Dataset {
            x,
            y,
            task,
            bx,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn protected(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.features[i].protected).collect()
    }

    /// Rows `idx`, keeping the box and metadata.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
            bx: self.bx.clone(),
            features: self.features.clone(),
        }
    }

    /// Seeded shuffle, then the first `train_frac` of rows go to the first part.
    pub fn split(&self, train_frac: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_frac).round() as usize;
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    /// Writes the features and a final `y` column, values as shortest round-trip decimals.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        header.push("y");
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(r).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[r].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a numeric CSV whose last column is the target. Binary-valued
    /// feature columns are marked binary; the box is the data range unless given.
    pub fn read_numeric_csv(path: impl AsRef<Path>, task: Task, bx: Option<InputBox>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(Error::Data("need at least one feature and a target column".into()));
        }
        let m = header.len() - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("row {}: `{s}` is not a number", r + 1)))
                })
                .collect::<Result<_>>()?;
            if vals.len() != m + 1 {
                return Err(Error::Data(format!("row {} has {} fields", r + 1, vals.len())));
            }
            xs.extend_from_slice(&vals[..m]);
            ys.push(vals[m]);
        }
        if ys.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        let x = Mat::new(ys.len(), m, xs)?;
        let binary: Vec<usize> = (0..m)
            .filter(|&c| (0..x.rows()).all(|r| matches!(x.get(r, c), v if v == 0.0 || v == 1.0)))
            .collect();
        let bx = match bx {
            Some(b) => b,
            None => data_box(&x, &binary)?,
        };
        let features = header[..m]
            .iter()
            .enumerate()
            .map(|(i, n)| FeatureMeta {
                name: n.clone(),
                binary: bx.is_binary(i),
                protected: false,
            })
            .collect();
        Dataset::new(x, ys, task, bx, features)
    }
}

fn data_box(x: &Mat, binary: &[usize]) -> Result<InputBox> {
    let m = x.cols();
    let mut l = vec![f64::INFINITY; m];
    let mut u = vec![f64::NEG_INFINITY; m];
    for r in 0..x.rows() {
        for c in 0..m {
            l[c] = l[c].min(x.get(r, c));
            u[c] = u[c].max(x.get(r, c));
        }
    }
    for c in binary {
        l[*c] = 0.0;
        u[*c] = 1.0;
    }
    InputBox::new(l, u, binary.to_vec())
}

/// `y = x + α sin(ωx)` with `x` uniform on `[lo, hi]`; both standardized with
/// the sample moments. The box is the standardized image of `[lo, hi]`.
pub fn gen_monotonic(alpha: f64, omega: f64, n: usize, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || !(lo < hi) {
        return Err(Error::Data(format!("need n >= 2 and lo < hi (got n={n}, [{lo}, {hi}])")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x + alpha * (omega * x).sin()).collect();
    let (mx, sx) = moments(&xs);
    let (my, sy) = moments(&ys);
    let sx = if sx > 0.0 { sx } else { 1.0 };
    let sy = if sy > 0.0 { sy } else { 1.0 };
    let x = Mat::new(n, 1, xs.iter().map(|v| (v - mx) / sx).collect())?;
    let y = ys.iter().map(|v| (v - my) / sy).collect();
    let bx = InputBox::new(vec![(lo - mx) / sx], vec![(hi - mx) / sx], vec![])?;
    Dataset::new(
        x,
        y,
        Task::Regression,
        bx,
        vec![FeatureMeta {
            name: "x".into(),
            binary: false,
            protected: false,
        }],
    )
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Two interleaving half circles with Gaussian noise, scaled into `[0, 1]²`.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Data("two moons needs at least two points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, noise.max(0.0))
        .map_err(|e| Error::Data(e.to_string()))?;
    let mut pts = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = rng.gen_range(0.0..std::f64::consts::PI);
        let (mut a, mut b) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        a += rng.sample(normal);
        b += rng.sample(normal);
        // the noiseless moons span [-1, 2] × [-0.5, 1]; keep a margin for noise
        let a = ((a + 1.5) / 4.0).clamp(0.0, 1.0);
        let b = ((b + 1.0) / 2.5).clamp(0.0, 1.0);
        pts.push(a);
        pts.push(b);
        ys.push(label as f64);
    }
    let names = ["x0", "x1"];
    Dataset::new(
        Mat::new(n, 2, pts)?,
        ys,
        Task::Binary,
        InputBox::uniform(2, 0.0, 1.0)?,
        names
            .iter()
            .map(|n| FeatureMeta {
                name: (*n).into(),
                binary: false,
                protected: false,
            })
            .collect(),
    )
}

/// Raw rows of the synthetic fairness table, in the layout [`FAIRNESS_SCHEMA`] describes.
///
/// The label depends on two numeric features, a three-level category and the
/// binary protected attribute; a few cells are left empty.
pub fn synthetic_fairness_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("income,debt,region,group,label\n");
    for i in 0..n {
        let income: f64 = rng.gen_range(20.0..120.0);
        let debt: f64 = rng.gen_range(0.0..50.0);
        let region = ["north", "south", "west"][rng.gen_range(0..3)];
        let group = u8::from(rng.gen_bool(0.5));
        let logit = 0.06 * (income - 70.0) - 0.08 * (debt - 25.0)
            + match region {
                "north" => 0.5,
                "south" => -0.5,
                _ => 0.0,
            }
            + 1.5 * (f64::from(group) - 0.5);
        let p = 1.0 / (1.0 + (-logit).exp());
        let label = u8::from(rng.gen_bool(p));
        if i % 97 == 13 {
            out.push_str(&format!("{income:.2},,{region},{group},{label}\n"));
        } else {
            out.push_str(&format!("{income:.2},{debt:.2},{region},{group},{label}\n"));
        }
    }
    out
}

/// Schema matching [`synthetic_fairness_csv`].
pub const FAIRNESS_SCHEMA: &str = r#"{
  "target": "label",
  "task": "binary",
  "missing": "dropRow",
  "columns": [
    {"name": "income", "kind": "numeric"},
    {"name": "debt", "kind": "numeric"},
    {"name": "region", "kind": "categorical"},
    {"name": "group", "kind": "binary", "protected": true}
  ]
}"#;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub protected: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    DropColumn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Schema {
    pub target: String,
    pub task: Task,
    #[serde(default)]
    pub missing: MissingPolicy,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "?" | "null")
}

/// Parses CSV text under `schema`: drops missing values, min-max scales
/// numeric columns into `[0, 1]`, one-hot encodes categoricals.
pub fn load_csv_str(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in the file")))
    };
    let target = col(&schema.target)?;
    let mut cols = Vec::new();
    for c in &schema.columns {
        cols.push((c, col(&c.name)?));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(|s| s.trim().to_string()).collect());
    }
    // the target is never dropped as a column; rows missing it always go
    rows.retain(|r| r.get(target).is_some_and(|s| !is_missing(s)));
    let mut keep: Vec<(&ColumnSpec, usize)> = cols;
    match schema.missing {
        MissingPolicy::DropRow => {
            rows.retain(|r| keep.iter().all(|(_, i)| r.get(*i).is_some_and(|s| !is_missing(s))));
        }
        MissingPolicy::DropColumn => {
            keep.retain(|(_, i)| rows.iter().all(|r| r.get(*i).is_some_and(|s| !is_missing(s))));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no rows left after dropping missing values".into()));
    }
    if keep.is_empty() {
        return Err(Error::Data("no feature columns left after dropping missing values".into()));
    }
    let parse = |s: &str, name: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Data(format!("column `{name}`: `{s}` is not a number")))
    };
    let n = rows.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut features = Vec::new();
    for (spec, i) in &keep {
        match spec.kind {
            ColumnKind::Numeric => {
                let v: Vec<f64> = rows.iter().map(|r| parse(&r[*i], &spec.name)).collect::<Result<_>>()?;
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                columns.push(
                    v.iter()
                        .map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 })
                        .collect(),
                );
                features.push(FeatureMeta {
                    name: spec.name.clone(),
                    binary: false,
                    protected: spec.protected,
                });
            }
            ColumnKind::Binary => {
                let v: Vec<f64> = rows.iter().map(|r| parse(&r[*i], &spec.name)).collect::<Result<_>>()?;
                if v.iter().any(|x| *x != 0.0 && *x != 1.0) {
                    return Err(Error::Data(format!("column `{}` is not 0/1", spec.name)));
                }
                columns.push(v);
                features.push(FeatureMeta {
                    name: spec.name.clone(),
                    binary: true,
                    protected: spec.protected,
                });
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<&str> = rows.iter().map(|r| r[*i].as_str()).collect();
                for level in levels {
                    columns.push(rows.iter().map(|r| f64::from(u8::from(r[*i] == level))).collect());
                    features.push(FeatureMeta {
                        name: format!("{}={level}", spec.name),
                        binary: true,
                        protected: spec.protected,
                    });
                }
            }
        }
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|r| parse(&r[target], &schema.target))
        .collect::<Result<_>>()?;
    let m = columns.len();
    let mut data = Vec::with_capacity(n * m);
    for r in 0..n {
        for c in &columns {
            data.push(c[r]);
        }
    }
    let binary: Vec<usize> = (0..m).filter(|&c| features[c].binary).collect();
    let bx = InputBox::new(vec![0.0; m], vec![1.0; m], binary)?;
    Dataset::new(Mat::new(n, m, data)?, y, schema.task, bx, features)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    load_csv_str(&std::fs::read_to_string(path)?, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(missing: MissingPolicy, cols: &[(&str, ColumnKind)]) -> Schema {
        Schema {
            target: "t".into(),
            task: Task::Regression,
            missing,
            columns: cols
                .iter()
                .map(|(n, k)| ColumnSpec {
                    name: (*n).into(),
                    kind: *k,
                    protected: false,
                })
                .collect(),
        }
    }

    #[test]
    fn alpha_zero_is_identity() {
        let d = gen_monotonic(0.0, 0.6, 200, -10.0, 10.0, 1).unwrap();
        for r in 0..d.len() {
            assert!((d.x.get(r, 0) - d.y[r]).abs() < 1e-12);
        }
        assert!(d.bx.l[0] < -1.5 && d.bx.u[0] > 1.5);
    }

    #[test]
    fn grid_monotonicity_matches_derivative() {
        for a in [2.0, 3.0, 4.0] {
            for w in [0.4f64, 0.6, 0.8] {
                // 1 + αω cos(ωx) dips below zero iff αω > 1
                let xs = (0..2000).map(|i| -10.0 + 20.0 * i as f64 / 1999.0);
                let dips = xs.into_iter().any(|x| 1.0 + a * w * (w * x).cos() < 0.0);
                assert_eq!(dips, a * w > 1.0, "alpha {a}, omega {w}");
            }
        }
    }

    #[test]
    fn missing_row_dropped() {
        let text = "a,t\n1,0\n,1\n3,2\n";
        let d = load_csv_str(text, &schema(MissingPolicy::DropRow, &[("a", ColumnKind::Numeric)])).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn numeric_scaled_to_unit() {
        let text = "a,t\n10,0\n20,1\n30,2\n";
        let d = load_csv_str(text, &schema(MissingPolicy::DropRow, &[("a", ColumnKind::Numeric)])).unwrap();
        assert_eq!(d.x.as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn categorical_one_hot() {
        let text = "c,t\nx,0\ny,1\nz,0\nx,1\n";
        let d = load_csv_str(text, &schema(MissingPolicy::DropRow, &[("c", ColumnKind::Categorical)])).unwrap();
        assert_eq!(d.dim(), 3);
        assert!(d.features.iter().all(|f| f.binary));
        assert_eq!(d.bx.binary, vec![0, 1, 2]);
        assert_eq!(d.x.row(3), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn drop_column_policy_and_unknown_column() {
        let text = "a,b,t\n1,,0\n2,5,1\n";
        let s = schema(
            MissingPolicy::DropColumn,
            &[("a", ColumnKind::Numeric), ("b", ColumnKind::Numeric)],
        );
        let d = load_csv_str(text, &s).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 1));
        let bad = schema(MissingPolicy::DropRow, &[("zzz", ColumnKind::Numeric)]);
        assert!(matches!(load_csv_str(text, &bad), Err(Error::Data(_))));
    }

    #[test]
    fn shipped_fairness_schema_loads() {
        let s: Schema = serde_json::from_str(FAIRNESS_SCHEMA).unwrap();
        let d = load_csv_str(&synthetic_fairness_csv(500, 3), &s).unwrap();
        assert!(d.len() < 500 && d.len() > 480);
        assert_eq!(d.dim(), 6);
        assert_eq!(d.protected(), vec![5]);
        assert!(d.bx.is_binary(5));
    }

    #[test]
    fn moons_in_unit_square() {
        let d = two_moons(300, 0.1, 4).unwrap();
        assert_eq!(d.len(), 300);
        assert!(d.y.iter().filter(|v| **v == 1.0).count() == 150);
    }

    #[test]
    fn numeric_csv_round_trip() {
        let d = gen_monotonic(2.0, 0.6, 50, -10.0, 10.0, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        let back = Dataset::read_numeric_csv(&p, Task::Regression, Some(d.bx.clone())).unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.y, d.y);
    }
}
