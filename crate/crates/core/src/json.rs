//! JSON documents: instances, solutions, and a 17-digit float formatter.

use std::io;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::gmm::{GaussianComponent, GmmInstance, Polyhedron};
use crate::numfmt::write_g17;

pub const INSTANCE_SCHEMA: &str = "gmmcc-instance-v1";
pub const SOLUTION_SCHEMA: &str = "gmmcc-solution-v1";

/// Wraps a serde_json formatter so floats are written with 17 significant
/// digits.
pub struct G17<F>(pub F);

macro_rules! delegate {
    ($($name:ident),*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
                self.0.$name(w)
            }
        )*
    };
}

macro_rules! delegate_first {
    ($($name:ident),*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
                self.0.$name(w, first)
            }
        )*
    };
}

impl<F: Formatter> Formatter for G17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        let mut s = String::with_capacity(24);
        write_g17(&mut s, value);
        w.write_all(s.as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate!(begin_array, end_array, end_array_value, begin_object, end_object, end_object_key, begin_object_value, end_object_value);
    delegate_first!(begin_array_value, begin_object_key);
}

/// Compact JSON with 17-digit floats and a trailing newline.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    write_with(value, G17(CompactFormatter))
}

/// Indented JSON with 17-digit floats and a trailing newline.
pub fn to_string_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    write_with(value, G17(PrettyFormatter::new()))
}

fn write_with<T: Serialize + ?Sized, F: Formatter>(value: &T, fmt: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    weight: f64,
    mean: Vec<f64>,
    /// n×n, row-major.
    covariance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct RegionDoc {
    /// m×n, row-major; m = len(d).
    A: Vec<f64>,
    d: Vec<f64>,
    /// p×n, row-major; p = len(h).
    H: Vec<f64>,
    h: Vec<f64>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    schema: String,
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    theta: f64,
    b: f64,
    c: Vec<f64>,
    components: Vec<ComponentDoc>,
    region: RegionDoc,
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn matrix(field: &str, data: Vec<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Config(format!(
            "{field} has {} entries, expected {rows}x{cols} = {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn instance_to_json(inst: &GmmInstance) -> Result<String> {
    let doc = InstanceDoc {
        schema: INSTANCE_SCHEMA.into(),
        n: inst.n,
        k: inst.k(),
        theta: inst.theta,
        b: inst.b,
        c: inst.c.to_vec(),
        components: inst
            .components
            .iter()
            .map(|c| ComponentDoc { weight: c.weight, mean: c.mean.to_vec(), covariance: flat(&c.covariance) })
            .collect(),
        region: RegionDoc {
            A: flat(&inst.region.a),
            d: inst.region.d.to_vec(),
            H: flat(&inst.region.h_mat),
            h: inst.region.h.to_vec(),
            box_lo: inst.region.box_lo.to_vec(),
            box_hi: inst.region.box_hi.to_vec(),
        },
    };
    to_string(&doc)
}

/// Parses an instance document. Shapes are checked here; numerical validity
/// (weights, definiteness) is left to [`crate::gmm::validate_instance`].
pub fn instance_from_json(text: &str) -> Result<GmmInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    if doc.schema != INSTANCE_SCHEMA {
        return Err(Error::Config(format!("unsupported instance schema {:?}", doc.schema)));
    }
    let n = doc.n;
    if doc.components.len() != doc.k {
        return Err(Error::Config(format!("K = {} but {} components listed", doc.k, doc.components.len())));
    }
    let check_len = |field: &str, len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(Error::Config(format!("{field} has length {len}, expected n = {n}")))
        }
    };
    check_len("c", doc.c.len())?;
    check_len("box_lo", doc.region.box_lo.len())?;
    check_len("box_hi", doc.region.box_hi.len())?;
    let mut components = Vec::with_capacity(doc.k);
    for (k, comp) in doc.components.into_iter().enumerate() {
        check_len(&format!("components[{k}].mean"), comp.mean.len())?;
        let cov = matrix(&format!("components[{k}].covariance"), comp.covariance, n, n)?;
        components.push(GaussianComponent::new(comp.weight, Array1::from(comp.mean), cov));
    }
    let r = doc.region;
    let (m, p) = (r.d.len(), r.h.len());
    let region = Polyhedron {
        a: matrix("region.A", r.A, m, n)?,
        d: Array1::from(r.d),
        h_mat: matrix("region.H", r.H, p, n)?,
        h: Array1::from(r.h),
        box_lo: Array1::from(r.box_lo),
        box_hi: Array1::from(r.box_hi),
    };
    Ok(GmmInstance { n, c: Array1::from(doc.c), b: doc.b, theta: doc.theta, components, region })
}

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    schema: String,
    x: Vec<f64>,
}

pub fn solution_to_json(x: &[f64]) -> Result<String> {
    to_string_pretty(&SolutionDoc { schema: SOLUTION_SCHEMA.into(), x: x.to_vec() })
}

/// Reads a candidate decision vector of length `n`, either as a solution
/// JSON document or as `name value` lines using the exported variable names
/// (only `x_1..x_n` are read; other names are ignored, `#` starts a comment).
pub fn parse_solution(text: &str, n: usize) -> Result<Array1<f64>> {
    if text.trim_start().starts_with('{') {
        let doc: SolutionDoc = serde_json::from_str(text)?;
        if doc.schema != SOLUTION_SCHEMA {
            return Err(Error::Config(format!("unsupported solution schema {:?}", doc.schema)));
        }
        if doc.x.len() != n {
            return Err(Error::Dimension { expected: n, got: doc.x.len() });
        }
        return Ok(Array1::from(doc.x));
    }
    let mut x = vec![None; n];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: idx + 1, msg };
        let mut parts = line.split_whitespace();
        let (name, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(parse_err(format!("expected `name value`, got {line:?}"))),
        };
        let Some(i) = name.strip_prefix("x_").and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        if i == 0 || i > n {
            return Err(parse_err(format!("{name} outside x_1..x_{n}")));
        }
        let v: f64 = value.parse().map_err(|_| parse_err(format!("bad number {value:?}")))?;
        if x[i - 1].replace(v).is_some() {
            return Err(parse_err(format!("{name} given twice")));
        }
    }
    let missing = x.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(Error::Dimension { expected: n, got: n - missing });
    }
    Ok(x.into_iter().map(|v| v.expect("checked")).collect())
}
