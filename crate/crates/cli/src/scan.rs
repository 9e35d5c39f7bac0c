//! `divergence-scan`: the field divergence against its closed form over a
//! rectangular grid.

use std::fmt::Write as _;

use jlm_core::FieldSpec;

use crate::config::ConfigError;
use crate::LabError;

/// One grid axis, `name=lo:hi:count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub coordinate: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        jlm_core::flow::uniform_grid(self.lo, self.hi, self.count)
    }
}

/// Parse `q=-2:2:41,p=-1:1:21` against the field's coordinates.
pub fn parse_grid(spec: &str, field: &FieldSpec) -> Result<Vec<Axis>, ConfigError> {
    let vars = field.variables();
    let bad = |message: String| ConfigError::Invalid {
        field: "--grid".into(),
        message,
    };
    let mut axes: Vec<Axis> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("`{part}` is not name=lo:hi:count")))?;
        let coordinate = vars
            .lookup(name.trim())
            .ok_or_else(|| bad(format!("unknown coordinate `{}`", name.trim())))?;
        if axes.iter().any(|a| a.coordinate == coordinate) {
            return Err(bad(format!("coordinate `{}` given twice", name.trim())));
        }
        let fields: Vec<&str> = range.split(':').collect();
        let [lo, hi, count] = fields[..] else {
            return Err(bad(format!("`{range}` is not lo:hi:count")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{s}` is not a number")))
        };
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{count}` is not a point count")))?;
        let axis = Axis {
            coordinate,
            lo: num(lo)?,
            hi: num(hi)?,
            count,
        };
        if count == 0 || !(axis.hi >= axis.lo) {
            return Err(bad(format!("empty axis `{part}`")));
        }
        axes.push(axis);
    }
    if axes.is_empty() {
        return Err(bad("no axes given".into()));
    }
    Ok(axes)
}

/// CSV with every coordinate, `div`, `closed_form` and `abs_error`.
/// Coordinates without an axis are held at zero; the first axis varies
/// slowest.
pub fn divergence_scan(field: &FieldSpec, axes: &[Axis]) -> Result<String, LabError> {
    let layout = field.layout();
    let n = layout.n;
    let mut header: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
    header.extend((1..=n).map(|i| format!("p{i}")));
    if layout.contact {
        header.push("s".into());
    }
    header.extend(["div", "closed_form", "abs_error"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');

    let values: Vec<Vec<f64>> = axes.iter().map(Axis::values).collect();
    let mut index = vec![0usize; axes.len()];
    let mut x = vec![0.0; field.dim()];
    loop {
        for (a, axis) in axes.iter().enumerate() {
            x[axis.coordinate] = values[a][index[a]];
        }
        let numerical = |e: jlm_core::FieldError| LabError::Numerical {
            context: format!("divergence at {x:?}"),
            message: e.to_string(),
        };
        let div = field.divergence(&x).map_err(numerical)?;
        let closed = field.closed_form_divergence(&x).map_err(numerical)?;
        for v in &x {
            write!(out, "{v:?},").unwrap();
        }
        writeln!(out, "{div:?},{closed:?},{:?}", (div - closed).abs()).unwrap();

        let mut a = axes.len();
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            index[a] += 1;
            if index[a] < values[a].len() {
                break;
            }
            index[a] = 0;
        }
    }
}
