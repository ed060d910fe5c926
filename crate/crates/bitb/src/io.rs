//! File formats: grid functions (CSV and JSON), weights with their
//! certificates, martingale coefficients, atomic decompositions, norm records
//! and decay tables.

use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use bitb_core::accretive::AccretiveWeight;
use bitb_core::grid_function::{Axis, AxisFunction, GridFunction};
use bitb_core::hardy_atomic::{verify_atom, AtomicDecomposition};
use bitb_core::martingale::MartingaleCoefficients;
use bitb_core::operator_lab::DecayScan;
use bitb_core::accretive::AccretivePair;
use bitb_core::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunctionJson {
    pub depths: [u32; 2],
    pub dims: [u8; 2],
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&GridFunction> for GridFunctionJson {
    fn from(f: &GridFunction) -> Self {
        Self {
            depths: [f.axes[0].depth, f.axes[1].depth],
            dims: [f.axes[0].dim, f.axes[1].dim],
            re: f.values.iter().map(|z| z.re).collect(),
            im: f.values.iter().map(|z| z.im).collect(),
        }
    }
}

impl GridFunctionJson {
    pub fn to_grid(&self) -> Result<GridFunction> {
        if self.re.len() != self.im.len() {
            bail!("re has {} entries but im has {}", self.re.len(), self.im.len());
        }
        let axes = [Axis::new(self.depths[0], self.dims[0])?, Axis::new(self.depths[1], self.dims[1])?];
        let values = self.re.iter().zip(&self.im).map(|(&a, &b)| C64::new(a, b)).collect();
        Ok(GridFunction::new(axes, values)?)
    }
}

pub fn grid_to_json(f: &GridFunction) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GridFunctionJson::from(f))?)
}

pub fn grid_from_json(text: &str) -> Result<GridFunction> {
    serde_json::from_str::<GridFunctionJson>(text)?.to_grid()
}

/// `# depths=N1xN2 dims=nxm`, then a `c1,c2,re,im` header and one row per
/// finest cell in row-major order (first-axis cell slowest).
pub fn write_grid_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let [a1, a2] = f.axes;
    writeln!(w, "# depths={}x{} dims={}x{}", a1.depth, a2.depth, a1.dim, a2.dim)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["c1", "c2", "re", "im"])?;
    for c1 in 0..a1.cells() {
        for c2 in 0..a2.cells() {
            let z = f.at(c1, c2);
            out.write_record([c1.to_string(), c2.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid_csv<R: BufRead>(mut r: R) -> Result<GridFunction> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    let meta = first.trim().strip_prefix('#').ok_or_else(|| anyhow!("missing '# depths=… dims=…' line"))?;
    let mut depths = None;
    let mut dims = None;
    for field in meta.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| anyhow!("malformed header field '{field}'"))?;
        let (a, b) = value.split_once('x').ok_or_else(|| anyhow!("malformed header value '{value}'"))?;
        match key {
            "depths" => depths = Some([a.parse::<u32>()?, b.parse::<u32>()?]),
            "dims" => dims = Some([a.parse::<u8>()?, b.parse::<u8>()?]),
            _ => bail!("unknown header field '{key}'"),
        }
    }
    let (depths, dims) = (depths.context("header lacks depths")?, dims.context("header lacks dims")?);
    let axes = [Axis::new(depths[0], dims[0])?, Axis::new(depths[1], dims[1])?];
    let n2 = axes[1].cells();
    let mut values = vec![None; axes[0].cells() * n2];
    for row in csv::Reader::from_reader(r).deserialize::<(usize, usize, f64, f64)>() {
        let (c1, c2, re, im) = row?;
        if c1 >= axes[0].cells() || c2 >= n2 {
            bail!("cell ({c1}, {c2}) is outside the mesh");
        }
        values[c1 * n2 + c2] = Some(C64::new(re, im));
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| anyhow!("cell ({}, {}) is missing", i / n2, i % n2)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridFunction::new(axes, values)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFunctionJson {
    pub depth: u32,
    pub dim: u8,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&AxisFunction> for AxisFunctionJson {
    fn from(f: &AxisFunction) -> Self {
        Self {
            depth: f.axis.depth,
            dim: f.axis.dim,
            re: f.values.iter().map(|z| z.re).collect(),
            im: f.values.iter().map(|z| z.im).collect(),
        }
    }
}

impl AxisFunctionJson {
    pub fn to_axis_function(&self) -> Result<AxisFunction> {
        if self.re.len() != self.im.len() {
            bail!("re has {} entries but im has {}", self.re.len(), self.im.len());
        }
        let values = self.re.iter().zip(&self.im).map(|(&a, &b)| C64::new(a, b)).collect();
        Ok(AxisFunction::new(Axis::new(self.depth, self.dim)?, values)?)
    }
}

/// A weight and its sidecar record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightJson {
    pub function: AxisFunctionJson,
    pub c0: f64,
    #[serde(rename = "B")]
    pub bound: f64,
    pub seed: u64,
    pub certified_c0: f64,
    pub certified_bound: f64,
}

impl From<&AccretiveWeight> for WeightJson {
    fn from(w: &AccretiveWeight) -> Self {
        Self {
            function: (&w.function).into(),
            c0: w.c0,
            bound: w.bound,
            seed: w.seed,
            certified_c0: w.certified_c0,
            certified_bound: w.certified_bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub p: u32,
    pub q: u32,
    pub function: GridFunctionJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsJson {
    pub depths: [u32; 2],
    pub entries: Vec<CoefficientEntry>,
    pub row: Vec<GridFunctionJson>,
    pub column: Vec<GridFunctionJson>,
    pub corner: GridFunctionJson,
}

impl From<&MartingaleCoefficients> for CoefficientsJson {
    fn from(c: &MartingaleCoefficients) -> Self {
        let [d1, d2] = c.depths();
        let entries = (0..d1)
            .flat_map(|p| (0..d2).map(move |q| (p, q)))
            .map(|(p, q)| CoefficientEntry { p, q, function: c.get(p, q).into() })
            .collect();
        Self {
            depths: [d1, d2],
            entries,
            row: c.row.iter().map(Into::into).collect(),
            column: c.column.iter().map(Into::into).collect(),
            corner: (&c.corner).into(),
        }
    }
}

impl CoefficientsJson {
    pub fn to_coefficients(&self) -> Result<MartingaleCoefficients> {
        let corner = self.corner.to_grid()?;
        let [d1, d2] = self.depths;
        if self.entries.len() != (d1 * d2) as usize || self.row.len() != d1 as usize || self.column.len() != d2 as usize {
            bail!("coefficient counts do not match depths {d1}x{d2}");
        }
        let mut double = vec![None; (d1 * d2) as usize];
        for e in &self.entries {
            if e.p >= d1 || e.q >= d2 {
                bail!("entry ({}, {}) outside depths {d1}x{d2}", e.p, e.q);
            }
            double[(e.p * d2 + e.q) as usize] = Some(e.function.to_grid()?);
        }
        Ok(MartingaleCoefficients {
            axes: corner.axes,
            double: double.into_iter().map(|g| g.context("duplicate or missing entry")).collect::<Result<_>>()?,
            row: self.row.iter().map(|g| g.to_grid()).collect::<Result<_>>()?,
            column: self.column.iter().map(|g| g.to_grid()).collect::<Result<_>>()?,
            corner,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomCertificate {
    pub n: i32,
    pub support_measure: f64,
    pub nontrivial: bool,
    pub cancellation_residual: f64,
    pub maximal_constant: f64,
    pub off_support: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomLevelJson {
    pub n: i32,
    pub lambda: f64,
    pub atom_function: GridFunctionJson,
    #[serde(rename = "F_cells")]
    pub f_cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomicJson {
    pub levels: Vec<AtomLevelJson>,
    pub certificates: Vec<AtomCertificate>,
}

pub fn atomic_json(dec: &AtomicDecomposition, pair: &AccretivePair) -> bitb_core::Result<AtomicJson> {
    let mut levels = Vec::new();
    let mut certificates = Vec::new();
    for l in &dec.levels {
        let rep = verify_atom(&l.atom, pair)?;
        levels.push(AtomLevelJson {
            n: l.n,
            lambda: l.lambda,
            atom_function: (&l.atom.function).into(),
            f_cells: l.level_set.indices(),
        });
        certificates.push(AtomCertificate {
            n: l.n,
            support_measure: rep.support_measure,
            nontrivial: rep.nontrivial,
            cancellation_residual: rep.cancellation_residual,
            maximal_constant: rep.maximal_constant,
            off_support: rep.off_support,
            passes: rep.passes(),
        });
    }
    Ok(AtomicJson { levels, certificates })
}

/// One reported norm or constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub name: String,
    pub depth: [u32; 2],
    pub value: f64,
    /// The quantity is a finite-mesh stand-in for the continuous one.
    pub surrogate_flag: bool,
}

/// Columns `i1, j1, n_pairs, max_normalized, slope_fit_i, slope_fit_j`;
/// empty buckets and undefined slopes are written as empty fields.
pub fn write_decay_csv<W: Write>(scan: &DecayScan, w: W) -> Result<()> {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i1", "j1", "n_pairs", "max_normalized", "slope_fit_i", "slope_fit_j"])?;
    for r in &scan.rows {
        out.write_record([
            r.i1.to_string(),
            r.j1.to_string(),
            r.n_pairs.to_string(),
            opt(r.max_normalized),
            opt(scan.slope_i),
            opt(scan.slope_j),
        ])?;
    }
    out.flush()?;
    Ok(())
}
