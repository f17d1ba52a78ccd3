use crate::error::{Error, Result};
use crate::ndtape::Tensor;

/// `(xmin, xmax, ymin, ymax)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        if !(xmin < xmax && ymin < ymax) || ![xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad bounds ({xmin}, {xmax}, {ymin}, {ymax})")));
        }
        Ok(Bounds { xmin, xmax, ymin, ymax })
    }
}

/// Normalized 2D histogram. `cells[row * resolution + col]`, where rows
/// follow y and columns follow x, both ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub bounds: Bounds,
    pub resolution: usize,
    pub n: usize,
    pub cells: Vec<f64>,
}

fn bin(v: f64, lo: f64, hi: f64, r: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let i = ((v - lo) / (hi - lo) * r as f64).floor() as usize;
    Some(i.min(r - 1))
}

/// Counts samples per cell and divides by the total sample count, so the
/// grid sums to the fraction of samples inside the bounds. The upper
/// bounds belong to the last cell.
pub fn export_density_grid(samples: &Tensor, bounds: Bounds, resolution: usize) -> Result<DensityGrid> {
    let (n, d) = samples.dims2("export_density_grid")?;
    if d != 2 {
        return Err(Error::shape("export_density_grid", samples.shape(), &[n, 2]));
    }
    if resolution == 0 || n == 0 {
        return Err(Error::InvalidArgument("need resolution >= 1 and at least one sample".into()));
    }
    let mut counts = vec![0usize; resolution * resolution];
    for row in samples.data().chunks(2) {
        if let (Some(c), Some(r)) = (
            bin(row[0], bounds.xmin, bounds.xmax, resolution),
            bin(row[1], bounds.ymin, bounds.ymax, resolution),
        ) {
            counts[r * resolution + c] += 1;
        }
    }
    Ok(DensityGrid {
        bounds,
        resolution,
        n,
        cells: counts.into_iter().map(|c| c as f64 / n as f64).collect(),
    })
}

impl DensityGrid {
    /// One header line, then one line of space-separated values per row.
    pub fn to_text(&self) -> String {
        let b = &self.bounds;
        let mut out = format!(
            "# bounds {} {} {} {} resolution {} n {}\n",
            b.xmin, b.xmax, b.ymin, b.ymax, self.resolution, self.n
        );
        for row in self.cells.chunks(self.resolution) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}
