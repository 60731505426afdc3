use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_SMOTE_K: usize = 5;

/// One synthetic point `x_a + u (x_b - x_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub parent: usize,
    pub neighbour: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    /// Originals first, synthetic points appended.
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub origins: Vec<SyntheticOrigin>,
}

impl SmoteOutput {
    pub fn n_synthetic(&self) -> usize {
        self.origins.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Appends `floor(rate · |minority|)` interpolated minority points. The
/// minority class is the rarer label (label 1 on a tie). Neighbours are the
/// `k` nearest other minority points by Euclidean distance, ties broken by
/// index.
pub fn smote_oversample<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    labels: &[u8],
    rate: f64,
    k: usize,
    rng: &mut R,
) -> Result<SmoteOutput> {
    if points.len() != labels.len() {
        return Err(Error::shape("smote", &[points.len()], &[labels.len()]));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("smote rate must be >= 0, got {rate}")));
    }
    let mut out = SmoteOutput {
        points: points.to_vec(),
        labels: labels.to_vec(),
        origins: Vec::new(),
    };
    if rate == 0.0 {
        return Ok(out);
    }
    if k == 0 {
        return Err(Error::Config("smote needs k >= 1".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let minority_label = u8::from(ones <= labels.len() - ones);
    let minority: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority_label).collect();
    if minority.len() < 2 {
        return Err(Error::Data(format!(
            "smote needs at least two minority points, found {}",
            minority.len()
        )));
    }
    let count = (rate * minority.len() as f64).floor() as usize;
    let k = k.min(minority.len() - 1);
    let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; minority.len()];
    for _ in 0..count {
        let a = rng.random_range(0..minority.len());
        let nn = neighbours[a].get_or_insert_with(|| {
            let pa = &points[minority[a]];
            let mut d: Vec<(f64, usize)> = (0..minority.len())
                .filter(|&b| b != a)
                .map(|b| (sq_dist(pa, &points[minority[b]]), b))
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            d.into_iter().take(k).map(|(_, b)| b).collect()
        });
        let b = nn[rng.random_range(0..nn.len())];
        let u: f64 = rng.random();
        let (pa, pb) = (&points[minority[a]], &points[minority[b]]);
        out.points
            .push(pa.iter().zip(pb).map(|(x, y)| x + u * (y - x)).collect());
        out.labels.push(minority_label);
        out.origins.push(SyntheticOrigin {
            parent: minority[a],
            neighbour: minority[b],
            u,
        });
    }
    Ok(out)
}
