//! Correlated Rayleigh uplink channels toward the reference cell:
//! `g = R^{1/2} Lambda^{1/2} h`, with `R` block diagonal over RRUs and
//! `Lambda` constant across the antennas of one RRU.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{block_diagonal, psd_sqrt, CMatrix, CVector, C64};
use crate::scenario::LargeScaleMap;

/// Receive-correlation model for one RRU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationModel {
    /// Real exponential model, entry `(i, j) = r^|i - j|`.
    Exponential { coefficient: f64 },
}

impl CorrelationModel {
    pub fn exponential(coefficient: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&coefficient) {
            return Err(Error::InvalidCorrelation(coefficient));
        }
        Ok(CorrelationModel::Exponential { coefficient })
    }

    pub fn uncorrelated() -> Self {
        CorrelationModel::Exponential { coefficient: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        match *self {
            CorrelationModel::Exponential { coefficient } => coefficient == 0.0,
        }
    }
}

pub fn build_correlation(model: CorrelationModel, antennas: usize) -> Result<CMatrix> {
    match model {
        CorrelationModel::Exponential { coefficient: r } => {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidCorrelation(r));
            }
            Ok(CMatrix::from_fn(antennas, antennas, |i, j| {
                C64::new(r.powi(i.abs_diff(j) as i32), 0.0)
            }))
        }
    }
}

/// Per-link receive correlation `R_{l,n,k}` together with its square root.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    cells: usize,
    rrus: usize,
    users: usize,
    antennas: usize,
    blocks: Vec<CMatrix>,
    sqrt_blocks: Vec<CMatrix>,
    model: Option<CorrelationModel>,
}

impl CorrelationSet {
    /// Same model on every link.
    pub fn uniform(
        model: CorrelationModel,
        cells: usize,
        rrus: usize,
        users: usize,
        antennas: usize,
    ) -> Result<Self> {
        let block = build_correlation(model, antennas)?;
        let root = psd_sqrt(&block, "correlation block")?;
        let count = cells * rrus * users;
        Ok(CorrelationSet {
            cells,
            rrus,
            users,
            antennas,
            blocks: vec![block; count],
            sqrt_blocks: vec![root; count],
            model: Some(model),
        })
    }

    /// Arbitrary blocks in `(l, n, k)` order, `k` fastest. Each block must be
    /// Hermitian PSD with unit diagonal.
    pub fn from_blocks(
        cells: usize,
        rrus: usize,
        users: usize,
        blocks: Vec<CMatrix>,
    ) -> Result<Self> {
        if blocks.len() != cells * rrus * users || blocks.is_empty() {
            return Err(Error::Dimension(format!(
                "expected {} correlation blocks, got {}",
                cells * rrus * users,
                blocks.len()
            )));
        }
        let antennas = blocks[0].nrows();
        let mut sqrt_blocks = Vec::with_capacity(blocks.len());
        for b in &blocks {
            if b.nrows() != antennas || b.ncols() != antennas {
                return Err(Error::Dimension("correlation blocks differ in size".into()));
            }
            let scale = b.norm().max(1.0);
            if (b - b.adjoint()).norm() > 1e-12 * scale {
                return Err(Error::Precondition(
                    "correlation block is not Hermitian".into(),
                ));
            }
            if b.diagonal()
                .iter()
                .any(|d| (d - C64::new(1.0, 0.0)).norm() > 1e-12)
            {
                return Err(Error::Precondition(
                    "correlation block must have unit diagonal".into(),
                ));
            }
            sqrt_blocks.push(psd_sqrt(b, "correlation block")?);
        }
        Ok(CorrelationSet {
            cells,
            rrus,
            users,
            antennas,
            blocks,
            sqrt_blocks,
            model: None,
        })
    }

    pub fn for_map(model: CorrelationModel, map: &LargeScaleMap, antennas: usize) -> Result<Self> {
        Self::uniform(model, map.cells(), map.rrus(), map.users(), antennas)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn rrus(&self) -> usize {
        self.rrus
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `M * N`.
    pub fn dim(&self) -> usize {
        self.antennas * self.rrus
    }

    pub fn model(&self) -> Option<CorrelationModel> {
        self.model
    }

    pub fn is_identity(&self) -> bool {
        match self.model {
            Some(m) => m.is_identity(),
            None => self
                .blocks
                .iter()
                .all(|b| *b == CMatrix::identity(self.antennas, self.antennas)),
        }
    }

    fn index(&self, l: usize, n: usize, k: usize) -> usize {
        (l * self.rrus + n) * self.users + k
    }

    pub fn block(&self, l: usize, n: usize, k: usize) -> &CMatrix {
        &self.blocks[self.index(l, n, k)]
    }

    pub fn sqrt_block(&self, l: usize, n: usize, k: usize) -> &CMatrix {
        &self.sqrt_blocks[self.index(l, n, k)]
    }

    pub fn blocks_for(&self, l: usize, k: usize) -> Vec<CMatrix> {
        (0..self.rrus)
            .map(|n| self.block(l, n, k).clone())
            .collect()
    }

    /// Full `MN x MN` block-diagonal `R_{l,k}`.
    pub fn assemble(&self, l: usize, k: usize) -> CMatrix {
        block_diagonal(&self.blocks_for(l, k))
    }

    /// `R_{l,k} Lambda_{l,k}`, the covariance of `g_{l,k}`.
    pub fn weighted(&self, l: usize, k: usize, map: &LargeScaleMap) -> CMatrix {
        let blocks: Vec<CMatrix> = (0..self.rrus)
            .map(|n| self.block(l, n, k).scale(map.get(l, n, k)))
            .collect();
        block_diagonal(&blocks)
    }

    pub fn check_matches(&self, map: &LargeScaleMap) -> Result<()> {
        if (self.cells, self.rrus, self.users) != (map.cells(), map.rrus(), map.users()) {
            return Err(Error::Dimension(format!(
                "correlation set is {}x{}x{} (L x N x K) but large-scale map is {}x{}x{}",
                self.cells,
                self.rrus,
                self.users,
                map.cells(),
                map.rrus(),
                map.users()
            )));
        }
        Ok(())
    }
}

/// I.i.d. `CN(0, 1)` entries.
pub fn gen_smallscale<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

fn apply_blockwise(roots: &[CMatrix], lambdas: &[f64], h: &CVector) -> Result<CVector> {
    if roots.len() != lambdas.len() {
        return Err(Error::Dimension(format!(
            "{} correlation blocks but {} large-scale gains",
            roots.len(),
            lambdas.len()
        )));
    }
    let dim: usize = roots.iter().map(|r| r.nrows()).sum();
    if dim != h.len() {
        return Err(Error::Dimension(format!(
            "small-scale vector has length {}, expected {dim}",
            h.len()
        )));
    }
    let mut g = CVector::zeros(dim);
    let mut offset = 0;
    for (root, &lambda) in roots.iter().zip(lambdas) {
        if !(lambda >= 0.0) {
            return Err(Error::Precondition(format!(
                "large-scale gain must be >= 0 (got {lambda})"
            )));
        }
        let m = root.nrows();
        let part = root * h.rows(offset, m) * C64::new(lambda.sqrt(), 0.0);
        g.rows_mut(offset, m).copy_from(&part);
        offset += m;
    }
    Ok(g)
}

/// `g = R^{1/2} Lambda^{1/2} h` with `R` given by its per-RRU blocks and
/// `Lambda` by its per-RRU gains. The square root is taken block by block.
pub fn assemble_channel(r_blocks: &[CMatrix], lambdas: &[f64], h: &CVector) -> Result<CVector> {
    let roots = r_blocks
        .iter()
        .map(|b| psd_sqrt(b, "correlation block"))
        .collect::<Result<Vec<_>>>()?;
    apply_blockwise(&roots, lambdas, h)
}

/// True channels `G_l` (columns `g_{l,k}`) and the small-scale fading that
/// produced them.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub g: Vec<CMatrix>,
    pub h: Vec<CMatrix>,
}

impl ChannelSet {
    /// Samples every `h_{l,k}` in `(l, k)` order and forms `g_{l,k}`.
    pub fn generate<R: Rng + ?Sized>(
        map: &LargeScaleMap,
        corr: &CorrelationSet,
        rng: &mut R,
    ) -> Result<Self> {
        corr.check_matches(map)?;
        let dim = corr.dim();
        let (cells, users) = (map.cells(), map.users());
        let mut g = Vec::with_capacity(cells);
        let mut h = Vec::with_capacity(cells);
        for l in 0..cells {
            let mut gl = CMatrix::zeros(dim, users);
            let mut hl = CMatrix::zeros(dim, users);
            for k in 0..users {
                let hk = gen_smallscale(rng, dim);
                let roots: Vec<CMatrix> = (0..corr.rrus())
                    .map(|n| corr.sqrt_block(l, n, k).clone())
                    .collect();
                let gk = apply_blockwise(&roots, &map.per_rru(l, k), &hk)?;
                gl.set_column(k, &gk);
                hl.set_column(k, &hk);
            }
            g.push(gl);
            h.push(hl);
        }
        Ok(ChannelSet { g, h })
    }

    pub fn column(&self, l: usize, k: usize) -> CVector {
        self.g[l].column(k).into_owned()
    }
}
