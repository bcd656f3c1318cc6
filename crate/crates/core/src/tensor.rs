use crate::error::{Error, Result};

/// What a [`FeatureGrid`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    ImageFeature,
    DepthDistribution,
    DepthOneHot,
    BevFeature,
}

/// Dense `channels × height × width` tensor, row-major with channels outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    channels: usize,
    height: usize,
    width: usize,
    kind: GridKind,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(kind: GridKind, channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            kind,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(
        kind: GridKind,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::config("tensor", "grid dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::config(
                "tensor",
                format!(
                    "data length {} does not match {channels}x{height}x{width}",
                    data.len()
                ),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                module: "tensor",
                index: i,
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            kind,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn kind(&self) -> GridKind {
        self.kind
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
    /// Number of pixels (`height * width`), the stride between channel planes.
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, value: f64) {
        let i = self.index(c, h, w);
        self.data[i] = value;
    }

    /// Channel values at one pixel.
    pub fn column(&self, h: usize, w: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, h, w)).collect()
    }

    pub fn with_kind(mut self, kind: GridKind) -> Self {
        self.kind = kind;
        self
    }

    /// Stacks grids of equal spatial shape along the channel axis, in order.
    pub fn concat_channels(kind: GridKind, grids: &[FeatureGrid]) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::config("tensor", "nothing to concatenate"))?;
        let (h, w) = (first.height, first.width);
        if grids.iter().any(|g| g.height != h || g.width != w) {
            return Err(Error::config("tensor", "spatial shapes differ"));
        }
        let channels = grids.iter().map(|g| g.channels).sum();
        let mut data = Vec::with_capacity(channels * h * w);
        for g in grids {
            data.extend_from_slice(&g.data);
        }
        Ok(Self {
            channels,
            height: h,
            width: w,
            kind,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let g = FeatureGrid::from_vec(GridKind::ImageFeature, 2, 2, 3, (0..12).map(f64::from).collect())
            .unwrap();
        assert_eq!(g.get(1, 0, 0), 6.0);
        assert_eq!(g.get(0, 1, 2), 5.0);
        assert_eq!(g.column(1, 1), vec![4.0, 10.0]);
    }

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(FeatureGrid::from_vec(GridKind::ImageFeature, 2, 2, 2, vec![0.0; 7]).is_err());
        let mut data = vec![0.0; 8];
        data[3] = f64::NAN;
        assert!(FeatureGrid::from_vec(GridKind::ImageFeature, 2, 2, 2, data).is_err());
    }

    #[test]
    fn concatenation_keeps_order() {
        let a = FeatureGrid::from_vec(GridKind::BevFeature, 1, 1, 2, vec![1.0, 2.0]).unwrap();
        let b = FeatureGrid::from_vec(GridKind::BevFeature, 2, 1, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = FeatureGrid::concat_channels(GridKind::BevFeature, &[a, b]).unwrap();
        assert_eq!(c.shape(), (3, 1, 2));
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
