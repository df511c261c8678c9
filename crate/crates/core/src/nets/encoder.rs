//! Permutation-invariant point-set encoder: a shared per-point network,
//! a feature-wise max pool, and a post-pool network.

use super::mlp::{Mlp, MlpCache};
use crate::error::{invalid_arg, Result};
use crate::rng::Rng;
use crate::shapes::PointCloud;
use serde::{Deserialize, Serialize};

pub const POINT_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub point: Mlp,
    pub post: Mlp,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub point: MlpCache,
    /// Winning point index per pooled feature.
    pub argmax: Vec<usize>,
    pub post: MlpCache,
}

impl Encoder {
    /// `point_widths` and `post_widths` exclude the input width; the last
    /// post width is the embedding size.
    pub fn new(point_widths: &[usize], post_widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let (pd, qd) = Self::dims(point_widths, post_widths)?;
        Ok(Encoder {
            point: Mlp::new(&pd, true, rng)?,
            post: Mlp::new(&qd, true, rng)?,
        })
    }

    pub fn zeros(point_widths: &[usize], post_widths: &[usize]) -> Result<Self> {
        let (pd, qd) = Self::dims(point_widths, post_widths)?;
        Ok(Encoder {
            point: Mlp::zeros(&pd, true)?,
            post: Mlp::zeros(&qd, true)?,
        })
    }

    fn dims(point_widths: &[usize], post_widths: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        if point_widths.is_empty() || post_widths.is_empty() {
            return Err(invalid_arg("encoder needs per-point and post-pool layers"));
        }
        let mut pd = vec![POINT_DIM];
        pd.extend_from_slice(point_widths);
        let mut qd = vec![*point_widths.last().expect("non-empty")];
        qd.extend_from_slice(post_widths);
        Ok((pd, qd))
    }

    pub fn embedding_dim(&self) -> usize {
        self.post.output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.point.params.len() + self.post.params.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.point.params.clone();
        v.extend_from_slice(&self.post.params);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let n = self.point.params.len();
        self.point.params.copy_from_slice(&v[..n]);
        self.post.params.copy_from_slice(&v[n..]);
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<(Vec<f64>, EncoderCache)> {
        let n = cloud.points.len();
        if n == 0 {
            return Err(invalid_arg("empty point cloud"));
        }
        let point = self.point.forward(&cloud.flat(), n)?;
        let width = self.point.output_dim();
        let feats = point.output();
        let mut pooled = feats[..width].to_vec();
        let mut argmax = vec![0; width];
        for r in 1..n {
            for j in 0..width {
                // Strict comparison keeps the lowest index on ties.
                if feats[r * width + j] > pooled[j] {
                    pooled[j] = feats[r * width + j];
                    argmax[j] = r;
                }
            }
        }
        let post = self.post.forward(&pooled, 1)?;
        let emb = post.output().to_vec();
        Ok((emb, EncoderCache { point, argmax, post }))
    }

    /// Accumulates the parameter gradient of `emb . d_emb` into `grad`
    /// (laid out as [`Encoder::flat`]).
    pub fn backward(&self, cache: &EncoderCache, d_emb: &[f64], grad: &mut [f64]) {
        let np = self.point.params.len();
        let (gp, gq) = grad.split_at_mut(np);
        let d_pooled = self.post.backward(&cache.post, d_emb, gq, true).expect("input gradient requested");
        let width = self.point.output_dim();
        let mut d_feats = vec![0.0; cache.point.rows * width];
        for (j, &r) in cache.argmax.iter().enumerate() {
            d_feats[r * width + j] = d_pooled[j];
        }
        self.point.backward(&cache.point, &d_feats, gp, false);
    }

    /// Smallest gap between the winning and runner-up value over pooled
    /// features; infinite for a single point.
    pub fn pool_margin(&self, cloud: &PointCloud) -> Result<f64> {
        let (_, cache) = self.forward(cloud)?;
        let width = self.point.output_dim();
        let feats = cache.point.output();
        let mut margin = f64::INFINITY;
        for j in 0..width {
            let win = cache.argmax[j];
            for r in 0..cache.point.rows {
                if r != win {
                    margin = margin.min(feats[win * width + j] - feats[r * width + j]);
                }
            }
        }
        Ok(margin)
    }
}
