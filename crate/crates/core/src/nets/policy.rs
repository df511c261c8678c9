//! Gaussian policy: optional point-set encoder, decision MLP over the
//! embedding plus flat state, and a state-independent log standard deviation.
//!
//! The network acts in normalized action coordinates `u = dq / action_scale`;
//! means returned to callers and sampled actions are in joint units, while
//! densities and their gradients are taken in normalized coordinates.

use super::encoder::{Encoder, EncoderCache};
use super::mlp::{Mlp, MlpCache};
use crate::error::{invalid_arg, Result};
use crate::rng::{self, tag};
use crate::shapes::PointCloud;
use crate::sim::{Action, Joints, Observation, DOF, FLAT_OBS_DIM};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyArch {
    pub point_widths: Vec<usize>,
    pub post_widths: Vec<usize>,
    pub hidden: Vec<usize>,
    pub use_encoder: bool,
    pub action_scale: f64,
    pub init_log_std: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        PolicyArch {
            point_widths: vec![64, 128],
            post_widths: vec![64, 32],
            hidden: vec![32, 32],
            use_encoder: true,
            action_scale: 0.05,
            init_log_std: 0.0,
        }
    }
}

impl PolicyArch {
    /// Flat-state variant without the encoder.
    pub fn flat() -> Self {
        PolicyArch {
            use_encoder: false,
            ..Self::default()
        }
    }

    pub fn embedding_dim(&self) -> usize {
        if self.use_encoder {
            self.post_widths.last().copied().unwrap_or(0)
        } else {
            0
        }
    }

    pub fn input_dim(&self) -> usize {
        self.embedding_dim() + FLAT_OBS_DIM
    }

    fn decision_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend_from_slice(&self.hidden);
        d.push(DOF);
        d
    }
}

/// Parameter blocks addressed by gradients, updates and checksums.
/// `ThetaP` covers the decision MLP together with the log standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    ThetaPc,
    ThetaP,
    All,
}

impl Subset {
    pub fn has_pc(self) -> bool {
        matches!(self, Subset::ThetaPc | Subset::All)
    }

    pub fn has_p(self) -> bool {
        matches!(self, Subset::ThetaP | Subset::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub subset: Subset,
    pub layout: Vec<Segment>,
    pub data: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(params: &PolicyParams, subset: Subset) -> Self {
        let layout = params.layout(subset);
        let n = layout.iter().map(|s| s.len).sum();
        GradientVector {
            subset,
            layout,
            data: vec![0.0; n],
        }
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.offset..s.offset + s.len])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.layout.iter().find(|s| s.name == name)?.clone();
        Some(&mut self.data[s.offset..s.offset + s.len])
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_scaled(&mut self, other: &GradientVector, s: f64) {
        assert_eq!(self.subset, other.subset, "gradient layouts differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub arch: PolicyArch,
    pub encoder: Option<Encoder>,
    pub decision: Mlp,
    pub log_std: Vec<f64>,
}

/// Observations packed for batched evaluation; clouds shared by pointer are
/// encoded once.
#[derive(Debug, Clone, Default)]
pub struct ObsBatch {
    pub clouds: Vec<Arc<PointCloud>>,
    pub cloud_idx: Vec<usize>,
    pub flat: Vec<f64>,
}

impl ObsBatch {
    pub fn new<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Self {
        let mut b = ObsBatch::default();
        let mut seen: HashMap<*const PointCloud, usize> = HashMap::new();
        for o in obs {
            let idx = *seen.entry(Arc::as_ptr(&o.cloud)).or_insert_with(|| {
                b.clouds.push(Arc::clone(&o.cloud));
                b.clouds.len() - 1
            });
            b.cloud_idx.push(idx);
            b.flat.extend_from_slice(&o.flat());
        }
        b
    }

    pub fn len(&self) -> usize {
        self.cloud_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud_idx.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> ObsBatch {
        let mut b = ObsBatch {
            clouds: self.clouds.clone(),
            ..ObsBatch::default()
        };
        for &r in rows {
            b.cloud_idx.push(self.cloud_idx[r]);
            b.flat.extend_from_slice(&self.flat[r * FLAT_OBS_DIM..(r + 1) * FLAT_OBS_DIM]);
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    pub enc: Vec<EncoderCache>,
    pub dec: MlpCache,
}

impl PolicyCache {
    /// Normalized means, `rows x DOF`.
    pub fn mean(&self) -> &[f64] {
        self.dec.output()
    }

    /// Decision-network inputs, `rows x input_dim`.
    pub fn features(&self) -> &[f64] {
        &self.dec.acts[0]
    }
}

/// Diagonal Gaussian log density in normalized coordinates.
pub fn gaussian_log_prob(u: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        let z = (u[i] - mu[i]) * (-log_std[i]).exp();
        s += z * z + 2.0 * log_std[i] + LN_2PI;
    }
    -0.5 * s
}

pub fn checksum(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl PolicyParams {
    pub fn new(arch: PolicyArch, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, &[tag::INIT]);
        let encoder = if arch.use_encoder {
            Some(Encoder::new(&arch.point_widths, &arch.post_widths, &mut rng)?)
        } else {
            None
        };
        let decision = Mlp::new(&arch.decision_dims(), false, &mut rng)?;
        Ok(PolicyParams {
            log_std: vec![arch.init_log_std; DOF],
            arch,
            encoder,
            decision,
        })
    }

    pub fn zeros(arch: PolicyArch) -> Result<Self> {
        let encoder = if arch.use_encoder {
            Some(Encoder::zeros(&arch.point_widths, &arch.post_widths)?)
        } else {
            None
        };
        Ok(PolicyParams {
            decision: Mlp::zeros(&arch.decision_dims(), false)?,
            log_std: vec![0.0; DOF],
            arch,
            encoder,
        })
    }

    pub fn n_pc(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.n_params())
    }

    pub fn layout(&self, subset: Subset) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut off = 0;
        let mut push = |name: &str, len: usize| {
            out.push(Segment {
                name: name.to_string(),
                offset: off,
                len,
            });
            off += len;
        };
        if subset.has_pc() {
            push("theta_pc", self.n_pc());
        }
        if subset.has_p() {
            push("theta_p", self.decision.params.len());
            push("log_std", DOF);
        }
        out
    }

    pub fn get(&self, subset: Subset) -> Vec<f64> {
        let mut v = Vec::new();
        if subset.has_pc() {
            if let Some(e) = &self.encoder {
                v.extend(e.flat());
            }
        }
        if subset.has_p() {
            v.extend_from_slice(&self.decision.params);
            v.extend_from_slice(&self.log_std);
        }
        v
    }

    pub fn set(&mut self, subset: Subset, values: &[f64]) -> Result<()> {
        let need: usize = self.layout(subset).iter().map(|s| s.len).sum();
        if values.len() != need {
            return Err(invalid_arg(format!("expected {need} parameters, got {}", values.len())));
        }
        let mut rest = values;
        if subset.has_pc() {
            let n = self.n_pc();
            if let Some(e) = &mut self.encoder {
                e.set_flat(&rest[..n]);
            }
            rest = &rest[n..];
        }
        if subset.has_p() {
            let n = self.decision.params.len();
            self.decision.params.copy_from_slice(&rest[..n]);
            self.log_std.copy_from_slice(&rest[n..n + DOF]);
        }
        Ok(())
    }

    pub fn checksum(&self, subset: Subset) -> String {
        checksum(&self.get(subset))
    }

    /// Checksum of the decision MLP alone, excluding the log std.
    pub fn decision_checksum(&self) -> String {
        checksum(&self.decision.params)
    }

    pub fn log_std_checksum(&self) -> String {
        checksum(&self.log_std)
    }

    pub fn is_finite(&self) -> bool {
        self.get(Subset::All).iter().all(|v| v.is_finite())
    }

    pub fn input_dim(&self) -> usize {
        self.decision.input_dim()
    }

    pub fn embed(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        match &self.encoder {
            Some(e) => Ok(e.forward(cloud)?.0),
            None => Ok(Vec::new()),
        }
    }

    /// Decision-network input for one observation given its embedding.
    pub fn features(&self, embedding: &[f64], obs: &Observation) -> Vec<f64> {
        let mut f = embedding.to_vec();
        f.extend_from_slice(&obs.flat());
        f
    }

    /// Normalized mean from a precomputed embedding.
    pub fn mean_with_embedding(&self, embedding: &[f64], obs: &Observation) -> Result<Vec<f64>> {
        let f = self.features(embedding, obs);
        Ok(self.decision.forward(&f, 1)?.output().to_vec())
    }

    /// Decision-network inputs for a batch, using precomputed per-cloud
    /// embeddings.
    pub fn batch_features(&self, batch: &ObsBatch, embeddings: &[Vec<f64>]) -> Vec<f64> {
        let mut x = Vec::with_capacity(batch.len() * self.input_dim());
        for r in 0..batch.len() {
            if self.encoder.is_some() {
                x.extend_from_slice(&embeddings[batch.cloud_idx[r]]);
            }
            x.extend_from_slice(&batch.flat[r * FLAT_OBS_DIM..(r + 1) * FLAT_OBS_DIM]);
        }
        x
    }

    pub fn forward_batch(&self, batch: &ObsBatch) -> Result<PolicyCache> {
        let mut enc = Vec::new();
        let mut embeddings = Vec::new();
        if let Some(e) = &self.encoder {
            for c in &batch.clouds {
                let (emb, cache) = e.forward(c)?;
                embeddings.push(emb);
                enc.push(cache);
            }
        }
        let x = self.batch_features(batch, &embeddings);
        let dec = self.decision.forward(&x, batch.len())?;
        Ok(PolicyCache { enc, dec })
    }

    /// Gradient of `sum(mean . d_mean) + log_std . d_log_std` over `subset`,
    /// with `d_mean` taken against normalized means.
    pub fn backward_batch(
        &self,
        cache: &PolicyCache,
        batch: &ObsBatch,
        d_mean: &[f64],
        d_log_std: &[f64],
        subset: Subset,
    ) -> GradientVector {
        let mut g = GradientVector::zeros(self, subset);
        let want_input = subset.has_pc() && self.encoder.is_some();
        let mut scratch = vec![0.0; self.decision.params.len()];
        let d_in = self.decision.backward(&cache.dec, d_mean, &mut scratch, want_input);
        if subset.has_p() {
            g.segment_mut("theta_p").expect("theta_p in layout").copy_from_slice(&scratch);
            g.segment_mut("log_std").expect("log_std in layout").copy_from_slice(d_log_std);
        }
        if let (Some(d_in), Some(enc)) = (d_in, &self.encoder) {
            let e = enc.embedding_dim();
            let width = self.input_dim();
            let mut d_emb = vec![vec![0.0; e]; batch.clouds.len()];
            for r in 0..batch.len() {
                let acc = &mut d_emb[batch.cloud_idx[r]];
                for (a, v) in acc.iter_mut().zip(&d_in[r * width..r * width + e]) {
                    *a += v;
                }
            }
            let gpc = g.segment_mut("theta_pc").expect("theta_pc in layout");
            for (c, d) in d_emb.iter().enumerate() {
                if d.iter().any(|v| *v != 0.0) {
                    enc.backward(&cache.enc[c], d, gpc);
                }
            }
        }
        g
    }

    /// Normalized-mean tangent for a decision-parameter tangent.
    pub fn decision_jvp(&self, cache: &PolicyCache, dp: &[f64]) -> Vec<f64> {
        self.decision.jvp(&cache.dec, dp, None)
    }

    /// Decision-parameter gradient of `sum(mean . d_mean)`.
    pub fn decision_vjp(&self, cache: &PolicyCache, d_mean: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.decision.params.len()];
        self.decision.backward(&cache.dec, d_mean, &mut g, false);
        g
    }

    pub fn to_normalized(&self, action: &Action) -> [f64; DOF] {
        action.dq.map(|v| v / self.arch.action_scale)
    }

    pub fn to_action(&self, u: &[f64]) -> Action {
        let mut dq = [0.0; DOF];
        for i in 0..DOF {
            dq[i] = u[i] * self.arch.action_scale;
        }
        Action { dq }
    }

    /// Draws `u = mu + exp(log_std) * z` in normalized coordinates.
    pub fn sample_normalized(&self, mu: &[f64], rng: &mut rng::Rng) -> Vec<f64> {
        (0..DOF)
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                mu[i] + self.log_std[i].exp() * z
            })
            .collect()
    }
}

/// Policy mean in joint units.
pub fn policy_forward(params: &PolicyParams, obs: &Observation) -> Result<(Joints, PolicyCache)> {
    let batch = ObsBatch::new([obs]);
    let cache = params.forward_batch(&batch)?;
    let a = params.to_action(cache.mean());
    Ok((a.dq, cache))
}

/// Log density of `action` and, when `subset` is given, its gradient.
pub fn log_prob(
    params: &PolicyParams,
    obs: &Observation,
    action: &Action,
    subset: Option<Subset>,
) -> Result<(f64, Option<GradientVector>)> {
    let batch = ObsBatch::new([obs]);
    let (lp, g) = log_prob_batch(params, &batch, std::slice::from_ref(action), None, subset)?;
    Ok((lp[0], g))
}

/// Per-row log densities and the gradient of `sum_i w_i log pi(a_i|s_i)`.
pub fn log_prob_batch(
    params: &PolicyParams,
    batch: &ObsBatch,
    actions: &[Action],
    weights: Option<&[f64]>,
    subset: Option<Subset>,
) -> Result<(Vec<f64>, Option<GradientVector>)> {
    if actions.len() != batch.len() || weights.is_some_and(|w| w.len() != batch.len()) {
        return Err(invalid_arg("batch, action and weight lengths differ"));
    }
    let cache = params.forward_batch(batch)?;
    let mu = cache.mean();
    let inv_var: Vec<f64> = params.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut lps = Vec::with_capacity(batch.len());
    let mut d_mean = vec![0.0; batch.len() * DOF];
    let mut d_log_std = vec![0.0; DOF];
    for (r, a) in actions.iter().enumerate() {
        let u = params.to_normalized(a);
        let m = &mu[r * DOF..(r + 1) * DOF];
        lps.push(gaussian_log_prob(&u, m, &params.log_std));
        let w = weights.map_or(1.0, |w| w[r]);
        for i in 0..DOF {
            let diff = u[i] - m[i];
            d_mean[r * DOF + i] = w * diff * inv_var[i];
            d_log_std[i] += w * (diff * diff * inv_var[i] - 1.0);
        }
    }
    let grad = subset.map(|s| params.backward_batch(&cache, batch, &d_mean, &d_log_std, s));
    Ok((lps, grad))
}

/// Stochastic action in joint units, drawn from a stream derived from `seed`.
pub fn sample_action(params: &PolicyParams, obs: &Observation, seed: u64) -> Result<Action> {
    let (_, cache) = policy_forward(params, obs)?;
    let mut rng = rng::stream(seed, &[tag::ACTION]);
    let u = params.sample_normalized(cache.mean(), &mut rng);
    Ok(params.to_action(&u))
}

/// Density formula evaluated directly, used as an oracle in tests.
pub fn gaussian_density(u: &[f64], mu: &[f64], std: &[f64]) -> f64 {
    u.iter()
        .zip(mu)
        .zip(std)
        .map(|((x, m), s)| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt()))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pose2, Vec2};

    fn small_arch() -> PolicyArch {
        PolicyArch {
            point_widths: vec![8, 12],
            post_widths: vec![10, 6],
            hidden: vec![9, 9],
            ..PolicyArch::default()
        }
    }

    fn obs() -> Observation {
        let points = (0..12)
            .map(|i| Vec2::from_angle(i as f64 * 0.5) * (0.1 + 0.01 * i as f64))
            .collect();
        Observation {
            cloud: Arc::new(PointCloud { points, n: 12 }),
            pose: Pose2::new(-0.3, 0.1, 0.4),
            q: [-0.4, -0.9, 0.1, 0.3, 0.2, -0.3, -0.1],
            target: Vec2::new(0.6, -0.2),
        }
    }

    #[test]
    fn log_prob_at_mean_is_closed_form() {
        let p = PolicyParams::new(small_arch(), 1).unwrap();
        let o = obs();
        let (mean, _) = policy_forward(&p, &o).unwrap();
        let (lp, _) = log_prob(&p, &o, &Action { dq: mean }, None).unwrap();
        assert!((lp + 3.5 * LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_density_oracle() {
        let mut p = PolicyParams::new(small_arch(), 2).unwrap();
        p.log_std = vec![-0.3, 0.1, 0.2, -0.5, 0.0, 0.4, -0.1];
        let o = obs();
        let a = sample_action(&p, &o, 7).unwrap();
        let (mean, _) = policy_forward(&p, &o).unwrap();
        let (lp, _) = log_prob(&p, &o, &a, None).unwrap();
        let u = p.to_normalized(&a);
        let mu: Vec<f64> = mean.iter().map(|m| m / 0.05).collect();
        let std: Vec<f64> = p.log_std.iter().map(|l| l.exp()).collect();
        let dens = gaussian_density(&u, &mu, &std);
        assert!((lp.exp() - dens).abs() < 1e-12 * dens.max(1.0));
    }

    #[test]
    fn zero_params_give_zero_mean() {
        let p = PolicyParams::zeros(small_arch()).unwrap();
        assert_eq!(policy_forward(&p, &obs()).unwrap().0, [0.0; DOF]);
    }

    #[test]
    fn tiny_std_sample_sits_on_mean() {
        let mut p = PolicyParams::new(small_arch(), 3).unwrap();
        p.log_std = vec![-20.0; DOF];
        let o = obs();
        let (mean, _) = policy_forward(&p, &o).unwrap();
        let a = sample_action(&p, &o, 11).unwrap();
        for i in 0..DOF {
            assert!((a.dq[i] - mean[i]).abs() < 1e-8);
        }
        assert_eq!(a, sample_action(&p, &o, 11).unwrap());
    }

    #[test]
    fn theta_p_gradient_is_slice_of_full() {
        let p = PolicyParams::new(small_arch(), 4).unwrap();
        let o = obs();
        let a = Action { dq: [0.01; DOF] };
        let (_, full) = log_prob(&p, &o, &a, Some(Subset::All)).unwrap();
        let (_, part) = log_prob(&p, &o, &a, Some(Subset::ThetaP)).unwrap();
        let (_, pc) = log_prob(&p, &o, &a, Some(Subset::ThetaPc)).unwrap();
        let (full, part, pc) = (full.unwrap(), part.unwrap(), pc.unwrap());
        assert_eq!(full.segment("theta_p"), part.segment("theta_p"));
        assert_eq!(full.segment("log_std"), part.segment("log_std"));
        assert_eq!(full.segment("theta_pc"), pc.segment("theta_pc"));
    }

    #[test]
    fn get_set_round_trip() {
        let p = PolicyParams::new(small_arch(), 5).unwrap();
        let mut q = PolicyParams::zeros(small_arch()).unwrap();
        q.set(Subset::All, &p.get(Subset::All)).unwrap();
        assert_eq!(p, q);
        assert!(q.set(Subset::ThetaP, &[0.0; 3]).is_err());
    }
}
