//! Click sets, per-click radii and the click-driven annotation function.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{Backend, EmbeddingMatrix, Network, NetworkInput};
use crate::error::{Error, Result};
use crate::geometry::{NeighborIndex, PointCloud, SegmentMask};
use crate::postprocess::{refine, PostprocessConfig};
use crate::scalar::{dist, Real};

pub const DEFAULT_ALPHA: f64 = 0.35;
pub const DEFAULT_HISTORY: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClickKind {
    Positive,
    Negative,
}

/// One entry of a click script.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    pub kind: ClickKind,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickSet {
    positives: Vec<usize>,
    negatives: Vec<usize>,
    alpha: f64,
}

impl Default for ClickSet {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA)
    }
}

impl ClickSet {
    pub fn new(alpha: f64) -> Self {
        Self { positives: Vec::new(), negatives: Vec::new(), alpha }
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.positives.contains(&index) || self.negatives.contains(&index)
    }

    /// Appends a click on point `index` of an `n`-point cloud.
    pub fn add(&mut self, kind: ClickKind, index: usize, n: usize) -> Result<()> {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        if self.contains(index) {
            return Err(Error::DuplicateClick(index));
        }
        match kind {
            ClickKind::Positive => self.positives.push(index),
            ClickKind::Negative => self.negatives.push(index),
        }
        Ok(())
    }

    pub fn remove(&mut self, index: usize) -> Result<ClickKind> {
        if let Some(p) = self.positives.iter().position(|&i| i == index) {
            self.positives.remove(p);
            return Ok(ClickKind::Positive);
        }
        if let Some(p) = self.negatives.iter().position(|&i| i == index) {
            self.negatives.remove(p);
            return Ok(ClickKind::Negative);
        }
        Err(Error::NotClicked(index))
    }
}

/// Radius of positive click `t`: `min(alpha, distance to the nearest negative)` in embedding space.
pub fn positive_radius<T: Real>(z: &EmbeddingMatrix<T>, clicks: &ClickSet, t: usize) -> T {
    let p = z.row(clicks.positives[t]);
    clicks
        .negatives
        .iter()
        .map(|&n| dist(p, z.row(n)))
        .fold(T::lit(clicks.alpha), |a, b| a.min(b))
}

pub fn radii<T: Real>(z: &EmbeddingMatrix<T>, clicks: &ClickSet) -> Vec<T> {
    (0..clicks.positives.len()).map(|t| positive_radius(z, clicks, t)).collect()
}

/// Points strictly inside some positive click's embedding ball, without click overrides.
pub fn annotate_raw<T: Real>(z: &EmbeddingMatrix<T>, clicks: &ClickSet) -> SegmentMask {
    let n = z.rows();
    let mut mask = SegmentMask::empty(n);
    for (t, r) in radii(z, clicks).into_iter().enumerate() {
        ball_into(z, clicks.positives[t], r, &mut mask);
    }
    mask
}

/// Flags every point whose embedding lies strictly within `r` of point `center`'s.
pub(crate) fn ball_into<T: Real>(z: &EmbeddingMatrix<T>, center: usize, r: T, mask: &mut SegmentMask) {
    if !(r > T::zero()) {
        return;
    }
    let c = z.row(center);
    for i in 0..z.rows() {
        if mask.get(i) {
            continue;
        }
        let mut s = T::zero();
        for (a, b) in z.row(i).iter().zip(c) {
            let d = *a - *b;
            s += d * d;
        }
        if s.sqrt() < r {
            mask.set(i, true);
        }
    }
}

/// The annotation mask: embedding-ball membership, then every positive click
/// flagged and every negative click cleared.
pub fn annotate<T: Real>(z: &EmbeddingMatrix<T>, clicks: &ClickSet) -> SegmentMask {
    let mut mask = annotate_raw(z, clicks);
    for &p in &clicks.positives {
        mask.set(p, true);
    }
    for &n in &clicks.negatives {
        mask.set(n, false);
    }
    mask
}

/// Points that changed between two masks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskDelta {
    pub added: Vec<usize>,
    pub removed: Vec<usize>,
}

impl MaskDelta {
    pub fn between(before: &SegmentMask, after: &SegmentMask) -> Self {
        let (added, removed) = after.delta_from(before);
        Self { added, removed }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Snapshot<T> {
    clicks: ClickSet,
    embeddings: Arc<EmbeddingMatrix<T>>,
    network: Option<Arc<Network<T>>>,
    raw: SegmentMask,
    mask: SegmentMask,
}

/// Interactive annotation state for one part of one shape.
#[derive(Clone, Debug)]
pub struct Session<T> {
    cloud: Arc<PointCloud<T>>,
    index: Arc<NeighborIndex<T>>,
    base: Arc<EmbeddingMatrix<T>>,
    embeddings: Arc<EmbeddingMatrix<T>>,
    network: Option<Arc<Network<T>>>,
    input: Option<Arc<NetworkInput<T>>>,
    clicks: ClickSet,
    post: PostprocessConfig,
    raw: SegmentMask,
    mask: SegmentMask,
    history: VecDeque<Snapshot<T>>,
    history_depth: usize,
}

impl<T: Real> PartialEq for Session<T> {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot() && self.history == other.history && self.post == other.post
    }
}

impl<T: Real> Session<T> {
    pub fn new(
        cloud: Arc<PointCloud<T>>,
        index: Arc<NeighborIndex<T>>,
        embeddings: Arc<EmbeddingMatrix<T>>,
        alpha: f64,
        post: PostprocessConfig,
    ) -> Result<Self> {
        if embeddings.rows() != cloud.len() {
            return Err(Error::RowMismatch { rows: embeddings.rows(), points: cloud.len() });
        }
        if index.len() != cloud.len() {
            return Err(Error::LengthMismatch { left: index.len(), right: cloud.len() });
        }
        let n = cloud.len();
        Ok(Self {
            cloud,
            index,
            base: embeddings.clone(),
            embeddings,
            network: None,
            input: None,
            clicks: ClickSet::new(alpha),
            post,
            raw: SegmentMask::empty(n),
            mask: SegmentMask::empty(n),
            history: VecDeque::new(),
            history_depth: DEFAULT_HISTORY,
        })
    }

    /// Builds the neighbor index the post-processing needs.
    pub fn from_cloud(cloud: PointCloud<T>, embeddings: EmbeddingMatrix<T>, alpha: f64, post: PostprocessConfig) -> Result<Self> {
        let index = NeighborIndex::build(&cloud, post.required_k());
        Self::new(Arc::new(cloud), Arc::new(index), Arc::new(embeddings), alpha, post)
    }

    pub fn with_history_depth(mut self, depth: usize) -> Self {
        self.history_depth = depth;
        self
    }

    /// Attaches the network that produced the embeddings, with its input over
    /// this session's cloud, so fine-tuning can update its parameters.
    pub fn with_network(mut self, network: Arc<Network<T>>, input: Arc<NetworkInput<T>>) -> Self {
        self.network = Some(network);
        self.input = Some(input);
        self
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn cloud(&self) -> &Arc<PointCloud<T>> {
        &self.cloud
    }

    pub fn index(&self) -> &Arc<NeighborIndex<T>> {
        &self.index
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingMatrix<T>> {
        &self.embeddings
    }

    pub fn base_embeddings(&self) -> &Arc<EmbeddingMatrix<T>> {
        &self.base
    }

    pub fn network(&self) -> Option<&Arc<Network<T>>> {
        self.network.as_ref()
    }

    pub fn network_input(&self) -> Option<&Arc<NetworkInput<T>>> {
        self.input.as_ref()
    }

    pub fn clicks(&self) -> &ClickSet {
        &self.clicks
    }

    pub fn postprocess(&self) -> &PostprocessConfig {
        &self.post
    }

    /// Annotation-function mask for the current clicks.
    pub fn raw_mask(&self) -> &SegmentMask {
        &self.raw
    }

    /// Mask after post-processing.
    pub fn mask(&self) -> &SegmentMask {
        &self.mask
    }

    pub fn radii(&self) -> Vec<T> {
        radii(&self.embeddings, &self.clicks)
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn snapshot(&self) -> Snapshot<T> {
        Snapshot {
            clicks: self.clicks.clone(),
            embeddings: self.embeddings.clone(),
            network: self.network.clone(),
            raw: self.raw.clone(),
            mask: self.mask.clone(),
        }
    }

    fn push_history(&mut self) {
        if self.history_depth == 0 {
            return;
        }
        if self.history.len() == self.history_depth {
            self.history.pop_front();
        }
        self.history.push_back(self.snapshot());
    }

    fn recompute(&mut self) -> MaskDelta {
        let before = std::mem::replace(&mut self.mask, SegmentMask::empty(0));
        self.raw = annotate(&self.embeddings, &self.clicks);
        self.mask = refine(&self.index, &self.raw, &self.clicks, &self.post);
        MaskDelta::between(&before, &self.mask)
    }

    pub fn add_click(&mut self, kind: ClickKind, index: usize) -> Result<MaskDelta> {
        let mut clicks = self.clicks.clone();
        clicks.add(kind, index, self.len())?;
        self.push_history();
        self.clicks = clicks;
        Ok(self.recompute())
    }

    pub fn remove_click(&mut self, index: usize) -> Result<MaskDelta> {
        let mut clicks = self.clicks.clone();
        clicks.remove(index)?;
        self.push_history();
        self.clicks = clicks;
        Ok(self.recompute())
    }

    /// Adds every new index as a negative click, recomputing once. Indices
    /// already clicked or repeated are skipped; out-of-range indices fail the
    /// whole call.
    pub fn add_negatives(&mut self, indices: &[usize]) -> Result<MaskDelta> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let mut clicks = self.clicks.clone();
        for &i in indices {
            if !clicks.contains(i) {
                clicks.add(ClickKind::Negative, i, n)?;
            }
        }
        if clicks == self.clicks {
            return Ok(MaskDelta::default());
        }
        self.push_history();
        self.clicks = clicks;
        Ok(self.recompute())
    }

    pub fn undo(&mut self) -> Result<MaskDelta> {
        let snap = self.history.pop_back().ok_or(Error::NothingToUndo)?;
        let before = self.mask.clone();
        self.clicks = snap.clicks;
        self.embeddings = snap.embeddings;
        self.network = snap.network;
        self.raw = snap.raw;
        self.mask = snap.mask;
        Ok(MaskDelta::between(&before, &self.mask))
    }

    /// Installs new embeddings (and tuned network) as one undoable step.
    pub fn replace_embeddings(&mut self, embeddings: Arc<EmbeddingMatrix<T>>, network: Option<Arc<Network<T>>>) -> Result<MaskDelta> {
        if embeddings.rows() != self.len() {
            return Err(Error::RowMismatch { rows: embeddings.rows(), points: self.len() });
        }
        self.push_history();
        self.embeddings = embeddings;
        if network.is_some() {
            self.network = network;
        }
        Ok(self.recompute())
    }

    /// Clears clicks and history for the next part; tuned embeddings are kept.
    pub fn reset(&mut self) -> MaskDelta {
        self.clicks = ClickSet::new(self.clicks.alpha);
        self.history.clear();
        self.recompute()
    }

    pub fn apply_script(&mut self, script: &[Click]) -> Result<()> {
        for c in script {
            self.add_click(c.kind, c.index)?;
        }
        Ok(())
    }
}

/// Opens a session over `cloud` with embeddings from `backend`; a trained
/// backend is attached so the session can be fine-tuned.
pub fn open_session<T: Real>(
    cloud: PointCloud<T>,
    backend: &Backend<T>,
    alpha: f64,
    post: PostprocessConfig,
) -> Result<Session<T>> {
    let index = NeighborIndex::build(&cloud, post.required_k().max(backend.required_k()));
    let cloud = Arc::new(cloud);
    match backend {
        Backend::Trained(net) => {
            let input = NetworkInput::prepare(&cloud, &index, net.config());
            let z = net.embed(&input);
            Ok(Session::new(cloud, Arc::new(index), Arc::new(z), alpha, post)?
                .with_network(Arc::new(net.clone()), Arc::new(input)))
        }
        _ => {
            let z = backend.embed_with_index(&cloud, &index)?;
            Session::new(cloud, Arc::new(index), Arc::new(z), alpha, post)
        }
    }
}

/// Replays a click script on a fresh session.
pub fn replay<T: Real>(
    cloud: PointCloud<T>,
    backend: &Backend<T>,
    script: &[Click],
    alpha: f64,
    post: PostprocessConfig,
) -> Result<Session<T>> {
    let mut s = open_session(cloud, backend, alpha, post)?;
    s.apply_script(script)?;
    Ok(s)
}
