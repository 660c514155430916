//! Attention-pooling policy network.
//!
//! Every order and driver row is embedded by its own MLP (6 -> 128 -> 128).
//! A second MLP per entity type maps each embedding to a sigmoid weight, and
//! the weighted embeddings are summed into the global context
//! `[sum a_o v_o | sum a_d v_d | v_selected | t]` of width 385. The assignment
//! head scores `[context | v_o]` for each in-range order, the reposition head
//! maps the context to nine scores, and the optional critic maps it to a
//! scalar value.
//!
//! Pooling sums run over rows in lexicographic order of their features, so
//! permuting the input rows leaves every output bit-identical.

use std::cmp::Ordering;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{ActionSet, Observation, DRIVER_FEATURES, ORDER_FEATURES};
use crate::geom::Heading;
use crate::nn::{
    log_softmax, matmul_nn_cols, matmul_nt_cols, matmul_tn_acc_cols, softmax, Activation, Dense, Mat, Mlp,
    MlpCache, ParamVector, Parameterized, Real,
};

pub const EMBED: usize = 128;
pub const HEAD_HIDDEN: usize = 64;
pub const CONTEXT: usize = 3 * EMBED + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<R> {
    pub order_emb: Mlp<R>,
    pub driver_emb: Mlp<R>,
    pub order_weight: Mlp<R>,
    pub driver_weight: Mlp<R>,
    pub assign: Mlp<R>,
    pub repo: Mlp<R>,
    pub critic: Option<Mlp<R>>,
}

/// Network outputs for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    /// One entry per element of the observation's action set.
    pub actions: Vec<f64>,
    pub value: Option<f64>,
}

enum Pass<R> {
    Cached(MlpCache<R>),
    Plain(Mat<R>),
}

impl<R: Real> Pass<R> {
    fn run(mlp: &Mlp<R>, x: Mat<R>, keep: bool) -> Result<Self> {
        if keep {
            mlp.forward_owned(x).map(Pass::Cached)
        } else {
            mlp.predict(&x).map(Pass::Plain)
        }
    }

    fn output(&self) -> &Mat<R> {
        match self {
            Pass::Cached(c) => c.output(),
            Pass::Plain(m) => m,
        }
    }

    fn into_cache(self) -> MlpCache<R> {
        match self {
            Pass::Cached(c) => c,
            Pass::Plain(_) => unreachable!("forward pass kept no cache"),
        }
    }
}

/// Everything the backward pass needs from a batched forward pass.
pub struct BatchCache<R> {
    order_offsets: Vec<usize>,
    driver_offsets: Vec<usize>,
    order_canon: Vec<Vec<usize>>,
    driver_canon: Vec<Vec<usize>>,
    selected: Vec<usize>,
    context: Mat<R>,
    order_emb: MlpCache<R>,
    driver_emb: MlpCache<R>,
    order_weight: MlpCache<R>,
    driver_weight: MlpCache<R>,
    assign_rows: Vec<(usize, usize)>,
    assign_ranges: Vec<Option<Range<usize>>>,
    assign: Option<MlpCache<R>>,
    repo_index: Vec<Option<usize>>,
    repo: Option<MlpCache<R>>,
    critic: Option<MlpCache<R>>,
    batch: usize,
}

impl<R: Real> BatchCache<R> {
    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    /// Global context vector of observation `b`.
    pub fn context(&self, b: usize) -> Vec<f64> {
        self.context.row(b).iter().map(|v| v.as_f64()).collect()
    }

    /// Sigmoid pooling weights of the orders of observation `b`, in row order.
    pub fn order_weights(&self, b: usize) -> Vec<f64> {
        let out = self.order_weight.output();
        (self.order_offsets[b]..self.order_offsets[b + 1])
            .map(|i| out.get(i, 0).as_f64())
            .collect()
    }

    pub fn driver_weights(&self, b: usize) -> Vec<f64> {
        let out = self.driver_weight.output();
        (self.driver_offsets[b]..self.driver_offsets[b + 1])
            .map(|i| out.get(i, 0).as_f64())
            .collect()
    }

    /// On/off pattern of every ReLU unit, used to detect kink crossings in
    /// finite-difference checks.
    pub fn relu_pattern(&self, net: &PolicyNet<R>) -> Vec<bool> {
        let mut out = Vec::new();
        let mut push = |mlp: &Mlp<R>, cache: Option<&MlpCache<R>>| {
            if let Some(c) = cache {
                for (layer, act) in mlp.layers.iter().zip(&c.activations[1..]) {
                    if layer.activation == Activation::Relu {
                        out.extend(act.data().iter().map(|v| *v > R::zero()));
                    }
                }
            }
        };
        push(&net.order_emb, Some(&self.order_emb));
        push(&net.driver_emb, Some(&self.driver_emb));
        push(&net.assign, self.assign.as_ref());
        push(&net.repo, self.repo.as_ref());
        if let Some(c) = &net.critic {
            push(c, self.critic.as_ref());
        }
        out
    }
}

/// Gradients with respect to the raw feature rows, stacked like the batch.
pub struct InputGrads<R> {
    pub orders: Mat<R>,
    pub drivers: Mat<R>,
    pub order_offsets: Vec<usize>,
    pub driver_offsets: Vec<usize>,
}

fn row_cmp<const K: usize>(a: &[f64; K], b: &[f64; K]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Row indices sorted lexicographically by feature values.
pub fn canonical_order<const K: usize>(rows: &[[f64; K]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| row_cmp(&rows[a], &rows[b]));
    idx
}

fn check_observation(obs: &Observation) -> Result<()> {
    if obs.selected >= obs.drivers.len() {
        return Err(Error::Shape(format!(
            "selected driver row {} out of {} rows",
            obs.selected,
            obs.drivers.len()
        )));
    }
    if let ActionSet::Assign(rows) = &obs.actions {
        if let Some(r) = rows.iter().find(|&&r| r >= obs.orders.len()) {
            return Err(Error::Shape(format!(
                "assign set refers to order row {r} of {}",
                obs.orders.len()
            )));
        }
    }
    Ok(())
}

fn add_into<R: Real>(dst: &mut [R], src: &[R]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn convert_mlp<R: Real, S: Real>(m: &Mlp<R>) -> Mlp<S> {
    let mut out = Mlp::<S> {
        layers: m
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs(), l.outputs(), l.activation))
            .collect(),
    };
    ParamVector::from_model(m)
        .convert::<S>()
        .write_into(&mut out)
        .expect("same layout");
    out
}

impl<R: Real> PolicyNet<R> {
    pub fn new<G: Rng + ?Sized>(rng: &mut G, with_critic: bool) -> Self {
        use Activation::*;
        let emb = |rng: &mut G, inputs| Mlp::new(&[inputs, EMBED, EMBED], &[Relu, Identity], rng);
        let weight = |rng: &mut G| Mlp::new(&[EMBED, EMBED, 1], &[Tanh, Sigmoid], rng);
        let order_emb = emb(rng, ORDER_FEATURES);
        let driver_emb = emb(rng, DRIVER_FEATURES);
        let order_weight = weight(rng);
        let driver_weight = weight(rng);
        let assign = Mlp::new(&[CONTEXT + EMBED, HEAD_HIDDEN, 1], &[Relu, Identity], rng);
        let repo = Mlp::new(&[CONTEXT, HEAD_HIDDEN, Heading::COUNT], &[Relu, Identity], rng);
        let critic = with_critic.then(|| Mlp::new(&[CONTEXT, HEAD_HIDDEN, 1], &[Relu, Identity], rng));
        Self {
            order_emb,
            driver_emb,
            order_weight,
            driver_weight,
            assign,
            repo,
            critic,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            order_emb: self.order_emb.zeros_like(),
            driver_emb: self.driver_emb.zeros_like(),
            order_weight: self.order_weight.zeros_like(),
            driver_weight: self.driver_weight.zeros_like(),
            assign: self.assign.zeros_like(),
            repo: self.repo.zeros_like(),
            critic: self.critic.as_ref().map(Mlp::zeros_like),
        }
    }

    pub fn has_critic(&self) -> bool {
        self.critic.is_some()
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.order_emb,
            &self.driver_emb,
            &self.order_weight,
            &self.driver_weight,
            &self.assign,
            &self.repo,
        ]
        .into_iter()
        .chain(self.critic.as_ref())
        .all(Mlp::is_finite)
    }

    /// Same parameters in another precision.
    pub fn convert<S: Real>(&self) -> PolicyNet<S> {
        PolicyNet {
            order_emb: convert_mlp(&self.order_emb),
            driver_emb: convert_mlp(&self.driver_emb),
            order_weight: convert_mlp(&self.order_weight),
            driver_weight: convert_mlp(&self.driver_weight),
            assign: convert_mlp(&self.assign),
            repo: convert_mlp(&self.repo),
            critic: self.critic.as_ref().map(convert_mlp),
        }
    }

    /// Assignment head over `(observation, order row)` pairs. The first
    /// layer's context block is applied once per observation; the cache
    /// keeps the gathered order embeddings in place of the layer input.
    fn assign_head(&self, context: &Mat<R>, eo: &Mat<R>, rows: &[(usize, usize)], keep: bool) -> Pass<R> {
        let first = &self.assign.layers[0];
        let mut per_obs = Mat::zeros(context.rows(), first.outputs());
        matmul_nt_cols(context, &first.w, 0..CONTEXT, &mut per_obs);
        let v = Mat::from_fn(rows.len(), EMBED, |k, j| eo.get(rows[k].1, j));
        let mut h = Mat::zeros(rows.len(), first.outputs());
        matmul_nt_cols(&v, &first.w, CONTEXT..CONTEXT + EMBED, &mut h);
        for (k, &(b, _)) in rows.iter().enumerate() {
            for ((z, c), bias) in h.row_mut(k).iter_mut().zip(per_obs.row(b)).zip(&first.b) {
                *z = first.activation.apply(*z + *c + *bias);
            }
        }
        let mut activations = vec![v, h];
        for layer in &self.assign.layers[1..] {
            let y = layer.forward(activations.last().expect("hidden layer"));
            activations.push(y);
        }
        if keep {
            Pass::Cached(MlpCache { activations })
        } else {
            Pass::Plain(activations.pop().expect("output layer"))
        }
    }

    pub fn forward(&self, obs: &Observation) -> Result<Scores> {
        Ok(self.evaluate_batch(&[obs])?.pop().expect("one observation"))
    }

    /// Scores without keeping a backward cache.
    pub fn evaluate_batch(&self, batch: &[&Observation]) -> Result<Vec<Scores>> {
        Ok(self.run(batch, false)?.0)
    }

    pub fn forward_batch(&self, batch: &[&Observation]) -> Result<(Vec<Scores>, BatchCache<R>)> {
        let (scores, cache) = self.run(batch, true)?;
        Ok((scores, cache.expect("cache requested")))
    }

    fn run(
        &self,
        batch: &[&Observation],
        keep: bool,
    ) -> Result<(Vec<Scores>, Option<BatchCache<R>>)> {
        for obs in batch {
            check_observation(obs)?;
        }
        let n = batch.len();
        let mut order_offsets = Vec::with_capacity(n + 1);
        let mut driver_offsets = Vec::with_capacity(n + 1);
        order_offsets.push(0);
        driver_offsets.push(0);
        let mut order_rows = Vec::new();
        let mut driver_rows = Vec::new();
        for obs in batch {
            order_rows.extend_from_slice(&obs.orders);
            driver_rows.extend_from_slice(&obs.drivers);
            order_offsets.push(order_rows.len());
            driver_offsets.push(driver_rows.len());
        }
        let order_canon: Vec<Vec<usize>> =
            batch.iter().map(|o| canonical_order(&o.orders)).collect();
        let driver_canon: Vec<Vec<usize>> =
            batch.iter().map(|o| canonical_order(&o.drivers)).collect();
        let selected: Vec<usize> = batch
            .iter()
            .enumerate()
            .map(|(b, o)| driver_offsets[b] + o.selected)
            .collect();

        let eo = Pass::run(&self.order_emb, Mat::from_rows(&order_rows), keep)?;
        let ed = Pass::run(&self.driver_emb, Mat::from_rows(&driver_rows), keep)?;
        let ao = Pass::run(&self.order_weight, eo.output().clone(), keep)?;
        let ad = Pass::run(&self.driver_weight, ed.output().clone(), keep)?;

        let mut context = Mat::<R>::zeros(n, CONTEXT);
        {
            let (eo, ao, ed, ad) = (eo.output(), ao.output(), ed.output(), ad.output());
            for b in 0..n {
                let row = context.row_mut(b);
                for &i in &order_canon[b] {
                    let g = order_offsets[b] + i;
                    let a = ao.get(g, 0);
                    for (c, e) in row[..EMBED].iter_mut().zip(eo.row(g)) {
                        *c += a * *e;
                    }
                }
                for &i in &driver_canon[b] {
                    let g = driver_offsets[b] + i;
                    let a = ad.get(g, 0);
                    for (c, e) in row[EMBED..2 * EMBED].iter_mut().zip(ed.row(g)) {
                        *c += a * *e;
                    }
                }
                row[2 * EMBED..3 * EMBED].copy_from_slice(ed.row(selected[b]));
                row[3 * EMBED] = R::from_f64(batch[b].time_feature);
            }
        }

        let mut assign_rows = Vec::new();
        let mut assign_ranges = vec![None; n];
        let mut repo_index = vec![None; n];
        let mut repo_obs = Vec::new();
        for (b, obs) in batch.iter().enumerate() {
            match &obs.actions {
                ActionSet::Assign(rows) => {
                    let start = assign_rows.len();
                    assign_rows.extend(rows.iter().map(|&r| (b, order_offsets[b] + r)));
                    assign_ranges[b] = Some(start..assign_rows.len());
                }
                ActionSet::Reposition => {
                    repo_index[b] = Some(repo_obs.len());
                    repo_obs.push(b);
                }
            }
        }
        let assign = (!assign_rows.is_empty()).then(|| self.assign_head(&context, eo.output(), &assign_rows, keep));
        let repo = if repo_obs.is_empty() {
            None
        } else {
            let mut h = Mat::zeros(repo_obs.len(), CONTEXT);
            for (k, &b) in repo_obs.iter().enumerate() {
                h.row_mut(k).copy_from_slice(context.row(b));
            }
            Some(Pass::run(&self.repo, h, keep)?)
        };
        let critic = match &self.critic {
            Some(c) => Some(Pass::run(c, context.clone(), keep)?),
            None => None,
        };

        let scores = (0..n)
            .map(|b| {
                let actions = match (&assign_ranges[b], repo_index[b]) {
                    (Some(r), _) => {
                        let out = assign.as_ref().expect("assign rows").output();
                        r.clone().map(|k| out.get(k, 0).as_f64()).collect()
                    }
                    (None, Some(k)) => repo
                        .as_ref()
                        .expect("repo rows")
                        .output()
                        .row(k)
                        .iter()
                        .map(|v| v.as_f64())
                        .collect(),
                    (None, None) => unreachable!("every observation has an action set"),
                };
                Scores {
                    actions,
                    value: critic.as_ref().map(|c| c.output().get(b, 0).as_f64()),
                }
            })
            .collect();

        let cache = keep.then(|| BatchCache {
            order_offsets,
            driver_offsets,
            order_canon,
            driver_canon,
            selected,
            context,
            order_emb: eo.into_cache(),
            driver_emb: ed.into_cache(),
            order_weight: ao.into_cache(),
            driver_weight: ad.into_cache(),
            assign_rows,
            assign_ranges,
            assign: assign.map(Pass::into_cache),
            repo_index,
            repo: repo.map(Pass::into_cache),
            critic: critic.map(Pass::into_cache),
            batch: n,
        });
        Ok((scores, cache))
    }

    /// Accumulate parameter gradients into `grads` given `dL/dscores` per
    /// observation (an empty vector counts as zero) and optionally
    /// `dL/dvalue`. Returns gradients with respect to the feature rows when
    /// `want_inputs` is set.
    pub fn backward_batch(
        &self,
        cache: &BatchCache<R>,
        d_actions: &[Vec<f64>],
        d_value: Option<&[f64]>,
        grads: &mut PolicyNet<R>,
        want_inputs: bool,
    ) -> Result<Option<InputGrads<R>>> {
        let n = cache.batch;
        if d_actions.len() != n || d_value.is_some_and(|d| d.len() != n) {
            return Err(Error::Shape(format!(
                "upstream gradients for {} observations, batch has {n}",
                d_actions.len()
            )));
        }
        let mut d_context = Mat::<R>::zeros(n, CONTEXT);
        let eo = cache.order_emb.output();
        let ed = cache.driver_emb.output();
        let mut d_eo = Mat::<R>::zeros(eo.rows(), EMBED);
        let mut d_ed = Mat::<R>::zeros(ed.rows(), EMBED);

        if let Some(ac) = &cache.assign {
            let mut dy = Mat::zeros(cache.assign_rows.len(), 1);
            for b in 0..n {
                let (Some(r), d) = (&cache.assign_ranges[b], &d_actions[b]) else {
                    continue;
                };
                if d.is_empty() {
                    continue;
                }
                if d.len() != r.len() {
                    return Err(Error::Shape(format!(
                        "observation {b}: {} score gradients for {} actions",
                        d.len(),
                        r.len()
                    )));
                }
                for (k, v) in r.clone().zip(d) {
                    dy.set(k, 0, R::from_f64(*v));
                }
            }
            let layers = &self.assign.layers;
            let mut dz = dy;
            for i in (1..layers.len()).rev() {
                dz = layers[i]
                    .backward(&ac.activations[i], &ac.activations[i + 1], &dz, &mut grads.assign.layers[i], true)
                    .expect("input gradient");
            }
            let first = &layers[0];
            for (d, &y) in dz.data_mut().iter_mut().zip(ac.activations[1].data()) {
                *d *= first.activation.derivative_from_output(y);
            }
            let mut dz_obs = Mat::<R>::zeros(n, dz.cols());
            for (k, &(b, _)) in cache.assign_rows.iter().enumerate() {
                add_into(dz_obs.row_mut(b), dz.row(k));
            }
            let g0 = &mut grads.assign.layers[0];
            matmul_tn_acc_cols(&dz_obs, &cache.context, &mut g0.w, 0..CONTEXT);
            matmul_tn_acc_cols(&dz, &ac.activations[0], &mut g0.w, CONTEXT..CONTEXT + EMBED);
            for b in 0..n {
                add_into(&mut g0.b, dz_obs.row(b));
            }
            let mut dc = Mat::<R>::zeros(n, CONTEXT);
            matmul_nn_cols(&dz_obs, &first.w, 0..CONTEXT, &mut dc);
            add_into(d_context.data_mut(), dc.data());
            let mut dv = Mat::<R>::zeros(dz.rows(), EMBED);
            matmul_nn_cols(&dz, &first.w, CONTEXT..CONTEXT + EMBED, &mut dv);
            for (k, &(_, g)) in cache.assign_rows.iter().enumerate() {
                add_into(d_eo.row_mut(g), dv.row(k));
            }
        }

        if let Some(rc) = &cache.repo {
            let mut dy = Mat::zeros(rc.output().rows(), Heading::COUNT);
            for b in 0..n {
                let (Some(k), d) = (cache.repo_index[b], &d_actions[b]) else {
                    continue;
                };
                if d.is_empty() {
                    continue;
                }
                if d.len() != Heading::COUNT {
                    return Err(Error::Shape(format!(
                        "observation {b}: {} score gradients for {} moves",
                        d.len(),
                        Heading::COUNT
                    )));
                }
                for (t, v) in dy.row_mut(k).iter_mut().zip(d) {
                    *t = R::from_f64(*v);
                }
            }
            let dh = self
                .repo
                .backward(rc, &dy, &mut grads.repo, true)
                .expect("input gradient");
            for b in 0..n {
                if let Some(k) = cache.repo_index[b] {
                    add_into(d_context.row_mut(b), dh.row(k));
                }
            }
        }

        if let (Some(dv), Some(net), Some(cc)) = (d_value, &self.critic, &cache.critic) {
            let dy = Mat::from_fn(n, 1, |b, _| R::from_f64(dv[b]));
            let g = grads
                .critic
                .as_mut()
                .ok_or_else(|| Error::Shape("gradient buffer lacks a critic".into()))?;
            let dh = net.backward(cc, &dy, g, true).expect("input gradient");
            add_into(d_context.data_mut(), dh.data());
        }

        // c = sum a_i v_i, so dv_i += a_i dc and da_i = <dc, v_i>.
        let ao = cache.order_weight.output();
        let ad = cache.driver_weight.output();
        let mut d_ao = Mat::<R>::zeros(ao.rows(), 1);
        let mut d_ad = Mat::<R>::zeros(ad.rows(), 1);
        for b in 0..n {
            let dc = d_context.row(b);
            for &i in &cache.order_canon[b] {
                let g = cache.order_offsets[b] + i;
                let a = ao.get(g, 0);
                let mut da = R::zero();
                for ((d, e), c) in d_eo.row_mut(g).iter_mut().zip(eo.row(g)).zip(&dc[..EMBED]) {
                    *d += a * *c;
                    da += *c * *e;
                }
                d_ao.set(g, 0, da);
            }
            for &i in &cache.driver_canon[b] {
                let g = cache.driver_offsets[b] + i;
                let a = ad.get(g, 0);
                let mut da = R::zero();
                for ((d, e), c) in d_ed
                    .row_mut(g)
                    .iter_mut()
                    .zip(ed.row(g))
                    .zip(&dc[EMBED..2 * EMBED])
                {
                    *d += a * *c;
                    da += *c * *e;
                }
                d_ad.set(g, 0, da);
            }
            add_into(d_ed.row_mut(cache.selected[b]), &dc[2 * EMBED..3 * EMBED]);
        }
        let via_o = self
            .order_weight
            .backward(&cache.order_weight, &d_ao, &mut grads.order_weight, true)
            .expect("input gradient");
        let via_d = self
            .driver_weight
            .backward(&cache.driver_weight, &d_ad, &mut grads.driver_weight, true)
            .expect("input gradient");
        add_into(d_eo.data_mut(), via_o.data());
        add_into(d_ed.data_mut(), via_d.data());
        let dxo = self
            .order_emb
            .backward(&cache.order_emb, &d_eo, &mut grads.order_emb, want_inputs);
        let dxd = self
            .driver_emb
            .backward(&cache.driver_emb, &d_ed, &mut grads.driver_emb, want_inputs);
        Ok(match (dxo, dxd) {
            (Some(orders), Some(drivers)) => Some(InputGrads {
                orders,
                drivers,
                order_offsets: cache.order_offsets.clone(),
                driver_offsets: cache.driver_offsets.clone(),
            }),
            _ => None,
        })
    }
}

impl<R: Real> Parameterized<R> for PolicyNet<R> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [R])) {
        self.order_emb.visit("order_emb", f);
        self.driver_emb.visit("driver_emb", f);
        self.order_weight.visit("order_weight", f);
        self.driver_weight.visit("driver_weight", f);
        self.assign.visit("assign", f);
        self.repo.visit("repo", f);
        if let Some(c) = &self.critic {
            c.visit("critic", f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [R])) {
        self.order_emb.visit_mut("order_emb", f);
        self.driver_emb.visit_mut("driver_emb", f);
        self.order_weight.visit_mut("order_weight", f);
        self.driver_weight.visit_mut("driver_weight", f);
        self.assign.visit_mut("assign", f);
        self.repo.visit_mut("repo", f);
        if let Some(c) = &mut self.critic {
            c.visit_mut("critic", f);
        }
    }
}

/// True for parameter slots of the critic head.
pub fn is_critic_slot(name: &str) -> bool {
    name.starts_with("critic.")
}

fn nonempty(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        Err(Error::Shape("empty score vector".into()))
    } else {
        Ok(())
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn select_greedy(scores: &[f64]) -> Result<usize> {
    nonempty(scores)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Uniform action with probability `epsilon`, greedy otherwise.
pub fn select_epsilon<G: Rng + ?Sized>(scores: &[f64], epsilon: f64, rng: &mut G) -> Result<usize> {
    nonempty(scores)?;
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..scores.len()))
    } else {
        select_greedy(scores)
    }
}

/// Draw from the softmax of `scores`; returns the index and its log-probability.
pub fn sample_categorical<G: Rng + ?Sized>(scores: &[f64], rng: &mut G) -> Result<(usize, f64)> {
    nonempty(scores)?;
    let p = softmax(scores);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = p.len() - 1;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            pick = i;
            break;
        }
    }
    Ok((pick, log_softmax(scores)[pick]))
}
