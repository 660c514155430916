use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// A model whose parameters can be walked as named, shaped slices in a fixed
/// order.
pub trait Parameterized<R: Real> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [R]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [R]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, v| n += v.len());
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat copy of all parameters with the index map needed to write them back.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<R> {
    pub data: Vec<R>,
    pub slots: Vec<Slot>,
}

impl<R: Real> ParamVector<R> {
    pub fn from_model<P: Parameterized<R> + ?Sized>(model: &P) -> Self {
        let mut data = Vec::new();
        let mut slots = Vec::new();
        model.visit(&mut |name, shape, values| {
            slots.push(Slot {
                name: name.to_string(),
                shape: shape.to_vec(),
                offset: data.len(),
            });
            data.extend_from_slice(values);
        });
        Self { data, slots }
    }

    /// Copy values back into `model`, which must have the same index map.
    pub fn write_into<P: Parameterized<R> + ?Sized>(&self, model: &mut P) -> Result<()> {
        let mut k = 0;
        let mut err = None;
        model.visit_mut(&mut |name, shape, values| {
            if err.is_some() {
                return;
            }
            match self.slots.get(k) {
                Some(s) if s.name == name && s.shape == shape => {
                    values.copy_from_slice(&self.data[s.offset..s.offset + s.len()]);
                }
                Some(s) => {
                    err = Some(Error::Checkpoint(format!(
                        "slot {k}: expected {name} {shape:?}, found {} {:?}",
                        s.name, s.shape
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("missing slot {name}"))),
            }
            k += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if k != self.slots.len() {
            return Err(Error::Checkpoint(format!(
                "model has {k} slots, vector has {}",
                self.slots.len()
            )));
        }
        Ok(())
    }

    pub fn slot(&self, name: &str) -> Option<&[R]> {
        self.slots
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.offset..s.offset + s.len()])
    }

    pub fn convert<S: Real>(&self) -> ParamVector<S> {
        ParamVector {
            data: self.data.iter().map(|v| S::from_f64(v.as_f64())).collect(),
            slots: self.slots.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimiser with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<R> {
    pub config: AdamConfig,
    m: Vec<R>,
    v: Vec<R>,
    steps: u64,
    scratch: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
            scratch: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of every slot of `params` with the matching slot of
    /// `grads`; `lr(name)` gives the learning rate per slot.
    pub fn step<P: Parameterized<R> + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &P,
        lr: &dyn Fn(&str) -> f64,
    ) {
        self.scratch.clear();
        let scratch = &mut self.scratch;
        grads.visit(&mut |_, _, g| scratch.extend_from_slice(g));
        let n = self.scratch.len();
        if self.m.len() != n {
            self.m = vec![R::zero(); n];
            self.v = vec![R::zero(); n];
            self.steps = 0;
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (R::from_f64(c.beta1), R::from_f64(c.beta2));
        let (one_b1, one_b2) = (R::from_f64(1.0 - c.beta1), R::from_f64(1.0 - c.beta2));
        let eps = R::from_f64(c.eps);
        let inv_bc2 = R::from_f64(1.0 / bc2);
        let (mut m, mut v, mut g) = (&mut self.m[..], &mut self.v[..], &self.scratch[..]);
        params.visit_mut(&mut |name, _, values| {
            let step = R::from_f64(lr(name) / bc1);
            let len = values.len();
            let (ms, mr) = std::mem::take(&mut m).split_at_mut(len);
            let (vs, vr) = std::mem::take(&mut v).split_at_mut(len);
            let (gs, gr) = g.split_at(len);
            (m, v, g) = (mr, vr, gr);
            for (((p, mk), vk), &gk) in values.iter_mut().zip(ms).zip(vs).zip(gs) {
                *mk = b1 * *mk + one_b1 * gk;
                *vk = b2 * *vk + one_b2 * gk * gk;
                *p = *p - step * *mk / ((*vk * inv_bc2).sqrt() + eps);
            }
        });
    }
}
