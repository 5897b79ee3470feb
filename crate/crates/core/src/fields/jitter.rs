use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{VelocityField, VelocityQuery};
use crate::latent::LatentVector;

/// Adds zero-mean Gaussian jitter of standard deviation `std` to every
/// coordinate of every answer from the inner field.
///
/// Stands in for a stochastic model backend. Draws come from one seeded
/// stream consumed in call order; batches are answered in query order, so a
/// fixed sequence of calls is reproducible.
pub struct JitteredField<F> {
    inner: F,
    std: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl<F: VelocityField> JitteredField<F> {
    pub fn new(inner: F, std: f64, seed: u64) -> Result<Self> {
        if !(std.is_finite() && std >= 0.0) {
            return Err(Error::Config(format!("jitter std must be nonnegative, got {std}")));
        }
        Ok(Self {
            inner,
            std,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    fn perturb(&self, v: LatentVector) -> Result<LatentVector> {
        let mut rng = self.rng.lock().expect("jitter rng poisoned");
        let data = v
            .data()
            .iter()
            .map(|x| x + self.std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LatentVector::new(data, v.shape().to_vec())
    }
}

impl<F: VelocityField> VelocityField for JitteredField<F> {
    fn evaluate(&self, query: &VelocityQuery) -> Result<LatentVector> {
        let v = self.inner.evaluate(query)?;
        self.perturb(v)
    }

    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        let clean = self.inner.evaluate_batch(queries)?;
        clean.into_iter().map(|v| self.perturb(v)).collect()
    }
}
