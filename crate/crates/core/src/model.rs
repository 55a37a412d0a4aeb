//! The jointly trained network: shared trunk, proposal-generator projection and
//! online recognizer.

use rand::Rng;

use crate::harness::trunk::TrunkParams;
use crate::numerics::param::{Parameter, ParameterSet};
use crate::oar::OarParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Width of the pre-extracted features.
    pub input_dim: usize,
    /// Trunk output width.
    pub feature_dim: usize,
    pub hidden_dim: usize,
    /// Action classes, background excluded.
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WoadModel {
    pub trunk: TrunkParams,
    /// `D×C` projection to per-frame class scores.
    pub tpg_weight: Parameter,
    pub oar: OarParams,
}

impl WoadModel {
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, recurrent: bool, rng: &mut R) -> Self {
        let trunk = TrunkParams::init(dims.input_dim, dims.feature_dim, rng);
        let mut tpg_weight = Parameter::zeros("tpg.weight", dims.feature_dim, dims.num_classes);
        let bound = 1.0 / (dims.feature_dim as f64).sqrt();
        for v in tpg_weight.value.as_mut_slice() {
            *v = rng.random_range(-bound..bound);
        }
        let oar = OarParams::init(
            dims.feature_dim,
            dims.hidden_dim,
            dims.num_classes,
            recurrent,
            rng,
        );
        Self {
            trunk,
            tpg_weight,
            oar,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.trunk.input_dim(),
            feature_dim: self.trunk.feature_dim(),
            hidden_dim: self.oar.hidden_dim(),
            num_classes: self.tpg_weight.value.cols(),
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.oar.cell, crate::oar::RecurrentCell::Lstm(_))
    }
}

impl ParameterSet for WoadModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.trunk.weight, &self.trunk.bias, &self.tpg_weight];
        v.extend(self.oar.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![
            &mut self.trunk.weight,
            &mut self.trunk.bias,
            &mut self.tpg_weight,
        ];
        v.extend(self.oar.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_order_and_dims() {
        let dims = ModelDims {
            input_dim: 5,
            feature_dim: 4,
            hidden_dim: 3,
            num_classes: 2,
        };
        let m = WoadModel::init(dims, true, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.dims(), dims);
        let names: Vec<_> = m.parameters().iter().map(|p| p.name.clone()).collect();
        assert_eq!(
            names,
            [
                "trunk.weight",
                "trunk.bias",
                "tpg.weight",
                "oar.lstm.w_input",
                "oar.lstm.w_hidden",
                "oar.lstm.bias",
                "oar.w_action",
                "oar.w_start"
            ]
        );
        let ff = WoadModel::init(dims, false, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(!ff.is_recurrent());
        assert_eq!(ff.dims(), dims);
    }
}
