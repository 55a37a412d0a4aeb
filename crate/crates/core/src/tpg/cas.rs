//! Co-activity similarity: attention-pooled region features and the pairwise
//! ranking loss over videos sharing a class.

use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, dot, DenseMatrix};
use crate::numerics::ops::{
    cosine_similarity, cosine_similarity_backward, softmax_backward, temporal_softmax,
};
use crate::tpg::scoring::FrameScores;

/// Orientation of the hinge terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CasForm {
    /// Same-class high-attention regions are pulled together and pushed away
    /// from the other video's low-attention region.
    #[default]
    Intent,
    /// `max(0, d(Ψi,Ψj) − d(Ψi,Φj) + δ)` with `d` a cosine similarity, exactly
    /// as the formula is usually printed.
    Verbatim,
}

impl CasForm {
    fn sign(self) -> f64 {
        match self {
            CasForm::Intent => 1.0,
            CasForm::Verbatim => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionRepr {
    pub video_id: String,
    /// 1-based class.
    pub class: usize,
    /// High-attention feature `Fᵀ A`.
    pub psi: Vec<f64>,
    /// Low-attention feature `Fᵀ (1 − A) / (T − 1)`.
    pub phi: Vec<f64>,
    pub attention: Vec<f64>,
}

pub fn region_representations(
    features: &DenseMatrix,
    scores: &FrameScores,
    class: usize,
) -> Result<RegionRepr> {
    let (t, d) = features.shape();
    if scores.num_frames() != t {
        return Err(Error::domain(format!(
            "{} frame scores for {t} feature rows",
            scores.num_frames()
        )));
    }
    if class == 0 || class > scores.num_classes() {
        return Err(Error::domain(format!("class {class} out of range")));
    }
    if t < 2 {
        return Err(Error::domain(format!(
            "video `{}` has {t} frame(s); low-attention features need at least 2",
            scores.video_id
        )));
    }
    let attention = temporal_softmax(&scores.scores.column(class - 1))?;
    let mut psi = vec![0.0; d];
    let mut phi = vec![0.0; d];
    let inv = 1.0 / (t as f64 - 1.0);
    for (r, &a) in attention.iter().enumerate() {
        axpy(a, features.row(r), &mut psi);
        axpy((1.0 - a) * inv, features.row(r), &mut phi);
    }
    Ok(RegionRepr {
        video_id: scores.video_id.clone(),
        class,
        psi,
        phi,
        attention,
    })
}

/// Propagates `∂L/∂Ψ`, `∂L/∂Φ` into the features and the frame scores.
pub fn region_representations_backward(
    features: &DenseMatrix,
    repr: &RegionRepr,
    grad_psi: &[f64],
    grad_phi: &[f64],
    grad_features: &mut DenseMatrix,
    grad_scores: &mut DenseMatrix,
) {
    let t = features.rows();
    let inv = 1.0 / (t as f64 - 1.0);
    let mut grad_attention = vec![0.0; t];
    for (r, &a) in repr.attention.iter().enumerate() {
        let f = features.row(r);
        grad_attention[r] = dot(f, grad_psi) - inv * dot(f, grad_phi);
        let g = grad_features.row_mut(r);
        axpy(a, grad_psi, g);
        axpy((1.0 - a) * inv, grad_phi, g);
    }
    let grad_col = softmax_backward(&repr.attention, &grad_attention);
    for (r, g) in grad_col.into_iter().enumerate() {
        grad_scores[(r, repr.class - 1)] += g;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegionGrad {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl RegionGrad {
    fn zeros(d: usize) -> Self {
        Self {
            psi: vec![0.0; d],
            phi: vec![0.0; d],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub grad_i: RegionGrad,
    pub grad_j: RegionGrad,
    /// A zero-norm region made one of the similarities degenerate.
    pub degenerate: bool,
}

pub fn cas_pair_loss(
    i: &RegionRepr,
    j: &RegionRepr,
    margin: f64,
    form: CasForm,
) -> Result<PairLoss> {
    if i.class != j.class {
        return Err(Error::domain(format!(
            "CAS pair mixes classes {} and {}",
            i.class, j.class
        )));
    }
    if i.psi.len() != j.psi.len() {
        return Err(Error::domain("CAS pair feature dimensions differ"));
    }
    let d = i.psi.len();
    let pp = cosine_similarity(&i.psi, &j.psi)?;
    let pf = cosine_similarity(&i.psi, &j.phi)?;
    let fp = cosine_similarity(&i.phi, &j.psi)?;
    let s = form.sign();

    let mut out = PairLoss {
        loss: 0.0,
        grad_i: RegionGrad::zeros(d),
        grad_j: RegionGrad::zeros(d),
        degenerate: pp.degenerate || pf.degenerate || fp.degenerate,
    };
    let mut up_pp = 0.0;
    let hinge1 = s * (pf.value - pp.value) + margin;
    if hinge1 > 0.0 {
        out.loss += 0.5 * hinge1;
        up_pp -= 0.5 * s;
        cosine_similarity_backward(
            &i.psi,
            &j.phi,
            0.5 * s,
            &mut out.grad_i.psi,
            &mut out.grad_j.phi,
        );
    }
    let hinge2 = s * (fp.value - pp.value) + margin;
    if hinge2 > 0.0 {
        out.loss += 0.5 * hinge2;
        up_pp -= 0.5 * s;
        cosine_similarity_backward(
            &i.phi,
            &j.psi,
            0.5 * s,
            &mut out.grad_i.phi,
            &mut out.grad_j.psi,
        );
    }
    cosine_similarity_backward(
        &i.psi,
        &j.psi,
        up_pp,
        &mut out.grad_i.psi,
        &mut out.grad_j.psi,
    );
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CasLoss {
    pub loss: f64,
    pub num_pairs: usize,
    pub degenerate_pairs: usize,
    /// Aligned with the input regions.
    pub grads: Vec<RegionGrad>,
}

/// Mean pair loss over every unordered pair of regions that share a class
/// and come from different videos. Zero when no such pair exists.
pub fn cas_loss(regions: &[RegionRepr], margin: f64, form: CasForm) -> Result<CasLoss> {
    let mut grads: Vec<RegionGrad> = regions
        .iter()
        .map(|r| RegionGrad::zeros(r.psi.len()))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..regions.len() {
        for b in a + 1..regions.len() {
            if regions[a].class == regions[b].class && regions[a].video_id != regions[b].video_id {
                pairs.push((a, b));
            }
        }
    }
    if pairs.is_empty() {
        return Ok(CasLoss {
            loss: 0.0,
            num_pairs: 0,
            degenerate_pairs: 0,
            grads,
        });
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    let mut degenerate_pairs = 0;
    for &(a, b) in &pairs {
        let pair = cas_pair_loss(&regions[a], &regions[b], margin, form)?;
        total += pair.loss;
        degenerate_pairs += usize::from(pair.degenerate);
        axpy(scale, &pair.grad_i.psi, &mut grads[a].psi);
        axpy(scale, &pair.grad_i.phi, &mut grads[a].phi);
        axpy(scale, &pair.grad_j.psi, &mut grads[b].psi);
        axpy(scale, &pair.grad_j.phi, &mut grads[b].phi);
    }
    Ok(CasLoss {
        loss: total * scale,
        num_pairs: pairs.len(),
        degenerate_pairs,
        grads,
    })
}
