use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tfidf::{SparseVector, TfidfVectorizer};
use super::RankingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    /// L2 penalty strength.
    pub alpha: f64,
    pub max_epochs: usize,
    /// An epoch counts as "no improvement" when the objective fails to drop
    /// by at least this much below the best seen so far.
    pub tolerance: f64,
    pub n_iter_no_change: usize,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            max_epochs: 1000,
            tolerance: 1e-3,
            n_iter_no_change: 5,
        }
    }
}

/// Logistic-regression model over TF-IDF features, fitted by plain SGD with
/// the `1 / (alpha (t0 + t))` learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdClassifier {
    pub vectorizer: TfidfVectorizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: SgdParams,
    pub n_includes: usize,
    pub n_excludes: usize,
    pub epochs: usize,
    /// Objective (mean log-loss + L2 term) after each epoch; the returned
    /// weights are those of the best epoch.
    pub loss_history: Vec<f64>,
}

impl SgdClassifier {
    pub fn training_size(&self) -> usize {
        self.n_includes + self.n_excludes
    }

    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>() + self.bias
    }

    /// Probability of inclusion.
    pub fn predict_proba<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        sigmoid(self.decision(&self.vectorizer.transform(tokens)))
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(-y z))` without overflow.
fn log_loss(z: f64, y: f64) -> f64 {
    let m = -y * z;
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

/// d/dz of [`log_loss`].
fn d_log_loss(z: f64, y: f64) -> f64 {
    let m = y * z;
    if m > 18.0 {
        -y * (-m).exp()
    } else if m < -18.0 {
        -y
    } else {
        -y / (m.exp() + 1.0)
    }
}

/// Fit on every include plus a uniform sample of at most
/// `neg_ratio * includes` excludes. Token lists are pre-tokenised documents.
pub fn train_sgd<S: AsRef<str>, R: Rng + ?Sized>(
    includes: &[&[S]],
    excludes: &[&[S]],
    neg_ratio: usize,
    rng: &mut R,
    params: &SgdParams,
) -> Result<SgdClassifier, RankingError> {
    if includes.is_empty() || excludes.is_empty() {
        return Err(RankingError::SingleClass);
    }
    let cap = excludes.len().min(neg_ratio.saturating_mul(includes.len()));
    let sampled: Vec<&[S]> = rand::seq::index::sample(rng, excludes.len(), cap)
        .into_iter()
        .map(|i| excludes[i])
        .collect();

    let mut docs: Vec<&[S]> = includes.to_vec();
    docs.extend(sampled.iter().copied());
    let labels: Vec<f64> = std::iter::repeat_n(1.0, includes.len())
        .chain(std::iter::repeat_n(-1.0, sampled.len()))
        .collect();

    let vectorizer = TfidfVectorizer::fit(&docs).ok_or(RankingError::EmptyVocabulary)?;
    let xs: Vec<SparseVector> = docs.iter().map(|d| vectorizer.transform(d)).collect();
    let dim = vectorizer.vocabulary_len();

    let alpha = params.alpha;
    let typw = (1.0 / alpha.sqrt()).sqrt();
    let eta0 = typw; // log-loss derivative magnitude at -typw is below 1
    let t0 = 1.0 / (eta0 * alpha);

    // Weights are stored as scale * v so the L2 shrink is O(1) per step.
    let mut v = vec![0.0; dim];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut t = 1.0;

    let objective = |v: &[f64], scale: f64, bias: f64| -> f64 {
        let n = xs.len() as f64;
        let data: f64 = xs
            .iter()
            .zip(&labels)
            .map(|(x, &y)| {
                let z = x.iter().map(|&(i, val)| v[i] * val).sum::<f64>() * scale + bias;
                log_loss(z, y)
            })
            .sum::<f64>()
            / n;
        let sq: f64 = v.iter().map(|w| w * w).sum::<f64>() * scale * scale;
        data + 0.5 * alpha * sq
    };

    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut best = (f64::INFINITY, v.clone(), scale, bias);
    let mut history = Vec::new();
    let mut stale = 0;
    for _ in 0..params.max_epochs {
        order.shuffle(rng);
        for &i in &order {
            let x = &xs[i];
            let y = labels[i];
            let eta = 1.0 / (alpha * (t0 + t - 1.0));
            let z = x.iter().map(|&(j, val)| v[j] * val).sum::<f64>() * scale + bias;
            let g = d_log_loss(z, y);
            scale *= 1.0 - eta * alpha;
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            let step = -eta * g / scale;
            for &(j, val) in x {
                v[j] += step * val;
            }
            bias -= eta * g;
            t += 1.0;
        }
        let loss = objective(&v, scale, bias);
        history.push(loss);
        if loss > best.0 - params.tolerance {
            stale += 1;
        } else {
            stale = 0;
        }
        if loss < best.0 {
            best = (loss, v.clone(), scale, bias);
        }
        if stale >= params.n_iter_no_change {
            break;
        }
    }

    let (_, v, scale, bias) = best;
    Ok(SgdClassifier {
        vectorizer,
        weights: v.iter().map(|w| w * scale).collect(),
        bias,
        params: params.clone(),
        n_includes: includes.len(),
        n_excludes: sampled.len(),
        epochs: history.len(),
        loss_history: history,
    })
}
