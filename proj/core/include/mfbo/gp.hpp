#pragma once

#include "mfbo/common.hpp"

namespace mfbo {

// Squared-exponential kernel with per-dimension lengthscales:
//   k(a, b) = output_scale * exp(-1/2 * sum_i ((a_i - b_i) / l_i)^2)
struct KernelParams {
  double output_scale = 1.0;
  Vector lengthscales;  // strictly positive, one per input dimension
};

double rbf_kernel(const Vector& a, const Vector& b, const KernelParams& k);
// Gram block between row sets A (n x d) and B (m x d).
Matrix rbf_gram(const Matrix& A, const Matrix& B, const KernelParams& k);

struct HyperPriorBox {
  double lower;
  double upper;
};

// Smoothed-box priors: quadratic penalty (weight `penalty_weight` in the train
// config) on the distance outside the box, applied in log space for positive
// parameters and linearly for the mean constant.
struct PriorBoxes {
  HyperPriorBox lengthscale{0.025, 0.6};
  HyperPriorBox output_scale{0.05, 2.0};
  HyperPriorBox noise_variance{1e-5, 0.2};
  HyperPriorBox mean_constant{-1.0, 1.0};
};

struct GPHyperparams {
  KernelParams kernel;
  double noise_variance = 1e-2;
  double mean_constant = 0.0;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 75;
  double penalty_weight = 100.0;
};

// Exact GP posterior with fixed hyperparameters. Immutable: conditioning on
// new observations returns a new value (the factorization is extended in
// O(n^2 k) rather than recomputed).
class PosteriorGP {
 public:
  PosteriorGP() = default;  // prior-only model over an unknown dimension

  // Factorizes K + noise*I (+ escalating jitter, see below) and stores alpha.
  // Throws NumericalError if the factorization fails at the maximum jitter.
  static PosteriorGP fit(Matrix X, Vector y, GPHyperparams hp);

  PosteriorGP conditioned(const Matrix& X_new, const Vector& y_new) const;

  // Latent posterior mean and variance (variance clamped at 0).
  std::pair<double, double> predict(const Vector& x) const;
  void predict_batch(const Matrix& X, Vector& mean, Vector& var) const;

  // Gradient of the posterior mean at x; zero vector for an empty model.
  Vector gradient_mean(const Vector& x) const;

  // Joint latent posterior over the rows of X.
  void joint_posterior(const Matrix& X, Vector& mean, Matrix& cov) const;

  int size() const { return static_cast<int>(y_.size()); }
  bool empty() const { return y_.size() == 0; }
  const GPHyperparams& hyperparams() const { return hp_; }
  const Matrix& train_inputs() const { return X_; }
  const Vector& train_targets() const { return y_; }
  const Matrix& chol() const { return chol_; }
  const Vector& alpha() const { return alpha_; }

 private:
  Matrix X_;
  Vector y_;
  GPHyperparams hp_;
  Matrix chol_;   // lower-triangular L with L L^T = K + noise I + jitter I
  Vector alpha_;  // (K + noise I)^-1 (y - mean)
};

std::pair<double, double> posterior_predict(const PosteriorGP& gp, const Vector& x);
Vector posterior_gradient_mean(const PosteriorGP& gp, const Vector& x);

double log_marginal_likelihood(const Matrix& X, const Vector& y, const GPHyperparams& hp);

// Gradient of the log marginal likelihood in training space:
// [log lengthscales (d), log output scale, log noise variance, mean constant].
// Returns the likelihood value.
double log_marginal_likelihood_grad(const Matrix& X, const Vector& y,
                                    const GPHyperparams& hp, Vector& grad);

// Adam ascent on the box-penalized log marginal likelihood (75 epochs, lr 0.1
// by default). The returned hyperparameters are projected into their boxes and
// never score below the (projected) initial point.
GPHyperparams fit_hyperparameters(const Matrix& X, const Vector& y,
                                  const GPHyperparams& init, const PriorBoxes& boxes,
                                  const TrainConfig& cfg);

// Restricted variant: entries of `train_mask` (same layout as the gradient)
// that are false stay frozen at their initial values.
GPHyperparams fit_hyperparameters_masked(const Matrix& X, const Vector& y,
                                         const GPHyperparams& init,
                                         const PriorBoxes& boxes, const TrainConfig& cfg,
                                         const std::vector<bool>& train_mask);

// Cholesky of S + jitter*I. The exact matrix is tried first; on failure the
// jitter escalates from rel_floor*scale by factors of 10 up to
// rel_ceiling*scale, beyond which NumericalError is thrown.
Matrix robust_cholesky(const Matrix& S, double scale, double rel_floor = 1e-8,
                       double rel_ceiling = 1e-4);

double box_penalty(double value, const HyperPriorBox& box, bool log_space);

}  // namespace mfbo
