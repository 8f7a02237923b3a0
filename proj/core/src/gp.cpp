#include "mfbo/gp.hpp"

#include <Eigen/Cholesky>

namespace mfbo {

double rbf_kernel(const Vector& a, const Vector& b, const KernelParams& k) {
  if (a.size() != b.size() || a.size() != k.lengthscales.size())
    throw ArgumentError("rbf_kernel: dimension mismatch");
  double q = ((a - b).array() / k.lengthscales.array()).square().sum();
  return k.output_scale * std::exp(-0.5 * q);
}

Matrix rbf_gram(const Matrix& A, const Matrix& B, const KernelParams& k) {
  if (A.cols() != B.cols() || A.cols() != k.lengthscales.size())
    throw ArgumentError("rbf_gram: dimension mismatch");
  // Scale inputs once, then use the |a-b|^2 = |a|^2 + |b|^2 - 2 a.b expansion.
  Matrix As = A.array().rowwise() / k.lengthscales.transpose().array();
  Matrix Bs = B.array().rowwise() / k.lengthscales.transpose().array();
  Vector an = As.rowwise().squaredNorm();
  Vector bn = Bs.rowwise().squaredNorm();
  Matrix Q = -2.0 * As * Bs.transpose();
  Q.colwise() += an;
  Q.rowwise() += bn.transpose();
  return k.output_scale * (-0.5 * Q.array().max(0.0)).exp();
}

Matrix robust_cholesky(const Matrix& S, double scale, double rel_floor,
                       double rel_ceiling) {
  if (S.rows() != S.cols()) throw ArgumentError("robust_cholesky: square matrix required");
  if (S.rows() == 0) return Matrix(0, 0);
  if (!S.allFinite()) throw NumericalError("robust_cholesky: non-finite entries");
  double base = std::max(scale, 0.0);
  // Jitter only on demand: the unperturbed matrix is tried first so that
  // well-conditioned systems are solved exactly.
  for (double rel = 0.0; rel <= rel_ceiling * (1.0 + 1e-12);
       rel = (rel == 0.0 ? rel_floor : rel * 10.0)) {
    Matrix J = S;
    J.diagonal().array() += rel * base;
    Eigen::LLT<Matrix> llt(J);
    if (llt.info() == Eigen::Success) {
      Matrix L = llt.matrixL();
      if (L.allFinite()) return L;
    }
  }
  throw NumericalError("robust_cholesky: factorization failed at maximum jitter");
}

PosteriorGP PosteriorGP::fit(Matrix X, Vector y, GPHyperparams hp) {
  if (X.rows() != y.size()) throw ArgumentError("PosteriorGP::fit: row count mismatch");
  if (hp.kernel.lengthscales.size() != X.cols())
    throw ArgumentError("PosteriorGP::fit: lengthscale dimension mismatch");
  PosteriorGP gp;
  gp.X_ = std::move(X);
  gp.y_ = std::move(y);
  gp.hp_ = std::move(hp);
  if (gp.y_.size() > 0) {
    Matrix K = rbf_gram(gp.X_, gp.X_, gp.hp_.kernel);
    K.diagonal().array() += gp.hp_.noise_variance;
    gp.chol_ = robust_cholesky(K, gp.hp_.kernel.output_scale);
    Vector r = gp.y_.array() - gp.hp_.mean_constant;
    gp.alpha_ = gp.chol_.triangularView<Eigen::Lower>().solve(r);
    gp.chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(gp.alpha_);
  }
  return gp;
}

PosteriorGP PosteriorGP::conditioned(const Matrix& X_new, const Vector& y_new) const {
  if (X_new.rows() != y_new.size())
    throw ArgumentError("PosteriorGP::conditioned: row count mismatch");
  if (empty()) {
    GPHyperparams hp = hp_;
    if (hp.kernel.lengthscales.size() == 0)
      throw ArgumentError("PosteriorGP::conditioned: model has no hyperparameters");
    return fit(X_new, y_new, hp);
  }
  if (X_new.cols() != X_.cols())
    throw ArgumentError("PosteriorGP::conditioned: dimension mismatch");

  long n = X_.rows(), k = X_new.rows();
  PosteriorGP gp;
  gp.hp_ = hp_;
  gp.X_.resize(n + k, X_.cols());
  gp.X_ << X_, X_new;
  gp.y_.resize(n + k);
  gp.y_ << y_, y_new;

  // Extend L L^T = K by the new block: O(n^2 k) instead of a full refactorization.
  Matrix K_on = rbf_gram(X_, X_new, hp_.kernel);                    // n x k
  Matrix Bt = chol_.triangularView<Eigen::Lower>().solve(K_on);     // n x k
  Matrix K_nn = rbf_gram(X_new, X_new, hp_.kernel);
  K_nn.diagonal().array() += hp_.noise_variance;
  Matrix C = robust_cholesky(K_nn - Bt.transpose() * Bt, hp_.kernel.output_scale);

  gp.chol_ = Matrix::Zero(n + k, n + k);
  gp.chol_.topLeftCorner(n, n) = chol_;
  gp.chol_.bottomLeftCorner(k, n) = Bt.transpose();
  gp.chol_.bottomRightCorner(k, k) = C;

  Vector r = gp.y_.array() - hp_.mean_constant;
  gp.alpha_ = gp.chol_.triangularView<Eigen::Lower>().solve(r);
  gp.chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(gp.alpha_);
  return gp;
}

std::pair<double, double> PosteriorGP::predict(const Vector& x) const {
  if (empty()) return {hp_.mean_constant, hp_.kernel.output_scale};
  Vector k(X_.rows());
  for (long i = 0; i < X_.rows(); ++i) k[i] = rbf_kernel(X_.row(i), x, hp_.kernel);
  double mean = hp_.mean_constant + k.dot(alpha_);
  Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
  double var = hp_.kernel.output_scale - v.squaredNorm();
  return {mean, std::max(var, 0.0)};
}

void PosteriorGP::predict_batch(const Matrix& Xq, Vector& mean, Vector& var) const {
  if (empty()) {
    mean = Vector::Constant(Xq.rows(), hp_.mean_constant);
    var = Vector::Constant(Xq.rows(), hp_.kernel.output_scale);
    return;
  }
  Matrix K = rbf_gram(X_, Xq, hp_.kernel);  // n x q
  mean = (K.transpose() * alpha_).array() + hp_.mean_constant;
  chol_.triangularView<Eigen::Lower>().solveInPlace(K);
  var = (hp_.kernel.output_scale - K.colwise().squaredNorm().transpose().array())
            .max(0.0);
}

Vector PosteriorGP::gradient_mean(const Vector& x) const {
  if (empty()) return Vector::Zero(x.size());
  Vector k(X_.rows());
  for (long i = 0; i < X_.rows(); ++i) k[i] = rbf_kernel(X_.row(i), x, hp_.kernel);
  Vector w = k.cwiseProduct(alpha_);
  Vector g = X_.transpose() * w - x * w.sum();
  return g.array() / hp_.kernel.lengthscales.array().square();
}

void PosteriorGP::joint_posterior(const Matrix& Xq, Vector& mean, Matrix& cov) const {
  Matrix K_qq = rbf_gram(Xq, Xq, hp_.kernel);
  if (empty()) {
    mean = Vector::Constant(Xq.rows(), hp_.mean_constant);
    cov = K_qq;
    return;
  }
  Matrix K = rbf_gram(X_, Xq, hp_.kernel);
  mean = (K.transpose() * alpha_).array() + hp_.mean_constant;
  chol_.triangularView<Eigen::Lower>().solveInPlace(K);
  cov = K_qq - K.transpose() * K;
}

std::pair<double, double> posterior_predict(const PosteriorGP& gp, const Vector& x) {
  return gp.predict(x);
}

Vector posterior_gradient_mean(const PosteriorGP& gp, const Vector& x) {
  return gp.gradient_mean(x);
}

double log_marginal_likelihood(const Matrix& X, const Vector& y, const GPHyperparams& hp) {
  long n = y.size();
  if (n == 0) return 0.0;
  Matrix K = rbf_gram(X, X, hp.kernel);
  K.diagonal().array() += hp.noise_variance;
  Matrix L = robust_cholesky(K, hp.kernel.output_scale);
  Vector r = y.array() - hp.mean_constant;
  Vector u = L.triangularView<Eigen::Lower>().solve(r);
  double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * logdet - 0.5 * u.squaredNorm() - 0.5 * n * std::log(2.0 * M_PI);
}

double log_marginal_likelihood_grad(const Matrix& X, const Vector& y,
                                    const GPHyperparams& hp, Vector& grad) {
  long n = y.size();
  long d = X.cols();
  grad = Vector::Zero(d + 3);
  if (n == 0) return 0.0;

  Matrix K = rbf_gram(X, X, hp.kernel);  // noise-free part
  Matrix Kt = K;
  Kt.diagonal().array() += hp.noise_variance;
  Matrix L = robust_cholesky(Kt, hp.kernel.output_scale);
  Vector r = y.array() - hp.mean_constant;
  Vector alpha = L.triangularView<Eigen::Lower>().solve(r);
  double quad = alpha.squaredNorm();
  double logdet = 2.0 * L.diagonal().array().log().sum();
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  double value = -0.5 * logdet - 0.5 * quad - 0.5 * n * std::log(2.0 * M_PI);

  // P = (K + noise I)^-1 via two triangular solves.
  Matrix P = Matrix::Identity(n, n);
  L.triangularView<Eigen::Lower>().solveInPlace(P);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(P);

  // d ll / d theta = 1/2 tr((alpha alpha^T - P) dK/d theta)
  Matrix H = (alpha * alpha.transpose() - P).cwiseProduct(K);
  Vector row_sums = H.rowwise().sum();
  Matrix HX = H * X;  // one GEMM covers every lengthscale direction
  for (long j = 0; j < d; ++j) {
    // 1/2 sum_ij H_ij (x_ik - x_jk)^2 = row_sums . x^2 - x . (H x) for symmetric H
    double s = row_sums.dot(X.col(j).cwiseProduct(X.col(j))) - X.col(j).dot(HX.col(j));
    grad[j] = s / (hp.kernel.lengthscales[j] * hp.kernel.lengthscales[j]);
  }
  grad[d] = 0.5 * H.sum();  // log output scale
  grad[d + 1] =
      0.5 * hp.noise_variance * (alpha.squaredNorm() - P.trace());  // log noise var
  grad[d + 2] = alpha.sum();                                        // mean constant
  return value;
}

namespace {

struct PenaltyTerm {
  double value;
  double grad;
};

// Quadratic penalty on the distance outside [lo, hi], evaluated at t.
PenaltyTerm box_penalty_term(double t, double lo, double hi, double w) {
  double dist = 0.0;
  if (t < lo)
    dist = t - lo;
  else if (t > hi)
    dist = t - hi;
  return {w * dist * dist, 2.0 * w * dist};
}

Vector pack_log_space(const GPHyperparams& hp) {
  long d = hp.kernel.lengthscales.size();
  Vector t(d + 3);
  t.head(d) = hp.kernel.lengthscales.array().log();
  t[d] = std::log(hp.kernel.output_scale);
  t[d + 1] = std::log(hp.noise_variance);
  t[d + 2] = hp.mean_constant;
  return t;
}

GPHyperparams unpack_log_space(const Vector& t, long d) {
  GPHyperparams hp;
  hp.kernel.lengthscales = t.head(d).array().exp();
  hp.kernel.output_scale = std::exp(t[d]);
  hp.noise_variance = std::exp(t[d + 1]);
  hp.mean_constant = t[d + 2];
  return hp;
}

GPHyperparams project_into_boxes(GPHyperparams hp, const PriorBoxes& boxes) {
  hp.kernel.lengthscales =
      hp.kernel.lengthscales.cwiseMax(boxes.lengthscale.lower).cwiseMin(boxes.lengthscale.upper);
  hp.kernel.output_scale =
      std::clamp(hp.kernel.output_scale, boxes.output_scale.lower, boxes.output_scale.upper);
  hp.noise_variance =
      std::clamp(hp.noise_variance, boxes.noise_variance.lower, boxes.noise_variance.upper);
  hp.mean_constant =
      std::clamp(hp.mean_constant, boxes.mean_constant.lower, boxes.mean_constant.upper);
  return hp;
}

}  // namespace

double box_penalty(double value, const HyperPriorBox& box, bool log_space) {
  double t = log_space ? std::log(value) : value;
  double lo = log_space ? std::log(box.lower) : box.lower;
  double hi = log_space ? std::log(box.upper) : box.upper;
  double dist = t < lo ? lo - t : (t > hi ? t - hi : 0.0);
  return dist * dist;
}

GPHyperparams fit_hyperparameters_masked(const Matrix& X, const Vector& y,
                                         const GPHyperparams& init,
                                         const PriorBoxes& boxes, const TrainConfig& cfg,
                                         const std::vector<bool>& train_mask) {
  long d = X.cols();
  if (!train_mask.empty() && static_cast<long>(train_mask.size()) != d + 3)
    throw ArgumentError("fit_hyperparameters: mask size mismatch");

  auto objective = [&](const Vector& t, Vector& grad) {
    GPHyperparams hp = unpack_log_space(t, d);
    double value = log_marginal_likelihood_grad(X, y, hp, grad);
    double w = cfg.penalty_weight;
    double llo = std::log(boxes.lengthscale.lower), lhi = std::log(boxes.lengthscale.upper);
    for (long j = 0; j < d; ++j) {
      PenaltyTerm p = box_penalty_term(t[j], llo, lhi, w);
      value -= p.value;
      grad[j] -= p.grad;
    }
    PenaltyTerm po = box_penalty_term(t[d], std::log(boxes.output_scale.lower),
                                      std::log(boxes.output_scale.upper), w);
    PenaltyTerm pn = box_penalty_term(t[d + 1], std::log(boxes.noise_variance.lower),
                                      std::log(boxes.noise_variance.upper), w);
    PenaltyTerm pm =
        box_penalty_term(t[d + 2], boxes.mean_constant.lower, boxes.mean_constant.upper, w);
    value -= po.value + pn.value + pm.value;
    grad[d] -= po.grad;
    grad[d + 1] -= pn.grad;
    grad[d + 2] -= pm.grad;
    if (!train_mask.empty()) {
      for (long j = 0; j < d + 3; ++j)
        if (!train_mask[j]) grad[j] = 0.0;
    }
    return value;
  };

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  adam.epochs = cfg.epochs;
  AdamResult res = adam_maximize(pack_log_space(init), objective, adam);

  // Project into the boxes; keep the projected init if projection hurt the
  // objective, so the returned value never scores below the starting point.
  GPHyperparams cand = project_into_boxes(unpack_log_space(res.best, d), boxes);
  GPHyperparams start = project_into_boxes(init, boxes);
  Vector unused(d + 3);
  double cand_val = objective(pack_log_space(cand), unused);
  double start_val = objective(pack_log_space(start), unused);
  GPHyperparams out = cand_val >= start_val ? cand : start;
  if (!train_mask.empty()) {
    // Frozen coordinates are returned verbatim, untouched by the log-space
    // round trip or the box projection.
    for (long j = 0; j < d; ++j)
      if (!train_mask[j]) out.kernel.lengthscales[j] = init.kernel.lengthscales[j];
    if (!train_mask[d]) out.kernel.output_scale = init.kernel.output_scale;
    if (!train_mask[d + 1]) out.noise_variance = init.noise_variance;
    if (!train_mask[d + 2]) out.mean_constant = init.mean_constant;
  }
  return out;
}

GPHyperparams fit_hyperparameters(const Matrix& X, const Vector& y,
                                  const GPHyperparams& init, const PriorBoxes& boxes,
                                  const TrainConfig& cfg) {
  return fit_hyperparameters_masked(X, y, init, boxes, cfg, {});
}

}  // namespace mfbo
