#include "mfbo/mf_model.hpp"

#include <atomic>

namespace mfbo {

namespace {
std::atomic<std::uint64_t> g_fit_counter{1};
std::uint64_t next_fit_id() { return g_fit_counter.fetch_add(1); }
}  // namespace

// --- FidelityDataset --------------------------------------------------------

long FidelityDataset::count_at(FidelityIndex m) const {
  long c = 0;
  for (FidelityIndex f : fidelity)
    if (f == m) ++c;
  return c;
}

FidelityDataset FidelityDataset::filter(FidelityIndex m) const {
  FidelityDataset out;
  out.fidelity_count = fidelity_count;
  long c = count_at(m);
  out.X.resize(c, X.cols());
  out.y.resize(c);
  out.fidelity.reserve(c);
  long j = 0;
  for (long i = 0; i < size(); ++i) {
    if (fidelity[i] == m) {
      out.X.row(j) = X.row(i);
      out.y[j] = y[i];
      out.fidelity.push_back(m);
      ++j;
    }
  }
  return out;
}

void FidelityDataset::append(const Vector& x, FidelityIndex m, double value) {
  long n = size();
  if (n == 0 && X.cols() == 0) X.resize(0, x.size());
  if (x.size() != X.cols()) throw ArgumentError("FidelityDataset::append: dim mismatch");
  X.conservativeResize(n + 1, Eigen::NoChange);
  X.row(n) = x.transpose();
  y.conservativeResize(n + 1);
  y[n] = value;
  fidelity.push_back(m);
}

void FidelityDataset::append(const FidelityDataset& other) {
  for (long i = 0; i < other.size(); ++i)
    append(other.X.row(i), other.fidelity[i], other.y[i]);
}

void FidelityDataset::validate() const {
  if (X.rows() != y.size() || X.rows() != static_cast<long>(fidelity.size()))
    throw ArgumentError("FidelityDataset: inconsistent row counts");
  if (fidelity_count < 1) throw ArgumentError("FidelityDataset: fidelity_count < 1");
  for (FidelityIndex f : fidelity)
    if (f < 1 || f > fidelity_count)
      throw ArgumentError("FidelityDataset: fidelity index out of range");
}

// --- LMC kernel -------------------------------------------------------------

int LMCParams::task_count() const {
  return task_factors.empty() ? 0 : static_cast<int>(task_factors[0].rows());
}

Matrix LMCParams::task_matrix(int w) const {
  const Matrix& A = task_factors[w];
  Matrix B = A * A.transpose();
  B.diagonal() += task_diagonal[w];
  return B;
}

double lmc_kernel(const Vector& a, FidelityIndex ma, const Vector& b, FidelityIndex mb,
                  const LMCParams& p) {
  if (p.latent.empty()) throw ArgumentError("lmc_kernel: no latent kernels");
  double s = 0.0;
  for (int w = 0; w < p.latent_count(); ++w) {
    Matrix B = p.task_matrix(w);
    s += B(ma - 1, mb - 1) * rbf_kernel(a, b, p.latent[w]);
  }
  return s;
}

Matrix lmc_gram(const Matrix& A, const std::vector<FidelityIndex>& fa, const Matrix& B,
                const std::vector<FidelityIndex>& fb, const LMCParams& p) {
  Matrix out = Matrix::Zero(A.rows(), B.rows());
  for (int w = 0; w < p.latent_count(); ++w) {
    Matrix Kw = rbf_gram(A, B, p.latent[w]);
    Matrix Bw = p.task_matrix(w);
    for (long i = 0; i < out.rows(); ++i)
      for (long j = 0; j < out.cols(); ++j)
        out(i, j) += Bw(fa[i] - 1, fb[j] - 1) * Kw(i, j);
  }
  return out;
}

namespace {

double lmc_jitter_scale(const MultiTaskHyperparams& hp) {
  // Mean total prior variance across tasks.
  int M = hp.lmc.task_count();
  double s = 0.0;
  for (int w = 0; w < hp.lmc.latent_count(); ++w) s += hp.lmc.task_matrix(w).trace();
  return std::max(s / std::max(M, 1), 1e-12);
}

}  // namespace

// --- MultiFidelitySurrogate -------------------------------------------------

MultiFidelitySurrogate MultiFidelitySurrogate::from_independent(
    std::vector<PosteriorGP> gps) {
  if (gps.empty()) throw ArgumentError("from_independent: empty bank");
  MultiFidelitySurrogate s;
  s.kind_ = SurrogateKind::IndependentGPs;
  s.gps_ = std::move(gps);
  s.fit_id_ = next_fit_id();
  return s;
}

MultiFidelitySurrogate MultiFidelitySurrogate::from_lmc(FidelityDataset data,
                                                        MultiTaskHyperparams hp) {
  data.validate();
  if (hp.noise_variance.size() != data.fidelity_count)
    throw ArgumentError("from_lmc: noise vector size mismatch");
  auto st = std::make_shared<LmcState>();
  Matrix K = lmc_gram(data.X, data.fidelity, data.X, data.fidelity, hp.lmc);
  for (long i = 0; i < data.size(); ++i)
    K(i, i) += hp.noise_variance[data.fidelity[i] - 1];
  st->chol = robust_cholesky(K, lmc_jitter_scale(hp));
  Vector r = (data.y.array() - hp.mean_constant).matrix();
  st->alpha = st->chol.triangularView<Eigen::Lower>().solve(r);
  st->chol.triangularView<Eigen::Lower>().transpose().solveInPlace(st->alpha);
  st->data = std::move(data);
  st->hp = std::move(hp);

  MultiFidelitySurrogate s;
  s.kind_ = SurrogateKind::MultiTaskLMC;
  s.lmc_ = std::move(st);
  s.fit_id_ = next_fit_id();
  return s;
}

int MultiFidelitySurrogate::fidelity_count() const {
  if (kind_ == SurrogateKind::IndependentGPs) return static_cast<int>(gps_.size());
  return lmc_ ? lmc_->data.fidelity_count : 0;
}

long MultiFidelitySurrogate::observation_count() const {
  if (kind_ == SurrogateKind::IndependentGPs) {
    long n = 0;
    for (const auto& gp : gps_) n += gp.size();
    return n;
  }
  return lmc_ ? lmc_->data.size() : 0;
}

const GPHyperparams& MultiFidelitySurrogate::independent_hyperparams(
    FidelityIndex m) const {
  if (kind_ != SurrogateKind::IndependentGPs)
    throw ArgumentError("independent_hyperparams: wrong surrogate kind");
  return gps_.at(m - 1).hyperparams();
}

const MultiTaskHyperparams& MultiFidelitySurrogate::lmc_hyperparams() const {
  if (kind_ != SurrogateKind::MultiTaskLMC || !lmc_)
    throw ArgumentError("lmc_hyperparams: wrong surrogate kind");
  return lmc_->hp;
}

const Matrix& MultiFidelitySurrogate::lmc_chol() const {
  if (kind_ != SurrogateKind::MultiTaskLMC || !lmc_)
    throw ArgumentError("lmc_chol: wrong surrogate kind");
  return lmc_->chol;
}

const FidelityDataset& MultiFidelitySurrogate::lmc_data() const {
  if (kind_ != SurrogateKind::MultiTaskLMC || !lmc_)
    throw ArgumentError("lmc_data: wrong surrogate kind");
  return lmc_->data;
}

Vector MultiFidelitySurrogate::lmc_centered_targets() const {
  return lmc_data().y.array() - lmc_->hp.mean_constant;
}

const PosteriorGP& MultiFidelitySurrogate::independent_gp(FidelityIndex m) const {
  if (kind_ != SurrogateKind::IndependentGPs)
    throw ArgumentError("independent_gp: wrong surrogate kind");
  return gps_.at(m - 1);
}

std::pair<double, double> MultiFidelitySurrogate::predict(const Vector& x,
                                                          FidelityIndex m) const {
  if (m < 1 || m > fidelity_count()) throw ArgumentError("predict: bad fidelity");
  if (kind_ == SurrogateKind::IndependentGPs) return gps_[m - 1].predict(x);

  const LmcState& st = *lmc_;
  long n = st.data.size();
  Vector k(n);
  for (long i = 0; i < n; ++i)
    k[i] = lmc_kernel(x, m, st.data.X.row(i), st.data.fidelity[i], st.hp.lmc);
  double prior = lmc_kernel(x, m, x, m, st.hp.lmc);
  if (n == 0) return {st.hp.mean_constant, prior};
  double mean = st.hp.mean_constant + k.dot(st.alpha);
  Vector v = st.chol.triangularView<Eigen::Lower>().solve(k);
  return {mean, std::max(prior - v.squaredNorm(), 0.0)};
}

PairPosterior MultiFidelitySurrogate::pair_posterior(const Vector& x, FidelityIndex a,
                                                     FidelityIndex b) const {
  PairPosterior out{};
  if (kind_ == SurrogateKind::IndependentGPs) {
    auto [ma, va] = gps_[a - 1].predict(x);
    out.mean_a = ma;
    out.var_a = va;
    if (a == b) {
      out.mean_b = ma;
      out.var_b = va;
      out.cov = va;
    } else {
      auto [mb, vb] = gps_[b - 1].predict(x);
      out.mean_b = mb;
      out.var_b = vb;
      out.cov = 0.0;  // independent across fidelities by construction
    }
    return out;
  }
  Matrix X2(2, x.size());
  X2.row(0) = x.transpose();
  X2.row(1) = x.transpose();
  Vector mean;
  Matrix cov;
  joint_posterior(X2, {a, b}, mean, cov);
  out.mean_a = mean[0];
  out.var_a = std::max(cov(0, 0), 0.0);
  out.mean_b = mean[1];
  out.var_b = std::max(cov(1, 1), 0.0);
  out.cov = cov(0, 1);
  return out;
}

double MultiFidelitySurrogate::noise_variance(FidelityIndex m) const {
  if (kind_ == SurrogateKind::IndependentGPs)
    return gps_.at(m - 1).hyperparams().noise_variance;
  return lmc_->hp.noise_variance[m - 1];
}

void MultiFidelitySurrogate::predict_batch(const Matrix& X, FidelityIndex m,
                                           Vector& mean, Vector& var) const {
  if (kind_ == SurrogateKind::IndependentGPs) {
    gps_.at(m - 1).predict_batch(X, mean, var);
    return;
  }
  const LmcState& st = *lmc_;
  long n = st.data.size();
  std::vector<FidelityIndex> fq(X.rows(), m);
  double prior = lmc_kernel(X.row(0), m, X.row(0), m, st.hp.lmc);
  if (n == 0) {
    mean = Vector::Constant(X.rows(), st.hp.mean_constant);
    var = Vector::Constant(X.rows(), prior);
    return;
  }
  Matrix K = lmc_gram(st.data.X, st.data.fidelity, X, fq, st.hp.lmc);  // n x q
  mean = ((K.transpose() * st.alpha).array() + st.hp.mean_constant).matrix();
  st.chol.triangularView<Eigen::Lower>().solveInPlace(K);
  var = (prior - K.colwise().squaredNorm().transpose().array()).max(0.0).matrix();
}

void MultiFidelitySurrogate::joint_posterior(const Matrix& Xq,
                                             const std::vector<FidelityIndex>& fids,
                                             Vector& mean, Matrix& cov) const {
  if (Xq.rows() != static_cast<long>(fids.size()))
    throw ArgumentError("joint_posterior: fidelity tags mismatch");
  if (kind_ == SurrogateKind::MultiTaskLMC) {
    const LmcState& st = *lmc_;
    Matrix Kqq = lmc_gram(Xq, fids, Xq, fids, st.hp.lmc);
    if (st.data.size() == 0) {
      mean = Vector::Constant(Xq.rows(), st.hp.mean_constant);
      cov = Kqq;
      return;
    }
    Matrix K = lmc_gram(st.data.X, st.data.fidelity, Xq, fids, st.hp.lmc);
    mean = (K.transpose() * st.alpha).array() + st.hp.mean_constant;
    st.chol.triangularView<Eigen::Lower>().solveInPlace(K);
    cov = Kqq - K.transpose() * K;
    return;
  }
  // Independent variant: per-fidelity blocks, zero covariance across them.
  long q = Xq.rows();
  mean.resize(q);
  cov = Matrix::Zero(q, q);
  for (int m = 1; m <= fidelity_count(); ++m) {
    std::vector<long> idx;
    for (long i = 0; i < q; ++i)
      if (fids[i] == m) idx.push_back(i);
    if (idx.empty()) continue;
    Matrix sub(idx.size(), Xq.cols());
    for (size_t i = 0; i < idx.size(); ++i) sub.row(i) = Xq.row(idx[i]);
    Vector sm;
    Matrix sc;
    gps_[m - 1].joint_posterior(sub, sm, sc);
    for (size_t i = 0; i < idx.size(); ++i) {
      mean[idx[i]] = sm[i];
      for (size_t j = 0; j < idx.size(); ++j) cov(idx[i], idx[j]) = sc(i, j);
    }
  }
}

Vector MultiFidelitySurrogate::gradient_mean(const Vector& x, FidelityIndex m) const {
  if (kind_ == SurrogateKind::IndependentGPs) return gps_.at(m - 1).gradient_mean(x);
  const LmcState& st = *lmc_;
  long n = st.data.size();
  Vector g = Vector::Zero(x.size());
  if (n == 0) return g;
  for (int w = 0; w < st.hp.lmc.latent_count(); ++w) {
    const KernelParams& kp = st.hp.lmc.latent[w];
    Matrix Bw = st.hp.lmc.task_matrix(w);
    Vector weight(n);
    for (long i = 0; i < n; ++i)
      weight[i] = st.alpha[i] * Bw(m - 1, st.data.fidelity[i] - 1) *
                  rbf_kernel(x, st.data.X.row(i), kp);
    Vector part = st.data.X.transpose() * weight - x * weight.sum();
    g += (part.array() / kp.lengthscales.array().square()).matrix();
  }
  return g;
}

MultiFidelitySurrogate MultiFidelitySurrogate::conditioned(
    const FidelityDataset& extra) const {
  if (extra.size() == 0) return *this;
  MultiFidelitySurrogate out;
  out.kind_ = kind_;
  out.fit_id_ = fit_id_;
  if (kind_ == SurrogateKind::IndependentGPs) {
    out.gps_ = gps_;
    for (int m = 1; m <= fidelity_count(); ++m) {
      FidelityDataset sub = extra.filter(m);
      if (sub.size() > 0) out.gps_[m - 1] = gps_[m - 1].conditioned(sub.X, sub.y);
    }
    return out;
  }

  const LmcState& st = *lmc_;
  if (extra.dim() != st.data.dim() && st.data.size() > 0)
    throw ArgumentError("conditioned: dimension mismatch");
  long n = st.data.size(), k = extra.size();
  auto nst = std::make_shared<LmcState>();
  nst->hp = st.hp;
  nst->data = st.data;
  nst->data.append(extra);

  Matrix K_on = lmc_gram(st.data.X, st.data.fidelity, extra.X, extra.fidelity, st.hp.lmc);
  Matrix Bt = st.chol.triangularView<Eigen::Lower>().solve(K_on);  // n x k
  Matrix K_nn = lmc_gram(extra.X, extra.fidelity, extra.X, extra.fidelity, st.hp.lmc);
  for (long i = 0; i < k; ++i) K_nn(i, i) += st.hp.noise_variance[extra.fidelity[i] - 1];
  Matrix C = robust_cholesky(K_nn - Bt.transpose() * Bt, lmc_jitter_scale(st.hp));

  nst->chol = Matrix::Zero(n + k, n + k);
  nst->chol.topLeftCorner(n, n) = st.chol;
  nst->chol.bottomLeftCorner(k, n) = Bt.transpose();
  nst->chol.bottomRightCorner(k, k) = C;
  Vector r = (nst->data.y.array() - st.hp.mean_constant).matrix();
  nst->alpha = nst->chol.triangularView<Eigen::Lower>().solve(r);
  nst->chol.triangularView<Eigen::Lower>().transpose().solveInPlace(nst->alpha);
  out.lmc_ = std::move(nst);
  return out;
}

// --- Fantasies ---------------------------------------------------------------

FantasyBank MultiFidelitySurrogate::make_fantasies(
    const Matrix& Xq, const std::vector<FidelityIndex>& fq, int count,
    std::uint64_t seed) const {
  if (count < 1) throw ArgumentError("make_fantasies: count must be >= 1");
  FantasyBank bank;
  if (Xq.rows() == 0) {
    // Nothing pending: every "fantasy" is the base posterior itself.
    bank.extended_ = *this;
    if (kind_ == SurrogateKind::MultiTaskLMC) {
      bank.alphas_ = lmc_->alpha;
    } else {
      bank.alphas_.resize(0, 1);
    }
    return bank;
  }

  Vector mean;
  Matrix cov;
  joint_posterior(Xq, fq, mean, cov);
  double scale = std::max(cov.diagonal().maxCoeff(), 1e-12);
  Matrix L = robust_cholesky(cov, scale);
  Rng rng(seed);
  Matrix values(Xq.rows(), count);
  for (int s = 0; s < count; ++s)
    values.col(s) = mean + L * normal_vector(rng, static_cast<int>(Xq.rows()));
  bank.fantasy_values_mean_ = values.rowwise().mean();

  FidelityDataset extra;
  extra.fidelity_count = fidelity_count();
  extra.X = Xq;
  extra.fidelity = fq;
  extra.y = values.col(0);
  bank.extended_ = conditioned(extra);

  if (kind_ == SurrogateKind::MultiTaskLMC) {
    const LmcState& ext = *bank.extended_.lmc_;
    long n_ext = ext.data.size();
    Matrix R(n_ext, count);
    for (int s = 0; s < count; ++s) {
      R.col(s).head(n_ext - Xq.rows()) =
          (lmc_->data.y.array() - ext.hp.mean_constant).matrix();
      R.col(s).tail(Xq.rows()) = (values.col(s).array() - ext.hp.mean_constant).matrix();
    }
    ext.chol.triangularView<Eigen::Lower>().solveInPlace(R);
    ext.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(R);
    bank.alphas_ = std::move(R);
  } else {
    // Per-fidelity alphas: only fidelities with pending rows vary across
    // fantasies, but a uniform layout keeps lookups trivial.
    bank.alphas_by_fid_.resize(fidelity_count());
    for (int m = 1; m <= fidelity_count(); ++m) {
      const PosteriorGP& gp = bank.extended_.gps_[m - 1];
      if (gp.empty()) continue;
      std::vector<long> rows;  // indices into Xq at this fidelity
      for (long i = 0; i < Xq.rows(); ++i)
        if (fq[i] == m) rows.push_back(i);
      long n_base = gp.size() - static_cast<long>(rows.size());
      Matrix R(gp.size(), count);
      for (int s = 0; s < count; ++s) {
        R.col(s).head(n_base) = (gp.train_targets().head(n_base).array() -
                                  gp.hyperparams().mean_constant)
                                     .matrix();
        for (size_t j = 0; j < rows.size(); ++j)
          R(n_base + j, s) = values(rows[j], s) - gp.hyperparams().mean_constant;
      }
      gp.chol().triangularView<Eigen::Lower>().solveInPlace(R);
      gp.chol().triangularView<Eigen::Lower>().transpose().solveInPlace(R);
      bank.alphas_by_fid_[m - 1] = std::move(R);
    }
  }
  return bank;
}

int FantasyBank::count() const {
  if (extended_.kind() == SurrogateKind::MultiTaskLMC)
    return static_cast<int>(std::max<long>(alphas_.cols(), 1));
  return static_cast<int>(count_independent());
}

int FantasyBank::fidelity_count() const { return extended_.fidelity_count(); }

double FantasyBank::noise_variance(FidelityIndex m) const {
  return extended_.noise_variance(m);
}

void FantasyBank::predict_all(const Vector& x, FidelityIndex m, Vector& means,
                              double& var) const {
  if (extended_.kind() == SurrogateKind::MultiTaskLMC) {
    const auto& st = *extended_.lmc_;
    long n = st.data.size();
    if (n == 0 || alphas_.rows() == 0) {
      auto [mu, v] = extended_.predict(x, m);
      means = Vector::Constant(std::max<long>(count(), 1), mu);
      var = v;
      return;
    }
    Vector k(n);
    for (long i = 0; i < n; ++i)
      k[i] = lmc_kernel(x, m, st.data.X.row(i), st.data.fidelity[i], st.hp.lmc);
    means = ((alphas_.transpose() * k).array() + st.hp.mean_constant).matrix();
    Vector v = st.chol.triangularView<Eigen::Lower>().solve(k);
    var = std::max(lmc_kernel(x, m, x, m, st.hp.lmc) - v.squaredNorm(), 0.0);
    return;
  }
  const PosteriorGP& gp = extended_.gps_.at(m - 1);
  if (gp.empty() || alphas_by_fid_.empty() || alphas_by_fid_[m - 1].size() == 0) {
    auto [mu, v] = gp.predict(x);
    means = Vector::Constant(std::max<long>(count_independent(), 1), mu);
    var = v;
    return;
  }
  const Matrix& A = alphas_by_fid_[m - 1];
  Vector k(gp.size());
  for (long i = 0; i < gp.size(); ++i)
    k[i] = rbf_kernel(gp.train_inputs().row(i), x, gp.hyperparams().kernel);
  means = ((A.transpose() * k).array() + gp.hyperparams().mean_constant).matrix();
  Vector v = gp.chol().triangularView<Eigen::Lower>().solve(k);
  var = std::max(gp.hyperparams().kernel.output_scale - v.squaredNorm(), 0.0);
}

void FantasyBank::pair_all(const Vector& x, FidelityIndex a, FidelityIndex b,
                           Matrix& means, double& var_a, double& var_b,
                           double& cov) const {
  if (extended_.kind() == SurrogateKind::MultiTaskLMC && alphas_.rows() > 0) {
    const auto& st = *extended_.lmc_;
    long n = st.data.size();
    Matrix K(n, 2);
    for (long i = 0; i < n; ++i) {
      K(i, 0) = lmc_kernel(x, a, st.data.X.row(i), st.data.fidelity[i], st.hp.lmc);
      K(i, 1) = lmc_kernel(x, b, st.data.X.row(i), st.data.fidelity[i], st.hp.lmc);
    }
    means.resize(alphas_.cols(), 2);
    means = ((alphas_.transpose() * K).array() + st.hp.mean_constant).matrix();
    Matrix V = st.chol.triangularView<Eigen::Lower>().solve(K);
    var_a = std::max(lmc_kernel(x, a, x, a, st.hp.lmc) - V.col(0).squaredNorm(), 0.0);
    var_b = std::max(lmc_kernel(x, b, x, b, st.hp.lmc) - V.col(1).squaredNorm(), 0.0);
    cov = lmc_kernel(x, a, x, b, st.hp.lmc) - V.col(0).dot(V.col(1));
    return;
  }
  // Independent variant (or empty bank): assemble from per-fidelity queries.
  Vector mean_a_all, mean_b_all;
  predict_all(x, a, mean_a_all, var_a);
  if (a == b) {
    means.resize(mean_a_all.size(), 2);
    means.col(0) = mean_a_all;
    means.col(1) = mean_a_all;
    var_b = var_a;
    cov = var_a;
    return;
  }
  predict_all(x, b, mean_b_all, var_b);
  long s = std::max(mean_a_all.size(), mean_b_all.size());
  means.resize(s, 2);
  for (long i = 0; i < s; ++i) {
    means(i, 0) = mean_a_all[mean_a_all.size() == 1 ? 0 : i];
    means(i, 1) = mean_b_all[mean_b_all.size() == 1 ? 0 : i];
  }
  cov = extended_.kind() == SurrogateKind::MultiTaskLMC
            ? extended_.pair_posterior(x, a, b).cov
            : 0.0;
}

long FantasyBank::count_independent() const {
  for (const Matrix& A : alphas_by_fid_)
    if (A.size() > 0) return A.cols();
  return 1;
}

void FantasyBank::joint_all(const Matrix& grid, FidelityIndex m, Matrix& means,
                            Matrix& cov) const {
  if (extended_.kind() != SurrogateKind::MultiTaskLMC)
    throw ArgumentError("joint_all: stacked surrogate required");
  const auto& st = *extended_.lmc_;
  long n = st.data.size();
  std::vector<FidelityIndex> gm(grid.rows(), m);
  Matrix Kqq = lmc_gram(grid, gm, grid, gm, st.hp.lmc);
  if (n == 0 || alphas_.rows() == 0) {
    means = Matrix::Constant(grid.rows(), 1, st.hp.mean_constant);
    cov = Kqq;
    return;
  }
  Matrix K = lmc_gram(st.data.X, st.data.fidelity, grid, gm, st.hp.lmc);  // n x G
  means = ((K.transpose() * alphas_).array() + st.hp.mean_constant).matrix();
  st.chol.triangularView<Eigen::Lower>().solveInPlace(K);
  cov = Kqq - K.transpose() * K;
}

std::pair<double, double> FantasyBank::View::predict(const Vector& x,
                                                     FidelityIndex m) const {
  Vector means;
  double var;
  bank_->predict_all(x, m, means, var);
  return {means[std::min<long>(s_, means.size() - 1)], var};
}

PairPosterior FantasyBank::View::pair_posterior(const Vector& x, FidelityIndex a,
                                                FidelityIndex b) const {
  Matrix means;
  PairPosterior out{};
  bank_->pair_all(x, a, b, means, out.var_a, out.var_b, out.cov);
  long row = std::min<long>(s_, means.rows() - 1);
  out.mean_a = means(row, 0);
  out.mean_b = means(row, 1);
  return out;
}

// --- LMC marginal likelihood and training ------------------------------------

Vector pack_lmc_params(const MultiTaskHyperparams& hp, int dim) {
  int W = hp.lmc.latent_count();
  int M = hp.lmc.task_count();
  int r = W > 0 ? static_cast<int>(hp.lmc.task_factors[0].cols()) : 0;
  Vector t(W * (dim + M * r + M) + M + 1);
  long o = 0;
  for (int w = 0; w < W; ++w, o += dim)
    t.segment(o, dim) = hp.lmc.latent[w].lengthscales.array().log().matrix();
  for (int w = 0; w < W; ++w, o += M * r)
    t.segment(o, M * r) = Eigen::Map<const Vector>(hp.lmc.task_factors[w].data(), M * r);
  for (int w = 0; w < W; ++w, o += M)
    t.segment(o, M) = hp.lmc.task_diagonal[w].array().log().matrix();
  t.segment(o, M) = hp.noise_variance.array().log().matrix();
  o += M;
  t[o] = hp.mean_constant;
  return t;
}

MultiTaskHyperparams unpack_lmc_params(const Vector& t, int dim, int tasks, int latent,
                                       int rank) {
  MultiTaskHyperparams hp;
  hp.lmc.latent.resize(latent);
  hp.lmc.task_factors.resize(latent);
  hp.lmc.task_diagonal.resize(latent);
  long o = 0;
  for (int w = 0; w < latent; ++w, o += dim) {
    hp.lmc.latent[w].output_scale = 1.0;
    hp.lmc.latent[w].lengthscales = t.segment(o, dim).array().exp().matrix();
  }
  for (int w = 0; w < latent; ++w, o += tasks * rank)
    hp.lmc.task_factors[w] =
        Eigen::Map<const Matrix>(t.segment(o, tasks * rank).data(), tasks, rank);
  for (int w = 0; w < latent; ++w, o += tasks)
    hp.lmc.task_diagonal[w] = t.segment(o, tasks).array().exp().matrix();
  hp.noise_variance = t.segment(o, tasks).array().exp().matrix();
  o += tasks;
  hp.mean_constant = t[o];
  return hp;
}

double lmc_log_marginal_likelihood(const FidelityDataset& data,
                                   const MultiTaskHyperparams& hp) {
  long n = data.size();
  if (n == 0) return 0.0;
  Matrix K = lmc_gram(data.X, data.fidelity, data.X, data.fidelity, hp.lmc);
  for (long i = 0; i < n; ++i) K(i, i) += hp.noise_variance[data.fidelity[i] - 1];
  Matrix L = robust_cholesky(K, lmc_jitter_scale(hp));
  Vector r = (data.y.array() - hp.mean_constant).matrix();
  Vector u = L.triangularView<Eigen::Lower>().solve(r);
  return -L.diagonal().array().log().sum() - 0.5 * u.squaredNorm() -
         0.5 * n * std::log(2.0 * M_PI);
}

double lmc_log_marginal_likelihood_grad(const FidelityDataset& data,
                                        const MultiTaskHyperparams& hp, Vector& grad) {
  long n = data.size();
  int d = data.dim();
  int W = hp.lmc.latent_count();
  int M = hp.lmc.task_count();
  int r = static_cast<int>(hp.lmc.task_factors[0].cols());
  grad = Vector::Zero(W * (d + M * r + M) + M + 1);
  if (n == 0) return 0.0;

  // Task indicator (n x M) used to reduce elementwise products to M x M blocks.
  Matrix T = Matrix::Zero(n, M);
  for (long i = 0; i < n; ++i) T(i, data.fidelity[i] - 1) = 1.0;

  std::vector<Matrix> Kw(W), Bsel(W);
  Matrix K = Matrix::Zero(n, n);
  for (int w = 0; w < W; ++w) {
    Kw[w] = rbf_gram(data.X, data.X, hp.lmc.latent[w]);
    Matrix Bw = hp.lmc.task_matrix(w);
    Bsel[w].resize(n, n);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j)
        Bsel[w](i, j) = Bw(data.fidelity[i] - 1, data.fidelity[j] - 1);
    K += Kw[w].cwiseProduct(Bsel[w]);
  }
  for (long i = 0; i < n; ++i) K(i, i) += hp.noise_variance[data.fidelity[i] - 1];

  Matrix L = robust_cholesky(K, lmc_jitter_scale(hp));
  Vector res = (data.y.array() - hp.mean_constant).matrix();
  Vector alpha = L.triangularView<Eigen::Lower>().solve(res);
  double quad = alpha.squaredNorm();
  double logdet = 2.0 * L.diagonal().array().log().sum();
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  double value = -0.5 * logdet - 0.5 * quad - 0.5 * n * std::log(2.0 * M_PI);

  Matrix P = Matrix::Identity(n, n);
  L.triangularView<Eigen::Lower>().solveInPlace(P);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(P);
  Matrix G = 0.5 * (alpha * alpha.transpose() - P);

  long o_len = 0;
  long o_fac = static_cast<long>(W) * d;
  long o_diag = o_fac + static_cast<long>(W) * M * r;
  long o_noise = o_diag + static_cast<long>(W) * M;

  for (int w = 0; w < W; ++w) {
    Matrix E = G.cwiseProduct(Kw[w]);
    Matrix S = T.transpose() * E * T;  // M x M task-block reduction
    Matrix gradA = (S + S.transpose()) * hp.lmc.task_factors[w];
    Eigen::Map<Vector>(grad.segment(o_fac + static_cast<long>(w) * M * r, M * r).data(),
                       M * r) = Eigen::Map<const Vector>(gradA.data(), M * r);
    for (int a = 0; a < M; ++a)
      grad[o_diag + static_cast<long>(w) * M + a] = S(a, a) * hp.lmc.task_diagonal[w][a];

    Matrix H = E.cwiseProduct(Bsel[w]);
    Vector rs = H.rowwise().sum();
    Matrix HX = H * data.X;
    for (int k = 0; k < d; ++k) {
      double s = rs.dot(data.X.col(k).cwiseProduct(data.X.col(k))) -
                 data.X.col(k).dot(HX.col(k));
      double l = hp.lmc.latent[w].lengthscales[k];
      grad[o_len + static_cast<long>(w) * d + k] = 2.0 * s / (l * l);
    }
  }
  for (long i = 0; i < n; ++i)
    grad[o_noise + data.fidelity[i] - 1] += G(i, i) * hp.noise_variance[data.fidelity[i] - 1];
  grad[o_noise + M] = alpha.sum();
  return value;
}

// --- Training ----------------------------------------------------------------

namespace {

struct LmcPenaltyResult {
  double value;
};

// Penalized objective for the joint LMC fit. Boxes: log-space lengthscales and
// noise; per-task *total* prior variance sum_w B_w[aa] in log space; linear
// mean box.
double lmc_penalized_objective(const FidelityDataset& data, const Vector& t, int d,
                               int M, int W, int r, const PriorBoxes& boxes,
                               double weight, Vector& grad) {
  MultiTaskHyperparams hp = unpack_lmc_params(t, d, M, W, r);
  double value = lmc_log_marginal_likelihood_grad(data, hp, grad);

  auto penalize = [&](long idx, double tv, double lo, double hi) {
    double dist = tv < lo ? tv - lo : (tv > hi ? tv - hi : 0.0);
    value -= weight * dist * dist;
    grad[idx] -= 2.0 * weight * dist;
  };

  long o = 0;
  double llo = std::log(boxes.lengthscale.lower), lhi = std::log(boxes.lengthscale.upper);
  for (int w = 0; w < W; ++w)
    for (int k = 0; k < d; ++k, ++o) penalize(o, t[o], llo, lhi);

  // Total prior variance per task.
  long o_fac = static_cast<long>(W) * d;
  long o_diag = o_fac + static_cast<long>(W) * M * r;
  double slo = std::log(boxes.output_scale.lower), shi = std::log(boxes.output_scale.upper);
  for (int a = 0; a < M; ++a) {
    double total = 0.0;
    for (int w = 0; w < W; ++w) {
      total += hp.lmc.task_factors[w].row(a).squaredNorm() + hp.lmc.task_diagonal[w][a];
    }
    double lt = std::log(std::max(total, 1e-300));
    double dist = lt < slo ? lt - slo : (lt > shi ? lt - shi : 0.0);
    if (dist != 0.0) {
      value -= weight * dist * dist;
      double c = 2.0 * weight * dist / total;  // d dist^2/d total * weight
      for (int w = 0; w < W; ++w) {
        for (int j = 0; j < r; ++j)
          grad[o_fac + (static_cast<long>(w) * M * r) + j * M + a] -=
              c * 2.0 * hp.lmc.task_factors[w](a, j);
        grad[o_diag + static_cast<long>(w) * M + a] -= c * hp.lmc.task_diagonal[w][a];
      }
    }
  }

  long o_noise = o_diag + static_cast<long>(W) * M;
  double nlo = std::log(boxes.noise_variance.lower), nhi = std::log(boxes.noise_variance.upper);
  for (int a = 0; a < M; ++a) penalize(o_noise + a, t[o_noise + a], nlo, nhi);
  penalize(o_noise + M, t[o_noise + M], boxes.mean_constant.lower,
           boxes.mean_constant.upper);
  return value;
}

MultiTaskHyperparams project_lmc(MultiTaskHyperparams hp, const PriorBoxes& boxes) {
  for (auto& kp : hp.lmc.latent)
    kp.lengthscales = kp.lengthscales.cwiseMax(boxes.lengthscale.lower)
                          .cwiseMin(boxes.lengthscale.upper);
  hp.noise_variance = hp.noise_variance.cwiseMax(boxes.noise_variance.lower)
                          .cwiseMin(boxes.noise_variance.upper);
  hp.mean_constant =
      std::clamp(hp.mean_constant, boxes.mean_constant.lower, boxes.mean_constant.upper);
  return hp;
}

MultiTaskHyperparams initial_lmc_hyperparams(const FidelityDataset& data,
                                             const SurrogateTrainConfig& cfg) {
  int M = data.fidelity_count;
  int W = 2 * M;
  int r = M;
  int d = data.dim();
  MultiTaskHyperparams hp;
  hp.lmc.latent.resize(W);
  hp.lmc.task_factors.resize(W);
  hp.lmc.task_diagonal.resize(W);
  double base = 0.5 / std::sqrt(static_cast<double>(W) * r);
  for (int w = 0; w < W; ++w) {
    hp.lmc.latent[w].output_scale = 1.0;
    hp.lmc.latent[w].lengthscales = Vector::Constant(d, 0.2);
    Rng rng(derive_seed(cfg.seed, seed_tag::train, static_cast<std::uint64_t>(w)));
    hp.lmc.task_factors[w].resize(M, r);
    for (int a = 0; a < M; ++a)
      for (int j = 0; j < r; ++j) {
        std::normal_distribution<double> nd(0.0, 1.0);
        hp.lmc.task_factors[w](a, j) = base * (1.0 + 0.25 * nd(rng));
      }
    hp.lmc.task_diagonal[w] = Vector::Constant(M, 0.5 / W);
  }
  hp.noise_variance = Vector::Constant(M, 1e-2);
  double mean = data.size() > 0 ? data.y.mean() : 0.0;
  hp.mean_constant =
      std::clamp(mean, cfg.boxes.mean_constant.lower, cfg.boxes.mean_constant.upper);
  return hp;
}

MultiFidelitySurrogate fit_lmc(const FidelityDataset& data,
                               const SurrogateTrainConfig& cfg,
                               const MultiTaskHyperparams* warm) {
  int M = data.fidelity_count;
  int d = data.dim();
  MultiTaskHyperparams init;
  if (warm && warm->lmc.task_count() == M && !warm->lmc.latent.empty() &&
      warm->lmc.latent[0].lengthscales.size() == d) {
    init = *warm;
  } else {
    init = initial_lmc_hyperparams(data, cfg);
  }
  int W = init.lmc.latent_count();
  int r = static_cast<int>(init.lmc.task_factors[0].cols());

  auto objective = [&](const Vector& t, Vector& grad) {
    return lmc_penalized_objective(data, t, d, M, W, r, cfg.boxes,
                                   cfg.train.penalty_weight, grad);
  };
  AdamConfig adam;
  adam.learning_rate = cfg.train.learning_rate;
  adam.epochs = cfg.train.epochs;
  AdamResult res = adam_maximize(pack_lmc_params(init, d), objective, adam);

  MultiTaskHyperparams cand = project_lmc(unpack_lmc_params(res.best, d, M, W, r), cfg.boxes);
  MultiTaskHyperparams start = project_lmc(init, cfg.boxes);
  Vector unused(res.best.size());
  double cv = lmc_penalized_objective(data, pack_lmc_params(cand, d), d, M, W, r,
                                      cfg.boxes, cfg.train.penalty_weight, unused);
  double sv = lmc_penalized_objective(data, pack_lmc_params(start, d), d, M, W, r,
                                      cfg.boxes, cfg.train.penalty_weight, unused);
  return MultiFidelitySurrogate::from_lmc(data, cv >= sv ? cand : start);
}

MultiFidelitySurrogate fit_independent(const FidelityDataset& data,
                                       const SurrogateTrainConfig& cfg,
                                       const GPHyperparams* warm) {
  if (data.count_at(1) == 0)
    throw ArgumentError("fit_surrogate: independent variant needs fidelity-1 data");
  int M = data.fidelity_count;
  int d = data.dim();

  FidelityDataset base = data.filter(1);
  GPHyperparams init;
  if (warm && warm->kernel.lengthscales.size() == d) {
    init = *warm;
  } else {
    init.kernel.lengthscales = Vector::Constant(d, 0.2);
    double var = base.size() > 1
                     ? (base.y.array() - base.y.mean()).square().sum() / (base.size() - 1)
                     : 1.0;
    init.kernel.output_scale =
        std::clamp(var, cfg.boxes.output_scale.lower, cfg.boxes.output_scale.upper);
    init.noise_variance = 1e-2;
    init.mean_constant = std::clamp(base.y.mean(), cfg.boxes.mean_constant.lower,
                                    cfg.boxes.mean_constant.upper);
  }
  GPHyperparams hp1 = fit_hyperparameters(base.X, base.y, init, cfg.boxes, cfg.train);

  std::vector<PosteriorGP> gps;
  gps.reserve(M);
  gps.push_back(PosteriorGP::fit(base.X, base.y, hp1));
  // Lengthscales and mean constant inherited and frozen; scale and noise free.
  std::vector<bool> mask(d + 3, false);
  mask[d] = true;
  mask[d + 1] = true;
  for (int m = 2; m <= M; ++m) {
    FidelityDataset sub = data.filter(m);
    GPHyperparams hpm = hp1;
    if (sub.size() > 0)
      hpm = fit_hyperparameters_masked(sub.X, sub.y, hp1, cfg.boxes, cfg.train, mask);
    gps.push_back(PosteriorGP::fit(sub.X, sub.y, hpm));
  }
  return MultiFidelitySurrogate::from_independent(std::move(gps));
}

}  // namespace

MultiFidelitySurrogate fit_surrogate(const FidelityDataset& data, SurrogateKind kind,
                                     const SurrogateTrainConfig& cfg,
                                     const MultiTaskHyperparams* warm_start,
                                     const GPHyperparams* warm_start_independent) {
  data.validate();
  if (data.size() == 0) throw ArgumentError("fit_surrogate: empty dataset");
  if (kind == SurrogateKind::MultiTaskLMC) return fit_lmc(data, cfg, warm_start);
  return fit_independent(data, cfg, warm_start_independent);
}

std::pair<double, double> predict(const MultiFidelitySurrogate& s, const Vector& x,
                                  FidelityIndex m) {
  return s.predict(x, m);
}

Vector sample_on_grid(const MultiFidelitySurrogate& s, const Matrix& grid,
                      FidelityIndex m, std::uint64_t seed, int cap) {
  return sample_many_on_grid(s, grid, m, 1, seed, cap).col(0);
}

Matrix sample_many_on_grid(const MultiFidelitySurrogate& s, const Matrix& grid,
                           FidelityIndex m, int count, std::uint64_t seed, int cap) {
  if (grid.rows() > cap) throw ArgumentError("sample_on_grid: grid exceeds cap");
  if (grid.rows() == 0) throw ArgumentError("sample_on_grid: empty grid");
  if (count < 1) throw ArgumentError("sample_on_grid: count must be >= 1");
  Vector mean;
  Matrix cov;
  std::vector<FidelityIndex> fids(grid.rows(), m);
  s.joint_posterior(grid, fids, mean, cov);
  double scale = std::max(cov.diagonal().maxCoeff(), 1e-12);
  Matrix L = robust_cholesky(cov, scale);
  Rng rng(seed);
  Matrix out(grid.rows(), count);
  for (int k = 0; k < count; ++k)
    out.col(k) = mean + L * normal_vector(rng, static_cast<int>(grid.rows()));
  return out;
}

// --- GridPosteriorCache -------------------------------------------------------

void GridPosteriorCache::update(const MultiFidelitySurrogate& s, const Matrix& grid,
                                FidelityIndex m) {
  if (s.kind() != SurrogateKind::MultiTaskLMC) {
    // Cheap per-fidelity models: recompute directly.
    s.predict_batch(grid, m, means_, vars_);
    rows_seen_ = s.observation_count();
    fit_id_ = s.fit_id();
    return;
  }
  const FidelityDataset& data = s.lmc_data();
  const Matrix& L = s.lmc_chol();
  long n = data.size();
  std::vector<FidelityIndex> gm(grid.rows(), m);

  bool extendable = valid() && fit_id_ == s.fit_id() && n >= rows_seen_ &&
                    V_.cols() == grid.rows();
  if (!extendable) {
    Matrix K = lmc_gram(data.X, data.fidelity, grid, gm, s.lmc_hyperparams().lmc);
    V_ = L.triangularView<Eigen::Lower>().solve(K);
    prior_diag_ = Vector::Constant(
        grid.rows(), lmc_kernel(grid.row(0), m, grid.row(0), m, s.lmc_hyperparams().lmc));
  } else if (n > rows_seen_) {
    long k = n - rows_seen_;
    Matrix Xn = data.X.bottomRows(k);
    std::vector<FidelityIndex> fn(data.fidelity.end() - k, data.fidelity.end());
    Matrix Kn = lmc_gram(Xn, fn, grid, gm, s.lmc_hyperparams().lmc);  // k x G
    // New factorization rows: C^-1 (K_new,grid - B V_old).
    Matrix rhs = Kn - L.block(rows_seen_, 0, k, rows_seen_) * V_;
    L.block(rows_seen_, rows_seen_, k, k)
        .triangularView<Eigen::Lower>()
        .solveInPlace(rhs);
    V_.conservativeResize(n, Eigen::NoChange);
    V_.bottomRows(k) = rhs;
  }
  rows_seen_ = n;
  fit_id_ = s.fit_id();

  Vector u = L.triangularView<Eigen::Lower>().solve(s.lmc_centered_targets());
  means_ = ((V_.transpose() * u).array() + s.lmc_hyperparams().mean_constant).matrix();
  vars_ = (prior_diag_.array() - V_.colwise().squaredNorm().transpose().array())
              .max(0.0)
              .matrix();
}

}  // namespace mfbo
