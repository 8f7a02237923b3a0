#include <doctest.h>

#include <random>

#include "mfbo/gp.hpp"
#include "oracles.hpp"

using namespace mfbo;

namespace {

struct RandomDataset {
  Matrix X;
  Vector y;
  GPHyperparams hp;
};

RandomDataset random_dataset(std::mt19937& rng, int max_dim = 3, int max_n = 8) {
  std::uniform_int_distribution<int> dim_pick(1, max_dim), n_pick(2, max_n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int d = dim_pick(rng), n = n_pick(rng);
  RandomDataset ds;
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.X(i, j) = u(rng);
    ds.y[i] = 2.0 * u(rng) - 1.0;
  }
  ds.hp.kernel.lengthscales = Vector::Zero(d);
  for (int j = 0; j < d; ++j) ds.hp.kernel.lengthscales[j] = 0.1 + 0.5 * u(rng);
  ds.hp.kernel.output_scale = 0.3 + u(rng);
  ds.hp.noise_variance = 0.005 + 0.05 * u(rng);
  ds.hp.mean_constant = 0.5 - u(rng);
  return ds;
}

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("rbf kernel and gram match the defining formula") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    auto ds = random_dataset(rng);
    Matrix K = rbf_gram(ds.X, ds.X, ds.hp.kernel);
    Matrix K_ref = oracle::rbf_gram(ds.X, ds.X, ds.hp.kernel.lengthscales,
                                    ds.hp.kernel.output_scale);
    CHECK((K - K_ref).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("posterior matches direct joint-Gaussian conditioning on 20 random datasets") {
  // Reference: condition the joint Gaussian over (train, test) by a dense LU
  // inverse; the model must agree to 1e-8 absolutely in mean and variance.
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    auto ds = random_dataset(rng);
    int d = ds.X.cols();
    Matrix Xs(5, d);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < d; ++j) Xs(i, j) = u(rng);

    PosteriorGP gp = PosteriorGP::fit(ds.X, ds.y, ds.hp);

    Matrix K_yy = oracle::rbf_gram(ds.X, ds.X, ds.hp.kernel.lengthscales,
                                   ds.hp.kernel.output_scale);
    Matrix K_sy = oracle::rbf_gram(Xs, ds.X, ds.hp.kernel.lengthscales,
                                   ds.hp.kernel.output_scale);
    Matrix K_ss = oracle::rbf_gram(Xs, Xs, ds.hp.kernel.lengthscales,
                                   ds.hp.kernel.output_scale);
    auto ref = oracle::condition(K_yy, K_sy, K_ss, ds.y, ds.hp.mean_constant,
                                 ds.hp.noise_variance);

    for (int i = 0; i < 5; ++i) {
      auto [mean, var] = gp.predict(Xs.row(i));
      CHECK(std::abs(mean - ref.mean[i]) < 1e-8);
      CHECK(std::abs(var - ref.cov(i, i)) < 1e-8);
    }

    Vector jm;
    Matrix jc;
    gp.joint_posterior(Xs, jm, jc);
    CHECK((jm - ref.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((jc - ref.cov).cwiseAbs().maxCoeff() < 1e-8);

    Vector bm, bv;
    gp.predict_batch(Xs, bm, bv);
    CHECK((bm - ref.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((bv - ref.cov.diagonal()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("conditioning on extra points equals refitting on the union") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto ds = random_dataset(rng, 2, 6);
  int d = ds.X.cols();
  Matrix X2(3, d);
  Vector y2(3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < d; ++j) X2(i, j) = u(rng);
    y2[i] = 2.0 * u(rng) - 1.0;
  }
  Matrix X_all(ds.X.rows() + 3, d);
  X_all << ds.X, X2;
  Vector y_all(ds.y.size() + 3);
  y_all << ds.y, y2;

  PosteriorGP inc = PosteriorGP::fit(ds.X, ds.y, ds.hp).conditioned(X2, y2);
  PosteriorGP full = PosteriorGP::fit(X_all, y_all, ds.hp);
  for (int rep = 0; rep < 10; ++rep) {
    Vector x(d);
    for (int j = 0; j < d; ++j) x[j] = u(rng);
    auto [m1, v1] = inc.predict(x);
    auto [m2, v2] = full.predict(x);
    CHECK(m1 == doctest::Approx(m2).epsilon(1e-9));
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-9));
  }
}

TEST_CASE("log marginal likelihood equals the dense Gaussian log density") {
  std::mt19937 rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    auto ds = random_dataset(rng);
    Matrix cov = oracle::rbf_gram(ds.X, ds.X, ds.hp.kernel.lengthscales,
                                  ds.hp.kernel.output_scale);
    for (long i = 0; i < cov.rows(); ++i) cov(i, i) += ds.hp.noise_variance;
    Vector mean = Vector::Constant(ds.y.size(), ds.hp.mean_constant);
    double ref = oracle::mvn_logpdf(ds.y, mean, cov);
    CHECK(log_marginal_likelihood(ds.X, ds.y, ds.hp) == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("likelihood gradient matches central finite differences on 10 random configs") {
  // Gradient layout: [log lengthscales, log output scale, log noise, mean].
  std::mt19937 rng(307);
  for (int rep = 0; rep < 10; ++rep) {
    auto ds = random_dataset(rng);
    int d = ds.X.cols();
    Vector t(d + 3);
    for (int j = 0; j < d; ++j) t[j] = std::log(ds.hp.kernel.lengthscales[j]);
    t[d] = std::log(ds.hp.kernel.output_scale);
    t[d + 1] = std::log(ds.hp.noise_variance);
    t[d + 2] = ds.hp.mean_constant;

    auto value_at = [&](const Vector& v) {
      GPHyperparams hp = ds.hp;
      for (int j = 0; j < d; ++j) hp.kernel.lengthscales[j] = std::exp(v[j]);
      hp.kernel.output_scale = std::exp(v[d]);
      hp.noise_variance = std::exp(v[d + 1]);
      hp.mean_constant = v[d + 2];
      return log_marginal_likelihood(ds.X, ds.y, hp);
    };

    Vector grad;
    double value = log_marginal_likelihood_grad(ds.X, ds.y, ds.hp, grad);
    CHECK(value == doctest::Approx(value_at(t)).epsilon(1e-12));
    Vector fd = oracle::fd_gradient(value_at, t, 1e-5);
    for (long i = 0; i < grad.size(); ++i) {
      double denom = std::max(std::abs(fd[i]), 1e-6);
      CHECK(std::abs(grad[i] - fd[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("robust cholesky escalates jitter on rank-deficient input and rejects junk") {
  // Rank-one PSD matrix: plain Cholesky fails, jittered factorization succeeds.
  Vector v(4);
  v << 1.0, 2.0, -1.0, 0.5;
  Matrix S = v * v.transpose();
  Matrix L = robust_cholesky(S, S.diagonal().maxCoeff());
  Matrix back = L * L.transpose();
  CHECK((back - S).cwiseAbs().maxCoeff() < 1e-3);

  Matrix bad = Matrix::Constant(3, 3, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(robust_cholesky(bad, 1.0), NumericalError);

  // Strongly indefinite input cannot be rescued within the jitter ceiling.
  Matrix neg = -Matrix::Identity(3, 3);
  CHECK_THROWS_AS(robust_cholesky(neg, 1.0), NumericalError);
}

TEST_CASE("fitting improves the likelihood and respects the prior boxes") {
  std::mt19937 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 24, d = 2;
  Matrix X(n, d);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) X(i, j) = u(rng);
    y[i] = std::sin(6.0 * X(i, 0)) * 0.4 + 0.2 * X(i, 1);
  }
  GPHyperparams init;
  init.kernel.lengthscales = Vector::Constant(d, 0.2);
  init.kernel.output_scale = 1.0;
  init.noise_variance = 0.01;
  init.mean_constant = 0.0;
  PriorBoxes boxes;
  TrainConfig tc;
  GPHyperparams fit = fit_hyperparameters(X, y, init, boxes, tc);

  CHECK(log_marginal_likelihood(X, y, fit) >= log_marginal_likelihood(X, y, init) - 1e-9);
  for (int j = 0; j < d; ++j) {
    CHECK(fit.kernel.lengthscales[j] >= boxes.lengthscale.lower - 1e-12);
    CHECK(fit.kernel.lengthscales[j] <= boxes.lengthscale.upper + 1e-12);
  }
  CHECK(fit.kernel.output_scale >= boxes.output_scale.lower - 1e-12);
  CHECK(fit.kernel.output_scale <= boxes.output_scale.upper + 1e-12);
  CHECK(fit.noise_variance >= boxes.noise_variance.lower - 1e-12);
  CHECK(fit.noise_variance <= boxes.noise_variance.upper + 1e-12);
  CHECK(fit.mean_constant >= boxes.mean_constant.lower - 1e-12);
  CHECK(fit.mean_constant <= boxes.mean_constant.upper + 1e-12);
}

TEST_CASE("masked fitting freezes the masked entries exactly") {
  std::mt19937 rng(56);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 16, d = 2;
  Matrix X(n, d);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) X(i, j) = u(rng);
    y[i] = 0.5 * std::cos(4.0 * X(i, 0));
  }
  GPHyperparams init;
  init.kernel.lengthscales = Vector::Constant(d, 0.3);
  init.kernel.output_scale = 0.8;
  init.noise_variance = 0.02;
  init.mean_constant = 0.1;
  PriorBoxes boxes;
  TrainConfig tc;
  // Freeze lengthscales and mean; train output scale and noise.
  std::vector<bool> mask = {false, false, true, true, false};
  GPHyperparams fit = fit_hyperparameters_masked(X, y, init, boxes, tc, mask);
  CHECK(fit.kernel.lengthscales == init.kernel.lengthscales);
  CHECK(fit.mean_constant == init.mean_constant);
  CHECK(log_marginal_likelihood(X, y, fit) >= log_marginal_likelihood(X, y, init) - 1e-9);
}

TEST_CASE("posterior mean gradient matches finite differences") {
  std::mt19937 rng(77);
  auto ds = random_dataset(rng, 3, 8);
  PosteriorGP gp = PosteriorGP::fit(ds.X, ds.y, ds.hp);
  int d = ds.X.cols();
  std::uniform_real_distribution<double> u(0.2, 0.8);
  for (int rep = 0; rep < 5; ++rep) {
    Vector x(d);
    for (int j = 0; j < d; ++j) x[j] = u(rng);
    Vector g = gp.gradient_mean(x);
    Vector fd = oracle::fd_gradient(
        [&](const Vector& z) { return gp.predict(z).first; }, x, 1e-6);
    CHECK((g - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

}  // TEST_SUITE
