#pragma once

#include "mfbo/gp.hpp"

#include <memory>
#include <optional>
#include <variant>

namespace mfbo {

// Observations tagged with the fidelity they were measured at.
struct FidelityDataset {
  Matrix X;  // n x d
  std::vector<FidelityIndex> fidelity;
  Vector y;
  int fidelity_count = 0;

  long size() const { return y.size(); }
  int dim() const { return static_cast<int>(X.cols()); }
  long count_at(FidelityIndex m) const;
  FidelityDataset filter(FidelityIndex m) const;
  void append(const Vector& x, FidelityIndex m, double value);
  void append(const FidelityDataset& other);
  void validate() const;  // throws ArgumentError on malformed data
};

// Linear model of coregionalization: K((x,a),(z,b)) = sum_w k_w(x,z) * (B_w)_{ab}
// with B_w = A_w A_w^T + diag(v_w) (positive semi-definite by construction).
// Latent kernels carry unit output scale; all output scale lives in the B_w.
struct LMCParams {
  std::vector<KernelParams> latent;   // W kernels
  std::vector<Matrix> task_factors;   // A_w, M x r
  std::vector<Vector> task_diagonal;  // v_w >= 0, per task

  int latent_count() const { return static_cast<int>(latent.size()); }
  int task_count() const;
  Matrix task_matrix(int w) const;  // B_w
};

double lmc_kernel(const Vector& a, FidelityIndex ma, const Vector& b, FidelityIndex mb,
                  const LMCParams& p);
Matrix lmc_gram(const Matrix& A, const std::vector<FidelityIndex>& fa, const Matrix& B,
                const std::vector<FidelityIndex>& fb, const LMCParams& p);

struct MultiTaskHyperparams {
  LMCParams lmc;
  Vector noise_variance;  // per fidelity
  double mean_constant = 0.0;
};

struct PairPosterior {
  double mean_a, var_a;
  double mean_b, var_b;
  double cov;
};

// Read-only posterior interface shared by fitted surrogates and fantasy views.
struct PosteriorQuery {
  virtual ~PosteriorQuery() = default;
  virtual int fidelity_count() const = 0;
  // Latent posterior mean/variance of f^(m)(x).
  virtual std::pair<double, double> predict(const Vector& x, FidelityIndex m) const = 0;
  // Joint latent posterior of (f^(a)(x), f^(b)(x)) at the same input.
  virtual PairPosterior pair_posterior(const Vector& x, FidelityIndex a,
                                       FidelityIndex b) const = 0;
  virtual double noise_variance(FidelityIndex m) const = 0;
};

enum class SurrogateKind { IndependentGPs, MultiTaskLMC };

struct SurrogateTrainConfig {
  TrainConfig train;
  PriorBoxes boxes;
  std::uint64_t seed = 0;  // deterministic task-factor initialization
};

class FantasyBank;

// Fitted multi-fidelity surrogate. Immutable; conditioning returns a new value.
class MultiFidelitySurrogate final : public PosteriorQuery {
 public:
  MultiFidelitySurrogate() = default;

  SurrogateKind kind() const { return kind_; }
  int fidelity_count() const override;
  std::pair<double, double> predict(const Vector& x, FidelityIndex m) const override;
  PairPosterior pair_posterior(const Vector& x, FidelityIndex a,
                               FidelityIndex b) const override;
  double noise_variance(FidelityIndex m) const override;

  void predict_batch(const Matrix& X, FidelityIndex m, Vector& mean, Vector& var) const;
  // Joint latent posterior over tagged points (zero cross-fidelity covariance
  // for the independent variant).
  void joint_posterior(const Matrix& X, const std::vector<FidelityIndex>& fids,
                       Vector& mean, Matrix& cov) const;
  Vector gradient_mean(const Vector& x, FidelityIndex m) const;

  // Conditions on additional observations with fixed hyperparameters.
  MultiFidelitySurrogate conditioned(const FidelityDataset& extra) const;

  // Joint posterior draws at the pending block; one column per fantasy.
  FantasyBank make_fantasies(const Matrix& Xq, const std::vector<FidelityIndex>& fq,
                             int count, std::uint64_t seed) const;

  long observation_count() const;
  // Identifies the hyperparameter fit this posterior descends from; preserved
  // by conditioned(), so caches can extend rather than rebuild.
  std::uint64_t fit_id() const { return fit_id_; }

  const GPHyperparams& independent_hyperparams(FidelityIndex m) const;
  const MultiTaskHyperparams& lmc_hyperparams() const;

  // Internals used by incremental caches.
  const Matrix& lmc_chol() const;
  const FidelityDataset& lmc_data() const;
  Vector lmc_centered_targets() const;
  const PosteriorGP& independent_gp(FidelityIndex m) const;

  static MultiFidelitySurrogate from_independent(std::vector<PosteriorGP> gps);
  static MultiFidelitySurrogate from_lmc(FidelityDataset data, MultiTaskHyperparams hp);

 private:
  friend class FantasyBank;
  struct LmcState {
    FidelityDataset data;
    MultiTaskHyperparams hp;
    Matrix chol;
    Vector alpha;
  };
  SurrogateKind kind_ = SurrogateKind::IndependentGPs;
  std::vector<PosteriorGP> gps_;
  std::shared_ptr<const LmcState> lmc_;
  std::uint64_t fit_id_ = 0;
};

// Trains a surrogate. IndependentGPs: fidelity 1 is fully trained; higher
// fidelities inherit frozen lengthscales and mean constant and train output
// scale and noise only (requires at least one fidelity-1 observation).
// MultiTaskLMC: all parameters trained jointly on the stacked data; pass
// `warm_start` to continue from previous hyperparameters.
MultiFidelitySurrogate fit_surrogate(const FidelityDataset& data, SurrogateKind kind,
                                     const SurrogateTrainConfig& cfg,
                                     const MultiTaskHyperparams* warm_start = nullptr,
                                     const GPHyperparams* warm_start_independent = nullptr);

std::pair<double, double> predict(const MultiFidelitySurrogate& s, const Vector& x,
                                  FidelityIndex m);

// One exact joint posterior draw at the grid points (mean + Cholesky of the
// posterior covariance times a standard normal vector). Grid rows are capped.
Vector sample_on_grid(const MultiFidelitySurrogate& s, const Matrix& grid,
                      FidelityIndex m, std::uint64_t seed, int cap = 7500);

// Several joint draws sharing one factorization; one column per draw.
Matrix sample_many_on_grid(const MultiFidelitySurrogate& s, const Matrix& grid,
                           FidelityIndex m, int count, std::uint64_t seed,
                           int cap = 7500);

// Stacked-data marginal likelihood of the LMC model; gradient layout matches
// pack_lmc_params (exposed for the finite-difference tests).
double lmc_log_marginal_likelihood(const FidelityDataset& data,
                                   const MultiTaskHyperparams& hp);
double lmc_log_marginal_likelihood_grad(const FidelityDataset& data,
                                        const MultiTaskHyperparams& hp, Vector& grad);
Vector pack_lmc_params(const MultiTaskHyperparams& hp, int dim);
MultiTaskHyperparams unpack_lmc_params(const Vector& t, int dim, int tasks, int latent,
                                       int rank);

// Fantasy bank: the pending block is appended to the factorization once; each
// fantasy swaps only the target vector, so posterior covariance is shared
// across fantasies and only means differ.
class FantasyBank {
 public:
  int count() const;
  int fidelity_count() const;
  double noise_variance(FidelityIndex m) const;
  const Vector& pending_value_means() const { return fantasy_values_mean_; }

  // Means under every fantasy plus the shared variance at (x, m).
  void predict_all(const Vector& x, FidelityIndex m, Vector& means, double& var) const;
  // Same for the pair ((x,a),(x,b)): means is count x 2.
  void pair_all(const Vector& x, FidelityIndex a, FidelityIndex b, Matrix& means,
                double& var_a, double& var_b, double& cov) const;

  // Joint latent posterior over grid rows at fidelity m under every fantasy:
  // per-fantasy mean columns, one shared covariance (stacked variant only).
  void joint_all(const Matrix& grid, FidelityIndex m, Matrix& means, Matrix& cov) const;

  // PosteriorQuery facade over fantasy s (generic, unbatched path).
  class View final : public PosteriorQuery {
   public:
    View(const FantasyBank* bank, int s) : bank_(bank), s_(s) {}
    int fidelity_count() const override { return bank_->fidelity_count(); }
    std::pair<double, double> predict(const Vector& x, FidelityIndex m) const override;
    PairPosterior pair_posterior(const Vector& x, FidelityIndex a,
                                 FidelityIndex b) const override;
    double noise_variance(FidelityIndex m) const override {
      return bank_->noise_variance(m);
    }

   private:
    const FantasyBank* bank_;
    int s_;
  };
  View view(int s) const { return View(this, s); }

 private:
  friend class MultiFidelitySurrogate;
  long count_independent() const;
  // Extended system shared by all fantasies.
  MultiFidelitySurrogate extended_;     // holds data+chol; alpha unused
  Matrix alphas_;                       // LMC: n_ext x S, one column per fantasy
  std::vector<Matrix> alphas_by_fid_;   // independent variant: per-fidelity n_m x S
  Vector fantasy_values_mean_;          // mean drawn value per pending row
};

// Incrementally maintained posterior over a fixed evaluation grid. Rebuilds
// from scratch when the surrogate was re-trained; extends the factorization
// rows when the surrogate was only conditioned on new observations.
class GridPosteriorCache {
 public:
  void update(const MultiFidelitySurrogate& s, const Matrix& grid, FidelityIndex m);
  const Vector& means() const { return means_; }
  const Vector& vars() const { return vars_; }
  bool valid() const { return rows_seen_ >= 0; }

 private:
  std::uint64_t fit_id_ = 0;
  long rows_seen_ = -1;
  Matrix V_;  // L^-1 K(train, grid)
  Vector prior_diag_;
  Vector means_, vars_;
};

}  // namespace mfbo
