#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "surjcycle/cvae/cvae.hpp"
#include "surjcycle/tiles/data.hpp"
#include "surjcycle/tiles/mlp.hpp"

namespace surjcycle::tiles {

struct TilesConfig {
  Index n_train = 2000;
  Index n_eval = 500;
  int epochs = 200;
  Index batch = 64;
  Index hidden = 50;
  Index z_dim = 1;
  double lr = 1e-3;
  /// Weight of the paired cross-entropy on h+(x); it fixes the digit labels
  /// that the cycle losses alone only determine up to permutation.
  double supervised_weight = 1.0;
  std::uint64_t seed = 0;
};

struct TilesTraceRow {
  int epoch = 0;
  /// x -> y_hat -> x_hat binary cross-entropy on the eval set, z at the
  /// posterior mean; summed over pixels, averaged over rows.
  double recon_x = 0.0;
  /// Epoch means of the training terms.
  double loss_y = 0.0;
  double kl = 0.0;
};

struct TilesTrace {
  std::vector<TilesTraceRow> rows;
  /// `# surjcycle-v1` then epoch,recon_x,loss_y,kl
  void write_csv(std::ostream& out) const;
};

class TilesTrainingError : public std::runtime_error {
 public:
  TilesTrainingError(const std::string& what, TilesTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const TilesTrace& trace() const { return trace_; }

 private:
  TilesTrace trace_;
};

/// h+ (image -> digit logits), the decoder and, for CycleCVAE, the encoder.
/// The base decoder reads y only; the CycleCVAE decoder reads [y, z].
struct TilesModels {
  Mlp forward;
  Mlp decoder;
  Mlp encoder;  // empty for the base model
  Index z_dim = 0;

  bool has_latent() const { return z_dim > 0; }
  /// Sigmoid image means for rows of y and z (z ignored without a latent).
  DenseMatrix generate(const DenseMatrix& y, const DenseMatrix& z) const;
  /// Argmax digit per row of x.
  std::vector<int> classify(const DenseMatrix& x) const;
  /// Posterior mean of z per row of x (zeros without a latent).
  DenseMatrix posterior_mean(const DenseMatrix& x) const;
  /// n draws for a single digit, z ~ N(0, I).
  std::vector<DenseVector> sample(int digit, Index n, Rng& rng) const;
};

/// Fresh models for the config's seed; h+ and the decoder's hidden layers use
/// the same streams with and without the latent.
TilesModels init_models(const TilesConfig& config, bool latent);

/// Pointers to every parameter, in leaf order forward, decoder, encoder.
std::vector<DenseMatrix*> parameter_handles(TilesModels& models);

struct TilesObjective {
  Var total;
  Var loss_y;
  Var kl;
};

/// One-batch training objective: cycle losses with a single z draw plus
/// supervised_weight times the paired cross-entropy of h+. `leaves` binds the
/// parameters in parameter_handles order.
TilesObjective tiles_objective(const TilesModels& models, std::span<const Var> leaves, const DenseMatrix& batch_x,
                               const DenseMatrix& batch_y, double supervised_weight, Rng& noise);

struct TilesRun {
  TilesModels models;
  TilesTrace trace;
};

/// The train and eval sets for a seed; both models of a seed see the same.
struct TilesData {
  std::vector<TileSample> train;
  std::vector<TileSample> eval;
};
TilesData make_tiles_data(const TilesConfig& config);

/// Deterministic decoder, cycle losses plus the paired cross-entropy.
TilesRun train_base(const TilesData& data, const TilesConfig& config);
/// Adds the encoder and a z_dim latent; x-cycle is the ELBO.
TilesRun train_cyclecvae(const TilesData& data, const TilesConfig& config);

/// Eval-set reconstruction error as recorded in the trace.
double recon_error(const TilesModels& models, const std::vector<TileSample>& eval);

/// Number of distinct border classes (no border counts as one class) among
/// n_draws generations for `digit`.
int eval_diversity(const TilesModels& models, int digit, Index n_draws, Rng& rng);

}  // namespace surjcycle::tiles
