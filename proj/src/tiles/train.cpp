#include "surjcycle/tiles/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>

#include "surjcycle/numerics/optim.hpp"

namespace surjcycle::tiles {

void TilesTrace::write_csv(std::ostream& out) const {
  out << "# surjcycle-v1\n";
  out << "epoch,recon_x,loss_y,kl\n";
  out << std::setprecision(17);
  for (const TilesTraceRow& r : rows) out << r.epoch << ',' << r.recon_x << ',' << r.loss_y << ',' << r.kl << '\n';
}

namespace {

// Stream ids; base and CVAE draw h+ and batches from the same ones.
enum Stream : std::uint64_t { kData = 1, kForward = 2, kDecoder = 3, kEncoder = 4, kBatches = 5, kNoise = 6 };

Var decode(const TilesModels& m, Var y, Var z, std::span<const Var> bound) {
  return m.has_latent() ? m.decoder.apply(ad::hcat(y, z), bound) : m.decoder.apply(y, bound);
}

cvae::Posterior encode(const TilesModels& m, Var x, std::span<const Var> bound) {
  Tape& t = *x.tape();
  if (!m.has_latent()) {
    return {t.constant(DenseMatrix::Zero(x.rows(), 1)), t.constant(DenseMatrix::Zero(1, 1))};
  }
  Var out = m.encoder.apply(x, bound);
  return {ad::cols(out, 0, m.z_dim), ad::cols(out, m.z_dim, m.z_dim)};
}

DenseMatrix rows_of(const DenseMatrix& m, const std::vector<Index>& idx, std::size_t from, std::size_t to) {
  DenseMatrix out(static_cast<Index>(to - from), m.cols());
  for (std::size_t i = from; i < to; ++i) out.row(static_cast<Index>(i - from)) = m.row(idx[i]);
  return out;
}

TilesRun train(const TilesData& data, const TilesConfig& config, bool latent) {
  if (data.train.empty() || data.eval.empty()) throw ContractError("tiles training: empty dataset");
  if (config.epochs < 1 || config.batch < 1 || !(config.lr > 0.0)) {
    throw ContractError("tiles training: epochs, batch and lr must be positive");
  }
  const Rng root(config.seed);
  TilesRun run;
  run.models = init_models(config, latent);
  const TilesModels& m = run.models;

  const DenseMatrix x = stack_x(data.train);
  const DenseMatrix y = stack_y(data.train);
  const std::size_t n = data.train.size();
  const std::vector<DenseMatrix*> handles = parameter_handles(run.models);

  Adam adam(AdamConfig{.lr = config.lr});
  Rng batches = root.split(kBatches);
  Rng noise = root.split(kNoise);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});

  auto fail = [&](const std::string& what, int epoch) {
    throw TilesTrainingError("tiles training: " + what + " in epoch " + std::to_string(epoch), run.trace);
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batches.engine());
    double sum_y = 0.0, sum_kl = 0.0;
    int steps = 0;
    for (std::size_t from = 0; from < n; from += static_cast<std::size_t>(config.batch)) {
      const std::size_t to = std::min(n, from + static_cast<std::size_t>(config.batch));
      Tape t;
      std::vector<Var> leaves;
      for (DenseMatrix* p : handles) leaves.push_back(t.variable(*p));
      TilesObjective obj;
      try {
        obj = tiles_objective(m, leaves, rows_of(x, order, from, to), rows_of(y, order, from, to),
                              config.supervised_weight, noise);
      } catch (const NumericalError& e) {
        fail(e.what(), epoch);
      }
      if (!std::isfinite(obj.total.scalar())) fail("non-finite loss", epoch);
      sum_y += obj.loss_y.scalar();
      sum_kl += obj.kl.scalar();
      t.backward(obj.total);
      std::vector<DenseMatrix> grads;
      for (const Var& v : leaves) grads.push_back(v.grad());
      try {
        adam.step(handles, grads);
      } catch (const NumericalError& e) {
        fail(e.what(), epoch);
      }
      ++steps;
    }
    run.trace.rows.push_back({epoch, recon_error(m, data.eval), sum_y / steps, sum_kl / steps});
  }
  return run;
}

}  // namespace

TilesModels init_models(const TilesConfig& config, bool latent) {
  if (config.hidden < 1) throw ContractError("init_models: hidden must be positive");
  if (latent && config.z_dim < 1) throw ContractError("init_models: z_dim must be positive");
  const Rng root(config.seed);
  const Index h = config.hidden;
  TilesModels m;
  m.z_dim = latent ? config.z_dim : 0;
  Rng r_fwd = root.split(kForward), r_dec = root.split(kDecoder), r_enc = root.split(kEncoder);
  m.forward = Mlp({kPixels, h, h, kDigits}, r_fwd);
  m.decoder = Mlp({kDigits + m.z_dim, h, h, kPixels}, r_dec);
  if (latent) m.encoder = Mlp({kPixels, h, h, 2 * m.z_dim}, r_enc);
  return m;
}

std::vector<DenseMatrix*> parameter_handles(TilesModels& models) {
  std::vector<DenseMatrix*> out;
  for (DenseMatrix& p : models.forward.params()) out.push_back(&p);
  for (DenseMatrix& p : models.decoder.params()) out.push_back(&p);
  for (DenseMatrix& p : models.encoder.params()) out.push_back(&p);
  return out;
}

TilesObjective tiles_objective(const TilesModels& m, std::span<const Var> leaves, const DenseMatrix& bx,
                               const DenseMatrix& by, double supervised_weight, Rng& noise) {
  const std::size_t nf = m.forward.params().size(), nd = m.decoder.params().size();
  if (leaves.size() != nf + nd + m.encoder.params().size()) throw ShapeError("tiles_objective: wrong leaf count");
  Tape& t = *leaves.front().tape();
  const auto lf = leaves.subspan(0, nf), ld = leaves.subspan(nf, nd), le = leaves.subspan(nf + nd);

  cvae::FunctionForward fwd([&](Var v) { return m.forward.apply(v, lf); });
  cvae::FunctionInverse inv([&](Var yv, Var z) { return decode(m, yv, z, ld); }, std::max<Index>(m.z_dim, 1));
  cvae::FunctionEncoder enc([&](Var v) { return encode(m, v, le); });
  cvae::CycleModel model;
  model.forward = &fwd;
  model.inverse = &inv;
  model.encoder = &enc;

  cvae::CycleTerms terms = cvae::cycle_loss(t, bx, by, model, {}, 1, noise);
  Var supervised = ad::mean(model.y_head.nll(by, fwd(t.constant(bx))));
  return {terms.total + supervised_weight * supervised, terms.loss_y, terms.kl};
}

DenseMatrix TilesModels::generate(const DenseMatrix& y, const DenseMatrix& z) const {
  Tape t;
  Var yv = t.constant(y);
  Var logits = has_latent() ? decoder.apply(ad::hcat(yv, t.constant(z))) : decoder.apply(yv);
  return ad::sigmoid(logits).value();
}

std::vector<int> TilesModels::classify(const DenseMatrix& x) const {
  const DenseMatrix logits = forward.apply(x);
  std::vector<int> out;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

DenseMatrix TilesModels::posterior_mean(const DenseMatrix& x) const {
  if (!has_latent()) return DenseMatrix::Zero(x.rows(), 1);
  return encoder.apply(x).leftCols(z_dim);
}

std::vector<DenseVector> TilesModels::sample(int digit, Index n, Rng& rng) const {
  if (digit < 0 || digit >= kDigits) throw ContractError("sample: digit out of range");
  if (n < 1) throw ContractError("sample: n must be at least 1");
  const DenseMatrix y = one_hot(digit, kDigits).transpose();
  cvae::FunctionInverse inv(
      [&](Var yv, Var z) {
        return has_latent() ? decoder.apply(ad::hcat(yv, z)) : decoder.apply(yv);
      },
      std::max<Index>(z_dim, 1));
  std::vector<DenseVector> out;
  for (const DenseMatrix& img : cvae::sample_inverse(y, inv, cvae::LikelihoodHead::bernoulli(), n, rng)) {
    out.push_back(img.row(0).transpose());
  }
  return out;
}

TilesData make_tiles_data(const TilesConfig& config) {
  if (config.n_train < 1 || config.n_eval < 1) throw ContractError("make_tiles_data: empty split");
  Rng rng = Rng(config.seed).split(kData);
  TilesData d;
  d.train = gen_dataset(config.n_train, rng);
  d.eval = gen_dataset(config.n_eval, rng);
  return d;
}

TilesRun train_base(const TilesData& data, const TilesConfig& config) { return train(data, config, false); }

TilesRun train_cyclecvae(const TilesData& data, const TilesConfig& config) { return train(data, config, true); }

double recon_error(const TilesModels& models, const std::vector<TileSample>& eval) {
  const DenseMatrix x = stack_x(eval);
  const std::vector<int> digits = models.classify(x);
  DenseMatrix y_hat = DenseMatrix::Zero(x.rows(), kDigits);
  for (Index i = 0; i < x.rows(); ++i) y_hat(i, digits[static_cast<std::size_t>(i)]) = 1.0;
  Tape t;
  Var yv = t.constant(y_hat);
  Var logits = models.has_latent() ? models.decoder.apply(ad::hcat(yv, t.constant(models.posterior_mean(x))))
                                   : models.decoder.apply(yv);
  return ad::mean(cvae::LikelihoodHead::bernoulli().nll(x, logits)).scalar();
}

int eval_diversity(const TilesModels& models, int digit, Index n_draws, Rng& rng) {
  std::set<int> seen;
  for (const DenseVector& img : models.sample(digit, n_draws, rng)) seen.insert(classify_border(img).value_or(-1));
  return static_cast<int>(seen.size());
}

}  // namespace surjcycle::tiles
