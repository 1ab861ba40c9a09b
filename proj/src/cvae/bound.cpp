#include "surjcycle/cvae/bound.hpp"

#include <algorithm>

namespace surjcycle::cvae {

int BoundCheckReport::violations() const {
  return static_cast<int>(std::count_if(comparisons.begin(), comparisons.end(),
                                        [](const BoundComparison& c) { return !c.passed; }));
}

BoundCheckReport run_bound_check(const BoundCheckConfig& config) {
  if (config.models < 1 || config.inputs < 1 || config.elbo_samples < 1) {
    throw ContractError("run_bound_check: models, inputs and elbo_samples must be positive");
  }
  BoundCheckReport report;
  const Rng root(config.seed);
  for (int k = 0; k < config.models; ++k) {
    Rng rng = root.split(static_cast<std::uint64_t>(k));
    TinyModel tiny(config.dims, rng);
    if (config.encoder_fit_steps > 0) tiny.fit_encoder(config.encoder_fit_inputs, config.encoder_fit_steps, 1e-2, rng);
    const CycleModel model = tiny.cycle_model();
    for (int i = 0; i < config.inputs; ++i) {
      const DenseMatrix x = tiny.sample_x(rng);
      const ImportanceEstimate est = importance_estimate_loss_x(x, model, config.importance_samples, rng);
      Tape t;
      const ElboTerms e = elbo_loss_x(t, x, model, config.elbo_samples, rng);
      BoundComparison c;
      c.model = k;
      c.input = i;
      c.elbo = config.negate_kl ? e.recon.scalar() - e.kl.scalar() : e.total.scalar();
      c.estimate = est.estimate;
      c.stderr_ = est.stderr_;
      c.degenerate = est.degenerate;
      c.passed = c.elbo >= est.estimate - 3.0 * est.stderr_;
      report.comparisons.push_back(c);
    }
  }
  return report;
}

}  // namespace surjcycle::cvae
