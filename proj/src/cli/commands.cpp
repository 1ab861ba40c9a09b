#include "surjcycle/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "surjcycle/affine/losses.hpp"
#include "surjcycle/tiles/train.hpp"

namespace surjcycle::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kCsvHeader = "# surjcycle-v1\n";

// The config as embedded in reports; the output directory is left out so that
// the same run written elsewhere stays byte-identical.
json embedded_config(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out");
  return j;
}

json matrix_json(const DenseMatrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    data.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json vector_json(const DenseVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json checks_json(const affine::RecoveryReport& r) {
  json out = json::array();
  for (const affine::Check& c : r.checks) {
    out.push_back({{"name", c.name}, {"residual", c.residual}, {"tolerance", c.tolerance}, {"passed", c.passed}});
  }
  return out;
}

json point_json(const affine::PathPoint& p) { return {{"alpha", p.alpha}, {"beta", p.beta}, {"value", p.value}}; }

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_affine_report(const ExperimentConfig& config, const AffineOutcome& o) {
  const affine::AffineCvaeParams& p = o.training.params;
  const affine::AffineGroundTruth& gt = o.truth;
  json report;
  report["format"] = "surjcycle-v1";
  report["config"] = embedded_config(config);
  report["passed"] = o.passed();
  report["ground_truth"] = {{"a", matrix_json(gt.a)}, {"b", matrix_json(gt.b)}, {"c", vector_json(gt.c)},
                            {"d", matrix_json(gt.d)}, {"e", vector_json(gt.e)}};
  report["params"] = {{"w_x", matrix_json(p.w_x)}, {"w_y", matrix_json(p.w_y)}, {"v_x", matrix_json(p.v_x)},
                      {"b_x", vector_json(p.b_x)}, {"b_y", vector_json(p.b_y)}, {"gamma", p.gamma},
                      {"w_z", matrix_json(p.w_z)}, {"b_z", vector_json(p.b_z)}, {"log_s", vector_json(p.log_s)}};
  report["recovery"] = {{"passed", o.recovery.passed()},
                        {"checks", checks_json(o.recovery)},
                        {"wx_aligned_residual", o.recovery.wx_aligned_residual},
                        {"symmetry_only", o.recovery.symmetry_only}};
  report["pruning"] = {{"passed", o.pruning.passed()},
                       {"checks", checks_json(o.pruning)},
                       {"active_dims", o.pruning.active_dims}};
  report["path"] = {{"grid_min", point_json(o.path.grid_min)},
                    {"min_at_corner", o.path.min_at_corner},
                    {"diagonal_monotone", o.path.diagonal_monotone},
                    {"max_diagonal_increase", o.path.max_diagonal_increase}};
  report["cycle_value"] = {{"gap", o.cycle_value_gap}, {"tolerance", kCycleValueTol}};
  report["training"] = {{"selected_restart", o.training.selected_restart},
                        {"screen_objectives", o.training.screen_objectives},
                        {"presolve_penalties", o.training.presolve_penalties}};
  open_out(fs::path(config.out) / "recovery_report.json") << report.dump(2) << '\n';

  std::ofstream path = open_out(fs::path(config.out) / "path.csv");
  path << kCsvHeader << "series,alpha,beta,value\n" << std::setprecision(17);
  for (const affine::PathPoint& q : o.path.grid) path << "grid," << q.alpha << ',' << q.beta << ',' << q.value << '\n';
  for (const affine::PathPoint& q : o.path.diagonal) {
    path << "diagonal," << q.alpha << ',' << q.beta << ',' << q.value << '\n';
  }
}

void write_pgm_file(const fs::path& path, const DenseVector& x, int scale) {
  std::ofstream out = open_out(path);
  tiles::write_pgm(out, x, scale);
}

}  // namespace

bool AffineOutcome::passed() const {
  return recovery.passed() && pruning.passed() && path.min_at_corner && path.diagonal_monotone &&
         cycle_value_gap <= kCycleValueTol;
}

AffineOutcome affine_verify(const ExperimentConfig& config) {
  const AffineSection& a = config.affine;
  AffineOutcome o;
  const Rng root(config.seed);
  Rng truth_rng = root.split(0);
  o.truth = affine::make_ground_truth(a.r_x, a.r_y, a.r_u, truth_rng);
  Rng data_rng = root.split(1);
  const affine::AffinePairs pairs = affine::sample_pairs(o.truth, a.n_samples, data_rng);
  Rng held_rng = root.split(2);
  const affine::AffinePairs held = affine::sample_pairs(o.truth, a.n_heldout, held_rng);

  affine::AffineTrainConfig train = a.train;
  train.seed = config.seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    o.training = affine::train_affine(pairs.x, pairs.y, train);
  } catch (const affine::TrainingError& e) {
    std::ofstream trace = open_out(fs::path(config.out) / "trace.csv");
    e.trace().write_csv(trace);
    throw;
  }
  o.seconds = seconds_since(t0);
  {
    std::ofstream trace = open_out(fs::path(config.out) / "trace.csv");
    o.training.trace.write_csv(trace);
  }

  const affine::AffineCvaeParams& p = o.training.params;
  o.recovery = affine::verify_recovery(p, o.truth, a.tol);
  o.pruning = affine::verify_pruning_bijection(p, o.truth, held.x, a.tol);
  o.path = affine::alpha_beta_path(p, o.truth, a.alphas, a.betas, a.diagonal_steps);
  const affine::AffineCvaeParams planted = affine::planted_optimum(o.truth, p.r_z(), p.gamma);
  const affine::DataMoments mx = affine::compute_moments(pairs.x, false);
  const affine::DataMoments my = affine::compute_moments(pairs.y, false);
  const auto cycle_value = [&](const affine::AffineCvaeParams& q) {
    return affine::affine_loss_x(q, mx) + affine::affine_loss_y(q, my);
  };
  o.cycle_value_gap = std::abs(cycle_value(p) - cycle_value(planted));
  write_affine_report(config, o);
  return o;
}

bool TilesOutcome::ordered() const {
  for (const TilesSeedOutcome& s : seeds) {
    if (!(s.cvae_recon < s.base_recon)) return false;
  }
  return !seeds.empty();
}

void TilesOutcome::summarize() {
  std::vector<double> b, c, d;
  for (const TilesSeedOutcome& s : seeds) {
    b.push_back(s.base_recon);
    c.push_back(s.cvae_recon);
    d.push_back(s.base_recon - s.cvae_recon);
  }
  if (seeds.empty()) return;
  base_mean = mean_of(b);
  cvae_mean = mean_of(c);
  gap = base_mean - cvae_mean;
  spread = std::max({sample_std(b), sample_std(c), sample_std(d)});
}

TilesOutcome tiles_experiment(const ExperimentConfig& config) {
  const TilesSection& ts = config.tiles;
  const fs::path out(config.out);
  TilesOutcome o;
  std::ofstream curves = open_out(out / "curves.csv");
  curves << kCsvHeader << "seed,epoch,base_recon,cvae_recon,loss_y,kl\n" << std::setprecision(17);
  std::ofstream diversity = open_out(out / "diversity.csv");
  diversity << kCsvHeader << "seed,digit,base,cvae\n";

  for (int k = 0; k < ts.n_seeds; ++k) {
    tiles::TilesConfig cfg = ts.train;
    cfg.seed = config.seed + static_cast<std::uint64_t>(k);
    const tiles::TilesData data = tiles::make_tiles_data(cfg);
    TilesSeedOutcome s;
    s.seed = cfg.seed;
    auto t0 = std::chrono::steady_clock::now();
    const tiles::TilesRun base = tiles::train_base(data, cfg);
    s.base_seconds = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const tiles::TilesRun cvae = tiles::train_cyclecvae(data, cfg);
    s.cvae_seconds = seconds_since(t0);
    s.base_recon = base.trace.rows.back().recon_x;
    s.cvae_recon = cvae.trace.rows.back().recon_x;

    for (std::size_t e = 0; e < cvae.trace.rows.size(); ++e) {
      const tiles::TilesTraceRow& c = cvae.trace.rows[e];
      curves << s.seed << ',' << c.epoch << ',' << base.trace.rows[e].recon_x << ',' << c.recon_x << ',' << c.loss_y
             << ',' << c.kl << '\n';
    }

    const Rng root = Rng(cfg.seed).split(0xd1e5);
    for (int digit = 0; digit < tiles::kDigits; ++digit) {
      Rng rb = root.split(2 * digit), rc = root.split(2 * digit + 1);
      s.base_diversity.push_back(tiles::eval_diversity(base.models, digit, ts.n_draws, rb));
      s.cvae_diversity.push_back(tiles::eval_diversity(cvae.models, digit, ts.n_draws, rc));
      diversity << s.seed << ',' << digit << ',' << s.base_diversity.back() << ',' << s.cvae_diversity.back() << '\n';

      const std::string stem = "seed" + std::to_string(s.seed) + "_digit" + std::to_string(digit);
      const fs::path dir = out / "samples";
      write_pgm_file(dir / (stem + "_clean.pgm"), tiles::render(digit, tiles::kPositions / 2), ts.pgm_scale);
      Rng rs = root.split(1000 + digit);
      write_pgm_file(dir / (stem + "_base.pgm"), base.models.sample(digit, 1, rs).front(), ts.pgm_scale);
      const std::vector<DenseVector> draws = cvae.models.sample(digit, ts.cvae_samples, rs);
      for (std::size_t i = 0; i < draws.size(); ++i) {
        write_pgm_file(dir / (stem + "_cvae" + std::to_string(i) + ".pgm"), draws[i], ts.pgm_scale);
      }
    }
    o.seeds.push_back(std::move(s));
  }

  o.summarize();
  json summary;
  summary["format"] = "surjcycle-v1";
  summary["config"] = embedded_config(config);
  summary["base_recon_mean"] = o.base_mean;
  summary["cvae_recon_mean"] = o.cvae_mean;
  summary["gap"] = o.gap;
  summary["spread"] = o.spread;
  summary["ordered"] = o.ordered();
  open_out(out / "summary.json") << summary.dump(2) << '\n';
  return o;
}

cvae::BoundCheckReport bound_experiment(const ExperimentConfig& config) {
  cvae::BoundCheckConfig b = config.bound;
  b.seed = config.seed;
  const cvae::BoundCheckReport report = cvae::run_bound_check(b);
  std::ofstream out = open_out(fs::path(config.out) / "bound.csv");
  out << kCsvHeader << "model,input,elbo,estimate,stderr,degenerate,passed\n" << std::setprecision(17);
  for (const cvae::BoundComparison& c : report.comparisons) {
    out << c.model << ',' << c.input << ',' << c.elbo << ',' << c.estimate << ',' << c.stderr_ << ','
        << c.degenerate << ',' << c.passed << '\n';
  }
  return report;
}

int run_affine_verify(const ExperimentConfig& config, std::ostream& log) {
  AffineOutcome o;
  try {
    o = affine_verify(config);
  } catch (const affine::TrainingError& e) {
    log << "training diverged: " << e.what() << '\n';
    return kCheckFailed;
  }
  log << std::setprecision(4);
  log << "training: " << o.seconds << " s, restart " << o.training.selected_restart << '\n';
  for (const affine::Check& c : o.recovery.checks) {
    log << (c.passed ? "ok   " : "FAIL ") << c.name << " residual " << c.residual << " tol " << c.tolerance << '\n';
  }
  if (o.recovery.symmetry_only) log << "W_x matches A only up to a signed permutation\n";
  for (const affine::Check& c : o.pruning.checks) {
    log << (c.passed ? "ok   " : "FAIL ") << c.name << " residual " << c.residual << " tol " << c.tolerance << '\n';
  }
  log << "active z dims: " << o.pruning.active_dims.size() << '\n';
  log << (o.path.min_at_corner ? "ok   " : "FAIL ") << "alpha-beta grid minimum at (" << o.path.grid_min.alpha << ", "
      << o.path.grid_min.beta << ")\n";
  log << (o.path.diagonal_monotone ? "ok   " : "FAIL ") << "diagonal non-increasing, largest step up "
      << o.path.max_diagonal_increase << '\n';
  log << (o.cycle_value_gap <= kCycleValueTol ? "ok   " : "FAIL ") << "cycle loss within " << kCycleValueTol
      << " of the planted optimum, gap " << o.cycle_value_gap << '\n';
  log << "artifacts in " << config.out << '\n';
  return o.passed() ? kSuccess : kCheckFailed;
}

int run_tiles(const ExperimentConfig& config, std::ostream& log) {
  TilesOutcome o;
  try {
    o = tiles_experiment(config);
  } catch (const tiles::TilesTrainingError& e) {
    log << "training diverged: " << e.what() << '\n';
    return kCheckFailed;
  }
  log << std::setprecision(4);
  for (const TilesSeedOutcome& s : o.seeds) {
    int digits = 0;
    for (int v : s.cvae_diversity) digits += v >= 2;
    log << "seed " << s.seed << ": base recon " << s.base_recon << " (" << s.base_seconds << " s), cyclecvae recon "
        << s.cvae_recon << " (" << s.cvae_seconds << " s), " << digits << "/10 digits with >= 2 borders\n";
  }
  log << "gap " << o.gap << ", spread " << o.spread << '\n';
  log << "artifacts in " << config.out << '\n';
  return o.ordered() ? kSuccess : kCheckFailed;
}

int run_bound_check(const ExperimentConfig& config, std::ostream& log) {
  const cvae::BoundCheckReport r = bound_experiment(config);
  log << std::setprecision(6);
  for (const cvae::BoundComparison& c : r.comparisons) {
    log << (c.passed ? "ok   " : "FAIL ") << "model " << c.model << " input " << c.input << ": elbo " << c.elbo
        << " >= estimate " << c.estimate << " - 3 * " << c.stderr_ << (c.degenerate ? " (degenerate weights)" : "")
        << '\n';
  }
  log << r.violations() << " violations in " << r.comparisons.size() << " comparisons\n";
  return r.violations() == 0 ? kSuccess : kCheckFailed;
}

}  // namespace surjcycle::cli
