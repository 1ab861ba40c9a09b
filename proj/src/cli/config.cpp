#include "surjcycle/cli/config.hpp"

#include <fstream>
#include <optional>
#include <set>

namespace surjcycle::cli {
namespace {

using nlohmann::json;

// Reads fields out of one object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      field = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return std::nullopt;
    return Section(doc_.at(key), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  void require(bool ok, const std::string& what) const {
    if (!ok) throw ConfigError(where_ + ": " + what);
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_affine(Section s, AffineSection& a) {
  affine::AffineTrainConfig& t = a.train;
  s.get("r_x", a.r_x);
  s.get("r_y", a.r_y);
  s.get("r_u", a.r_u);
  s.get("r_z", t.r_z);
  s.get("n_samples", a.n_samples);
  s.get("n_heldout", a.n_heldout);
  s.get("tol", a.tol);
  s.get("lambda_penalty", t.lambda_penalty);
  s.get("lambda_end", t.lambda_end);
  s.get("skew_weight", t.skew_weight);
  s.get("gamma_start", t.gamma_start);
  s.get("gamma_end", t.gamma_end);
  s.get("anneal_fraction", t.anneal_fraction);
  s.get("iters", t.iters);
  s.get("restarts", t.restarts);
  s.get("screen_iters", t.screen_iters);
  s.get("presolve_starts", t.presolve_starts);
  s.get("presolve_iters", t.presolve_iters);
  s.get("lr", t.lr);
  s.get("lr_end", t.lr_end);
  s.get("checkpoint_every", t.checkpoint_every);
  s.get("alphas", a.alphas);
  s.get("betas", a.betas);
  s.get("diagonal_steps", a.diagonal_steps);
  s.finish();
  s.require(a.r_x >= 1 && a.r_y >= 1 && a.r_u >= 0 && t.r_z >= 0, "dimensions must be non-negative, r_x and r_y positive");
  s.require(a.r_y + a.r_u <= a.r_x, "r_y + r_u must not exceed r_x");
  s.require(a.n_samples >= 2 && a.n_heldout >= 1, "n_samples >= 2 and n_heldout >= 1");
  s.require(a.tol > 0.0, "tol must be positive");
  s.require(t.iters >= 1 && t.restarts >= 1 && t.screen_iters >= 0 && t.presolve_starts >= 0 && t.presolve_iters >= 1,
            "iteration counts out of range");
  s.require(t.gamma_start > 0.0 && t.gamma_end > 0.0 && t.lambda_penalty > 0.0 && t.lambda_end > 0.0 && t.lr > 0.0 &&
                t.lr_end > 0.0 && t.skew_weight >= 0.0,
            "rates, gammas and lambdas must be positive");
  s.require(t.anneal_fraction > 0.0 && t.anneal_fraction <= 1.0, "anneal_fraction must lie in (0, 1]");
  s.require(!a.alphas.empty() && !a.betas.empty() && a.diagonal_steps >= 1, "empty alpha-beta grid");
  for (double v : a.alphas) s.require(v >= 1e-6, "alphas must be at least 1e-6");
}

void read_tiles(Section s, TilesSection& ts) {
  tiles::TilesConfig& t = ts.train;
  s.get("n_train", t.n_train);
  s.get("n_eval", t.n_eval);
  s.get("epochs", t.epochs);
  s.get("batch", t.batch);
  s.get("hidden", t.hidden);
  s.get("z_dim", t.z_dim);
  s.get("lr", t.lr);
  s.get("supervised_weight", t.supervised_weight);
  s.get("n_seeds", ts.n_seeds);
  s.get("n_draws", ts.n_draws);
  s.get("pgm_scale", ts.pgm_scale);
  s.get("cvae_samples", ts.cvae_samples);
  s.finish();
  s.require(t.n_train >= 1 && t.n_eval >= 1 && t.epochs >= 1 && t.batch >= 1 && t.hidden >= 1 && t.z_dim >= 1,
            "sizes must be positive");
  s.require(t.lr > 0.0 && t.supervised_weight >= 0.0, "lr must be positive and supervised_weight non-negative");
  s.require(ts.n_seeds >= 1 && ts.n_draws >= 1 && ts.pgm_scale >= 1 && ts.cvae_samples >= 1, "counts must be positive");
}

void read_bound(Section s, cvae::BoundCheckConfig& b) {
  std::string fault = b.negate_kl ? "negate_kl" : "none";
  s.get("models", b.models);
  s.get("inputs", b.inputs);
  s.get("importance_samples", b.importance_samples);
  s.get("elbo_samples", b.elbo_samples);
  s.get("x_dim", b.dims.x);
  s.get("y_dim", b.dims.y);
  s.get("z_dim", b.dims.z);
  s.get("hidden", b.dims.hidden);
  s.get("fault_injection", fault);
  s.finish();
  s.require(fault == "none" || fault == "negate_kl", "fault_injection must be none or negate_kl");
  b.negate_kl = fault == "negate_kl";
  s.require(b.models >= 1 && b.inputs >= 1 && b.elbo_samples >= 1, "counts must be positive");
  s.require(b.importance_samples >= 1000, "importance_samples must be at least 1000");
  s.require(b.dims.x >= 1 && b.dims.y >= 1 && b.dims.z >= 1 && b.dims.hidden >= 1, "dims must be positive");
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  Section s(doc, "config");
  s.get("kind", c.kind);
  s.get("seed", c.seed);
  s.get("out", c.out);
  if (auto a = s.child("affine")) read_affine(*a, c.affine);
  if (auto t = s.child("tiles")) read_tiles(*t, c.tiles);
  if (auto b = s.child("bound")) read_bound(*b, c.bound);
  s.finish();
  static const std::set<std::string> kinds{"", "affine-verify", "tiles", "bound-check"};
  s.require(kinds.count(c.kind) == 1, "unknown kind '" + c.kind + "'");
  s.require(!c.out.empty(), "out must not be empty");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  const affine::AffineTrainConfig& t = c.affine.train;
  const tiles::TilesConfig& tt = c.tiles.train;
  const cvae::BoundCheckConfig& b = c.bound;
  json out;
  out["kind"] = c.kind;
  out["seed"] = c.seed;
  out["out"] = c.out;
  out["affine"] = {{"r_x", c.affine.r_x},
                   {"r_y", c.affine.r_y},
                   {"r_u", c.affine.r_u},
                   {"r_z", t.r_z},
                   {"n_samples", c.affine.n_samples},
                   {"n_heldout", c.affine.n_heldout},
                   {"tol", c.affine.tol},
                   {"lambda_penalty", t.lambda_penalty},
                   {"lambda_end", t.lambda_end},
                   {"skew_weight", t.skew_weight},
                   {"gamma_start", t.gamma_start},
                   {"gamma_end", t.gamma_end},
                   {"anneal_fraction", t.anneal_fraction},
                   {"iters", t.iters},
                   {"restarts", t.restarts},
                   {"screen_iters", t.screen_iters},
                   {"presolve_starts", t.presolve_starts},
                   {"presolve_iters", t.presolve_iters},
                   {"lr", t.lr},
                   {"lr_end", t.lr_end},
                   {"checkpoint_every", t.checkpoint_every},
                   {"alphas", c.affine.alphas},
                   {"betas", c.affine.betas},
                   {"diagonal_steps", c.affine.diagonal_steps}};
  out["tiles"] = {{"n_train", tt.n_train},
                  {"n_eval", tt.n_eval},
                  {"epochs", tt.epochs},
                  {"batch", tt.batch},
                  {"hidden", tt.hidden},
                  {"z_dim", tt.z_dim},
                  {"lr", tt.lr},
                  {"supervised_weight", tt.supervised_weight},
                  {"n_seeds", c.tiles.n_seeds},
                  {"n_draws", c.tiles.n_draws},
                  {"pgm_scale", c.tiles.pgm_scale},
                  {"cvae_samples", c.tiles.cvae_samples}};
  out["bound"] = {{"models", b.models},
                  {"inputs", b.inputs},
                  {"importance_samples", b.importance_samples},
                  {"elbo_samples", b.elbo_samples},
                  {"x_dim", b.dims.x},
                  {"y_dim", b.dims.y},
                  {"z_dim", b.dims.z},
                  {"hidden", b.dims.hidden},
                  {"fault_injection", b.negate_kl ? "negate_kl" : "none"}};
  return out;
}

}  // namespace surjcycle::cli
