#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gcgan/eval/protocol.hpp"
#include "gcgan/model/embedding.hpp"
#include "gcgan/model/gan.hpp"
#include "gcgan/nn/adam.hpp"

namespace gcgan::app {

/// Raised for malformed configs, flags and missing prerequisites (exit code 1).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  int n_identities = 200;
  double jitter = 0.1;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 2;
  std::uint64_t triplet_seed = 3;
  double train_fraction = 0.9;
  bool balanced_references = false;
};

struct OptimConfig {
  std::size_t batch_size = 64;
  double lr = 3e-4, beta1 = 0.5, beta2 = 0.999, eps = 1e-8;

  nn::AdamConfig adam() const {
    nn::AdamConfig a;
    a.learning_rate = lr, a.beta1 = beta1, a.beta2 = beta2, a.epsilon = eps;
    return a;
  }
};

struct EmbedConfig {
  double margin = 5.0;
  double lambda_contr = 1.0;
  double lambda_gr = 1.0;
  long epochs = 20;
  std::uint64_t seed = 11;
};

struct GanStageConfig {
  model::GanConfig net;
  long epochs = 4;
  long steps_per_epoch = 0;
  std::size_t batch_size = 0;  // 0 uses optim.batch_size
  long sample_every = 0;  // generator steps between sample grids; 0 disables
  std::uint64_t seed = 12;
};

struct Ablation {
  bool no_ir = false, no_gr = false, no_contr = false, spg = false;
};

struct EvalConfig {
  int interpolation_steps = 10;
  double tau_id = 0.6;
  eval::ImageNorm rho_norm = eval::ImageNorm::l2;
  std::size_t transfers = 200;
  std::uint64_t seed = 13;
  // Landmark regressor used for expression similarity.
  long regressor_epochs = 12;
  int regressor_per_identity = 30;
  int regressor_width_divisor = 2;
  std::uint64_t regressor_seed = 14;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  OptimConfig optim;
  EmbedConfig embed;
  GanStageConfig gan;
  Ablation ablation;
  EvalConfig eval;

  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw ValidationError("invalid config: " + what);
    };
    require(dataset.n_identities >= 2, "dataset.n_identities must be >= 2 (a split needs two identities)");
    require(dataset.jitter >= 0 && dataset.jitter <= 1, "dataset.jitter must be in [0,1]");
    require(dataset.train_fraction > 0 && dataset.train_fraction < 1, "dataset.train_fraction must be in (0,1)");
    require(optim.batch_size >= 2, "optim.batch_size must be >= 2");
    require(gan.batch_size == 0 || gan.batch_size >= 2, "gan.batch_size must be 0 or >= 2");
    require(optim.lr > 0, "optim.lr must be positive");
    require(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1, "optim betas must be in [0,1)");
    require(embed.margin > 0, "embed.margin must be positive");
    require(embed.lambda_contr >= 0 && embed.lambda_gr >= 0, "embedding loss weights must be >= 0");
    require(embed.epochs >= 0 && gan.epochs >= 0, "epochs must be >= 0");
    require(eval.interpolation_steps >= 1, "eval.interpolation_steps must be >= 1");
    require(eval.transfers >= 1, "eval.transfers must be >= 1");
    try {
      gan.net.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(std::string("invalid config: ") + e.what());
    }
  }

  /// Embedding options after ablation flags are applied.
  model::EmbeddingTrainOptions embedding_options() const {
    model::EmbeddingTrainOptions o;
    o.loss.margin = embed.margin;
    o.loss.lambda_contr = ablation.no_contr ? 0.0 : embed.lambda_contr;
    o.loss.lambda_gr = ablation.no_gr ? 0.0 : embed.lambda_gr;
    o.adam = optim.adam();
    o.epochs = embed.epochs;
    o.batch_size = optim.batch_size;
    o.seed = embed.seed;
    return o;
  }

  model::GanTrainOptions gan_options() const {
    model::GanTrainOptions o;
    o.gan = gan.net;
    if (ablation.no_ir) o.gan.lambda_ir = 0.0;
    o.adam = optim.adam();
    o.epochs = gan.epochs;
    o.batch_size = gan.batch_size ? gan.batch_size : optim.batch_size;
    o.seed = gan.seed;
    o.steps_per_epoch = gan.steps_per_epoch;
    return o;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& g = c.gan.net;
  return {
      {"dataset",
       {{"n_identities", c.dataset.n_identities},
        {"jitter", c.dataset.jitter},
        {"seed", c.dataset.seed},
        {"split_seed", c.dataset.split_seed},
        {"triplet_seed", c.dataset.triplet_seed},
        {"train_fraction", c.dataset.train_fraction},
        {"balanced_references", c.dataset.balanced_references}}},
      {"optim",
       {{"batch_size", c.optim.batch_size},
        {"lr", c.optim.lr},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps}}},
      {"embed",
       {{"margin", c.embed.margin},
        {"lambda_contr", c.embed.lambda_contr},
        {"lambda_gr", c.embed.lambda_gr},
        {"epochs", c.embed.epochs},
        {"seed", c.embed.seed}}},
      {"gan",
       {{"lambda_ir", g.lambda_ir},
        {"lambda_adv", g.lambda_adv},
        {"lambda_gp", g.lambda_gp},
        {"n_critic", g.n_critic},
        {"leaky_slope", g.leaky_slope},
        {"width_divisor", g.width_divisor},
        {"skip", g.skip == model::SkipMode::concat ? "concat" : "add"},
        {"bn_before_tanh", g.bn_before_tanh},
        {"epochs", c.gan.epochs},
        {"steps_per_epoch", c.gan.steps_per_epoch},
        {"batch_size", c.gan.batch_size},
        {"sample_every", c.gan.sample_every},
        {"seed", c.gan.seed}}},
      {"ablation",
       {{"no_ir", c.ablation.no_ir},
        {"no_gr", c.ablation.no_gr},
        {"no_contr", c.ablation.no_contr},
        {"spg", c.ablation.spg}}},
      {"eval",
       {{"interpolation_steps", c.eval.interpolation_steps},
        {"tau_id", c.eval.tau_id},
        {"rho_norm", c.eval.rho_norm == eval::ImageNorm::l2 ? "l2" : "l1"},
        {"transfers", c.eval.transfers},
        {"seed", c.eval.seed},
        {"regressor_epochs", c.eval.regressor_epochs},
        {"regressor_per_identity", c.eval.regressor_per_identity},
        {"regressor_width_divisor", c.eval.regressor_width_divisor},
        {"regressor_seed", c.eval.regressor_seed}}},
  };
}

namespace detail {

// Reads `key` from `obj` into `out` when present; unknown keys are rejected by the caller.
template <typename V>
void read(const nlohmann::json& obj, const char* key, V& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config: " + section + "." + key + " has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& obj, const nlohmann::json& known, const std::string& section) {
  if (!obj.is_object()) throw ValidationError("config: " + section + " must be an object");
  for (const auto& [k, _] : obj.items())
    if (!known.contains(k)) throw ValidationError("config: unknown key " + (section.empty() ? k : section + "." + k));
}

}  // namespace detail

/// Overlays the values present in `j` on `base`. Unknown keys are an error.
inline ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  const auto schema = to_json(c);
  detail::reject_unknown(j, schema, "");
  auto section = [&](const char* name) -> nlohmann::json {
    if (!j.contains(name)) return nlohmann::json::object();
    detail::reject_unknown(j.at(name), schema.at(name), name);
    return j.at(name);
  };
  {
    const auto s = section("dataset");
    detail::read(s, "n_identities", c.dataset.n_identities, "dataset");
    detail::read(s, "jitter", c.dataset.jitter, "dataset");
    detail::read(s, "seed", c.dataset.seed, "dataset");
    detail::read(s, "split_seed", c.dataset.split_seed, "dataset");
    detail::read(s, "triplet_seed", c.dataset.triplet_seed, "dataset");
    detail::read(s, "train_fraction", c.dataset.train_fraction, "dataset");
    detail::read(s, "balanced_references", c.dataset.balanced_references, "dataset");
  }
  {
    const auto s = section("optim");
    detail::read(s, "batch_size", c.optim.batch_size, "optim");
    detail::read(s, "lr", c.optim.lr, "optim");
    detail::read(s, "beta1", c.optim.beta1, "optim");
    detail::read(s, "beta2", c.optim.beta2, "optim");
    detail::read(s, "eps", c.optim.eps, "optim");
  }
  {
    const auto s = section("embed");
    detail::read(s, "margin", c.embed.margin, "embed");
    detail::read(s, "lambda_contr", c.embed.lambda_contr, "embed");
    detail::read(s, "lambda_gr", c.embed.lambda_gr, "embed");
    detail::read(s, "epochs", c.embed.epochs, "embed");
    detail::read(s, "seed", c.embed.seed, "embed");
  }
  {
    const auto s = section("gan");
    auto& g = c.gan.net;
    detail::read(s, "lambda_ir", g.lambda_ir, "gan");
    detail::read(s, "lambda_adv", g.lambda_adv, "gan");
    detail::read(s, "lambda_gp", g.lambda_gp, "gan");
    detail::read(s, "n_critic", g.n_critic, "gan");
    detail::read(s, "leaky_slope", g.leaky_slope, "gan");
    detail::read(s, "width_divisor", g.width_divisor, "gan");
    detail::read(s, "bn_before_tanh", g.bn_before_tanh, "gan");
    std::string skip = g.skip == model::SkipMode::concat ? "concat" : "add";
    detail::read(s, "skip", skip, "gan");
    if (skip != "concat" && skip != "add") throw ValidationError("config: gan.skip must be 'concat' or 'add'");
    g.skip = skip == "concat" ? model::SkipMode::concat : model::SkipMode::add;
    detail::read(s, "epochs", c.gan.epochs, "gan");
    detail::read(s, "steps_per_epoch", c.gan.steps_per_epoch, "gan");
    detail::read(s, "batch_size", c.gan.batch_size, "gan");
    detail::read(s, "sample_every", c.gan.sample_every, "gan");
    detail::read(s, "seed", c.gan.seed, "gan");
  }
  {
    const auto s = section("ablation");
    detail::read(s, "no_ir", c.ablation.no_ir, "ablation");
    detail::read(s, "no_gr", c.ablation.no_gr, "ablation");
    detail::read(s, "no_contr", c.ablation.no_contr, "ablation");
    detail::read(s, "spg", c.ablation.spg, "ablation");
  }
  {
    const auto s = section("eval");
    detail::read(s, "interpolation_steps", c.eval.interpolation_steps, "eval");
    detail::read(s, "tau_id", c.eval.tau_id, "eval");
    std::string norm = c.eval.rho_norm == eval::ImageNorm::l2 ? "l2" : "l1";
    detail::read(s, "rho_norm", norm, "eval");
    if (norm != "l2" && norm != "l1") throw ValidationError("config: eval.rho_norm must be 'l2' or 'l1'");
    c.eval.rho_norm = norm == "l2" ? eval::ImageNorm::l2 : eval::ImageNorm::l1;
    detail::read(s, "transfers", c.eval.transfers, "eval");
    detail::read(s, "seed", c.eval.seed, "eval");
    detail::read(s, "regressor_epochs", c.eval.regressor_epochs, "eval");
    detail::read(s, "regressor_per_identity", c.eval.regressor_per_identity, "eval");
    detail::read(s, "regressor_width_divisor", c.eval.regressor_width_divisor, "eval");
    detail::read(s, "regressor_seed", c.eval.regressor_seed, "eval");
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

/// Width/8 generator and critic with one critic step per generator step: the budget used for the
/// single-core desk runs.
inline ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.gan.batch_size = 16;
  c.gan.net.width_divisor = 4;
  c.gan.net.n_critic = 1;
  c.gan.epochs = 6;
  c.embed.epochs = 20;
  return c;
}

}  // namespace gcgan::app
