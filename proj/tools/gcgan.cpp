// gcgan: dataset generation, two-stage training, transfer and evaluation.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>

#include "gcgan/app/config.hpp"
#include "gcgan/app/pipeline.hpp"

namespace {

using namespace gcgan;
using app::ValidationError;
using nlohmann::json;
namespace fs = std::filesystem;

struct Flags {
  std::string config, out, checkpoint, resume, data, regressor, input, landmarks;
  std::optional<std::uint64_t> seed;
  std::optional<long> epochs, steps, driving, identity;
  std::string from = "neutral", to = "smile";
  bool no_ir = false, no_gr = false, no_contr = false, spg = false;
};

void add_common(CLI::App* c, Flags& f) {
  c->add_option("--config", f.config, "JSON experiment config");
  c->add_option("--seed", f.seed, "seed for this command's stage");
  c->add_option("--out", f.out, "output directory (file for single-image transfer)");
  c->add_option("--data", f.data, "data root (default: $GCGAN_DATA_DIR, else generated in memory)");
}

void add_training(CLI::App* c, Flags& f) {
  c->add_option("--epochs", f.epochs, "total epochs");
  c->add_option("--resume", f.resume, "checkpoint of an interrupted run");
  c->add_flag("--no-gr", f.no_gr, "drop the landmark reconstruction loss");
  c->add_flag("--no-contr", f.no_contr, "drop the contrastive loss");
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

app::ExperimentConfig effective_config(const Flags& f) {
  auto cfg = f.config.empty() ? app::ExperimentConfig{} : app::load_config(f.config);
  cfg.ablation.no_ir = cfg.ablation.no_ir || f.no_ir;
  cfg.ablation.no_gr = cfg.ablation.no_gr || f.no_gr;
  cfg.ablation.no_contr = cfg.ablation.no_contr || f.no_contr;
  cfg.ablation.spg = cfg.ablation.spg || f.spg;
  cfg.validate();
  return cfg;
}

std::optional<fs::path> data_root(const Flags& f) {
  if (!f.data.empty()) return fs::path(f.data);
  if (const char* env = std::getenv("GCGAN_DATA_DIR"); env && *env) return fs::path(env);
  return std::nullopt;
}

fs::path out_dir(const Flags& f, const char* fallback) { return f.out.empty() ? fs::path(fallback) : fs::path(f.out); }

int emotion_index(const std::string& name) {
  for (int e = 0; e < data::kNumEmotions; ++e)
    if (name == data::kEmotionNames[e]) return e;
  throw ValidationError("unknown emotion '" + name + "'");
}

// ---- dataset gen

int cmd_dataset_gen(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.seed) cfg.dataset.seed = *f.seed;
  fs::path dir = !f.out.empty() ? fs::path(f.out) : data_root(f).value_or("data");
  const auto bundle = app::synthetic_data(cfg.dataset);
  app::write_dataset(bundle, dir);
  log_line("wrote " + std::to_string(bundle.all.size()) + " samples (" + std::to_string(bundle.manifest.train_ids.size()) +
           "/" + std::to_string(bundle.manifest.test_ids.size()) + " identity split) to " + dir.string());
  return 0;
}

// ---- train

int cmd_train_embed(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.seed) cfg.embed.seed = *f.seed;
  if (f.epochs) cfg.embed.epochs = *f.epochs;
  cfg.validate();
  const auto data = app::load_data(cfg, data_root(f));
  std::optional<fs::path> resume;
  if (!f.resume.empty()) resume = fs::path(f.resume);
  const auto r = app::train_embed_stage(cfg, data, out_dir(f, "runs/embed"), resume, log_line);
  log_line("checkpoint " + r.checkpoint.string());
  return 0;
}

int cmd_train_gan(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.seed) cfg.gan.seed = *f.seed;
  if (f.epochs) cfg.gan.epochs = *f.epochs;
  if (f.steps) cfg.gan.steps_per_epoch = *f.steps;
  cfg.validate();
  const auto out = out_dir(f, "runs/gan");
  std::optional<fs::path> e;
  if (!cfg.ablation.spg) e = f.checkpoint.empty() ? out / "embed.gca" : fs::path(f.checkpoint);
  if (e) app::require_file(*e, "stage-1 checkpoint");
  const auto data = app::load_data(cfg, data_root(f));
  std::optional<fs::path> resume;
  if (!f.resume.empty()) resume = fs::path(f.resume);
  const auto r = app::train_gan_stage(cfg, data, out, e, resume, log_line);
  log_line("checkpoint " + r.checkpoint.string());
  return 0;
}

int cmd_train_regressor(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.seed) cfg.eval.regressor_seed = *f.seed;
  if (f.epochs) cfg.eval.regressor_epochs = *f.epochs;
  const auto data = app::load_data(cfg, data_root(f));
  const auto r = app::train_regressor_stage(cfg, data, out_dir(f, "runs/regressor"), log_line);
  std::ostringstream msg;
  msg << "checkpoint " << r.checkpoint.string() << ", held-out MAE " << r.test_mae;
  log_line(msg.str());
  return 0;
}

// ---- transfer

data::LandmarkVector read_landmark_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open landmark file " + p.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<double> values;
  const std::regex sep("[,\\s]+");
  for (std::sregex_token_iterator it(text.begin(), text.end(), sep, -1), end; it != end; ++it) {
    const std::string tok = *it;
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError("landmark file " + p.string() + ": invalid number '" + tok + "'");
    }
  }
  if (values.size() != static_cast<std::size_t>(data::kLandmarkDims))
    throw ValidationError("landmark file " + p.string() + ": expected " + std::to_string(data::kLandmarkDims) +
                          " values, got " + std::to_string(values.size()));
  data::LandmarkVector g{};
  for (int i = 0; i < data::kLandmarkDims; ++i) {
    if (!(values[i] >= -1 && values[i] <= 1))
      throw ValidationError("landmark file " + p.string() + ": value " + std::to_string(i + 1) + " outside [-1,1]");
    g[i] = values[i];
  }
  return g;
}

nn::Tensor<float> read_face(const fs::path& p) {
  try {
    return data::from_rgb(data::resize_bilinear(data::read_png(p), data::kImageSize, data::kImageSize));
  } catch (const data::ImageIoError& e) {
    throw ValidationError(e.what());
  }
}

int cmd_transfer(const Flags& f) {
  if (f.checkpoint.empty()) throw ValidationError("transfer needs --checkpoint (a gan.gca file)");
  if (f.input.empty()) throw ValidationError("transfer needs --input");
  if (f.landmarks.empty() == !f.driving) throw ValidationError("transfer needs exactly one of --landmarks or --driving");
  const auto model = app::load_transfer_model(f.checkpoint);
  data::LandmarkVector g{};
  if (!f.landmarks.empty()) {
    g = read_landmark_file(f.landmarks);
  } else {
    const auto cfg = effective_config(f);
    const auto d = app::load_data(cfg, data_root(f));
    if (*f.driving < 0 || static_cast<std::size_t>(*f.driving) >= d.all.size())
      throw ValidationError("--driving row " + std::to_string(*f.driving) + " outside dataset of " +
                            std::to_string(d.all.size()) + " rows");
    g = d.all[*f.driving].landmarks;
  }
  const fs::path input(f.input);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(input)) {
    const fs::path out = out_dir(f, "transfer");
    app::ensure_dir(out);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(input))
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .png files in " + input.string());
    for (const auto& p : files) jobs.emplace_back(p, out / p.filename());
  } else {
    app::require_file(input, "input image");
    fs::path out = out_dir(f, "transfer.png");
    if (fs::is_directory(out)) out /= input.filename();
    jobs.emplace_back(input, out);
  }
  for (const auto& [in, out] : jobs) {
    const auto face = read_face(in);
    const auto batch = face.reshaped({1, 3, data::kImageSize, data::kImageSize});
    const auto result = model.run(batch, {g});
    data::write_png(out, nn::take_sample(result, 0));
    log_line(in.string() + " -> " + out.string());
  }
  return 0;
}

// ---- eval

fs::path gan_checkpoint(const Flags& f) {
  if (f.checkpoint.empty()) throw ValidationError("this command needs --checkpoint (a gan.gca file)");
  return f.checkpoint;
}

int cmd_eval_metrics(const Flags& f) {
  const auto cfg = effective_config(f);
  if (f.checkpoint.empty()) throw ValidationError("eval metrics needs --checkpoint pointing at a runs directory");
  const fs::path runs(f.checkpoint);
  const auto out = out_dir(f, "reports");
  app::ensure_dir(out);
  const auto data = app::load_data(cfg, data_root(f));
  std::vector<std::pair<std::string, fs::path>> rows;
  for (const char* name : {"full", "no_ir", "no_gr", "no_contr"}) {
    const auto p = runs / name / "gan.gca";
    app::require_file(p, std::string("checkpoint for ") + name);
    rows.emplace_back(name, p);
  }
  const auto t1 = app::table1(data, rows);
  app::write_table1(out / "table1.csv", t1);
  bool ok = true;
  json inputs;
  for (const auto& [name, p] : rows) inputs[name] = app::checkpoint_record(p);
  for (std::size_t i = 1; i < t1.size(); ++i) {
    if (t1[0].metrics.ssim < t1[i].metrics.ssim) {
      log_line("directional check failed: full SSIM below " + t1[i].model);
      ok = false;
    }
  }
  const fs::path spg = runs / "spg" / "gan.gca";
  const fs::path reg = f.regressor.empty() ? runs / "regressor" / "regressor.gca" : fs::path(f.regressor);
  if (fs::exists(spg) && fs::exists(reg)) {
    inputs["spg"] = app::checkpoint_record(spg);
    inputs["regressor"] = app::checkpoint_record(reg);
    const auto t2 = app::table2(cfg, data, {{"gc_gan", rows[0].second}, {"no_contr", rows[3].second}, {"spg", spg}},
                                rows[0].second, reg);
    app::write_table2(out / "table2.csv", t2);
    for (std::size_t i = 1; i < t2.size(); ++i) {
      if (t2[0].metrics.identity_rate < t2[i].metrics.identity_rate ||
          t2[0].metrics.expression_similarity < t2[i].metrics.expression_similarity) {
        log_line("directional check failed: gc_gan transfer metrics below " + t2[i].model);
        ok = false;
      }
    }
  } else {
    log_line("table2 skipped: needs " + spg.string() + " and " + reg.string());
  }
  app::write_run_manifest(out / "eval_metrics_run.json", "eval metrics", cfg, data, inputs,
                          {{"directional_checks_pass", ok}});
  return ok ? 0 : 1;
}

int cmd_eval_lipschitz(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.steps) cfg.eval.interpolation_steps = static_cast<int>(*f.steps);
  cfg.validate();
  const auto ckpt = gan_checkpoint(f);
  const auto m = app::load_transfer_model(ckpt);
  if (!m.e) throw ValidationError("lipschitz report needs an embedding-conditioned generator");
  const auto data = app::load_data(cfg, data_root(f));
  const auto out = out_dir(f, "reports");
  app::ensure_dir(out);
  const auto r = eval::lipschitz_report(data.split.test, *m.e, *m.g, cfg.eval.interpolation_steps, cfg.eval.rho_norm);
  std::ostringstream csv;
  eval::write_lipschitz_csv(csv, r);
  app::write_text(out / "lipschitz.csv", csv.str());
  data::write_png(out / "lipschitz.png", eval::box_plot(r.samples));
  app::write_run_manifest(out / "eval_lipschitz_run.json", "eval lipschitz", cfg, data,
                          {{"checkpoint", app::checkpoint_record(ckpt)}},
                          {{"pairs", r.pairs}, {"skipped", r.skipped}, {"global_max", r.global_max}, {"all_finite", r.all_finite}});
  if (!r.all_finite) throw nn::NumericError("non-finite Lipschitz ratio");
  return r.skipped == 0 ? 0 : 1;
}

int cmd_eval_manifold(const Flags& f) {
  const auto cfg = effective_config(f);
  if (f.checkpoint.empty()) throw ValidationError("eval manifold needs --checkpoint (embed.gca or gan.gca)");
  const auto e = app::load_embedding(f.checkpoint);
  const auto data = app::load_data(cfg, data_root(f));
  const auto out = out_dir(f, "reports");
  app::ensure_dir(out);
  const auto d = app::manifold_of(data.split.test, *e);
  std::ostringstream csv;
  eval::write_manifold_csv(csv, d);
  app::write_text(out / "manifold.csv", csv.str());
  const double s = app::emotion_silhouette(d);
  log_line("silhouette by emotion " + std::to_string(s));
  app::write_run_manifest(out / "eval_manifold_run.json", "eval manifold", cfg, data,
                          {{"checkpoint", app::checkpoint_record(f.checkpoint)}},
                          {{"rows", d.rows.size()}, {"silhouette", s}});
  return 0;
}

int cmd_eval_interpolate(const Flags& f) {
  auto cfg = effective_config(f);
  if (f.steps) cfg.eval.interpolation_steps = static_cast<int>(*f.steps);
  cfg.validate();
  const auto ckpt = gan_checkpoint(f);
  const auto m = app::load_transfer_model(ckpt);
  if (!m.e) throw ValidationError("interpolation needs an embedding-conditioned generator");
  const auto data = app::load_data(cfg, data_root(f));
  const int id = f.identity ? static_cast<int>(*f.identity) : data.split.test_ids.front();
  const int from = emotion_index(f.from), to = emotion_index(f.to);
  const data::FaceSample *src = nullptr, *dst = nullptr;
  for (const auto& s : data.all) {
    if (s.identity != id) continue;
    if (s.emotion == from) src = &s;
    if (s.emotion == to) dst = &s;
  }
  if (!src || !dst) throw ValidationError("identity " + std::to_string(id) + " lacks the requested emotions");
  const int n = cfg.eval.interpolation_steps;
  // t = 0 is E(g_v) = the source expression, t = N is E(g_u) = the target expression.
  const auto path = eval::interpolate_expression(dst->landmarks, src->landmarks, n, src->image, *m.e, *m.g);
  const auto out = out_dir(f, "reports");
  app::ensure_dir(out);
  data::write_png(out / "interpolation.png", data::image_grid(path.images, n + 1));
  std::vector<std::vector<double>> zs;
  for (const auto& z : path.z_g) zs.emplace_back(z.begin(), z.end());
  const auto d = app::manifold_of(data.split.test, *m.e, zs);
  std::ostringstream csv;
  eval::write_manifold_csv(csv, d);
  app::write_text(out / "interpolation_manifold.csv", csv.str());
  app::write_run_manifest(out / "eval_interpolate_run.json", "eval interpolate", cfg, data,
                          {{"checkpoint", app::checkpoint_record(ckpt)}},
                          {{"identity", id}, {"from", f.from}, {"to", f.to}, {"steps", n}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry-conditioned facial expression transfer"};
  app.require_subcommand(1);
  Flags f;

  auto* dataset = app.add_subcommand("dataset", "synthetic dataset tools");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "render the synthetic dataset to disk");
  add_common(gen, f);

  auto* train = app.add_subcommand("train", "train a stage");
  train->require_subcommand(1);
  auto* embed = train->add_subcommand("embed", "stage 1: landmark embedding network");
  add_common(embed, f);
  add_training(embed, f);
  auto* gan = train->add_subcommand("gan", "stage 2: generator and critic with frozen embedding");
  add_common(gan, f);
  add_training(gan, f);
  gan->add_option("--checkpoint", f.checkpoint, "stage-1 checkpoint (default: <out>/embed.gca)");
  gan->add_option("--steps", f.steps, "generator steps per epoch (0 = full pass)");
  gan->add_flag("--no-ir", f.no_ir, "drop the image reconstruction loss");
  gan->add_flag("--spg", f.spg, "landmark-heatmap baseline instead of the embedding");
  auto* regressor = train->add_subcommand("regressor", "image-to-landmark regressor for transfer metrics");
  add_common(regressor, f);
  regressor->add_option("--epochs", f.epochs, "total epochs");

  auto* transfer = app.add_subcommand("transfer", "transfer an expression onto a face");
  add_common(transfer, f);
  transfer->add_option("--checkpoint", f.checkpoint, "gan.gca")->required();
  transfer->add_option("--input", f.input, "input PNG or directory of PNGs")->required();
  transfer->add_option("--landmarks", f.landmarks, "file with 136 normalized coordinates");
  transfer->add_option("--driving", f.driving, "dataset row whose landmarks drive the transfer");

  auto* evalc = app.add_subcommand("eval", "evaluation reports");
  evalc->require_subcommand(1);
  auto* metrics = evalc->add_subcommand("metrics", "table1.csv (and table2.csv) from a runs directory");
  add_common(metrics, f);
  metrics->add_option("--checkpoint", f.checkpoint, "runs directory with full/ no_ir/ no_gr/ no_contr/ [spg/]");
  metrics->add_option("--regressor", f.regressor, "regressor checkpoint (default: <runs>/regressor/regressor.gca)");
  auto* lipschitz = evalc->add_subcommand("lipschitz", "per-step ratio statistics over the test set");
  add_common(lipschitz, f);
  lipschitz->add_option("--checkpoint", f.checkpoint, "gan.gca");
  lipschitz->add_option("--steps", f.steps, "interpolation steps");
  auto* manifold = evalc->add_subcommand("manifold", "embedding dump with PCA coordinates");
  add_common(manifold, f);
  manifold->add_option("--checkpoint", f.checkpoint, "embed.gca or gan.gca");
  auto* interpolate = evalc->add_subcommand("interpolate", "expression interpolation strip");
  add_common(interpolate, f);
  interpolate->add_option("--checkpoint", f.checkpoint, "gan.gca");
  interpolate->add_option("--steps", f.steps, "interpolation steps");
  interpolate->add_option("--identity", f.identity, "identity id (default: first test identity)");
  interpolate->add_option("--from", f.from, "source emotion");
  interpolate->add_option("--to", f.to, "target emotion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_dataset_gen(f);
    if (embed->parsed()) return cmd_train_embed(f);
    if (gan->parsed()) return cmd_train_gan(f);
    if (regressor->parsed()) return cmd_train_regressor(f);
    if (transfer->parsed()) return cmd_transfer(f);
    if (metrics->parsed()) return cmd_eval_metrics(f);
    if (lipschitz->parsed()) return cmd_eval_lipschitz(f);
    if (manifold->parsed()) return cmd_eval_manifold(f);
    if (interpolate->parsed()) return cmd_eval_interpolate(f);
  } catch (const nn::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
