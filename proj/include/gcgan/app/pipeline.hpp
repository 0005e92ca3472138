#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcgan/app/config.hpp"
#include "gcgan/data/batch.hpp"
#include "gcgan/data/dataset.hpp"
#include "gcgan/data/image_io.hpp"
#include "gcgan/data/ingest.hpp"
#include "gcgan/eval/manifold.hpp"
#include "gcgan/eval/metrics.hpp"
#include "gcgan/eval/protocol.hpp"
#include "gcgan/eval/regressor.hpp"
#include "gcgan/model/embedding.hpp"
#include "gcgan/model/gan.hpp"
#include "gcgan/nn/archive.hpp"

namespace gcgan::app {

namespace fs = std::filesystem;
using nn::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Hashing and small file helpers

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 || EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha1(const fs::path& p) { return git_blob_sha1(read_file(p)); }

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory " + dir.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
  if (!out) throw ValidationError("write failed for " + p.string());
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ValidationError("missing " + what + ": " + p.string());
}

// ---------------------------------------------------------------------------------------------
// Data

struct DataBundle {
  data::Dataset all;
  data::Split split;
  std::vector<data::TrainingTriplet> triplets;
  data::DatasetManifest manifest;
  bool synthetic = true;
};

inline DataBundle assemble(data::Dataset all, const DatasetConfig& cfg, data::DatasetManifest m, bool synthetic) {
  DataBundle b;
  b.split = data::split_by_identity(all, cfg.train_fraction, m.split_seed);
  b.triplets = data::assemble_triplets(b.split.train, cfg.triplet_seed, cfg.balanced_references);
  m.train_ids = b.split.train_ids;
  m.test_ids = b.split.test_ids;
  b.manifest = std::move(m);
  b.all = std::move(all);
  b.synthetic = synthetic;
  return b;
}

inline DataBundle synthetic_data(const DatasetConfig& cfg) {
  data::DatasetManifest m;
  m.n_identities = cfg.n_identities;
  m.jitter = cfg.jitter;
  m.seed = cfg.seed;
  m.split_seed = cfg.split_seed;
  return assemble(data::make_dataset(cfg.n_identities, cfg.jitter, cfg.seed), cfg, m, true);
}

/// Loads the dataset for a run. With no root the synthetic set is generated from the config. A root
/// holding `manifest.json` is a generated dataset and is rebuilt from its recorded seeds; a root
/// holding only `landmarks.csv` and images is ingested as external data.
inline DataBundle load_data(const ExperimentConfig& cfg, const std::optional<fs::path>& root) {
  if (!root) return synthetic_data(cfg.dataset);
  const auto manifest_path = *root / "manifest.json";
  if (fs::exists(manifest_path)) {
    data::DatasetManifest m;
    try {
      m = data::DatasetManifest::from_json(json::parse(read_file(manifest_path)));
    } catch (const json::exception& e) {
      throw ValidationError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
    }
    DatasetConfig d = cfg.dataset;
    d.n_identities = m.n_identities;
    d.jitter = m.jitter;
    d.seed = m.seed;
    d.split_seed = m.split_seed;
    auto b = synthetic_data(d);
    if (b.manifest.train_ids != m.train_ids || b.manifest.test_ids != m.test_ids)
      throw ValidationError("dataset manifest split does not match its seeds: " + manifest_path.string());
    return b;
  }
  const auto csv = *root / "landmarks.csv";
  if (!fs::exists(csv)) throw ValidationError("data root has neither manifest.json nor landmarks.csv: " + root->string());
  auto all = data::ingest_external(*root / "images", csv);
  data::DatasetManifest m;
  m.n_identities = static_cast<int>(data::identities_of(all).size());
  m.split_seed = cfg.dataset.split_seed;
  return assemble(std::move(all), cfg.dataset, m, false);
}

inline std::string sample_file_name(const data::FaceSample& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d_%s.png", s.identity, data::kEmotionNames[s.emotion]);
  return buf;
}

/// Writes images, the landmark CSV (pixel units, the external ingestion format) and the manifest.
inline void write_dataset(const DataBundle& b, const fs::path& dir) {
  ensure_dir(dir / "images");
  std::ostringstream csv;
  csv << "file,identity,emotion";
  for (int p = 1; p <= data::kNumLandmarks; ++p) csv << ",x" << p << ",y" << p;
  csv << '\n';
  csv << std::setprecision(9);
  for (const auto& s : b.all) {
    const auto name = sample_file_name(s);
    data::write_png(dir / "images" / name, s.image);
    csv << name << ',' << s.identity << ',' << s.emotion;
    for (double v : s.landmarks) csv << ',' << data::denormalize_coordinate(v);
    csv << '\n';
  }
  write_text(dir / "landmarks.csv", csv.str());
  write_text(dir / "manifest.json", b.manifest.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

/// Entries of `a` whose names start with `prefix`, names kept intact.
inline std::map<std::string, Tensor<float>> subset(const nn::TensorArchive& a, const std::string& prefix) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [name, t] : a.entries())
    if (name.compare(0, prefix.size(), prefix) == 0) out.emplace(name, t);
  return out;
}

inline nn::TensorArchive load_checkpoint(const fs::path& p, const std::string& what) {
  require_file(p, what);
  try {
    return nn::load_archive(p);
  } catch (const nn::ArchiveError& e) {
    throw ValidationError("corrupt " + what + " " + p.string() + ": " + e.what());
  }
}

inline std::unique_ptr<model::EmbeddingNet<float>> embedding_from(const nn::TensorArchive& a, const fs::path& p) {
  auto e = std::make_unique<model::EmbeddingNet<float>>();
  const auto s = subset(a, "E.");
  if (s.empty()) throw ValidationError("checkpoint has no E.* tensors: " + p.string());
  try {
    e->load_state(s);
  } catch (const std::exception& ex) {
    throw ValidationError("incompatible embedding checkpoint " + p.string() + ": " + ex.what());
  }
  return e;
}

inline std::unique_ptr<model::EmbeddingNet<float>> load_embedding(const fs::path& p) {
  return embedding_from(load_checkpoint(p, "embedding checkpoint"), p);
}

/// Generator architecture recovered from tensor shapes.
inline model::GanConfig architecture_of(const nn::TensorArchive& a, const std::string& g) {
  if (!a.contains(g + ".enc_in.0.weight")) throw ValidationError("checkpoint has no " + g + ".* generator");
  model::GanConfig c;
  const int c1 = a.at(g + ".enc_in.0.weight").dim(0);
  if (c1 < 1 || 64 % c1 != 0) throw ValidationError("unsupported generator width in checkpoint");
  c.width_divisor = 64 / c1;
  c.skip = a.at(g + ".out.0.weight").dim(0) == 2 * c1 ? model::SkipMode::concat : model::SkipMode::add;
  c.bn_before_tanh = a.contains(g + ".out.4.gamma");
  return c;
}

struct TransferModel {
  std::unique_ptr<model::EmbeddingNet<float>> e;  // null for SPG
  std::unique_ptr<model::Generator<float>> g;

  nn::Tensor<float> run(const nn::Tensor<float>& images, const std::vector<data::LandmarkVector>& landmarks) const {
    if (g->is_spg()) return model::spg_transfer(images, landmarks, *g);
    nn::Tensor<float> lm(nn::Shape{static_cast<int>(landmarks.size()), data::kLandmarkDims});
    for (std::size_t i = 0; i < landmarks.size(); ++i)
      std::copy(landmarks[i].begin(), landmarks[i].end(), lm.values().begin() + i * data::kLandmarkDims);
    return model::transfer(images, lm, *e, *g);
  }
};

inline TransferModel load_transfer_model(const fs::path& p) {
  const auto a = load_checkpoint(p, "generator checkpoint");
  TransferModel m;
  const bool spg = a.contains("SPG.enc_in.0.weight");
  const std::string prefix = spg ? "SPG" : "G";
  m.g = std::make_unique<model::Generator<float>>(architecture_of(a, prefix), 0, spg, prefix);
  // SPG critic tensors share the SPG. prefix.
  std::map<std::string, Tensor<float>> gs;
  for (auto& [k, v] : subset(a, prefix + "."))
    if (k.rfind(prefix + ".D.", 0) != 0) gs.emplace(k, v);
  try {
    m.g->load_state(gs);
  } catch (const std::exception& ex) {
    throw ValidationError("incompatible generator checkpoint " + p.string() + ": " + ex.what());
  }
  if (!spg) m.e = embedding_from(a, p);
  return m;
}

inline void save_archive_file(const nn::TensorArchive& a, const fs::path& p) {
  try {
    nn::save_archive(a, p);
  } catch (const nn::ArchiveError& e) {
    throw ValidationError(e.what());
  }
}

inline nn::Tensor<float> scalar_tensor(double v) { return nn::Tensor<float>(nn::Shape{1}, static_cast<float>(v)); }

// ---------------------------------------------------------------------------------------------
// Run manifests

inline json checkpoint_record(const fs::path& p) { return {{"path", p.string()}, {"sha1", file_sha1(p)}}; }

inline void write_run_manifest(const fs::path& path, const std::string& command, const ExperimentConfig& cfg,
                               const DataBundle& data, const json& inputs, const json& outputs, const json& extra = {}) {
  json m = {{"command", command},
            {"config", to_json(cfg)},
            {"dataset", data.manifest.to_json()},
            {"synthetic_dataset", data.synthetic},
            {"inputs", inputs},
            {"outputs", outputs}};
  const auto eo = cfg.embedding_options();
  const auto go = cfg.gan_options();
  m["effective_weights"] = {{"lambda_contr", eo.loss.lambda_contr},
                            {"lambda_gr", eo.loss.lambda_gr},
                            {"lambda_ir", go.gan.lambda_ir},
                            {"lambda_adv", go.gan.lambda_adv},
                            {"lambda_gp", go.gan.lambda_gp}};
  if (!extra.is_null()) m["run"] = extra;
  write_text(path, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------
// Training stages

using ProgressFn = std::function<void(const std::string&)>;

struct EmbedStageResult {
  fs::path checkpoint;
  std::vector<model::EmbeddingEpoch> history;
};

/// Stage 1. Writes `embed.gca`, `embed.optim.gca`, `embed_history.csv` and `embed_run.json` into
/// `out` after every epoch. `resume` names a previous `embed.gca`; its optimizer state and history
/// are read from the same directory.
inline EmbedStageResult train_embed_stage(const ExperimentConfig& cfg, const DataBundle& data, const fs::path& out,
                                          const std::optional<fs::path>& resume = {}, const ProgressFn& log = {}) {
  ensure_dir(out);
  model::EmbeddingNet<float> e(cfg.embed.seed);
  model::EmbeddingTrainer<float> trainer(e, cfg.embedding_options());
  if (resume) {
    const auto a = load_checkpoint(*resume, "resume checkpoint");
    e.load_state(subset(a, "E."));
    const auto dir = resume->parent_path();
    const auto opt = load_checkpoint(dir / "embed.optim.gca", "optimizer state");
    std::ifstream hist(dir / "embed_history.csv");
    if (!hist) throw ValidationError("missing history file " + (dir / "embed_history.csv").string());
    auto history = model::read_embedding_history(hist);
    const long done = static_cast<long>(opt.at("meta.epochs_done")[0]);
    history.resize(std::min<std::size_t>(history.size(), done));
    trainer.restore(done, history, opt.extract("adam."));
  }
  EmbedStageResult r;
  r.checkpoint = out / "embed.gca";
  auto save = [&]() {
    nn::TensorArchive a;
    a.insert_all(e.state());
    save_archive_file(a, r.checkpoint);
    nn::TensorArchive o;
    o.insert_all(trainer.optimizer().state(), "adam.");
    o.insert("meta.epochs_done", scalar_tensor(static_cast<double>(trainer.epochs_done())));
    save_archive_file(o, out / "embed.optim.gca");
    std::ostringstream h;
    model::write_embedding_history(h, trainer.history());
    write_text(out / "embed_history.csv", h.str());
    json inputs = json::object();
    if (resume) inputs["resume"] = checkpoint_record(*resume);
    write_run_manifest(out / "embed_run.json", "train embed", cfg, data, inputs,
                       {{"checkpoint", checkpoint_record(r.checkpoint)}},
                       {{"epochs_done", trainer.epochs_done()}});
  };
  trainer.train(data.split.train, data.triplets, [&](const model::EmbeddingEpoch& ep) {
    save();
    if (log) {
      std::ostringstream m;
      m << "embed epoch " << ep.epoch << " L_contr " << ep.contr << " L_gr " << ep.gr << " L_E " << ep.total;
      log(m.str());
    }
  });
  if (trainer.epochs_done() == 0 || !fs::exists(r.checkpoint)) save();
  r.history = trainer.history();
  return r;
}

struct GanStageResult {
  fs::path checkpoint;
  std::vector<model::GanEpoch> history;
};

/// Fixed preview grid: input, generated and target rows for the first eight triplets.
inline nn::Tensor<float> preview_grid(const DataBundle& data, const model::EmbeddingNet<float>* e,
                                      const model::Generator<float>& g, std::size_t count = 8) {
  const auto& tr = data.split.train;
  count = std::min(count, data.triplets.size());
  std::vector<std::size_t> in, tgt;
  std::vector<data::LandmarkVector> lm;
  for (std::size_t i = 0; i < count; ++i) {
    in.push_back(data.triplets[i].input);
    tgt.push_back(data.triplets[i].target);
    lm.push_back(tr[data.triplets[i].target].landmarks);
  }
  const auto images = data::image_batch<float>(tr, in);
  const auto out = g.is_spg() ? model::spg_transfer(images, lm, g)
                              : model::transfer(images, data::landmark_batch<float>(tr, tgt), *e, g);
  std::vector<nn::Tensor<float>> a, b, c;
  for (std::size_t i = 0; i < count; ++i) {
    a.push_back(tr[in[i]].image);
    b.push_back(nn::take_sample(out, static_cast<int>(i)));
    c.push_back(tr[tgt[i]].image);
  }
  return eval::comparison_grid(a, b, c);
}

/// Stage 2. The embedding checkpoint is required unless the SPG baseline is selected. Writes
/// `gan.gca` (E.*, G.*, D.* or SPG.*), `gan.optim.gca`, `gan_history.csv`, `gan_run.json` and
/// optional `samples/step_*.png` after every epoch.
inline GanStageResult train_gan_stage(const ExperimentConfig& cfg, const DataBundle& data, const fs::path& out,
                                      const std::optional<fs::path>& embed_checkpoint,
                                      const std::optional<fs::path>& resume = {}, const ProgressFn& log = {}) {
  const bool spg = cfg.ablation.spg;
  std::unique_ptr<model::EmbeddingNet<float>> e;
  if (!spg) {
    if (!embed_checkpoint) throw ValidationError("train gan needs a stage-1 checkpoint (--checkpoint)");
    require_file(*embed_checkpoint, "stage-1 checkpoint");
    e = embedding_from(load_checkpoint(*embed_checkpoint, "stage-1 checkpoint"), *embed_checkpoint);
  }
  ensure_dir(out);
  const std::string gp = spg ? "SPG" : "G", dp = spg ? "SPG.D" : "D";
  const auto opt = cfg.gan_options();
  model::Generator<float> g(opt.gan, cfg.gan.seed, spg, gp);
  model::Discriminator<float> d(opt.gan, cfg.gan.seed + 1, dp);
  model::GanTrainer<float> trainer(g, d, e.get(), opt);
  if (resume) {
    const auto a = load_checkpoint(*resume, "resume checkpoint");
    std::map<std::string, Tensor<float>> gs, ds;
    for (auto& [k, v] : subset(a, gp + ".")) (k.rfind(dp + ".", 0) == 0 ? ds : gs).emplace(k, v);
    if (!spg) ds = subset(a, dp + ".");
    g.load_state(gs);
    d.load_state(ds);
    const auto dir = resume->parent_path();
    const auto o = load_checkpoint(dir / "gan.optim.gca", "optimizer state");
    std::ifstream hist(dir / "gan_history.csv");
    if (!hist) throw ValidationError("missing history file " + (dir / "gan_history.csv").string());
    auto history = model::read_gan_history(hist);
    const long done = static_cast<long>(o.at("meta.epochs_done")[0]);
    history.resize(std::min<std::size_t>(history.size(), done));
    trainer.restore(done, history, o.extract("gen."), o.extract("critic."));
  }
  if (cfg.gan.sample_every > 0) {
    ensure_dir(out / "samples");
    trainer.set_step_hook(
        [&](long step, const model::Generator<float>& gen) {
          char name[64];
          std::snprintf(name, sizeof name, "step_%06ld.png", step);
          data::write_png(out / "samples" / name, preview_grid(data, e.get(), gen));
        },
        cfg.gan.sample_every);
  }
  GanStageResult r;
  r.checkpoint = out / "gan.gca";
  auto save = [&]() {
    nn::TensorArchive a;
    if (e) a.insert_all(e->state());
    a.insert_all(g.state());
    a.insert_all(d.state());
    save_archive_file(a, r.checkpoint);
    nn::TensorArchive o;
    o.insert_all(trainer.generator_optimizer().state(), "gen.");
    o.insert_all(trainer.critic_optimizer().state(), "critic.");
    o.insert("meta.epochs_done", scalar_tensor(static_cast<double>(trainer.epochs_done())));
    save_archive_file(o, out / "gan.optim.gca");
    std::ostringstream h;
    model::write_gan_history(h, trainer.history());
    write_text(out / "gan_history.csv", h.str());
    json inputs = json::object();
    if (embed_checkpoint && !spg) inputs["embedding"] = checkpoint_record(*embed_checkpoint);
    if (resume) inputs["resume"] = checkpoint_record(*resume);
    write_run_manifest(out / "gan_run.json", "train gan", cfg, data, inputs,
                       {{"checkpoint", checkpoint_record(r.checkpoint)}},
                       {{"epochs_done", trainer.epochs_done()}, {"generator_steps", trainer.generator_steps()}});
  };
  trainer.train(data.split.train, data.triplets, [&](const model::GanEpoch& ep) {
    save();
    if (log) {
      std::ostringstream m;
      m << "gan epoch " << ep.epoch << " L_ir " << ep.ir << " L_discr " << ep.discr << " L_gen " << ep.gen << " GP "
        << ep.gp;
      log(m.str());
    }
  });
  if (trainer.epochs_done() == 0 || !fs::exists(r.checkpoint)) save();
  r.history = trainer.history();
  return r;
}

struct RegressorStageResult {
  fs::path checkpoint;
  std::vector<double> history;
  double test_mae = 0;
};

/// Trains the landmark regressor on renders of the training identities and reports its error on
/// the test split.
inline RegressorStageResult train_regressor_stage(const ExperimentConfig& cfg, const DataBundle& data, const fs::path& out,
                                                  const ProgressFn& log = {}) {
  if (!data.synthetic) throw ValidationError("the landmark regressor needs the synthetic renderer");
  ensure_dir(out);
  const auto train = eval::regressor_training_set(data.split.train_ids, data.manifest.seed,
                                                  cfg.eval.regressor_per_identity, cfg.eval.regressor_seed);
  eval::LandmarkRegressor r(cfg.eval.regressor_seed, cfg.eval.regressor_width_divisor);
  eval::RegressorTrainOptions opt;
  opt.adam = cfg.optim.adam();
  opt.epochs = cfg.eval.regressor_epochs;
  opt.batch_size = cfg.optim.batch_size;
  opt.seed = cfg.eval.regressor_seed;
  RegressorStageResult res;
  res.history = eval::train_regressor(r, train, opt, [&](long e, double loss) {
    if (log) log("regressor epoch " + std::to_string(e) + " mse " + std::to_string(loss));
  });
  res.test_mae = eval::regressor_mae(r, data.split.test);
  res.checkpoint = out / "regressor.gca";
  nn::TensorArchive a;
  a.insert_all(r.state());
  save_archive_file(a, res.checkpoint);
  std::ostringstream h;
  h << "epoch,mse\n";
  for (std::size_t i = 0; i < res.history.size(); ++i) h << i << ',' << nn::exact(res.history[i]) << '\n';
  write_text(out / "regressor_history.csv", h.str());
  write_run_manifest(out / "regressor_run.json", "train regressor", cfg, data, json::object(),
                     {{"checkpoint", checkpoint_record(res.checkpoint)}}, {{"test_mae", res.test_mae}});
  return res;
}

inline std::unique_ptr<eval::LandmarkRegressor> load_regressor(const fs::path& p) {
  const auto a = load_checkpoint(p, "regressor checkpoint");
  const auto s = subset(a, "R.");
  if (!a.contains("R.0.weight")) throw ValidationError("checkpoint has no R.* tensors: " + p.string());
  const int c = a.at("R.0.weight").dim(0);
  if (c < 1 || 32 % c != 0) throw ValidationError("unsupported regressor width in " + p.string());
  auto r = std::make_unique<eval::LandmarkRegressor>(0, 32 / c);
  r->load_state(s);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Reports

struct Table1Row {
  std::string model;
  eval::ReconstructionMetrics metrics;
};

inline std::vector<Table1Row> table1(const DataBundle& data, const std::vector<std::pair<std::string, fs::path>>& models) {
  std::vector<Table1Row> rows;
  for (const auto& [name, path] : models) {
    const auto m = load_transfer_model(path);
    rows.push_back({name, eval::reconstruction_metrics(data.split.test, m.e.get(), *m.g)});
  }
  return rows;
}

inline void write_table1(const fs::path& p, const std::vector<Table1Row>& rows) {
  std::ostringstream s;
  s << "model,ssim,psnr,count\n" << std::setprecision(9);
  for (const auto& r : rows) s << r.model << ',' << r.metrics.ssim << ',' << r.metrics.psnr << ',' << r.metrics.count << '\n';
  write_text(p, s.str());
}

struct Table2Row {
  std::string model;
  eval::TransferMetrics metrics;
};

/// Cross-subject transfer metrics. Expression similarity is measured with `metric_embedding` for
/// every model, so rows share one yardstick.
inline std::vector<Table2Row> table2(const ExperimentConfig& cfg, const DataBundle& data,
                                     const std::vector<std::pair<std::string, fs::path>>& models,
                                     const fs::path& metric_embedding, const fs::path& regressor) {
  const auto pairs = eval::cross_subject_pairs(data.split.test, cfg.eval.transfers, cfg.eval.seed);
  const auto yardstick = load_embedding(metric_embedding);
  const auto r = load_regressor(regressor);
  std::vector<Table2Row> rows;
  for (const auto& [name, path] : models) {
    const auto m = load_transfer_model(path);
    rows.push_back({name, eval::transfer_metrics(data.split.test, pairs, m.e.get(), *m.g, *yardstick, *r, cfg.eval.tau_id)});
  }
  return rows;
}

inline void write_table2(const fs::path& p, const std::vector<Table2Row>& rows) {
  std::ostringstream s;
  s << "model,identity_rate,identity_ssim,expression_similarity,count,zero_norm\n" << std::setprecision(9);
  for (const auto& r : rows)
    s << r.model << ',' << r.metrics.identity_rate << ',' << r.metrics.identity_ssim << ','
      << r.metrics.expression_similarity << ',' << r.metrics.count << ',' << r.metrics.zero_norm << '\n';
  write_text(p, s.str());
}

/// Embeddings of every sample, with optional interpolation path overlay.
inline eval::ManifoldDump manifold_of(const data::Dataset& samples, const model::EmbeddingNet<float>& e,
                                      const std::vector<std::vector<double>>& path = {}) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto z = e.embed(data::landmark_batch<float>(samples, idx));
  std::vector<eval::ManifoldRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    eval::ManifoldRow r;
    r.z = eval::to_doubles(z, i, model::kEmbeddingDim);
    r.label = samples[i].emotion;
    r.identity = samples[i].identity;
    rows.push_back(std::move(r));
  }
  return eval::manifold_dump(std::move(rows), path);
}

inline double emotion_silhouette(const eval::ManifoldDump& d) {
  std::vector<std::vector<double>> pts;
  std::vector<int> labels;
  for (const auto& r : d.rows)
    if (r.label >= 0) pts.push_back(r.z), labels.push_back(r.label);
  return eval::silhouette_score(pts, labels);
}

}  // namespace gcgan::app
