// End-to-end acceptance run. Trains every model variant once with the desk budget (cached in an
// artifact directory, resumed if interrupted) and prints one PASS/FAIL line per criterion.
//
//   gcgan_acceptance [ARTIFACT_DIR]
//
// ARTIFACT_DIR defaults to $GCGAN_ACCEPTANCE_DIR, else ./acceptance_artifacts. A JSON config in
// $GCGAN_ACCEPTANCE_CONFIG replaces the desk budget (smoke runs).
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "gcgan/app/config.hpp"
#include "gcgan/app/pipeline.hpp"
#include "gcgan/nn/gradcheck.hpp"

namespace {

using namespace gcgan;
namespace fs = std::filesystem;
using nlohmann::json;
using nn::LayerSpec;
using nn::Mode;
using nn::Shape;
using nn::Tensor;
using nn::Var;

// Tolerances.
constexpr double kLossTol = 1e-6;
constexpr double kTelescopeTol = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGpClosedFormTol = 1e-5;
constexpr double kMinSsim = 0.70;
constexpr double kMinPsnr = 20.0;
constexpr double kResumeRelTol = 0.05;
constexpr double kMaxRegressorMae = 0.05;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += " [failed: " + what + "]";
    }
  }
};

void report(int n, const Verdict& v) {
  std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << " " << v.detail.str() << v.failures << std::endl;
}

void progress(const std::string& s) { std::cerr << "  " << s << std::endl; }

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0, double min_abs = 0.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<T> t(shape);
  for (auto& v : t.values()) {
    double s;
    do s = dist(rng);
    while (std::abs(s) < min_abs);
    v = static_cast<T>(s);
  }
  return t;
}

template <typename T>
Tensor<T> uniform_images(int batch, std::mt19937_64& rng, int channels = 3, int size = data::kImageSize) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<T> t(Shape{batch, channels, size, size});
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

// ---- criterion 1

Verdict loss_oracles() {
  Verdict v;
  auto contr = [](double d2, double alpha) {
    Tensor<double> a(Shape{1, model::kEmbeddingDim}, 0.0), b(Shape{1, model::kEmbeddingDim}, 0.0);
    a[0] = std::sqrt(d2);
    return model::contrastive_loss(Var<double>(a), Var<double>(b), Tensor<double>(Shape{1}, alpha), 5.0).item();
  };
  const double cases[4][3] = {{0, 0, 0}, {1, 0, 0.5}, {1, 1, 2.0}, {9, 1, 0}};
  double worst = 0;
  for (const auto& c : cases) worst = std::max(worst, std::abs(contr(c[0], c[1]) - c[2]));
  v.check(worst <= kLossTol, "contrastive cases");
  v.detail << "contrastive max err " << worst;

  std::mt19937_64 rng(1);
  const auto g = random_tensor<double>({4, data::kLandmarkDims}, rng), h = random_tensor<double>({4, data::kLandmarkDims}, rng);
  double gr = 0;
  for (std::size_t i = 0; i < g.size(); ++i) gr += (g[i] - h[i]) * (g[i] - h[i]);
  gr /= 4;
  const double gr_err = std::abs(model::landmark_recon_loss(Var<double>(g), Var<double>(h)).item() - gr);
  const auto x = uniform_images<double>(3, rng), y = uniform_images<double>(3, rng);
  double ir = 0;
  for (std::size_t i = 0; i < x.size(); ++i) ir += std::abs(x[i] - y[i]);
  ir /= static_cast<double>(x.size());
  const double ir_err = std::abs(model::image_recon_loss(Var<double>(x), Var<double>(y)).item() - ir);
  v.check(gr_err <= kLossTol && ir_err <= kLossTol, "L_gr/L_ir arithmetic");
  v.detail << ", L_gr err " << gr_err << ", L_ir err " << ir_err;

  model::GanConfig slim;
  slim.width_divisor = 8;
  model::Discriminator<float> d(slim, 8);
  const auto critic = model::as_critic(d);
  double tele = 0;
  for (int t = 0; t < 20; ++t) {
    const Var<float> real(uniform_images<float>(4, rng)), fake(uniform_images<float>(4, rng));
    const auto s = model::critic_scores(critic, real, fake);
    tele = std::max<double>(tele, std::abs(model::critic_loss(s).item() + model::generator_adv_loss(s.fake).item() + s.real.item()));
  }
  v.check(tele <= kTelescopeTol, "telescoping identity");
  v.detail << ", telescoping max err " << tele << " over 20 batches";
  return v;
}

// ---- criterion 2

Verdict gradient_checks() {
  Verdict v;
  struct Case {
    const char* name;
    Shape input;
    std::vector<LayerSpec> specs;
    double min_abs = 0.0;
  };
  const std::vector<Case> cases = {
      {"conv", {2, 6, 6}, {LayerSpec::conv(3, 5, 2)}},
      {"conv_s1", {2, 5, 5}, {LayerSpec::conv(2, 5, 1)}},
      {"deconv", {3, 3, 3}, {LayerSpec::deconv(2, 5, 2)}},
      {"fc", {7}, {LayerSpec::fc(4)}},
      {"bn", {3, 3, 3}, {LayerSpec::bn()}},
      {"ln", {3, 3, 3}, {LayerSpec::ln()}},
      {"relu", {6}, {LayerSpec::relu()}, 0.05},
      {"lrelu", {6}, {LayerSpec::lrelu(0.2)}, 0.05},
      {"tanh", {6}, {LayerSpec::tanh()}},
  };
  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    std::mt19937_64 rng(100);
    nn::ParameterStore<double> store;
    nn::Sequential<double> net(store, c.name, c.input, c.specs, rng);
    Shape in = c.input, out = net.output_shape();
    in.insert(in.begin(), 3);
    out.insert(out.begin(), 3);
    Var<double> x(random_tensor<double>(in, rng, 1.0, c.min_abs), true);
    for (auto& p : store.parameter_list())
      for (auto& e : p.mutable_value().values()) e += 0.3 * std::normal_distribution<double>()(rng);
    const auto r = random_tensor<double>(out, rng);
    std::vector<Var<double>> wrt{x};
    for (auto& p : store.parameter_list()) wrt.push_back(p);
    const auto res = nn::gradient_check<double>(
        [&] { return nn::sum_all(nn::mul(net.forward(x, Mode::train), nn::constant(r))); }, wrt, 1e-3);
    if (res.relative_error > worst) worst = res.relative_error, worst_name = c.name;
  }
  v.check(worst <= kGradRelTol, "layer finite differences");
  v.detail << "layers max rel err " << worst << " (" << worst_name << ")";

  // Contrastive hinge from both sides, both labels.
  double hinge = 0;
  std::mt19937_64 rng(2);
  for (double d2 : {5.0 - 1e-2, 5.0 + 1e-2}) {
    for (double alpha : {0.0, 1.0}) {
      auto dir = random_tensor<double>({1, model::kEmbeddingDim}, rng);
      double n2 = 0;
      for (double e : dir.values()) n2 += e * e;
      for (auto& e : dir.values()) e *= std::sqrt(d2 / n2);
      Var<double> a(dir, true);
      const Var<double> b(Tensor<double>(Shape{1, model::kEmbeddingDim}, 0.0));
      const Tensor<double> lbl(Shape{1}, alpha);
      hinge = std::max(hinge, nn::gradient_check<double>([&] { return model::contrastive_loss(a, b, lbl, 5.0); }, {a}, 1e-6)
                                  .relative_error);
    }
  }
  // Hinge of the penalty itself, (||grad|| - 1)^2, through a nonlinear critic.
  nn::ParameterStore<double> store;
  nn::Sequential<double> net(store, "C", {2, 8, 8},
                             {LayerSpec::conv(3, 5, 2), LayerSpec::ln(), LayerSpec::lrelu(0.2), LayerSpec::fc(1)}, rng);
  for (auto& p : store.parameter_list())
    for (auto& e : p.mutable_value().values()) e += 0.2 * std::normal_distribution<double>()(rng);
  const model::Critic<double> critic = [&](const Var<double>& x) { return nn::mean(net.forward(x, Mode::train), {1}); };
  const auto real = uniform_images<double>(3, rng, 2, 8), fake = uniform_images<double>(3, rng, 2, 8);
  const double gp_fd = nn::gradient_check<double>(
                           [&] {
                             std::mt19937_64 eps(99);
                             return model::gradient_penalty(critic, real, fake, eps);
                           },
                           store.parameter_list(), 1e-5)
                           .relative_error;
  v.check(hinge <= kGradRelTol && gp_fd <= kGradRelTol, "hinge finite differences");
  v.detail << ", contrastive hinge " << hinge << ", GP through critic " << gp_fd;

  // Linear critics: value (1/sqrt(3*64*64) - 1)^2 and parameter gradient 2(|w|-1)w/|w|.
  const model::Critic<double> mean_critic = [](const Var<double>& x) { return nn::mean(x, {1, 2, 3}); };
  const double expected = std::pow(1.0 / std::sqrt(3.0 * 64 * 64) - 1.0, 2);
  const auto r64 = uniform_images<double>(5, rng), f64 = uniform_images<double>(5, rng);
  double closed = std::abs(model::gradient_penalty(mean_critic, r64, f64, rng).item() - expected);
  Tensor<double> wt = random_tensor<double>({1, 2, 4, 4}, rng, 0.3);
  Var<double> w(wt, true);
  const model::Critic<double> linear = [&](const Var<double>& x) {
    return nn::sum(nn::mul(x, nn::concat<double>({w, w, w}, 0)), {1, 2, 3});
  };
  const auto gp = model::gradient_penalty(linear, uniform_images<double>(3, rng, 2, 4), uniform_images<double>(3, rng, 2, 4), rng);
  const auto gw = nn::grad(gp, {w})[0].value();
  double norm = 0;
  for (double e : wt.values()) norm += e * e;
  norm = std::sqrt(norm);
  closed = std::max(closed, std::abs(gp.item() - (norm - 1) * (norm - 1)));
  for (std::size_t i = 0; i < wt.size(); ++i) closed = std::max(closed, std::abs(gw[i] - 2 * (norm - 1) * wt[i] / norm));
  v.check(closed <= kGpClosedFormTol, "GP closed form");
  v.detail << ", GP closed-form max err " << closed;
  return v;
}

// ---- stage caching

json without_epochs(json c) {
  c["embed"].erase("epochs");
  c["gan"].erase("epochs");
  return c;
}

/// 0: train from scratch, 1: resume, 2: finished.
int stage_status(const fs::path& manifest, const app::ExperimentConfig& cfg, long target) {
  if (!fs::exists(manifest)) return 0;
  try {
    const auto m = json::parse(app::read_file(manifest));
    if (without_epochs(m.at("config")) != without_epochs(app::to_json(cfg))) return 0;
    const long done = m.at("run").at("epochs_done").get<long>();
    if (done == target) return 2;
    return done < target ? 1 : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

fs::path ensure_embed(const app::ExperimentConfig& cfg, const app::DataBundle& data, const fs::path& dir) {
  const auto ckpt = dir / "embed.gca";
  const int s = stage_status(dir / "embed_run.json", cfg, cfg.embed.epochs);
  if (s == 2) return ckpt;
  progress("training embedding in " + dir.string());
  app::train_embed_stage(cfg, data, dir, s == 1 ? std::optional<fs::path>(ckpt) : std::nullopt, progress);
  return ckpt;
}

fs::path ensure_gan(const app::ExperimentConfig& cfg, const app::DataBundle& data, const fs::path& dir,
                    const std::optional<fs::path>& embed) {
  const auto ckpt = dir / "gan.gca";
  const int s = stage_status(dir / "gan_run.json", cfg, cfg.gan.epochs);
  if (s == 2) return ckpt;
  progress("training GAN in " + dir.string());
  app::train_gan_stage(cfg, data, dir, embed, s == 1 ? std::optional<fs::path>(ckpt) : std::nullopt, progress);
  return ckpt;
}

struct RegressorRun {
  fs::path checkpoint;
  double mae;
};

RegressorRun ensure_regressor(const app::ExperimentConfig& cfg, const app::DataBundle& data, const fs::path& dir) {
  const auto manifest = dir / "regressor_run.json";
  if (fs::exists(manifest)) {
    const auto m = json::parse(app::read_file(manifest));
    if (m.at("config") == app::to_json(cfg)) return {dir / "regressor.gca", m.at("run").at("test_mae").get<double>()};
  }
  progress("training landmark regressor in " + dir.string());
  const auto r = app::train_regressor_stage(cfg, data, dir, progress);
  return {r.checkpoint, r.test_mae};
}

app::ExperimentConfig variant(app::ExperimentConfig c, bool no_ir, bool no_gr, bool no_contr, bool spg) {
  c.ablation = {no_ir, no_gr, no_contr, spg};
  return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

}  // namespace

int main(int argc, char** argv) {
  std::cout << std::setprecision(6);
  fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_artifacts");
  if (argc <= 1)
    if (const char* env = std::getenv("GCGAN_ACCEPTANCE_DIR"); env && *env) root = env;
  try {
    app::ExperimentConfig cfg = app::desk_config();
    if (const char* env = std::getenv("GCGAN_ACCEPTANCE_CONFIG"); env && *env) cfg = app::load_config(env);
    cfg.validate();
    app::ensure_dir(root);
    std::cerr << "artifacts in " << root << std::endl;

    const auto c1 = loss_oracles();
    const auto c2 = gradient_checks();

    const auto data = app::load_data(cfg, std::nullopt);
    const fs::path runs = root / "runs";
    const auto full_cfg = variant(cfg, false, false, false, false);
    const auto no_ir_cfg = variant(cfg, true, false, false, false);
    const auto no_gr_cfg = variant(cfg, false, true, false, false);
    const auto no_contr_cfg = variant(cfg, false, false, true, false);
    const auto spg_cfg = variant(cfg, false, false, false, true);

    const auto e_full = ensure_embed(full_cfg, data, runs / "full");
    const auto e_no_gr = ensure_embed(no_gr_cfg, data, runs / "no_gr");
    const auto e_no_contr = ensure_embed(no_contr_cfg, data, runs / "no_contr");
    const auto g_full = ensure_gan(full_cfg, data, runs / "full", e_full);
    const auto g_no_ir = ensure_gan(no_ir_cfg, data, runs / "no_ir", e_full);
    const auto g_no_gr = ensure_gan(no_gr_cfg, data, runs / "no_gr", e_no_gr);
    const auto g_no_contr = ensure_gan(no_contr_cfg, data, runs / "no_contr", e_no_contr);
    const auto g_spg = ensure_gan(spg_cfg, data, runs / "spg", std::nullopt);
    const auto reg = ensure_regressor(cfg, data, runs / "regressor");
    const fs::path reports = root / "reports";
    app::ensure_dir(reports);

    // ---- 3: shapes, ranges, frozen embedding
    Verdict c3;
    {
      std::mt19937_64 rng(3);
      const auto e = app::load_embedding(e_full);
      model::Generator<float> g(model::GanConfig{}, 3);
      model::Discriminator<float> d(model::GanConfig{}, 4);
      const auto& test = data.split.test;
      const auto img = data::image_batch<float>(test, {0, 1});
      const auto z_g = e->embed(data::landmark_batch<float>(test, {0, 1}));
      const auto enc = g.encode_identity(Var<float>(img), Mode::train);
      const auto out = g.generate(enc.z_i, Var<float>(z_g), enc.skip, Mode::train).value();
      bool in_range = true;
      for (float x : out.values()) in_range = in_range && x > -1.0f && x < 1.0f;
      c3.check(enc.z_i.shape() == Shape({2, 128}), "z_i shape");
      c3.check(z_g.shape() == Shape({2, 32}), "z_g shape");
      c3.check(d.map(Var<float>(img)).shape() == Shape({2, 1, 2, 2}), "critic map shape");
      c3.check(out.shape() == Shape({2, 3, 64, 64}) && in_range, "full-width output in (-1,1)");
      // Trained model over the whole test split.
      const auto m = app::load_transfer_model(g_full);
      std::vector<std::size_t> idx(test.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      double lo = 1, hi = -1;
      for (std::size_t s = 0; s < idx.size(); s += 64) {
        std::vector<std::size_t> b(idx.begin() + s, idx.begin() + std::min(idx.size(), s + 64));
        const auto y = model::transfer(data::image_batch<float>(test, b), data::landmark_batch<float>(test, b), *m.e, *m.g);
        for (float x : y.values()) lo = std::min<double>(lo, x), hi = std::max<double>(hi, x);
      }
      c3.check(lo > -1 && hi < 1, "trained output range");
      c3.detail << "z_i " << nn::to_string(enc.z_i.shape()) << ", z_g " << nn::to_string(z_g.shape()) << ", map 2x2, trained outputs in ["
                << lo << ", " << hi << "]";
      // Frozen E: the stage-2 checkpoint stores the live embedding state after all epochs.
      const auto stage1 = app::subset(nn::load_archive(e_full), "E.");
      const auto stage2 = app::subset(nn::load_archive(g_full), "E.");
      c3.check(stage1 == stage2, "E changed during stage 2 training");
      // And directly across one full in-memory epoch.
      model::EmbeddingNet<float> e2;
      e2.load_state(stage1);
      const auto before = e2.state();
      model::Generator<float> g2(cfg.gan.net, 5);
      model::Discriminator<float> d2(cfg.gan.net, 6);
      auto opt = full_cfg.gan_options();
      opt.epochs = 1;
      opt.steps_per_epoch = 0;
      const auto small = data::make_dataset(3, 0.1, 17);
      model::GanTrainer<float> trainer(g2, d2, &e2, opt);
      trainer.train(small, data::assemble_triplets(small, 18));
      c3.check(e2.state() == before, "E changed across an epoch");
      c3.detail << ", E bit-identical after " << cfg.gan.epochs << " stage-2 epochs and one extra full epoch";
    }

    // ---- 4: Table 1
    Verdict c4;
    const std::vector<std::pair<std::string, fs::path>> t1_models = {
        {"full", g_full}, {"no_ir", g_no_ir}, {"no_gr", g_no_gr}, {"no_contr", g_no_contr}};
    const auto t1 = app::table1(data, t1_models);
    app::write_table1(reports / "table1.csv", t1);
    for (const auto& r : t1) c4.detail << r.model << " SSIM " << r.metrics.ssim << " PSNR " << r.metrics.psnr << "; ";
    for (std::size_t i = 1; i < t1.size(); ++i)
      c4.check(t1[0].metrics.ssim >= t1[i].metrics.ssim, "full SSIM >= " + t1[i].model);
    c4.check(t1[0].metrics.ssim >= kMinSsim, "SSIM >= 0.70");
    c4.check(t1[0].metrics.psnr >= kMinPsnr, "PSNR >= 20 dB");

    // ---- 9: regressor (reported before 5, which it gates)
    Verdict c9;
    c9.check(reg.mae <= kMaxRegressorMae, "MAE <= 0.05");
    c9.detail << "held-out per-coordinate MAE " << reg.mae;

    // ---- 5: Table 2
    Verdict c5;
    const auto t2 = app::table2(cfg, data, {{"gc_gan", g_full}, {"no_contr", g_no_contr}, {"spg", g_spg}}, e_full, reg.checkpoint);
    app::write_table2(reports / "table2.csv", t2);
    for (const auto& r : t2)
      c5.detail << r.model << " id-rate " << r.metrics.identity_rate << " expr-sim " << r.metrics.expression_similarity << "; ";
    c5.detail << t2[0].metrics.count << " transfers";
    for (std::size_t i = 1; i < t2.size(); ++i) {
      c5.check(t2[0].metrics.identity_rate >= t2[i].metrics.identity_rate, "identity rate >= " + t2[i].model);
      c5.check(t2[0].metrics.expression_similarity >= t2[i].metrics.expression_similarity,
               "expression similarity >= " + t2[i].model);
    }
    c5.check(c9.pass, "gated by criterion 9");

    // ---- 6: continuity
    Verdict c6;
    {
      const auto m = app::load_transfer_model(g_full);
      const int n = cfg.eval.interpolation_steps;
      const auto r = eval::lipschitz_report(data.split.test, *m.e, *m.g, n, cfg.eval.rho_norm);
      std::ostringstream csv;
      eval::write_lipschitz_csv(csv, r);
      app::write_text(reports / "lipschitz.csv", csv.str());
      data::write_png(reports / "lipschitz.png", eval::box_plot(r.samples));
      c6.check(r.all_finite, "finite ratios");
      c6.check(r.skipped == 0, "no skipped pairs");
      // Endpoints: first same-identity pair of every test identity.
      bool exact = true;
      const auto& test = data.split.test;
      for (int id : data.split.test_ids) {
        std::vector<const data::FaceSample*> mine;
        for (const auto& s : test)
          if (s.identity == id && mine.size() < 2) mine.push_back(&s);
        if (mine.size() < 2) continue;
        const data::FaceSample *u = mine[0], *w = mine[1];
        const auto path = eval::interpolate_expression(u->landmarks, w->landmarks, n, u->image, *m.e, *m.g);
        Tensor<float> pair(Shape{2, data::kLandmarkDims});
        std::copy(u->landmarks.begin(), u->landmarks.end(), pair.values().begin());
        std::copy(w->landmarks.begin(), w->landmarks.end(), pair.values().begin() + data::kLandmarkDims);
        const auto z = m.e->embed(pair);
        for (int k = 0; k < model::kEmbeddingDim; ++k)
          exact = exact && path.z_g[n][k] == z[k] && path.z_g[0][k] == z[model::kEmbeddingDim + k];
      }
      c6.check(exact, "interpolation endpoints");
      c6.detail << r.pairs << " pairs, " << r.skipped << " skipped, max rho' " << r.global_max << " (" << n
                << " steps), endpoints bit-exact, lipschitz.csv/png written";
    }

    // ---- 7: manifold
    Verdict c7;
    {
      const auto with = app::load_embedding(e_full), without = app::load_embedding(e_no_contr);
      const double s_with = app::emotion_silhouette(app::manifold_of(data.split.test, *with));
      const double s_without = app::emotion_silhouette(app::manifold_of(data.split.test, *without));
      std::ostringstream csv;
      eval::write_manifold_csv(csv, app::manifold_of(data.split.test, *with));
      app::write_text(reports / "manifold.csv", csv.str());
      c7.check(s_with > s_without, "silhouette with contrastive > without");
      c7.detail << "silhouette " << s_with << " vs " << s_without << " without L_contr";
      // Mean distance between un-jittered prototype embeddings over the test identities.
      double dist[data::kNumEmotions][data::kNumEmotions] = {};
      for (int id : data.split.test_ids) {
        const auto ip = data::draw_identity(data.manifest.seed, id);
        Tensor<float> lm(Shape{data::kNumEmotions, data::kLandmarkDims});
        for (int e = 0; e < data::kNumEmotions; ++e) {
          const auto g = data::landmarks_of(ip, data::prototype(e));
          std::copy(g.begin(), g.end(), lm.values().begin() + e * data::kLandmarkDims);
        }
        const auto z = with->embed(lm);
        for (int a = 0; a < data::kNumEmotions; ++a)
          for (int b = 0; b < data::kNumEmotions; ++b) {
            double d2 = 0;
            for (int k = 0; k < model::kEmbeddingDim; ++k) {
              const double t = z[a * model::kEmbeddingDim + k] - z[b * model::kEmbeddingDim + k];
              d2 += t * t;
            }
            dist[a][b] += std::sqrt(d2);
          }
      }
      int ba = 0, bb = 1;
      for (int a = 0; a < data::kNumEmotions; ++a)
        for (int b = a + 1; b < data::kNumEmotions; ++b)
          if (dist[a][b] < dist[ba][bb]) ba = a, bb = b;
      const auto idx = [](data::Emotion e) { return static_cast<int>(e); };
      c7.check(ba == idx(data::Emotion::disgust) && bb == idx(data::Emotion::squint), "disgust/squint closest");
      c7.detail << ", closest prototypes " << data::kEmotionNames[ba] << "/" << data::kEmotionNames[bb];
    }

    // ---- 8: determinism and persistence
    Verdict c8;
    {
      const fs::path scratch = root / "determinism";
      fs::remove_all(scratch);
      auto short_cfg = full_cfg;
      short_cfg.embed.epochs = 2;
      short_cfg.gan.epochs = 2;
      short_cfg.gan.steps_per_epoch = 2;
      const auto ea = app::train_embed_stage(short_cfg, data, scratch / "a");
      const auto eb = app::train_embed_stage(short_cfg, data, scratch / "b");
      c8.check(ea.history == eb.history, "embedding rerun history");
      // The cached run must share its first epochs with the short rerun.
      std::ifstream cached(runs / "full" / "embed_history.csv");
      auto h = model::read_embedding_history(cached);
      h.resize(std::min(h.size(), ea.history.size()));
      c8.check(h == ea.history, "cached embedding history prefix");
      const auto ga = app::train_gan_stage(short_cfg, data, scratch / "a", ea.checkpoint);
      const auto gb = app::train_gan_stage(short_cfg, data, scratch / "b", eb.checkpoint);
      c8.check(ga.history == gb.history, "GAN rerun history");
      c8.check(app::read_file(ga.checkpoint) == app::read_file(gb.checkpoint), "GAN rerun checkpoint bytes");

      // GCA1 round trip of the trained model.
      const auto archive = nn::load_archive(g_full);
      nn::save_archive(archive, scratch / "roundtrip.gca");
      c8.check(app::read_file(scratch / "roundtrip.gca") == app::read_file(g_full), "GCA1 bytes");
      c8.check(nn::load_archive(scratch / "roundtrip.gca").entries() == archive.entries(), "GCA1 tensors");

      // Interrupt after one epoch and resume.
      auto one = short_cfg;
      one.embed.epochs = 1;
      one.gan.epochs = 1;
      app::train_embed_stage(one, data, scratch / "r");
      const auto er = app::train_embed_stage(short_cfg, data, scratch / "r", scratch / "r" / "embed.gca");
      app::train_gan_stage(one, data, scratch / "r", er.checkpoint);
      const auto gr = app::train_gan_stage(short_cfg, data, scratch / "r", er.checkpoint, scratch / "r" / "gan.gca");
      const double de = rel(er.history.back().total, ea.history.back().total);
      const double dg = std::max(rel(gr.history.back().ir, ga.history.back().ir), rel(gr.history.back().gen, ga.history.back().gen));
      c8.check(de <= kResumeRelTol && dg <= kResumeRelTol, "resume within 5%");
      c8.detail << "reruns bit-identical, GCA1 round trip bit-exact, resume rel. diff embed " << de << " GAN " << dg
                << (er.history == ea.history && gr.history == ga.history ? " (bit-identical)" : "");
      fs::remove_all(scratch);
    }

    report(1, c1);
    report(2, c2);
    report(3, c3);
    report(4, c4);
    report(5, c5);
    report(6, c6);
    report(7, c7);
    report(8, c8);
    report(9, c9);
    const bool all = c1.pass && c2.pass && c3.pass && c4.pass && c5.pass && c6.pass && c7.pass && c8.pass && c9.pass;
    std::cout << (all ? "all criteria pass" : "some criteria fail") << std::endl;
    return all ? 0 : 1;
  } catch (const std::exception& e) {
    std::cout << "acceptance run aborted: " << e.what() << std::endl;
    return 2;
  }
}
