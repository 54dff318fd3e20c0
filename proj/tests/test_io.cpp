#include <doctest.h>

#include <cstdio>
#include <unistd.h>
#include <filesystem>

#include "adamae/io.hpp"

using namespace adamae;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("adamae_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("avid round trip is bitwise") {
  TempDir dir;
  Rng rng(301);
  RawVideo v;
  v.channels = 3;
  v.frames = 4;
  v.height = 8;
  v.width = 8;
  v.data.resize(3 * 4 * 8 * 8);
  for (auto& x : v.data) x = static_cast<float>(rng.normal());
  const std::string path = dir.file("clip.avid");
  write_avid(path, v);
  RawVideo back = read_avid(path);
  CHECK(back.channels == v.channels);
  CHECK(back.frames == v.frames);
  CHECK(back.height == v.height);
  CHECK(back.width == v.width);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(std::bit_cast<std::uint32_t>(back.data[i]) ==
          std::bit_cast<std::uint32_t>(v.data[i]));
}

TEST_CASE("corrupt avid magic is rejected") {
  TempDir dir;
  const std::string path = dir.file("bad.avid");
  bin::spit(path, "AVIX" + std::string(12, '\0'));
  CHECK_THROWS_AS((void)read_avid(path), IoError);
  CHECK_THROWS_AS((void)read_avid(dir.file("missing.avid")), IoError);
}

TEST_CASE("corpus round trips through the directory format") {
  TempDir dir;
  RunConfig cfg = toy_config();
  Rng rng(302);
  Corpus<float> corpus = make_corpus<float>(cfg, dir.path.string(), 8, rng);
  Corpus<float> back = read_corpus<float>(dir.path.string());
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back.names[i] == corpus.names[i]);
    CHECK(back.labels[i] == corpus.labels[i]);
    CHECK(back.activity[i].active == corpus.activity[i].active);
    for (std::size_t k = 0; k < corpus.videos[i].data.numel(); ++k)
      CHECK(back.videos[i].data[k] == corpus.videos[i].data[k]);
  }
}

TEST_CASE("pgm export layout and content") {
  TempDir dir;
  PatchGeometry g = token_grid_geometry(3, 8, 32, 32, 2, 8, 8);
  SUBCASE("uniform probabilities render constant gray") {
    Tensor<double> uniform({g.tokens}, 1.0 / 64);
    const std::string path = dir.file("probs.pgm");
    export_probability_map(uniform, g, path);
    const std::string bytes = bin::slurp(path);
    const std::string header = "P5\n4 16\n255\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    const std::string body = bytes.substr(header.size());
    REQUIRE(body.size() == 64);
    for (char c : body) CHECK(c == body[0]);
    // sidecar holds the raw values
    const std::string sidecar = bin::slurp(path + ".txt");
    CHECK(sidecar.find("0.015625") != std::string::npos);
  }
  SUBCASE("a single peak lands on the right pixel") {
    Tensor<double> p({g.tokens}, 0.0001);
    const std::size_t tt = 2, hh = 1, ww = 3;
    p[g.token_index(tt, hh, ww)] = 0.9;
    const std::string path = dir.file("peak.pgm");
    export_probability_map(p, g, path);
    const std::string bytes = bin::slurp(path);
    const std::string body = bytes.substr(std::string("P5\n4 16\n255\n").size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < body.size(); ++i)
      if (static_cast<unsigned char>(body[i]) >
          static_cast<unsigned char>(body[best]))
        best = i;
    const std::size_t y = best / g.grid_w, x = best % g.grid_w;
    CHECK(x == ww);
    CHECK(y == tt * g.grid_h + hh);
  }
  SUBCASE("mask image is white where visible") {
    Rng rng(303);
    MaskSpec spec = MaskSpec::from_visible({0, 5}, g.tokens);
    const std::string path = dir.file("mask.pgm");
    export_mask_image(spec, g, path);
    const std::string bytes = bin::slurp(path);
    const std::string body = bytes.substr(std::string("P5\n4 16\n255\n").size());
    CHECK(static_cast<unsigned char>(body[0]) == 255);
    CHECK(static_cast<unsigned char>(body[5]) == 255);
    CHECK(static_cast<unsigned char>(body[1]) == 0);
  }
}

TEST_CASE("metrics csv round trips") {
  TempDir dir;
  SUBCASE("empty run writes header only") {
    const std::string path = dir.file("empty.csv");
    export_metrics({}, path);
    CHECK(bin::slurp(path) == "step,L_R,L_S,lr,fg_mass,ms_per_step\n");
    CHECK(read_metrics(path).empty());
  }
  SUBCASE("rows parse back within 1e-9") {
    std::vector<StepMetrics> rows;
    Rng rng(304);
    for (int i = 0; i < 25; ++i) {
      StepMetrics m;
      m.step = static_cast<std::uint64_t>(i);
      m.loss_recon = rng.normal();
      m.loss_sampling = rng.normal() * 10;
      m.lr = rng.uniform() * 1e-3;
      m.fg_mass = rng.uniform();
      m.ms_per_step = rng.uniform() * 100;
      rows.push_back(m);
    }
    const std::string path = dir.file("metrics.csv");
    export_metrics(rows, path);
    auto back = read_metrics(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].step == rows[i].step);
      CHECK(back[i].loss_recon ==
            doctest::Approx(rows[i].loss_recon).epsilon(1e-9));
      CHECK(back[i].loss_sampling ==
            doctest::Approx(rows[i].loss_sampling).epsilon(1e-9));
      CHECK(back[i].lr == doctest::Approx(rows[i].lr).epsilon(1e-9));
      CHECK(back[i].fg_mass ==
            doctest::Approx(rows[i].fg_mass).epsilon(1e-9));
    }
  }
}

TEST_CASE("config json round trips and dotted overrides work") {
  RunConfig cfg = toy_config();
  cfg.rho = 0.93;
  cfg.optim.base_lr = 0.0123;
  RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.rho == cfg.rho);
  CHECK(back.optim.base_lr == cfg.optim.base_lr);
  CHECK(back.arch.dim == cfg.arch.dim);

  set_config_key(back, "optim.batch_size", "16");
  CHECK(back.optim.batch_size == 16);
  set_config_key(back, "mask.strategy", "tube");
  CHECK(back.strategy == "tube");
  set_config_key(back, "precision", "f32");
  CHECK(back.precision == "f32");
  CHECK_THROWS_AS(set_config_key(back, "nope.nothing", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_key(back, "mask.rho", "1.5"), ConfigError);
}

TEST_CASE("checkpoint save/load/save produces identical bytes") {
  TempDir dir;
  RunConfig cfg = toy_config();
  cfg.seed = 305;
  cfg.optim.batch_size = 2;
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = [&] {
    Rng rng(306);
    return generate_corpus<double>(cfg, 8, rng);
  }();
  pretrain(state, corpus, 3, nullptr, nullptr);

  const std::string p1 = dir.file("a.ckpt"), p2 = dir.file("b.ckpt");
  save_checkpoint(state, p1);
  ModelState<double> loaded = load_checkpoint<double>(p1);
  save_checkpoint(loaded, p2);
  CHECK(bin::slurp(p1) == bin::slurp(p2));

  CHECK(loaded.step == state.step);
  CHECK(loaded.rng.state() == state.rng.state());
  for (std::size_t i = 0; i < state.params.size(); ++i)
    for (std::size_t k = 0; k < state.params[i].value.numel(); ++k)
      CHECK(loaded.params[i].value[k] == state.params[i].value[k]);
}

TEST_CASE("checkpoint magic and architecture mismatches fail loudly") {
  TempDir dir;
  RunConfig cfg = toy_config();
  ModelState<double> state = init_model_state<double>(cfg);
  const std::string path = dir.file("model.ckpt");
  save_checkpoint(state, path);

  SUBCASE("corrupt magic") {
    std::string bytes = bin::slurp(path);
    bytes[0] = 'X';
    bin::spit(path, bytes);
    CHECK_THROWS_AS((void)load_checkpoint<double>(path), IoError);
  }
  SUBCASE("truncation") {
    std::string bytes = bin::slurp(path);
    bin::spit(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS((void)load_checkpoint<double>(path), IoError);
  }
}

TEST_CASE("resume reproduces the uninterrupted run") {
  TempDir dir;
  RunConfig cfg = toy_config();
  cfg.optim.batch_size = 4;
  cfg.optim.total_steps = 12;
  cfg.optim.warmup_steps = 2;
  cfg.optim.base_lr = 0.02;
  Rng data_rng(307);
  Corpus<double> corpus = generate_corpus<double>(cfg, 8, data_rng);

  // uninterrupted
  ModelState<double> full = init_model_state<double>(cfg);
  std::vector<StepMetrics> full_metrics;
  pretrain(full, corpus, 12, &full_metrics, nullptr);

  // interrupted at step 6
  ModelState<double> half = init_model_state<double>(cfg);
  std::vector<StepMetrics> half_metrics;
  pretrain(half, corpus, 6, &half_metrics, nullptr);
  const std::string path = dir.file("resume.ckpt");
  save_checkpoint(half, path);
  ModelState<double> resumed = load_checkpoint<double>(path);
  std::vector<StepMetrics> tail_metrics;
  pretrain(resumed, corpus, 6, &tail_metrics, nullptr);

  REQUIRE(tail_metrics.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const StepMetrics& a = full_metrics[6 + i];
    const StepMetrics& b = tail_metrics[i];
    CHECK(a.step == b.step);
    CHECK(a.loss_recon == b.loss_recon);      // bitwise
    CHECK(a.loss_sampling == b.loss_sampling);
    CHECK(a.lr == b.lr);
    CHECK(a.fg_mass == b.fg_mass);
  }
  for (std::size_t i = 0; i < full.params.size(); ++i)
    for (std::size_t k = 0; k < full.params[i].value.numel(); ++k)
      CHECK(full.params[i].value[k] == resumed.params[i].value[k]);
}
