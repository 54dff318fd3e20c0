#include <doctest.h>

#include <cmath>

#include "adamae/io.hpp"
#include "adamae/trainer.hpp"

using namespace adamae;

namespace {

RunConfig small_train_config() {
  RunConfig cfg = toy_config();
  cfg.optim.batch_size = 4;
  cfg.optim.total_steps = 50;
  cfg.optim.warmup_steps = 5;
  cfg.optim.base_lr = 0.02;
  return cfg;
}

Corpus<double> small_corpus(const RunConfig& cfg, std::size_t n,
                            std::uint64_t seed) {
  Rng rng(seed);
  return generate_corpus<double>(cfg, n, rng);
}

std::vector<Tensor<double>> snapshot(const ParamSet<double>& params,
                                     const std::vector<std::size_t>& idx) {
  std::vector<Tensor<double>> out;
  for (std::size_t i : idx) out.push_back(params[i].value);
  return out;
}

}  // namespace

TEST_CASE("step sequence follows the training recipe") {
  RunConfig cfg = small_train_config();
  cfg.optim.batch_size = 2;
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 201);
  std::vector<std::string> trace;
  TrainHooks hooks;
  hooks.trace = &trace;
  std::vector<StepMetrics> metrics;
  pretrain(state, corpus, 2, &metrics, &hooks);

  const std::vector<std::string> expected_step = {
      "tokenize",       "pos_encode", "score_tokens",
      "sample",         "gather_visible", "encode",
      "assemble",       "decode",     "reconstruction_loss",
      "sampling_loss",  "combined_loss", "backward"};
  REQUIRE(trace.size() == 2 * expected_step.size());
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < expected_step.size(); ++i)
      CHECK(trace[s * expected_step.size() + i] == expected_step[i]);
  CHECK(metrics.size() == 2);
  CHECK(metrics[0].step == 0);
  CHECK(metrics[1].step == 1);
}

TEST_CASE("lambda zero leaves sampler parameters bitwise unchanged") {
  RunConfig cfg = small_train_config();
  cfg.lambda = 0.0;
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 202);
  auto before = snapshot(state.params, state.theta_indices);
  pretrain(state, corpus, 5, nullptr, nullptr);
  auto after = snapshot(state.params, state.theta_indices);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t k = 0; k < before[i].numel(); ++k)
      CHECK(before[i][k] == after[i][k]);
  // phi did move
  bool phi_moved = false;
  for (std::size_t p : state.phi_indices)
    phi_moved |= state.params[p].value[0] !=
                 init_model_state<double>(cfg).params[p].value[0];
  CHECK(phi_moved);
}

TEST_CASE("identical seeds produce identical runs") {
  RunConfig cfg = small_train_config();
  auto run = [&cfg]() {
    ModelState<double> state = init_model_state<double>(cfg);
    Corpus<double> corpus = small_corpus(cfg, 8, 203);
    std::vector<StepMetrics> metrics;
    pretrain(state, corpus, 8, &metrics, nullptr);
    return std::make_pair(std::move(metrics), snapshot(state.params, {0, 5}));
  };
  auto [m1, p1] = run();
  auto [m2, p2] = run();
  REQUIRE(m1.size() == m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].loss_recon == m2[i].loss_recon);
    CHECK(m1[i].loss_sampling == m2[i].loss_sampling);
    CHECK(m1[i].lr == m2[i].lr);
    CHECK(m1[i].fg_mass == m2[i].fg_mass);
  }
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t k = 0; k < p1[i].numel(); ++k)
      CHECK(p1[i][k] == p2[i][k]);
}

TEST_CASE("worker threads do not change results") {
  RunConfig cfg = small_train_config();
  auto run = [&cfg](const char* threads) {
    setenv("ADAMAE_THREADS", threads, 1);
    ModelState<double> state = init_model_state<double>(cfg);
    Corpus<double> corpus = small_corpus(cfg, 8, 204);
    std::vector<StepMetrics> metrics;
    pretrain(state, corpus, 4, &metrics, nullptr);
    unsetenv("ADAMAE_THREADS");
    return std::make_pair(std::move(metrics),
                          snapshot(state.params, {0, 3, 7}));
  };
  auto [m1, p1] = run("1");
  auto [m4, p4] = run("4");
  REQUIRE(m1.size() == m4.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].loss_recon == m4[i].loss_recon);
    CHECK(m1[i].loss_sampling == m4[i].loss_sampling);
  }
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t k = 0; k < p1[i].numel(); ++k)
      CHECK(p1[i][k] == p4[i][k]);
}

TEST_CASE("baseline strategies train without a sampling loss") {
  RunConfig cfg = small_train_config();
  cfg.strategy = "tube";
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 205);
  std::vector<StepMetrics> metrics;
  pretrain(state, corpus, 3, &metrics, nullptr);
  for (const StepMetrics& m : metrics) {
    CHECK(m.loss_sampling == 0.0);
    CHECK(m.fg_mass > 0.0);  // |m|/N under the uniform-equivalent masker
  }
}

TEST_CASE("frozen MAE reduces training to the sampler oracle") {
  // With phi frozen, per-token errors are a fixed function of the mask and
  // the sampler concentrates probability mass on the hard (sprite) tokens.
  RunConfig cfg = small_train_config();
  cfg.freeze_mae = true;
  cfg.optim.base_lr = 0.3;  // effective lr ~ 4.7e-3 after batch scaling
  cfg.optim.warmup_steps = 10;
  cfg.optim.total_steps = 200;
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 206);

  auto phi_before = snapshot(state.params, state.phi_indices);
  double fg_before = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    fg_before += foreground_probability_mass(
        score_video(state, corpus.videos[i]), corpus.activity[i]);

  std::vector<StepMetrics> metrics;
  pretrain(state, corpus, 200, &metrics, nullptr);

  auto phi_after = snapshot(state.params, state.phi_indices);
  for (std::size_t i = 0; i < phi_before.size(); ++i)
    for (std::size_t k = 0; k < phi_before[i].numel(); ++k)
      CHECK(phi_before[i][k] == phi_after[i][k]);

  double fg_after = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    fg_after += foreground_probability_mass(
        score_video(state, corpus.videos[i]), corpus.activity[i]);
  CHECK(fg_after > fg_before);
}

TEST_CASE("metrics row count equals executed steps") {
  RunConfig cfg = small_train_config();
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 207);
  std::vector<StepMetrics> metrics;
  pretrain(state, corpus, 7, &metrics, nullptr);
  CHECK(metrics.size() == 7);
  CHECK(state.step == 7);
  pretrain(state, corpus, 3, &metrics, nullptr);
  CHECK(metrics.size() == 10);
  CHECK(state.step == 10);
}

TEST_CASE("non-finite activations abort with a diagnostic") {
  RunConfig cfg = small_train_config();
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 208);
  state.params[state.mae.embed_w].value[0] = std::nan("");
  CHECK_THROWS_AS(pretrain(state, corpus, 1, nullptr, nullptr),
                  NumericError);
}

TEST_CASE("linear probe on random init and feature shape") {
  RunConfig cfg = toy_config();
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 40, 209);
  Tensor<double> f = pooled_features(state, corpus.videos[0]);
  CHECK(f.shape() == Shape{cfg.arch.dim});

  ProbeOptions opt;
  opt.epochs = 120;
  const double acc = linear_probe(state, corpus, opt);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // reproducible under a fixed seed
  const double acc2 = linear_probe(state, corpus, opt);
  CHECK(acc == acc2);
}

TEST_CASE("probe rejects out-of-range labels") {
  RunConfig cfg = toy_config();
  ModelState<double> state = init_model_state<double>(cfg);
  Corpus<double> corpus = small_corpus(cfg, 8, 210);
  ProbeOptions opt;
  opt.classes = 2;  // labels run 0..3
  CHECK_THROWS_AS((void)linear_probe(state, corpus, opt), Error);
}
