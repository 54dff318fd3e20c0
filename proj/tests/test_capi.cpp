#include <doctest.h>

#include <cstring>
#include <unistd.h>
#include <fstream>
#include <filesystem>
#include <string>
#include <vector>

#include "adamae.h"

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("adamae_capi_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

struct Config {
  adamae_config* ptr = nullptr;
  Config() { REQUIRE(adamae_config_create(&ptr) == ADAMAE_OK); }
  ~Config() { adamae_config_destroy(ptr); }
  void set(const char* k, const char* v) {
    REQUIRE(adamae_config_set(ptr, k, v) == ADAMAE_OK);
  }
};

void shrink_for_speed(Config& cfg) {
  cfg.set("optim.batch_size", "2");
  cfg.set("optim.total_steps", "6");
  cfg.set("optim.warmup_steps", "1");
}

}  // namespace

TEST_CASE("status names and invalid arguments") {
  CHECK(std::string(adamae_status_name(ADAMAE_OK)) == "ok");
  CHECK(adamae_config_create(nullptr) == ADAMAE_ERR_INVALID_ARGUMENT);
  CHECK(std::string(adamae_last_error()).size() > 0);
  CHECK(adamae_gen_corpus(nullptr, "x", 8, 0) ==
        ADAMAE_ERR_INVALID_ARGUMENT);
  CHECK(adamae_session_open("/nonexistent/path.ckpt", nullptr) ==
        ADAMAE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("config set, dump and validation errors") {
  Config cfg;
  cfg.set("mask.rho", "0.8");
  cfg.set("seed", "7");
  CHECK(adamae_config_set(cfg.ptr, "mask.rho", "2.0") == ADAMAE_ERR_CONFIG);
  CHECK(adamae_config_set(cfg.ptr, "no.such.key", "1") == ADAMAE_ERR_CONFIG);

  size_t needed = 0;
  CHECK(adamae_config_dump(cfg.ptr, nullptr, 0, &needed) == ADAMAE_OK);
  REQUIRE(needed > 2);
  std::vector<char> buf(needed);
  CHECK(adamae_config_dump(cfg.ptr, buf.data(), buf.size(), &needed) ==
        ADAMAE_OK);
  const std::string text(buf.data());
  CHECK(text.find("\"rho\": 0.8") != std::string::npos);
  CHECK(text.find("\"seed\": 7") != std::string::npos);
}

TEST_CASE("corpus generation, training, checkpointing and probing") {
  TempDir dir;
  Config cfg;
  shrink_for_speed(cfg);
  const std::string data = dir.file("data");
  REQUIRE(adamae_gen_corpus(cfg.ptr, data.c_str(), 8, 1) == ADAMAE_OK);
  CHECK(std::filesystem::exists(data + "/labels.csv"));
  CHECK(adamae_gen_corpus(cfg.ptr, data.c_str(), 2, 1) ==
        ADAMAE_ERR_INVALID_ARGUMENT);

  adamae_session* session = nullptr;
  REQUIRE(adamae_session_create(cfg.ptr, &session) == ADAMAE_OK);

  struct CallbackLog {
    int calls = 0;
    uint64_t last_step = 0;
  } log;
  auto cb = [](const adamae_step_metrics* m, void* user) {
    auto* l = static_cast<CallbackLog*>(user);
    l->calls += 1;
    l->last_step = m->step;
  };
  const std::string metrics_csv = dir.file("metrics.csv");
  REQUIRE(adamae_session_train(session, data.c_str(), 4, metrics_csv.c_str(),
                               cb, &log) == ADAMAE_OK);
  CHECK(log.calls == 4);
  CHECK(log.last_step == 3);
  CHECK(std::filesystem::exists(metrics_csv));

  uint64_t step = 0;
  CHECK(adamae_session_step(session, &step) == ADAMAE_OK);
  CHECK(step == 4);

  const std::string ckpt = dir.file("model.ckpt");
  REQUIRE(adamae_session_save(session, ckpt.c_str()) == ADAMAE_OK);

  adamae_session* loaded = nullptr;
  REQUIRE(adamae_session_open(ckpt.c_str(), &loaded) == ADAMAE_OK);
  uint64_t loaded_step = 0;
  CHECK(adamae_session_step(loaded, &loaded_step) == ADAMAE_OK);
  CHECK(loaded_step == 4);

  double acc = -1.0;
  REQUIRE(adamae_session_probe(loaded, data.c_str(), &acc) == ADAMAE_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // visualization artifacts
  const std::string prefix = dir.file("vis");
  REQUIRE(adamae_session_visualize(loaded, (data + "/v00000.avid").c_str(),
                                   prefix.c_str(), 0) == ADAMAE_OK);
  CHECK(std::filesystem::exists(prefix + "_probs.pgm"));
  CHECK(std::filesystem::exists(prefix + "_probs.pgm.txt"));
  CHECK(std::filesystem::exists(prefix + "_mask.pgm"));
  CHECK(std::filesystem::exists(prefix + "_recon.avid"));

  adamae_session_destroy(session);
  adamae_session_destroy(loaded);
}

TEST_CASE("f32 sessions run end to end") {
  TempDir dir;
  Config cfg;
  shrink_for_speed(cfg);
  cfg.set("precision", "f32");
  const std::string data = dir.file("data32");
  REQUIRE(adamae_gen_corpus(cfg.ptr, data.c_str(), 8, 2) == ADAMAE_OK);
  adamae_session* session = nullptr;
  REQUIRE(adamae_session_create(cfg.ptr, &session) == ADAMAE_OK);
  REQUIRE(adamae_session_train(session, data.c_str(), 2, nullptr, nullptr,
                               nullptr) == ADAMAE_OK);
  const std::string ckpt = dir.file("f32.ckpt");
  REQUIRE(adamae_session_save(session, ckpt.c_str()) == ADAMAE_OK);
  adamae_session* loaded = nullptr;
  REQUIRE(adamae_session_open(ckpt.c_str(), &loaded) == ADAMAE_OK);
  adamae_session_destroy(session);
  adamae_session_destroy(loaded);
}

TEST_CASE("compare-masks writes one row per strategy") {
  TempDir dir;
  Config cfg;
  shrink_for_speed(cfg);
  const std::string data = dir.file("data");
  REQUIRE(adamae_gen_corpus(cfg.ptr, data.c_str(), 8, 3) == ADAMAE_OK);
  const std::string out = dir.file("compare.csv");
  REQUIRE(adamae_compare_masks(cfg.ptr, nullptr, data.c_str(),
                               "adaptive,patch,tube,frame", 0.9, 0,
                               out.c_str()) == ADAMAE_OK);
  std::ifstream in(out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "strategy,mean_L_R,mean_fg_mass");
  CHECK(lines[1].rfind("adaptive,", 0) == 0);
  CHECK(lines[4].rfind("frame,", 0) == 0);

  CHECK(adamae_compare_masks(cfg.ptr, nullptr, data.c_str(), "bogus", 0.9, 0,
                             out.c_str()) != ADAMAE_OK);
}

TEST_CASE("gradcheck through the C API on a reduced architecture") {
  Config cfg;
  // much smaller than the acceptance architecture; this is an API check
  cfg.set("video.frames", "4");
  cfg.set("video.height", "16");
  cfg.set("video.width", "16");
  cfg.set("patch.h", "8");
  cfg.set("patch.w", "8");
  cfg.set("arch.dim", "8");
  cfg.set("arch.enc_blocks", "1");
  cfg.set("arch.dec_dim", "6");
  cfg.set("arch.dec_blocks", "1");
  cfg.set("mask.rho", "0.75");
  double err = 1.0;
  REQUIRE(adamae_gradcheck(cfg.ptr, 0, 1e-5, &err) == ADAMAE_OK);
  CHECK(err < 1e-4);
  CHECK(adamae_gradcheck(cfg.ptr, 0, -1.0, &err) ==
        ADAMAE_ERR_INVALID_ARGUMENT);
}
