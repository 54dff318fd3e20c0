// Command-line front end. Talks to the library exclusively through the
// C API in adamae.h.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adamae.h"

namespace {

struct ConfigHandle {
  adamae_config* ptr = nullptr;
  ~ConfigHandle() { adamae_config_destroy(ptr); }
};

struct SessionHandle {
  adamae_session* ptr = nullptr;
  ~SessionHandle() { adamae_session_destroy(ptr); }
};

int fail(adamae_status status, const char* what) {
  std::fprintf(stderr, "adamae: %s failed: %s (%s)\n", what,
               adamae_last_error(), adamae_status_name(status));
  return 1;
}

#define TRY(what, expr)                                    \
  do {                                                     \
    const adamae_status status_ = (expr);                  \
    if (status_ != ADAMAE_OK) return fail(status_, what);  \
  } while (0)

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double rho = 0.0;
  bool rho_given = false;
  std::string strategy;
  std::string precision;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.sets,
                  "override a config field, e.g. --set optim.base_lr=0.01");
  cmd->add_option("--seed", opts.seed, "run seed")
      ->each([&opts](const std::string&) { opts.seed_given = true; });
  cmd->add_option("--rho", opts.rho, "masking ratio in (0,1)")
      ->each([&opts](const std::string&) { opts.rho_given = true; });
  cmd->add_option("--strategy", opts.strategy,
                  "masking strategy: adaptive|patch|tube|frame");
  cmd->add_option("--precision", opts.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
}

int build_config(const CommonOpts& opts, ConfigHandle& cfg) {
  TRY("config create", adamae_config_create(&cfg.ptr));
  if (!opts.config_path.empty())
    TRY("config load", adamae_config_load(cfg.ptr, opts.config_path.c_str()));
  for (const std::string& kv : opts.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "adamae: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return 1;
    }
    TRY("config set", adamae_config_set(cfg.ptr, kv.substr(0, eq).c_str(),
                                        kv.substr(eq + 1).c_str()));
  }
  if (opts.seed_given)
    TRY("config set",
        adamae_config_set(cfg.ptr, "seed", std::to_string(opts.seed).c_str()));
  if (opts.rho_given)
    TRY("config set", adamae_config_set(cfg.ptr, "mask.rho",
                                        std::to_string(opts.rho).c_str()));
  if (!opts.strategy.empty())
    TRY("config set",
        adamae_config_set(cfg.ptr, "mask.strategy", opts.strategy.c_str()));
  if (!opts.precision.empty())
    TRY("config set",
        adamae_config_set(cfg.ptr, "precision", opts.precision.c_str()));
  return 0;
}

void print_progress(const adamae_step_metrics* m, void* user) {
  const auto every = *static_cast<const std::uint64_t*>(user);
  if (every == 0) return;
  if (m->step % every == 0 || m->step == 0)
    std::printf("step %6" PRIu64 "  L_R %.5f  L_S %8.4f  lr %.2e  fg %.3f\n",
                m->step, m->loss_recon, m->loss_sampling, m->lr, m->fg_mass);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adamae: adaptive-masking video autoencoder"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // gen-data
  CommonOpts gen_opts;
  int gen_count = 400;
  std::string gen_out = "data";
  CLI::App* gen = app.add_subcommand("gen-data",
                                     "generate a labeled sprite corpus");
  add_common(gen, gen_opts);
  gen->add_option("--count", gen_count, "number of videos (class-balanced)");
  gen->add_option("--out", gen_out, "output directory")->required();

  // pretrain
  CommonOpts train_opts;
  std::string train_data, train_out = "out.ckpt", train_metrics,
              train_resume;
  std::int64_t train_steps = -1;
  std::uint64_t log_every = 100;
  CLI::App* train = app.add_subcommand("pretrain", "run MAE pre-training");
  add_common(train, train_opts);
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--steps", train_steps,
                    "steps to run (default: optim.total_steps)");
  train->add_option("--out", train_out, "checkpoint output path");
  train->add_option("--metrics", train_metrics, "metrics CSV output path");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--log-every", log_every, "progress print period (0=off)");

  // probe
  CommonOpts probe_opts;
  std::string probe_data, probe_ckpt;
  CLI::App* probe = app.add_subcommand(
      "probe", "linear probe on frozen encoder features");
  add_common(probe, probe_opts);
  probe->add_option("--data", probe_data, "labeled corpus directory")
      ->required();
  probe->add_option("--ckpt", probe_ckpt,
                    "checkpoint (omit for random-init baseline)");

  // compare-masks
  CommonOpts cmp_opts;
  std::string cmp_data, cmp_ckpt, cmp_out = "compare.csv";
  std::string cmp_strategies = "adaptive,patch,tube,frame";
  CLI::App* cmp = app.add_subcommand(
      "compare-masks", "evaluate masking strategies on a corpus");
  add_common(cmp, cmp_opts);
  cmp->add_option("--data", cmp_data, "corpus directory")->required();
  cmp->add_option("--ckpt", cmp_ckpt, "checkpoint (omit for random init)");
  cmp->add_option("--strategies", cmp_strategies, "comma-separated list");
  cmp->add_option("--out", cmp_out, "output CSV path");

  // visualize
  CommonOpts vis_opts;
  std::string vis_ckpt, vis_video, vis_out = "vis";
  CLI::App* vis = app.add_subcommand(
      "visualize", "export probability map, mask and reconstruction");
  add_common(vis, vis_opts);
  vis->add_option("--ckpt", vis_ckpt, "checkpoint path")->required();
  vis->add_option("--video", vis_video, "AVID video path")->required();
  vis->add_option("--out", vis_out, "output file prefix");

  // gradcheck
  CommonOpts gc_opts;
  std::string gc_preset = "toy";
  double gc_h = 1e-5;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference check of the loss gradients");
  add_common(gc, gc_opts);
  gc->add_option("--preset", gc_preset, "architecture preset: toy")
      ->check(CLI::IsMember({"toy"}));
  gc->add_option("--fd-step", gc_h, "finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    ConfigHandle cfg;
    if (int rc = build_config(gen_opts, cfg)) return rc;
    TRY("gen-data", adamae_gen_corpus(cfg.ptr, gen_out.c_str(), gen_count,
                                      gen_opts.seed));
    std::printf("wrote %d videos to %s\n", gen_count, gen_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    ConfigHandle cfg;
    if (int rc = build_config(train_opts, cfg)) return rc;
    SessionHandle session;
    if (!train_resume.empty()) {
      TRY("resume", adamae_session_open(train_resume.c_str(), &session.ptr));
    } else {
      TRY("session create", adamae_session_create(cfg.ptr, &session.ptr));
    }
    std::int64_t steps = train_steps;
    if (steps < 0) {
      // default to the configured horizon minus what already ran
      char buf[8192];
      size_t needed = 0;
      TRY("config dump",
          adamae_config_dump(cfg.ptr, buf, sizeof(buf), &needed));
      std::uint64_t done = 0;
      TRY("session step", adamae_session_step(session.ptr, &done));
      const std::string text(buf);
      const std::string key = "\"total_steps\":";
      const std::size_t at = text.find(key);
      std::int64_t total = 2000;
      if (at != std::string::npos)
        total = std::strtoll(text.c_str() + at + key.size(), nullptr, 10);
      steps = total > static_cast<std::int64_t>(done)
                  ? total - static_cast<std::int64_t>(done)
                  : 0;
    }
    TRY("pretrain",
        adamae_session_train(session.ptr, train_data.c_str(), steps,
                             train_metrics.empty() ? nullptr
                                                   : train_metrics.c_str(),
                             log_every ? print_progress : nullptr,
                             &log_every));
    TRY("checkpoint save",
        adamae_session_save(session.ptr, train_out.c_str()));
    std::printf("checkpoint written to %s\n", train_out.c_str());
    return 0;
  }

  if (probe->parsed()) {
    ConfigHandle cfg;
    if (int rc = build_config(probe_opts, cfg)) return rc;
    SessionHandle session;
    if (!probe_ckpt.empty()) {
      TRY("open", adamae_session_open(probe_ckpt.c_str(), &session.ptr));
    } else {
      TRY("session create", adamae_session_create(cfg.ptr, &session.ptr));
    }
    double accuracy = 0.0;
    TRY("probe",
        adamae_session_probe(session.ptr, probe_data.c_str(), &accuracy));
    std::printf("top-1 accuracy: %.4f\n", accuracy);
    return 0;
  }

  if (cmp->parsed()) {
    ConfigHandle cfg;
    if (int rc = build_config(cmp_opts, cfg)) return rc;
    const double rho = cmp_opts.rho_given ? cmp_opts.rho : 0.9;
    TRY("compare-masks",
        adamae_compare_masks(cfg.ptr,
                             cmp_ckpt.empty() ? nullptr : cmp_ckpt.c_str(),
                             cmp_data.c_str(), cmp_strategies.c_str(), rho,
                             cmp_opts.seed, cmp_out.c_str()));
    std::printf("wrote %s\n", cmp_out.c_str());
    return 0;
  }

  if (vis->parsed()) {
    SessionHandle session;
    TRY("open", adamae_session_open(vis_ckpt.c_str(), &session.ptr));
    TRY("visualize",
        adamae_session_visualize(session.ptr, vis_video.c_str(),
                                 vis_out.c_str(), vis_opts.seed));
    std::printf("wrote %s_probs.pgm, %s_mask.pgm, %s_recon.avid\n",
                vis_out.c_str(), vis_out.c_str(), vis_out.c_str());
    return 0;
  }

  if (gc->parsed()) {
    ConfigHandle cfg;
    if (int rc = build_config(gc_opts, cfg)) return rc;
    // the toy preset is the tiny 8-token architecture
    TRY("config set", adamae_config_set(cfg.ptr, "video.frames", "4"));
    TRY("config set", adamae_config_set(cfg.ptr, "video.height", "16"));
    TRY("config set", adamae_config_set(cfg.ptr, "video.width", "16"));
    TRY("config set", adamae_config_set(cfg.ptr, "arch.dim", "16"));
    TRY("config set", adamae_config_set(cfg.ptr, "arch.enc_blocks", "2"));
    TRY("config set", adamae_config_set(cfg.ptr, "arch.dec_dim", "8"));
    TRY("config set", adamae_config_set(cfg.ptr, "arch.dec_blocks", "1"));
    TRY("config set", adamae_config_set(cfg.ptr, "mask.rho", "0.75"));
    double max_rel_err = 0.0;
    TRY("gradcheck",
        adamae_gradcheck(cfg.ptr, gc_opts.seed, gc_h, &max_rel_err));
    std::printf("max relative error: %.3e\n", max_rel_err);
    return max_rel_err < 1e-4 ? 0 : 1;
  }

  return 0;
}
