#include "adamae.h"

#include <cstring>
#include <memory>
#include <sstream>
#include <variant>

#include "adamae/checks.hpp"
#include "adamae/config.hpp"
#include "adamae/io.hpp"
#include "adamae/trainer.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
adamae_status guarded(Fn&& fn) {
  try {
    fn();
    return ADAMAE_OK;
  } catch (const adamae::ConfigError& e) {
    set_error(e.what());
    return ADAMAE_ERR_CONFIG;
  } catch (const adamae::ShapeError& e) {
    set_error(e.what());
    return ADAMAE_ERR_SHAPE;
  } catch (const adamae::NumericError& e) {
    set_error(e.what());
    return ADAMAE_ERR_NUMERIC;
  } catch (const adamae::IoError& e) {
    set_error(e.what());
    return ADAMAE_ERR_IO;
  } catch (const std::exception& e) {
    set_error(e.what());
    return ADAMAE_ERR_UNKNOWN;
  } catch (...) {
    set_error("unknown error");
    return ADAMAE_ERR_UNKNOWN;
  }
}

adamae_status invalid(const char* msg) {
  set_error(msg);
  return ADAMAE_ERR_INVALID_ARGUMENT;
}

}  // namespace

struct adamae_config {
  adamae::RunConfig cfg;
};

struct adamae_session {
  // Precision is fixed at creation from config.precision.
  std::variant<adamae::ModelState<double>, adamae::ModelState<float>> state;

  template <typename Fn>
  void visit(Fn&& fn) {
    std::visit(std::forward<Fn>(fn), state);
  }
};

extern "C" {

const char* adamae_version(void) { return "1.0.0"; }

const char* adamae_status_name(adamae_status status) {
  switch (status) {
    case ADAMAE_OK: return "ok";
    case ADAMAE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ADAMAE_ERR_CONFIG: return "config error";
    case ADAMAE_ERR_SHAPE: return "shape error";
    case ADAMAE_ERR_NUMERIC: return "numeric error";
    case ADAMAE_ERR_IO: return "io error";
    default: return "unknown error";
  }
}

const char* adamae_last_error(void) { return g_last_error.c_str(); }

adamae_status adamae_config_create(adamae_config** out) {
  if (!out) return invalid("config_create: out is NULL");
  return guarded([&] { *out = new adamae_config{adamae::toy_config()}; });
}

adamae_status adamae_config_load(adamae_config* cfg, const char* json_path) {
  if (!cfg || !json_path) return invalid("config_load: NULL argument");
  return guarded([&] { cfg->cfg = adamae::load_config_file(json_path); });
}

adamae_status adamae_config_set(adamae_config* cfg, const char* key,
                                const char* value) {
  if (!cfg || !key || !value) return invalid("config_set: NULL argument");
  return guarded([&] { adamae::set_config_key(cfg->cfg, key, value); });
}

adamae_status adamae_config_dump(const adamae_config* cfg, char* buf,
                                 size_t cap, size_t* needed) {
  if (!cfg || !needed) return invalid("config_dump: NULL argument");
  return guarded([&] {
    const std::string text = adamae::config_to_json(cfg->cfg, 2);
    *needed = text.size() + 1;
    if (buf && cap >= text.size() + 1)
      std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

void adamae_config_destroy(adamae_config* cfg) { delete cfg; }

adamae_status adamae_gen_corpus(const adamae_config* cfg, const char* out_dir,
                                int32_t count, uint64_t seed) {
  if (!cfg || !out_dir) return invalid("gen_corpus: NULL argument");
  if (count < 4) return invalid("gen_corpus: count must be >= 4");
  return guarded([&] {
    adamae::Rng rng(seed);
    adamae::make_corpus<float>(cfg->cfg, out_dir,
                               static_cast<std::size_t>(count), rng);
  });
}

adamae_status adamae_session_create(const adamae_config* cfg,
                                    adamae_session** out) {
  if (!cfg || !out) return invalid("session_create: NULL argument");
  return guarded([&] {
    auto session = std::make_unique<adamae_session>();
    if (cfg->cfg.precision == "f32")
      session->state = adamae::init_model_state<float>(cfg->cfg);
    else
      session->state = adamae::init_model_state<double>(cfg->cfg);
    *out = session.release();
  });
}

adamae_status adamae_session_open(const char* ckpt_path,
                                  adamae_session** out) {
  if (!ckpt_path || !out) return invalid("session_open: NULL argument");
  return guarded([&] {
    // Peek at the embedded config to choose the precision.
    const auto raw = adamae::detail::decode_checkpoint(
        adamae::bin::slurp(ckpt_path));
    const adamae::RunConfig cfg =
        adamae::config_from_json(raw.config_json);
    auto session = std::make_unique<adamae_session>();
    if (cfg.precision == "f32")
      session->state = adamae::load_checkpoint<float>(ckpt_path);
    else
      session->state = adamae::load_checkpoint<double>(ckpt_path);
    *out = session.release();
  });
}

adamae_status adamae_session_save(adamae_session* session,
                                  const char* ckpt_path) {
  if (!session || !ckpt_path) return invalid("session_save: NULL argument");
  return guarded([&] {
    session->visit(
        [&](auto& state) { adamae::save_checkpoint(state, ckpt_path); });
  });
}

adamae_status adamae_session_step(const adamae_session* session,
                                  uint64_t* out_step) {
  if (!session || !out_step) return invalid("session_step: NULL argument");
  std::visit([&](const auto& state) { *out_step = state.step; },
             session->state);
  return ADAMAE_OK;
}

void adamae_session_destroy(adamae_session* session) { delete session; }

adamae_status adamae_session_train(adamae_session* session,
                                   const char* data_dir, int64_t steps,
                                   const char* metrics_csv,
                                   adamae_step_callback callback, void* user) {
  if (!session || !data_dir) return invalid("session_train: NULL argument");
  if (steps < 0) return invalid("session_train: negative step count");
  return guarded([&] {
    session->visit([&](auto& state) {
      using State = std::decay_t<decltype(state)>;
      using Real = typename State::RealType;
      adamae::Corpus<Real> corpus = adamae::read_corpus<Real>(data_dir);
      std::vector<adamae::StepMetrics> metrics;
      adamae::TrainHooks hooks;
      if (callback) {
        hooks.on_step = [callback, user](const adamae::StepMetrics& m) {
          adamae_step_metrics out{m.step,    m.loss_recon, m.loss_sampling,
                                  m.lr,      m.fg_mass,    m.ms_per_step};
          callback(&out, user);
        };
      }
      adamae::pretrain(state, corpus, static_cast<std::size_t>(steps),
                       &metrics, &hooks);
      if (metrics_csv) adamae::export_metrics(metrics, metrics_csv);
    });
  });
}

adamae_status adamae_session_probe(adamae_session* session,
                                   const char* data_dir, double* accuracy) {
  if (!session || !data_dir || !accuracy)
    return invalid("session_probe: NULL argument");
  return guarded([&] {
    session->visit([&](auto& state) {
      using State = std::decay_t<decltype(state)>;
      using Real = typename State::RealType;
      adamae::Corpus<Real> corpus = adamae::read_corpus<Real>(data_dir);
      adamae::ProbeOptions opt;
      opt.seed = state.config.seed;
      *accuracy = adamae::linear_probe(state, corpus, opt);
    });
  });
}

adamae_status adamae_session_visualize(adamae_session* session,
                                       const char* video_path,
                                       const char* out_prefix, uint64_t seed) {
  if (!session || !video_path || !out_prefix)
    return invalid("session_visualize: NULL argument");
  return guarded([&] {
    session->visit([&](auto& state) {
      using State = std::decay_t<decltype(state)>;
      using Real = typename State::RealType;
      const adamae::VideoTensor<Real> video =
          adamae::from_raw<Real>(adamae::read_avid(video_path));
      adamae::Rng rng(seed);
      adamae::EvalResult<Real> ev = adamae::evaluate_video(
          state, video, state.config.strategy, state.config.rho, rng);
      const std::string prefix(out_prefix);
      adamae::export_probability_map(ev.probabilities, state.geom,
                                     prefix + "_probs.pgm");
      adamae::export_mask_image(ev.mask, state.geom, prefix + "_mask.pgm");

      adamae::TargetPatches<Real> stats = adamae::patch_normalize(
          video, state.geom,
          static_cast<Real>(state.config.patch_norm_eps));
      adamae::VideoTensor<Real> recon = adamae::detokenize(
          ev.predictions, state.geom, &stats.means, &stats.vars,
          static_cast<Real>(state.config.patch_norm_eps));
      adamae::write_avid(prefix + "_recon.avid", adamae::to_raw(recon));

      std::vector<double> frame0(state.geom.height * state.geom.width, 0.0);
      for (std::size_t y = 0; y < state.geom.height; ++y)
        for (std::size_t x = 0; x < state.geom.width; ++x) {
          double lum = 0.0;
          for (std::size_t c = 0; c < state.geom.channels; ++c)
            lum += static_cast<double>(recon.at(c, 0, y, x));
          frame0[y * state.geom.width + x] =
              lum / static_cast<double>(state.geom.channels);
        }
      adamae::write_pgm(prefix + "_recon_f0.pgm", state.geom.width,
                        state.geom.height, frame0);
    });
  });
}

adamae_status adamae_compare_masks(const adamae_config* cfg,
                                   const char* ckpt_path, const char* data_dir,
                                   const char* strategies, double rho,
                                   uint64_t seed, const char* out_csv) {
  if (!cfg || !data_dir || !strategies || !out_csv)
    return invalid("compare_masks: NULL argument");
  return guarded([&] {
    // Runs at f64; the comparison is an evaluation, not training.
    adamae::ModelState<double> state =
        ckpt_path ? adamae::load_checkpoint<double>(ckpt_path)
                  : adamae::init_model_state<double>(cfg->cfg);
    adamae::Corpus<double> corpus = adamae::read_corpus<double>(data_dir);

    std::vector<std::string> names;
    std::stringstream ss(strategies);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) names.push_back(item);
    }
    adamae::check(!names.empty(), "compare_masks: empty strategy list");

    std::string csv = "strategy,mean_L_R,mean_fg_mass\n";
    for (const std::string& strategy : names) {
      adamae::Rng rng(seed);
      double sum_lr = 0.0, sum_fg = 0.0;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        adamae::EvalResult<double> ev = adamae::evaluate_video(
            state, corpus.videos[i], strategy, rho, rng);
        sum_lr += ev.loss_recon;
        sum_fg += strategy == "adaptive"
                      ? adamae::foreground_probability_mass(
                            ev.probabilities, corpus.activity[i])
                      : corpus.activity[i].fraction();
      }
      const auto n = static_cast<double>(corpus.size());
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.17g,%.17g\n", strategy.c_str(),
                    sum_lr / n, sum_fg / n);
      csv += line;
    }
    adamae::bin::spit(out_csv, csv);
  });
}

adamae_status adamae_gradcheck(const adamae_config* cfg, uint64_t seed,
                               double step_size, double* max_rel_err) {
  if (!cfg || !max_rel_err) return invalid("gradcheck: NULL argument");
  if (step_size <= 0.0) return invalid("gradcheck: step size must be > 0");
  return guarded([&] {
    const adamae::FullGradCheckResult res =
        adamae::run_gradcheck<double>(cfg->cfg, seed, step_size);
    *max_rel_err = res.worst();
  });
}

}  // extern "C"
