#pragma once

#include <cstdint>
#include <string>

#include "adamae/model.hpp"
#include "adamae/optim.hpp"
#include "adamae/sampler.hpp"
#include "adamae/tokenizer.hpp"

namespace adamae {

// Every knob of a run: geometry, architecture, losses, optimizer, data
// generation. Serializes to flat-ish JSON; any field can be overridden with
// a dotted key (see set_config_key).
struct RunConfig {
  std::string precision = "f64";  // "f64" | "f32"
  std::uint64_t seed = 0;

  // video + patch geometry
  std::size_t channels = 3, frames = 8, height = 32, width = 32;
  std::size_t patch_t = 2, patch_h = 8, patch_w = 8;

  MaeArch arch;  // dim=64, enc_blocks=4, dec_dim=32, dec_blocks=2

  // sampling network
  std::string sampler_kind = "mha";  // "mha" | "mlp"
  std::size_t sampler_blocks = 1;
  std::size_t sampler_dim = 0;  // 0 = token dim
  std::string sampling_loss_form = "log";  // "log" | "prob"

  std::string pos_encoding = "flat";  // "flat" | "factorized"

  // masking
  double rho = 0.9;
  std::string strategy = "adaptive";  // adaptive | patch | tube | frame

  // losses
  std::string recon_loss = "mse";  // "mse" | "l1"
  double lambda = 1e-4;
  double patch_norm_eps = 1e-6;

  OptimHyper optim;
  bool freeze_mae = false;

  // synthetic corpus
  std::string sprite_shape = "square";  // "square" | "disc"
  std::size_t sprite_size = 8;
  std::size_t sprite_speed = 2;
  std::string background = "constant";  // "constant" | "low-noise"
  double background_noise = 1e-4;
  double texture_amp = 0.25;
  std::size_t corpus_count = 400;

  PatchGeometry geometry() const {
    return token_grid_geometry(channels, frames, height, width, patch_t,
                               patch_h, patch_w);
  }

  PosEncoding pos_encoding_kind() const {
    if (pos_encoding == "flat") return PosEncoding::Flat;
    if (pos_encoding == "factorized") return PosEncoding::Factorized;
    throw ConfigError("unknown pos_encoding: " + pos_encoding);
  }

  SamplerArch sampler_arch() const {
    SamplerArch a;
    if (sampler_kind == "mha")
      a.kind = SamplerKind::Mha;
    else if (sampler_kind == "mlp")
      a.kind = SamplerKind::Mlp;
    else
      throw ConfigError("unknown sampler kind: " + sampler_kind);
    a.blocks = sampler_blocks;
    a.dim = sampler_dim;
    a.mlp_ratio = arch.mlp_ratio;
    return a;
  }

  SamplingLossForm sampling_form() const {
    if (sampling_loss_form == "log") return SamplingLossForm::Log;
    if (sampling_loss_form == "prob") return SamplingLossForm::Prob;
    throw ConfigError("unknown sampling_loss_form: " + sampling_loss_form);
  }

  ReconLoss recon_loss_kind() const {
    if (recon_loss == "mse") return ReconLoss::Mse;
    if (recon_loss == "l1") return ReconLoss::L1;
    throw ConfigError("unknown recon_loss: " + recon_loss);
  }

  void validate() const;
};

// Toy preset: the smallest shapes where adaptivity is visible on one CPU.
RunConfig toy_config();

// Tiny architecture for finite-difference checks (N=8 tokens, d=16,
// 2 encoder blocks, 1 decoder block).
RunConfig gradcheck_config();

std::string config_to_json(const RunConfig& cfg, int indent = 2);
RunConfig config_from_json(const std::string& json_text);
RunConfig load_config_file(const std::string& path);
void save_config_file(const RunConfig& cfg, const std::string& path);

// Override one field by dotted key, e.g. "optim.base_lr" = "0.01",
// "arch.dim" = "64", "rho" = "0.95". Values are parsed per field type.
void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value);

}  // namespace adamae
