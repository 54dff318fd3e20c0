#include "adamae/config.hpp"

#include <fstream>

#include <json.hpp>

namespace adamae {

using nlohmann::json;

void RunConfig::validate() const {
  if (precision != "f64" && precision != "f32")
    throw ConfigError("precision must be f64 or f32");
  if (rho <= 0.0 || rho >= 1.0)
    throw ConfigError("masking ratio must lie in (0,1)");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (patch_norm_eps <= 0.0) throw ConfigError("patch_norm_eps must be > 0");
  if (arch.dim % 2 != 0) throw ConfigError("model dim must be even");
  if (optim.beta1 <= 0.0 || optim.beta1 >= 1.0 || optim.beta2 <= 0.0 ||
      optim.beta2 >= 1.0)
    throw ConfigError("optimizer betas must lie in (0,1)");
  if (optim.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (optim.total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (strategy != "adaptive" && strategy != "patch" && strategy != "tube" &&
      strategy != "frame")
    throw ConfigError("unknown strategy: " + strategy);
  geometry();            // throws on non-divisible extents
  pos_encoding_kind();   // throws on unknown value
  sampler_arch();
  sampling_form();
  recon_loss_kind();
}

RunConfig toy_config() { return RunConfig{}; }

RunConfig gradcheck_config() {
  RunConfig cfg;
  cfg.frames = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.patch_t = 2;
  cfg.patch_h = 8;
  cfg.patch_w = 8;  // N = 2*2*2 = 8 tokens
  cfg.arch.dim = 16;
  cfg.arch.enc_blocks = 2;
  cfg.arch.dec_dim = 8;
  cfg.arch.dec_blocks = 1;
  cfg.rho = 0.75;  // 2 visible, 6 masked
  cfg.optim.batch_size = 1;
  return cfg;
}

namespace {

json to_json_obj(const RunConfig& c) {
  return json{
      {"precision", c.precision},
      {"seed", c.seed},
      {"video",
       {{"channels", c.channels},
        {"frames", c.frames},
        {"height", c.height},
        {"width", c.width}}},
      {"patch", {{"t", c.patch_t}, {"h", c.patch_h}, {"w", c.patch_w}}},
      {"arch",
       {{"dim", c.arch.dim},
        {"enc_blocks", c.arch.enc_blocks},
        {"dec_dim", c.arch.dec_dim},
        {"dec_blocks", c.arch.dec_blocks},
        {"mlp_ratio", c.arch.mlp_ratio}}},
      {"sampler",
       {{"kind", c.sampler_kind},
        {"blocks", c.sampler_blocks},
        {"dim", c.sampler_dim},
        {"loss_form", c.sampling_loss_form}}},
      {"pos_encoding", c.pos_encoding},
      {"mask", {{"rho", c.rho}, {"strategy", c.strategy}}},
      {"loss",
       {{"recon", c.recon_loss},
        {"lambda", c.lambda},
        {"patch_norm_eps", c.patch_norm_eps}}},
      {"optim",
       {{"base_lr", c.optim.base_lr},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps},
        {"weight_decay", c.optim.weight_decay},
        {"lr_scale_by_batch", c.optim.lr_scale_by_batch},
        {"batch_size", c.optim.batch_size},
        {"warmup_steps", c.optim.warmup_steps},
        {"total_steps", c.optim.total_steps}}},
      {"freeze_mae", c.freeze_mae},
      {"data",
       {{"sprite_shape", c.sprite_shape},
        {"sprite_size", c.sprite_size},
        {"sprite_speed", c.sprite_speed},
        {"background", c.background},
        {"background_noise", c.background_noise},
        {"texture_amp", c.texture_amp},
        {"corpus_count", c.corpus_count}}},
  };
}

template <typename T>
void fetch(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

RunConfig from_json_obj(const json& j) {
  RunConfig c;
  fetch(j, "precision", c.precision);
  fetch(j, "seed", c.seed);
  if (j.contains("video")) {
    const json& v = j.at("video");
    fetch(v, "channels", c.channels);
    fetch(v, "frames", c.frames);
    fetch(v, "height", c.height);
    fetch(v, "width", c.width);
  }
  if (j.contains("patch")) {
    const json& v = j.at("patch");
    fetch(v, "t", c.patch_t);
    fetch(v, "h", c.patch_h);
    fetch(v, "w", c.patch_w);
  }
  if (j.contains("arch")) {
    const json& v = j.at("arch");
    fetch(v, "dim", c.arch.dim);
    fetch(v, "enc_blocks", c.arch.enc_blocks);
    fetch(v, "dec_dim", c.arch.dec_dim);
    fetch(v, "dec_blocks", c.arch.dec_blocks);
    fetch(v, "mlp_ratio", c.arch.mlp_ratio);
  }
  if (j.contains("sampler")) {
    const json& v = j.at("sampler");
    fetch(v, "kind", c.sampler_kind);
    fetch(v, "blocks", c.sampler_blocks);
    fetch(v, "dim", c.sampler_dim);
    fetch(v, "loss_form", c.sampling_loss_form);
  }
  fetch(j, "pos_encoding", c.pos_encoding);
  if (j.contains("mask")) {
    const json& v = j.at("mask");
    fetch(v, "rho", c.rho);
    fetch(v, "strategy", c.strategy);
  }
  if (j.contains("loss")) {
    const json& v = j.at("loss");
    fetch(v, "recon", c.recon_loss);
    fetch(v, "lambda", c.lambda);
    fetch(v, "patch_norm_eps", c.patch_norm_eps);
  }
  if (j.contains("optim")) {
    const json& v = j.at("optim");
    fetch(v, "base_lr", c.optim.base_lr);
    fetch(v, "beta1", c.optim.beta1);
    fetch(v, "beta2", c.optim.beta2);
    fetch(v, "eps", c.optim.eps);
    fetch(v, "weight_decay", c.optim.weight_decay);
    fetch(v, "lr_scale_by_batch", c.optim.lr_scale_by_batch);
    fetch(v, "batch_size", c.optim.batch_size);
    fetch(v, "warmup_steps", c.optim.warmup_steps);
    fetch(v, "total_steps", c.optim.total_steps);
  }
  fetch(j, "freeze_mae", c.freeze_mae);
  if (j.contains("data")) {
    const json& v = j.at("data");
    fetch(v, "sprite_shape", c.sprite_shape);
    fetch(v, "sprite_size", c.sprite_size);
    fetch(v, "sprite_speed", c.sprite_speed);
    fetch(v, "background", c.background);
    fetch(v, "background_noise", c.background_noise);
    fetch(v, "texture_amp", c.texture_amp);
    fetch(v, "corpus_count", c.corpus_count);
  }
  return c;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg, int indent) {
  return to_json_obj(cfg).dump(indent);
}

RunConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    RunConfig cfg = from_json_obj(j);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_config_file(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create config " + path);
  out << config_to_json(cfg, 2) << "\n";
}

void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  json j = to_json_obj(cfg);
  json* node = &j;
  std::size_t pos = 0;
  std::string last;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part =
        key.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (dot == std::string::npos) {
      last = part;
      break;
    }
    if (!node->contains(part))
      throw ConfigError("unknown config group: " + part);
    node = &(*node)[part];
    pos = dot + 1;
  }
  if (!node->contains(last)) throw ConfigError("unknown config key: " + key);
  json& slot = (*node)[last];
  try {
    if (slot.is_string())
      slot = value;
    else if (slot.is_boolean())
      slot = (value == "true" || value == "1");
    else if (slot.is_number_float())
      slot = std::stod(value);
    else
      slot = static_cast<std::uint64_t>(std::stoull(value));
  } catch (const std::exception&) {
    throw ConfigError("cannot parse value '" + value + "' for key " + key);
  }
  RunConfig next = config_from_json(j.dump());
  cfg = next;
}

}  // namespace adamae
