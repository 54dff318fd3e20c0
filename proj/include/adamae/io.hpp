#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adamae/data.hpp"
#include "adamae/trainer.hpp"

namespace adamae {

// --------------------------------------------------------------------------
// Little-endian binary primitives (x86-layout on disk regardless of host).
// --------------------------------------------------------------------------
namespace bin {

void write_bytes(std::string& out, const void* p, std::size_t n);
void write_u16(std::string& out, std::uint16_t v);
void write_u32(std::string& out, std::uint32_t v);
void write_u64(std::string& out, std::uint64_t v);
void write_f32(std::string& out, float v);
void write_f64(std::string& out, double v);

class Reader {
 public:
  Reader(const std::string& buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n);
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path);
void spit(const std::string& path, const std::string& data);

}  // namespace bin

// --------------------------------------------------------------------------
// AVID raw video: 16-byte header (magic "AVID", u16 C,T,H,W, 4 reserved
// zero bytes) followed by C*T*H*W little-endian f32 in (C,T,H,W) order.
// --------------------------------------------------------------------------
struct RawVideo {
  std::uint16_t channels = 0, frames = 0, height = 0, width = 0;
  std::vector<float> data;
};

void write_avid(const std::string& path, const RawVideo& v);
RawVideo read_avid(const std::string& path);

template <typename Real>
RawVideo to_raw(const VideoTensor<Real>& v) {
  RawVideo r;
  r.channels = static_cast<std::uint16_t>(v.channels);
  r.frames = static_cast<std::uint16_t>(v.frames);
  r.height = static_cast<std::uint16_t>(v.height);
  r.width = static_cast<std::uint16_t>(v.width);
  r.data.resize(v.data.numel());
  for (std::size_t i = 0; i < r.data.size(); ++i)
    r.data[i] = static_cast<float>(v.data[i]);
  return r;
}

template <typename Real>
VideoTensor<Real> from_raw(const RawVideo& r) {
  VideoTensor<Real> v = VideoTensor<Real>::zeros(r.channels, r.frames,
                                                 r.height, r.width);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    v.data[i] = static_cast<Real>(r.data[i]);
  return v;
}

// --------------------------------------------------------------------------
// Activity-mask sidecar: 16-byte header (magic "AMSK", u16 T',H',W',
// 6 reserved zero bytes) followed by T'*H'*W' bytes of 0/1 in token order.
// --------------------------------------------------------------------------
void write_activity_mask(const std::string& path, const ActivityMask& mask,
                         const PatchGeometry& geom);
ActivityMask read_activity_mask(const std::string& path);

// Labels CSV: header "file,label,label_name", one row per video.
void write_labels_csv(const std::string& path,
                      const std::vector<std::string>& names,
                      const std::vector<Direction>& labels);
std::vector<std::pair<std::string, Direction>> read_labels_csv(
    const std::string& path);

// --------------------------------------------------------------------------
// Corpus directory = vNNNNN.avid + vNNNNN.mask + labels.csv.
// --------------------------------------------------------------------------
template <typename Real>
void write_corpus(const std::string& dir, const Corpus<Real>& corpus,
                  const PatchGeometry& geom);

template <typename Real>
Corpus<Real> read_corpus(const std::string& dir);

// Generate and persist a class-balanced corpus in one step.
template <typename Real>
Corpus<Real> make_corpus(const RunConfig& cfg, const std::string& dir,
                         std::size_t count, Rng& rng) {
  Corpus<Real> corpus = generate_corpus<Real>(cfg, count, rng);
  write_corpus(dir, corpus, cfg.geometry());
  return corpus;
}

// --------------------------------------------------------------------------
// Portable graymap exports. Probability maps render one pixel per token:
// width W', height T'*H' (temporal slices stacked vertically), min-max
// scaled; a ".txt" sidecar holds the raw values for lossless inspection.
// --------------------------------------------------------------------------
void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<double>& values01, int bits = 8);

template <typename Real>
void export_probability_map(const Tensor<Real>& probs,
                            const PatchGeometry& geom,
                            const std::string& path);

void export_mask_image(const MaskSpec& mask, const PatchGeometry& geom,
                       const std::string& path);

// --------------------------------------------------------------------------
// Metrics CSV: header step,L_R,L_S,lr,fg_mass,ms_per_step; one row per
// executed step; shortest-round-trip decimal (locale independent).
// --------------------------------------------------------------------------
void export_metrics(const std::vector<StepMetrics>& metrics,
                    const std::string& path);
std::vector<StepMetrics> read_metrics(const std::string& path);

// --------------------------------------------------------------------------
// Checkpoint: custom little-endian binary holding a config echo, every
// named parameter (as f64), optimizer moments, rng state and step counter.
// save -> load -> save is byte-identical.
// --------------------------------------------------------------------------
constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_magic();

namespace detail {

struct RawCheckpoint {
  std::string config_json;
  std::uint64_t step = 0;
  std::array<std::uint64_t, 4> rng_state{};
  struct Entry {
    std::string name;
    std::uint8_t partition = 0;
    std::uint8_t weight_decay = 0;
    Shape shape;
    std::vector<double> value;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::uint64_t opt_t = 0;
  std::vector<Entry> entries;
};

std::string encode_checkpoint(const RawCheckpoint& ck);
RawCheckpoint decode_checkpoint(const std::string& bytes);

}  // namespace detail

template <typename Real>
void save_checkpoint(const ModelState<Real>& state, const std::string& path) {
  detail::RawCheckpoint ck;
  ck.config_json = config_to_json(state.config, -1);
  ck.step = state.step;
  ck.rng_state = state.rng.state();
  ck.opt_t = state.opt.t;
  ck.entries.resize(state.params.size());
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    auto& e = ck.entries[i];
    const Param<Real>& p = state.params[i];
    e.name = p.name;
    e.partition = static_cast<std::uint8_t>(p.partition);
    e.weight_decay = p.weight_decay ? 1 : 0;
    e.shape = p.value.shape();
    e.value.resize(p.value.numel());
    for (std::size_t k = 0; k < e.value.size(); ++k)
      e.value[k] = static_cast<double>(p.value[k]);
    e.m = state.opt.m[i];
    e.v = state.opt.v[i];
  }
  bin::spit(path, detail::encode_checkpoint(ck));
}

// Rebuilds the model from the embedded config echo, then overwrites every
// parameter and optimizer slot. Mismatched architecture fails loudly.
template <typename Real>
ModelState<Real> load_checkpoint(const std::string& path) {
  detail::RawCheckpoint ck = detail::decode_checkpoint(bin::slurp(path));
  RunConfig cfg = config_from_json(ck.config_json);
  ModelState<Real> state = init_model_state<Real>(cfg);
  if (ck.entries.size() != state.params.size())
    throw ConfigError("checkpoint/architecture mismatch: " +
                      std::to_string(ck.entries.size()) + " vs " +
                      std::to_string(state.params.size()) + " parameters");
  for (std::size_t i = 0; i < ck.entries.size(); ++i) {
    const auto& e = ck.entries[i];
    Param<Real>& p = state.params[i];
    if (e.name != p.name || e.shape != p.value.shape())
      throw ConfigError("checkpoint/architecture mismatch at parameter " +
                        e.name);
    for (std::size_t k = 0; k < e.value.size(); ++k)
      p.value[k] = static_cast<Real>(e.value[k]);
    state.opt.m[i] = e.m;
    state.opt.v[i] = e.v;
  }
  state.opt.t = ck.opt_t;
  state.step = ck.step;
  state.rng = Rng::from_state(ck.rng_state);
  return state;
}

// --- template definitions -------------------------------------------------

template <typename Real>
void write_corpus(const std::string& dir, const Corpus<Real>& corpus,
                  const PatchGeometry& geom) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string base = dir + "/" + corpus.names[i];
    write_avid(base + ".avid", to_raw(corpus.videos[i]));
    write_activity_mask(base + ".mask", corpus.activity[i], geom);
  }
  write_labels_csv(dir + "/labels.csv", corpus.names, corpus.labels);
}

template <typename Real>
Corpus<Real> read_corpus(const std::string& dir) {
  Corpus<Real> corpus;
  for (const auto& [name, label] : read_labels_csv(dir + "/labels.csv")) {
    const std::string base = dir + "/" + name;
    corpus.videos.push_back(from_raw<Real>(read_avid(base + ".avid")));
    corpus.activity.push_back(read_activity_mask(base + ".mask"));
    corpus.labels.push_back(label);
    corpus.names.push_back(name);
  }
  check(!corpus.videos.empty(), "empty corpus at " + dir);
  return corpus;
}

template <typename Real>
void export_probability_map(const Tensor<Real>& probs,
                            const PatchGeometry& geom,
                            const std::string& path) {
  check_shape(probs.numel() == geom.tokens,
              "probability map length does not match geometry");
  double lo = static_cast<double>(probs[0]), hi = lo;
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    lo = std::min(lo, static_cast<double>(probs[i]));
    hi = std::max(hi, static_cast<double>(probs[i]));
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<double> px(probs.numel());
  // token (t',h',w') -> pixel (x=w', y=t'*H'+h'), same row-major order as
  // the tokenizer.
  for (std::size_t i = 0; i < probs.numel(); ++i)
    px[i] = (static_cast<double>(probs[i]) - lo) / span;
  write_pgm(path, geom.grid_w, geom.grid_t * geom.grid_h, px);

  std::string sidecar;
  sidecar.reserve(probs.numel() * 24);
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof(buf), "%.17g\n",
                                static_cast<double>(probs[i]));
    sidecar.append(buf, static_cast<std::size_t>(n));
  }
  bin::spit(path + ".txt", sidecar);
}

}  // namespace adamae
