#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "adamae/config.hpp"
#include "adamae/rng.hpp"
#include "adamae/tokenizer.hpp"

namespace adamae {

// Motion-direction classes of the sprite corpus.
enum class Direction : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
inline const char* direction_name(Direction d) {
  switch (d) {
    case Direction::Up: return "up";
    case Direction::Down: return "down";
    case Direction::Left: return "left";
    default: return "right";
  }
}
constexpr std::size_t kDirectionClasses = 4;

struct SpriteSpec {
  std::size_t channels = 3, frames = 8, height = 32, width = 32;
  bool disc = false;        // square otherwise
  std::size_t size = 8;     // sprite extent in pixels
  int vel_y = 0, vel_x = 0; // pixels per frame
  bool noisy_background = false;
  double background_noise = 1e-4;
  double texture_amp = 0.25;
  Direction label = Direction::Right;

  static SpriteSpec from_config(const RunConfig& cfg, Direction dir) {
    SpriteSpec s;
    s.channels = cfg.channels;
    s.frames = cfg.frames;
    s.height = cfg.height;
    s.width = cfg.width;
    s.disc = cfg.sprite_shape == "disc";
    s.size = cfg.sprite_size;
    s.noisy_background = cfg.background == "low-noise";
    s.background_noise = cfg.background_noise;
    s.texture_amp = cfg.texture_amp;
    s.label = dir;
    const int v = static_cast<int>(cfg.sprite_speed);
    switch (dir) {
      case Direction::Up: s.vel_y = -v; break;
      case Direction::Down: s.vel_y = v; break;
      case Direction::Left: s.vel_x = -v; break;
      case Direction::Right: s.vel_x = v; break;
    }
    return s;
  }
};

// Per-token foreground indicator on the patch grid.
struct ActivityMask {
  std::vector<std::uint8_t> active;  // length N

  std::size_t count() const {
    std::size_t c = 0;
    for (auto v : active) c += v;
    return c;
  }
  double fraction() const {
    return active.empty() ? 0.0
                          : static_cast<double>(count()) /
                                static_cast<double>(active.size());
  }
};

template <typename Real>
struct SpriteSample {
  VideoTensor<Real> video;
  ActivityMask activity;
  Direction label = Direction::Right;
};

namespace detail {

// Reflect a 1-D trajectory inside [0, limit - size].
inline std::size_t reflect_position(long pos, long span) {
  if (span <= 0) return 0;
  const long period = 2 * span;
  long m = pos % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m <= span ? m : period - m);
}

// Start range for which no reflection happens over `frames` steps; falls
// back to the full range when motion cannot fit (reflection then applies).
inline std::size_t pick_start(std::size_t limit, std::size_t size, int vel,
                              std::size_t frames, Rng& rng) {
  const long span = static_cast<long>(limit) - static_cast<long>(size);
  check(span >= 0, "sprite larger than canvas");
  const long travel = static_cast<long>(vel) * static_cast<long>(frames - 1);
  long lo = 0, hi = span;
  if (vel > 0) hi = span - travel;
  if (vel < 0) lo = -travel;
  if (lo > hi) {  // cannot avoid walls; allow any start
    lo = 0;
    hi = span;
  }
  return static_cast<std::size_t>(
      lo + static_cast<long>(rng.uniform_index(
               static_cast<std::uint64_t>(hi - lo + 1))));
}

}  // namespace detail

// Textured sprite translating over a near-constant background. The texture
// rides with the sprite (checker pattern in sprite-local coordinates), so
// sprite cubes stay hard to reconstruct while background cubes are trivial
// after patch normalization.
template <typename Real>
SpriteSample<Real> generate_sprite_video(const SpriteSpec& spec,
                                         const PatchGeometry& geom,
                                         Rng& rng) {
  check_shape(spec.channels == geom.channels && spec.frames == geom.frames &&
                  spec.height == geom.height && spec.width == geom.width,
              "sprite spec does not match geometry");
  check(spec.size <= spec.height && spec.size <= spec.width,
        "sprite larger than canvas");
  check(spec.texture_amp > spec.background_noise || !spec.noisy_background,
        "texture amplitude must dominate background noise");

  SpriteSample<Real> out;
  out.label = spec.label;
  out.video = VideoTensor<Real>::zeros(spec.channels, spec.frames, spec.height,
                                       spec.width);

  const Real bg = Real(0.5);
  for (std::size_t i = 0; i < out.video.data.numel(); ++i)
    out.video.data[i] = bg;
  if (spec.noisy_background) {
    for (std::size_t i = 0; i < out.video.data.numel(); ++i)
      out.video.data[i] += static_cast<Real>(
          (rng.uniform() * 2.0 - 1.0) * spec.background_noise);
  }

  // Per-channel sprite base color, pushed away from the background level.
  std::vector<double> base(spec.channels);
  for (auto& b : base) {
    const double offset = 0.2 + 0.15 * rng.uniform();
    b = 0.5 + (rng.uniform() < 0.5 ? -offset : offset);
  }

  const std::size_t y0 = detail::pick_start(spec.height, spec.size, spec.vel_y,
                                            spec.frames, rng);
  const std::size_t x0 = detail::pick_start(spec.width, spec.size, spec.vel_x,
                                            spec.frames, rng);
  const long span_y = static_cast<long>(spec.height - spec.size);
  const long span_x = static_cast<long>(spec.width - spec.size);
  const double radius = static_cast<double>(spec.size) / 2.0;
  const double rc = radius - 0.5;

  std::vector<std::uint8_t> pixel_active(spec.frames * spec.height *
                                         spec.width, 0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const std::size_t y = detail::reflect_position(
        static_cast<long>(y0) + spec.vel_y * static_cast<long>(f), span_y);
    const std::size_t x = detail::reflect_position(
        static_cast<long>(x0) + spec.vel_x * static_cast<long>(f), span_x);
    for (std::size_t dy = 0; dy < spec.size; ++dy)
      for (std::size_t dx = 0; dx < spec.size; ++dx) {
        if (spec.disc) {
          const double ddy = static_cast<double>(dy) - rc;
          const double ddx = static_cast<double>(dx) - rc;
          if (ddy * ddy + ddx * ddx > radius * radius) continue;
        }
        const std::size_t py = y + dy, px = x + dx;
        pixel_active[(f * spec.height + py) * spec.width + px] = 1;
        const double checker = ((dy + dx) % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t c = 0; c < spec.channels; ++c)
          out.video.at(c, f, py, px) =
              static_cast<Real>(base[c] + checker * spec.texture_amp);
      }
  }

  // Token is active when its cube touches any sprite pixel in any frame.
  out.activity.active.assign(geom.tokens, 0);
  for (std::size_t f = 0; f < spec.frames; ++f)
    for (std::size_t py = 0; py < spec.height; ++py)
      for (std::size_t px = 0; px < spec.width; ++px)
        if (pixel_active[(f * spec.height + py) * spec.width + px]) {
          const std::size_t token = geom.token_index(
              f / geom.patch_t, py / geom.patch_h, px / geom.patch_w);
          out.activity.active[token] = 1;
        }

  check(out.activity.count() >= 1, "sprite produced no active tokens");
  const double frac = out.activity.fraction();
  check(frac >= 0.05 && frac <= 0.5,
        "activity fraction " + std::to_string(frac) +
            " outside [0.05, 0.5]; adjust sprite size/speed");
  return out;
}

// Sum of probability mass over active tokens; uniform P gives |m|/N.
template <typename Real>
double foreground_probability_mass(const Tensor<Real>& probs,
                                   const ActivityMask& mask) {
  check_shape(probs.numel() == mask.active.size(),
              "foreground mass: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mask.active.size(); ++i)
    if (mask.active[i]) s += static_cast<double>(probs[i]);
  return s;
}

// In-memory corpus; file round-trips live in io.hpp.
template <typename Real>
struct Corpus {
  std::vector<VideoTensor<Real>> videos;
  std::vector<ActivityMask> activity;
  std::vector<Direction> labels;
  std::vector<std::string> names;

  std::size_t size() const { return videos.size(); }
};

// Class-balanced generation (count must allow >= 1 per class; labels cycle
// through the four directions).
template <typename Real>
Corpus<Real> generate_corpus(const RunConfig& cfg, std::size_t count,
                             Rng& rng) {
  check(count >= kDirectionClasses, "corpus needs at least 4 videos");
  const PatchGeometry geom = cfg.geometry();
  Corpus<Real> corpus;
  corpus.videos.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto dir = static_cast<Direction>(i % kDirectionClasses);
    SpriteSpec spec = SpriteSpec::from_config(cfg, dir);
    Rng video_rng = rng.fork(i);
    SpriteSample<Real> s = generate_sprite_video<Real>(spec, geom, video_rng);
    corpus.videos.push_back(std::move(s.video));
    corpus.activity.push_back(std::move(s.activity));
    corpus.labels.push_back(s.label);
    char name[32];
    std::snprintf(name, sizeof(name), "v%05u", static_cast<unsigned>(i));
    corpus.names.emplace_back(name);
  }
  return corpus;
}

}  // namespace adamae
