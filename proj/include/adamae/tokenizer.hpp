#pragma once

#include <cstdint>
#include <vector>

#include "adamae/autodiff.hpp"
#include "adamae/tensor.hpp"

namespace adamae {

// Video of shape (C, T, H, W), row-major.
template <typename Real>
struct VideoTensor {
  std::size_t channels = 0, frames = 0, height = 0, width = 0;
  Tensor<Real> data;  // rank-4 (C,T,H,W)

  std::size_t numel() const { return channels * frames * height * width; }

  Real& at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) {
    return data[((c * frames + t) * height + y) * width + x];
  }
  Real at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return data[((c * frames + t) * height + y) * width + x];
  }

  static VideoTensor zeros(std::size_t c, std::size_t t, std::size_t h,
                           std::size_t w) {
    return VideoTensor{c, t, h, w, Tensor<Real>({c, t, h, w})};
  }
};

// Spacetime patch grid. Tokens are ordered row-major over (T', H', W') and
// each cube flattens in (t, C, h, w) order, so a 2x16x16 patch of RGB video
// yields cubes of 2*3*16*16 = 1536 values.
struct PatchGeometry {
  std::size_t patch_t = 0, patch_h = 0, patch_w = 0;
  std::size_t channels = 0, frames = 0, height = 0, width = 0;
  std::size_t grid_t = 0, grid_h = 0, grid_w = 0;
  std::size_t tokens = 0;     // N = T'*H'*W'
  std::size_t cube_size = 0;  // t*C*h*w

  std::size_t token_index(std::size_t tt, std::size_t hh,
                          std::size_t ww) const {
    return (tt * grid_h + hh) * grid_w + ww;
  }
};

inline PatchGeometry token_grid_geometry(std::size_t channels,
                                         std::size_t frames,
                                         std::size_t height,
                                         std::size_t width, std::size_t pt,
                                         std::size_t ph, std::size_t pw) {
  check_shape(pt > 0 && ph > 0 && pw > 0, "patch extents must be positive");
  check_shape(frames % pt == 0 && height % ph == 0 && width % pw == 0,
              "patch extents must divide the video extents exactly");
  PatchGeometry g;
  g.patch_t = pt;
  g.patch_h = ph;
  g.patch_w = pw;
  g.channels = channels;
  g.frames = frames;
  g.height = height;
  g.width = width;
  g.grid_t = frames / pt;
  g.grid_h = height / ph;
  g.grid_w = width / pw;
  g.tokens = g.grid_t * g.grid_h * g.grid_w;
  g.cube_size = pt * channels * ph * pw;
  check_shape(g.tokens >= 1, "geometry yields zero tokens");
  return g;
}

// Unfold the video into its N x cube_size matrix of raw pixel cubes.
template <typename Real>
Tensor<Real> unfold_cubes(const VideoTensor<Real>& video,
                          const PatchGeometry& g) {
  check_shape(video.channels == g.channels && video.frames == g.frames &&
                  video.height == g.height && video.width == g.width,
              "video shape does not match geometry");
  Tensor<Real> out({g.tokens, g.cube_size});
  for (std::size_t tt = 0; tt < g.grid_t; ++tt)
    for (std::size_t hh = 0; hh < g.grid_h; ++hh)
      for (std::size_t ww = 0; ww < g.grid_w; ++ww) {
        const std::size_t token = g.token_index(tt, hh, ww);
        Real* row = out.data() + token * g.cube_size;
        std::size_t k = 0;
        for (std::size_t dt = 0; dt < g.patch_t; ++dt)
          for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t dy = 0; dy < g.patch_h; ++dy)
              for (std::size_t dx = 0; dx < g.patch_w; ++dx)
                row[k++] = video.at(c, tt * g.patch_t + dt, hh * g.patch_h + dy,
                                    ww * g.patch_w + dx);
      }
  return out;
}

// Exact inverse of unfold_cubes.
template <typename Real>
VideoTensor<Real> fold_cubes(const Tensor<Real>& cubes,
                             const PatchGeometry& g) {
  check_shape(cubes.ndim() == 2 && cubes.shape()[0] == g.tokens &&
                  cubes.shape()[1] == g.cube_size,
              "fold_cubes: matrix does not match geometry");
  VideoTensor<Real> video =
      VideoTensor<Real>::zeros(g.channels, g.frames, g.height, g.width);
  for (std::size_t tt = 0; tt < g.grid_t; ++tt)
    for (std::size_t hh = 0; hh < g.grid_h; ++hh)
      for (std::size_t ww = 0; ww < g.grid_w; ++ww) {
        const std::size_t token = g.token_index(tt, hh, ww);
        const Real* row = cubes.data() + token * g.cube_size;
        std::size_t k = 0;
        for (std::size_t dt = 0; dt < g.patch_t; ++dt)
          for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t dy = 0; dy < g.patch_h; ++dy)
              for (std::size_t dx = 0; dx < g.patch_w; ++dx)
                video.at(c, tt * g.patch_t + dt, hh * g.patch_h + dy,
                         ww * g.patch_w + dx) = row[k++];
      }
  return video;
}

// N tokens of width d plus the grid that produced them.
template <typename Real>
struct TokenBatch {
  Var<Real> tokens;  // N x d
  PatchGeometry geometry;
  bool pos_encoded = false;
};

// Shared linear embedding of every cube (unfold + matmul; identical to a
// 3D convolution whose stride equals its kernel).
template <typename Real>
TokenBatch<Real> tokenize(Tape<Real>& tape, const VideoTensor<Real>& video,
                          const PatchGeometry& g, Var<Real> embed_w,
                          Var<Real> embed_b) {
  check_shape(embed_w.value().shape()[0] == g.cube_size,
              "embed weight rows must equal cube size");
  Var<Real> cubes = make_constant(tape, unfold_cubes(video, g));
  Var<Real> tokens = add_row_vector(matmul(cubes, embed_w), embed_b);
  return TokenBatch<Real>{tokens, g, false};
}

enum class PosEncoding : std::uint8_t { Flat = 0, Factorized = 1 };

// Sinusoid table over the flattened token index p:
//   PE[p, 2k] = sin(p / 10000^(2k/d)),  PE[p, 2k+1] = cos(same angle).
template <typename Real>
Tensor<Real> positional_encoding(std::size_t n, std::size_t d) {
  check_shape(d % 2 == 0, "positional encoding needs even d");
  Tensor<Real> pe({n, d});
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; 2 * k < d; ++k) {
      const double angle =
          static_cast<double>(p) /
          std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d));
      pe.at(p, 2 * k) = static_cast<Real>(std::sin(angle));
      pe.at(p, 2 * k + 1) = static_cast<Real>(std::cos(angle));
    }
  return pe;
}

// Factorized 3-axis variant: the channel budget is split across (t', h', w')
// and each axis gets its own sinusoid table over that axis index.
template <typename Real>
Tensor<Real> positional_encoding_factorized(const PatchGeometry& g,
                                            std::size_t d) {
  check_shape(d % 2 == 0 && d >= 6, "factorized encoding needs even d >= 6");
  std::size_t dt = (d / 3) & ~std::size_t(1);
  std::size_t dh = dt;
  std::size_t dw = d - dt - dh;
  Tensor<Real> pet = positional_encoding<Real>(g.grid_t, dt);
  Tensor<Real> peh = positional_encoding<Real>(g.grid_h, dh);
  Tensor<Real> pew = positional_encoding<Real>(g.grid_w, dw);
  Tensor<Real> pe({g.tokens, d});
  for (std::size_t tt = 0; tt < g.grid_t; ++tt)
    for (std::size_t hh = 0; hh < g.grid_h; ++hh)
      for (std::size_t ww = 0; ww < g.grid_w; ++ww) {
        const std::size_t p = g.token_index(tt, hh, ww);
        std::size_t j = 0;
        for (std::size_t k = 0; k < dt; ++k) pe.at(p, j++) = pet.at(tt, k);
        for (std::size_t k = 0; k < dh; ++k) pe.at(p, j++) = peh.at(hh, k);
        for (std::size_t k = 0; k < dw; ++k) pe.at(p, j++) = pew.at(ww, k);
      }
  return pe;
}

template <typename Real>
Tensor<Real> make_positional_table(const PatchGeometry& g, std::size_t d,
                                   PosEncoding kind) {
  return kind == PosEncoding::Flat
             ? positional_encoding<Real>(g.tokens, d)
             : positional_encoding_factorized<Real>(g, d);
}

// Adds the positional table once; adding twice is a logic error.
template <typename Real>
void apply_positional_encoding(TokenBatch<Real>& batch,
                               const Tensor<Real>& table) {
  if (batch.pos_encoded)
    throw LogicError("positional encoding already applied to this batch");
  check_shape(table.shape() == batch.tokens.value().shape(),
              "positional table shape mismatch");
  Tape<Real>& tape = *batch.tokens.tape;
  batch.tokens = add(batch.tokens, make_constant(tape, table));
  batch.pos_encoded = true;
}

// Per-patch-normalized reconstruction targets (population variance).
template <typename Real>
struct TargetPatches {
  Tensor<Real> targets;  // N x cube_size
  Tensor<Real> means;    // N
  Tensor<Real> vars;     // N
};

template <typename Real>
TargetPatches<Real> patch_normalize(const VideoTensor<Real>& video,
                                    const PatchGeometry& g,
                                    Real eps = Real(1e-6)) {
  check(eps > Real(0), "patch_normalize: eps must be positive");
  TargetPatches<Real> out;
  out.targets = unfold_cubes(video, g);
  out.means = Tensor<Real>({g.tokens});
  out.vars = Tensor<Real>({g.tokens});
  for (std::size_t i = 0; i < g.tokens; ++i) {
    Real* row = out.targets.data() + i * g.cube_size;
    Real mean = Real(0);
    for (std::size_t j = 0; j < g.cube_size; ++j) mean += row[j];
    mean /= static_cast<Real>(g.cube_size);
    Real var = Real(0);
    for (std::size_t j = 0; j < g.cube_size; ++j) {
      const Real c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<Real>(g.cube_size);
    const Real inv = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < g.cube_size; ++j)
      row[j] = (row[j] - mean) * inv;
    out.means[i] = mean;
    out.vars[i] = var;
  }
  return out;
}

// Undo patch normalization using stored stats.
template <typename Real>
Tensor<Real> denormalize_patches(const Tensor<Real>& normalized,
                                 const Tensor<Real>& means,
                                 const Tensor<Real>& vars,
                                 Real eps = Real(1e-6)) {
  check_shape(normalized.ndim() == 2 &&
                  normalized.shape()[0] == means.numel() &&
                  means.numel() == vars.numel(),
              "denormalize: stats length mismatch");
  Tensor<Real> out = normalized;
  const std::size_t n = out.shape()[0], m = out.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    const Real sd = std::sqrt(vars[i] + eps);
    for (std::size_t j = 0; j < m; ++j)
      out.at(i, j) = out.at(i, j) * sd + means[i];
  }
  return out;
}

// Reassemble a video from per-token pixel cubes, optionally de-normalizing
// with stored stats first.
template <typename Real>
VideoTensor<Real> detokenize(const Tensor<Real>& token_pixels,
                             const PatchGeometry& g,
                             const Tensor<Real>* means = nullptr,
                             const Tensor<Real>* vars = nullptr,
                             Real eps = Real(1e-6)) {
  if (means != nullptr || vars != nullptr) {
    check_shape(means != nullptr && vars != nullptr,
                "detokenize: need both means and vars");
    return fold_cubes(denormalize_patches(token_pixels, *means, *vars, eps), g);
  }
  return fold_cubes(token_pixels, g);
}

}  // namespace adamae
