#pragma once

#include <vector>

#include "adamae/rng.hpp"
#include "adamae/sampler.hpp"
#include "adamae/tokenizer.hpp"

namespace adamae {

// Random patch masking: visible indices uniform without replacement over
// all spacetime tokens, N_v = floor(N*(1-rho)).
inline MaskSpec random_patch_mask(const PatchGeometry& g, double rho,
                                  Rng& rng) {
  const std::size_t nv = visible_count(g.tokens, rho);
  std::vector<std::size_t> perm = rng.permutation(g.tokens);
  perm.resize(nv);
  MaskSpec spec = MaskSpec::from_visible(std::move(perm), g.tokens);
  spec.validate();
  return spec;
}

// Tube masking: a random spatial visible set replicated at every temporal
// slice. Spatial count floor(H'*W'*(1-rho)), clamped to >= 1 cell.
inline MaskSpec tube_mask(const PatchGeometry& g, double rho, Rng& rng) {
  check(rho > 0.0 && rho < 1.0, "masking ratio must lie in (0,1)");
  const std::size_t spatial = g.grid_h * g.grid_w;
  auto keep = static_cast<std::size_t>(static_cast<double>(spatial) *
                                       (1.0 - rho));
  keep = std::max<std::size_t>(keep, 1);
  std::vector<std::size_t> cells = rng.permutation(spatial);
  cells.resize(keep);
  std::vector<std::size_t> visible;
  visible.reserve(keep * g.grid_t);
  for (std::size_t tt = 0; tt < g.grid_t; ++tt)
    for (std::size_t cell : cells) visible.push_back(tt * spatial + cell);
  MaskSpec spec = MaskSpec::from_visible(std::move(visible), g.tokens);
  spec.validate();
  return spec;
}

// Frame masking: whole temporal slices visible or masked. Visible slice
// count floor(T'*(1-rho)), clamped to >= 1 slice.
inline MaskSpec frame_mask(const PatchGeometry& g, double rho, Rng& rng) {
  check(rho > 0.0 && rho < 1.0, "masking ratio must lie in (0,1)");
  auto keep = static_cast<std::size_t>(static_cast<double>(g.grid_t) *
                                       (1.0 - rho));
  keep = std::max<std::size_t>(keep, 1);
  std::vector<std::size_t> slices = rng.permutation(g.grid_t);
  slices.resize(keep);
  const std::size_t spatial = g.grid_h * g.grid_w;
  std::vector<std::size_t> visible;
  visible.reserve(keep * spatial);
  for (std::size_t tt : slices)
    for (std::size_t cell = 0; cell < spatial; ++cell)
      visible.push_back(tt * spatial + cell);
  MaskSpec spec = MaskSpec::from_visible(std::move(visible), g.tokens);
  spec.validate();
  return spec;
}

}  // namespace adamae
