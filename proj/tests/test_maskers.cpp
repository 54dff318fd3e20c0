#include <doctest.h>

#include "adamae/maskers.hpp"
#include "oracles.hpp"

using namespace adamae;

namespace {
const PatchGeometry kGeom = token_grid_geometry(3, 8, 32, 32, 2, 8, 8);
// T'=4, H'=4, W'=4, N=64
}  // namespace

TEST_CASE("random patch mask counts") {
  Rng rng(51);
  PatchGeometry g8 = token_grid_geometry(3, 4, 16, 16, 2, 8, 8);
  MaskSpec spec = random_patch_mask(g8, 0.5, rng);
  CHECK(spec.n_visible == 4);
  spec.validate();

  PatchGeometry paper = token_grid_geometry(3, 16, 224, 224, 2, 16, 16);
  MaskSpec spec2 = random_patch_mask(paper, 0.95, rng);
  CHECK(spec2.n_visible == 78);
  CHECK(spec2.masked.size() == 1490);

  CHECK_THROWS_AS((void)random_patch_mask(g8, 1.5, rng), Error);
}

TEST_CASE("random patch visibility is uniform across indices") {
  Rng rng(52);
  PatchGeometry g = token_grid_geometry(3, 4, 16, 16, 2, 8, 8);
  const int draws = 100000;
  std::vector<int> hits(g.tokens, 0);
  for (int d = 0; d < draws; ++d) {
    MaskSpec spec = random_patch_mask(g, 0.5, rng);
    for (std::size_t i : spec.visible) hits[i] += 1;
  }
  const double expected = 0.5;
  for (std::size_t i = 0; i < g.tokens; ++i) {
    const double freq = static_cast<double>(hits[i]) / draws;
    CHECK(std::abs(freq - expected) < 0.01);
  }
}

TEST_CASE("tube mask replicates one spatial pattern across slices") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    MaskSpec spec = tube_mask(kGeom, 0.9, rng);
    spec.validate();
    const std::size_t spatial = kGeom.grid_h * kGeom.grid_w;
    for (std::size_t cell = 0; cell < spatial; ++cell)
      for (std::size_t tt = 1; tt < kGeom.grid_t; ++tt)
        CHECK(spec.mask[tt * spatial + cell] == spec.mask[cell]);
  }
}

TEST_CASE("tube mask spatial count and uniform marginals") {
  Rng rng(54);
  PatchGeometry g = token_grid_geometry(3, 4, 16, 16, 2, 8, 8);  // 2x2x2
  MaskSpec spec = tube_mask(g, 0.5, rng);
  CHECK(spec.n_visible == 4);  // 2 spatial cells x 2 slices

  const int draws = 100000;
  const std::size_t spatial = g.grid_h * g.grid_w;
  std::vector<int> hits(spatial, 0);
  for (int d = 0; d < draws; ++d) {
    MaskSpec s = tube_mask(g, 0.5, rng);
    for (std::size_t cell = 0; cell < spatial; ++cell)
      hits[cell] += s.mask[cell] == 0;
  }
  for (std::size_t cell = 0; cell < spatial; ++cell) {
    const double freq = static_cast<double>(hits[cell]) / draws;
    CHECK(std::abs(freq - 0.5) < 0.01);
  }

  // flooring clamps to at least one visible spatial cell
  MaskSpec tiny = tube_mask(g, 0.95, rng);
  CHECK(tiny.n_visible == g.grid_t);
}

TEST_CASE("frame mask hides whole temporal slices") {
  Rng rng(55);
  // T'=8 with rho=0.875 keeps exactly one slice (the paper's frame row)
  PatchGeometry g = token_grid_geometry(3, 16, 16, 16, 2, 8, 8);
  CHECK(g.grid_t == 8);
  MaskSpec spec = frame_mask(g, 0.875, rng);
  spec.validate();
  const std::size_t spatial = g.grid_h * g.grid_w;
  CHECK(spec.n_visible == spatial);  // one slice
  for (std::size_t tt = 0; tt < g.grid_t; ++tt) {
    bool all_visible = true, all_masked = true;
    for (std::size_t cell = 0; cell < spatial; ++cell) {
      if (spec.mask[tt * spatial + cell])
        all_visible = false;
      else
        all_masked = false;
    }
    CHECK((all_visible || all_masked));
  }

  const int draws = 100000;
  std::vector<int> hits(g.grid_t, 0);
  for (int d = 0; d < draws; ++d) {
    MaskSpec s = frame_mask(g, 0.875, rng);
    for (std::size_t tt = 0; tt < g.grid_t; ++tt)
      hits[tt] += s.mask[tt * spatial] == 0;
  }
  for (std::size_t tt = 0; tt < g.grid_t; ++tt) {
    const double freq = static_cast<double>(hits[tt]) / draws;
    CHECK(std::abs(freq - 1.0 / 8) < 0.01);
  }
}

TEST_CASE("adaptive sampling under uniform P matches random patch masking") {
  Rng rng_a(56), rng_b(57);
  PatchGeometry g = token_grid_geometry(3, 2, 32, 32, 2, 8, 8);  // 1x4x4=16
  REQUIRE(g.tokens == 16);
  Tensor<double> uniform({g.tokens}, 1.0 / static_cast<double>(g.tokens));

  const int draws = 100000;
  std::vector<double> vis_a(g.tokens, 0), vis_b(g.tokens, 0);
  for (int d = 0; d < draws; ++d) {
    MaskSpec a = sample_visible_from(uniform, 0.75, rng_a);
    MaskSpec b = random_patch_mask(g, 0.75, rng_b);
    for (std::size_t i : a.visible) vis_a[i] += 1;
    for (std::size_t i : b.visible) vis_b[i] += 1;
  }
  // two-sample chi-square over visibility counts
  double stat = 0.0;
  for (std::size_t i = 0; i < g.tokens; ++i) {
    const double pooled = (vis_a[i] + vis_b[i]) / 2.0;
    stat += (vis_a[i] - pooled) * (vis_a[i] - pooled) / pooled;
    stat += (vis_b[i] - pooled) * (vis_b[i] - pooled) / pooled;
  }
  CHECK(stat < oracle::chi2_crit_99(g.tokens - 1));
}
