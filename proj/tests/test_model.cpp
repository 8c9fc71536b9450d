#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "modnet/gradcheck.hpp"
#include "modnet/model.hpp"
#include "modnet/rng.hpp"

using namespace modnet;
using ad::Tape;
using ad::Tensor;
using ad::Value;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.encoder_widths = {8, 12, 16, 24};
  cfg.mspm_hidden = 24;
  cfg.weight_hidden = 16;
  cfg.decoder_widths = {16, 12};
  return cfg;
}

std::array<Tensor, 3> random_patches(int batch, int pts, Rng& rng, int pad = 0) {
  std::array<Tensor, 3> out;
  for (auto& t : out) {
    t = Tensor::zeros({batch, pts, 3});
    for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-1, 1);
    for (int b = 0; b < batch; ++b)
      for (int p = pts - pad; p < pts; ++p)
        t.data.segment((static_cast<Eigen::Index>(b) * pts + p) * 3, 3).setZero();
  }
  return out;
}

}  // namespace

TEST_CASE("default widths satisfy the 1536 and 9 constraints") {
  const ModelConfig cfg;
  CHECK(cfg.feature_width() == 512);
  CHECK(cfg.concat_width() == 1536);
  ModNetParams params(cfg, 1);
  CHECK(params.weight_fc2.weight.value.dim(1) == 9);
  for (int k = 0; k < 3; ++k) {
    CHECK(params.decoders[k].head_pre.weight.value.dim(1) == 3);
    CHECK(params.decoders[k].head_offset.weight.value.dim(1) == 3);
  }

  // One full-size forward: encoder output width 512 per scale.
  Rng rng(3);
  auto patches = random_patches(1, 400, rng, 100);
  const ForwardOutput out = modnet_eval(params, patches);
  CHECK(out.low_feats[0].shape == std::vector<int>{1, 512});
  CHECK(out.displacement.shape == std::vector<int>{1, 3});
}

TEST_CASE("encoder output is invariant to point order in eval mode") {
  ModNetParams params(tiny_config(), 7);
  Rng rng(5);
  auto patches = random_patches(2, 32, rng, 6);

  auto shuffled = patches;
  Rng perm_rng(9);
  for (int k = 0; k < 3; ++k)
    for (int b = 0; b < 2; ++b)
      for (int p = 31; p > 0; --p) {
        const int q = static_cast<int>(perm_rng.below(static_cast<std::uint64_t>(p + 1)));
        for (int c = 0; c < 3; ++c)
          std::swap(shuffled[k].data[(b * 32 + p) * 3 + c], shuffled[k].data[(b * 32 + q) * 3 + c]);
      }

  const ForwardOutput a = modnet_eval(params, patches);
  const ForwardOutput b = modnet_eval(params, shuffled);
  for (int k = 0; k < 3; ++k)
    CHECK((a.low_feats[k].data - b.low_feats[k].data).abs().maxCoeff() == 0.0);
  CHECK((a.displacement.data - b.displacement.data).abs().maxCoeff() == 0.0);
}

TEST_CASE("duplicated patches produce identical rows in eval mode") {
  ModNetParams params(tiny_config(), 11);
  Rng rng(8);
  auto one = random_patches(1, 24, rng, 4);
  std::array<Tensor, 3> two;
  for (int k = 0; k < 3; ++k) {
    two[k] = Tensor::zeros({2, 24, 3});
    two[k].data.segment(0, 72) = one[k].data;
    two[k].data.segment(72, 72) = one[k].data;
  }
  const ForwardOutput out = modnet_eval(params, two);
  CHECK((out.displacement.data.segment(0, 3) == out.displacement.data.segment(3, 3)).all());
  for (int i = 0; i < 9; ++i)
    CHECK(out.weights.data[i] == out.weights.data[9 + i]);
}

TEST_CASE("eval fast path agrees with the recorded eval forward") {
  ModNetParams params(tiny_config(), 13);
  Rng rng(21);
  auto patches = random_patches(3, 24, rng, 5);

  const ForwardOutput fast = modnet_eval(params, patches);

  Tape tape(ad::Mode::kEval);
  std::array<Value, 3> pv;
  for (int k = 0; k < 3; ++k) pv[k] = tape.input(patches[k]);
  const ForwardOutput full = collect_output(tape, modnet_forward(tape, pv, params));

  CHECK((fast.displacement.data - full.displacement.data).abs().maxCoeff() < 1e-12);
  CHECK((fast.weights.data - full.weights.data).abs().maxCoeff() < 1e-12);
  for (int k = 0; k < 3; ++k)
    CHECK((fast.low_feats[k].data - full.low_feats[k].data).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero weight logits give uniform scale weights") {
  ModNetParams params(tiny_config(), 17);
  params.weight_fc2.weight.value.data.setZero();
  params.weight_fc2.bias.value.data.setZero();
  Rng rng(2);
  auto patches = random_patches(2, 16, rng);
  const ForwardOutput out = modnet_eval(params, patches);
  for (Eigen::Index i = 0; i < out.weights.numel(); ++i)
    CHECK(out.weights.data[i] == 1.0 / 3.0);
}

TEST_CASE("zero gate pre-activation halves the features") {
  ModNetParams params(tiny_config(), 19);
  for (int k = 0; k < 3; ++k) {
    params.mspm_gate[k].weight.value.data.setZero();
    params.mspm_gate[k].bias.value.data.setZero();
  }
  Rng rng(4);
  auto patches = random_patches(2, 16, rng);
  const ForwardOutput out = modnet_eval(params, patches);
  for (int k = 0; k < 3; ++k)
    CHECK((out.gated_feats[k].data - 0.5 * out.low_feats[k].data).abs().maxCoeff() < 1e-15);
}

TEST_CASE("weight simplex and displacement envelope") {
  ModNetParams params(tiny_config(), 23);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto patches = random_patches(8, 20, rng, static_cast<int>(rng.below(8)));
    const ForwardOutput out = modnet_eval(params, patches);
    for (int b = 0; b < 8; ++b) {
      for (int a = 0; a < 3; ++a) {
        double sum = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double w = out.weights.data[(b * 3 + k) * 3 + a];
          CHECK(w > 0.0);
          CHECK(w < 1.0);
          sum += w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);

        double lo = 1e9, hi = -1e9, dp_check = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double off = out.offsets[k].data[b * 3 + a];
          CHECK(std::abs(off) < 1.0);  // tanh range
          lo = std::min(lo, off);
          hi = std::max(hi, off);
          dp_check += off * out.weights.data[(b * 3 + k) * 3 + a];
        }
        const double dp = out.displacement.data[b * 3 + a];
        CHECK(dp >= lo - 1e-9);
        CHECK(dp <= hi + 1e-9);
        CHECK(std::abs(dp) < 1.0);
        // Recompute the weighted combination coefficient by coefficient.
        CHECK(std::abs(dp - dp_check) < 1e-12);
      }
    }
  }
}

TEST_CASE("forward determinism in eval mode") {
  ModNetParams params(tiny_config(), 29);
  Rng rng(10);
  auto patches = random_patches(2, 24, rng, 3);
  const ForwardOutput a = modnet_eval(params, patches);
  const ForwardOutput b = modnet_eval(params, patches);
  CHECK((a.displacement.data == b.displacement.data).all());
  CHECK((a.weights.data == b.weights.data).all());
}

TEST_CASE("train-mode gradient of mean squared displacement") {
  ModNetParams params(tiny_config(), 31);
  Rng rng(15);
  auto patches = random_patches(3, 16, rng, 2);
  auto run = [&](bool grad) {
    Tape tape(ad::Mode::kTrain);
    std::array<Value, 3> pv;
    for (int k = 0; k < 3; ++k) pv[k] = tape.input(patches[k]);
    const ForwardValues fwd = modnet_forward(tape, pv, params);
    Value loss = ad::scale(ad::sum(ad::mul(fwd.displacement, fwd.displacement)), 1.0 / 9.0);
    const double v = tape.value(loss).scalar_value();
    if (grad) tape.backward(loss);
    return v;
  };
  Rng check_rng(77);
  const double err = finite_diff_max_rel_err(params.params(), run, 10, 1e-5, check_rng);
  CHECK(err < 1e-4);
}

TEST_CASE("zero offset heads make denoising the identity") {
  ModNetParams params(tiny_config(), 37);
  for (int k = 0; k < 3; ++k) {
    params.decoders[k].head_offset.weight.value.data.setZero();
    params.decoders[k].head_offset.bias.value.data.setZero();
  }
  Rng rng(12);
  PointCloud cloud;
  for (int i = 0; i < 120; ++i)
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.2 * rng.uniform(-1, 1));

  DenoiseConfig cfg;
  cfg.n_patch = 50;
  cfg.batch = 16;
  const DenoiseResult result = denoise_cloud(cloud, params, cfg);
  REQUIRE(result.cloud.size() == cloud.size());
  CHECK(result.isolated_count == 0);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    CHECK(result.cloud.points[i] == cloud.points[i]);

  // Exported weights: each per-axis triple over scales sums to 1.
  for (const Mat3& w : result.weights)
    for (int a = 0; a < 3; ++a)
      CHECK(std::abs(w(0, a) + w(1, a) + w(2, a) - 1.0) < 1e-6);
}

TEST_CASE("denoising commutes with axis-permuting rigid motions") {
  // The cloud must be dense enough that every patch has a well-defined PCA
  // frame; the degenerate identity fallback is coordinate-bound by design.
  ModNetParams params(tiny_config(), 41);
  Rng rng(18);
  PointCloud cloud;
  for (int i = 0; i < 1200; ++i) {
    const double x = rng.uniform(-1.2, 1.2), y = rng.uniform(-0.9, 0.9);
    cloud.points.emplace_back(x, y, 0.25 * std::sin(2 * x) + 0.02 * rng.normal());
  }

  Mat3 perm;
  perm << 0, 0, 1, 1, 0, 0, 0, 1, 0;  // det +1, preserves the bbox diagonal
  const Vec3 shift(0.4, -2.0, 1.1);
  PointCloud moved;
  for (const Vec3& p : cloud.points) moved.points.push_back(perm * p + shift);

  DenoiseConfig cfg;
  cfg.n_patch = 60;
  cfg.batch = 32;
  const DenoiseResult base = denoise_cloud(cloud, params, cfg);
  const DenoiseResult transformed = denoise_cloud(moved, params, cfg);

  // Patches that fall back to the identity frame are exempt: that fallback is
  // coordinate-bound by construction.
  const KdTree index(cloud);
  int skipped = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Rng patch_rng = Rng::derive(cfg.seed, {0x9A7C, i});
    const MultiScalePatch patch = extract_multiscale_patch(
        cloud, index, static_cast<int>(i), cfg.radii_frac, cfg.n_patch, patch_rng);
    if (patch.degenerate_frame) {
      ++skipped;
      continue;
    }
    const Vec3 expected = perm * base.cloud.points[i] + shift;
    CHECK((transformed.cloud.points[i] - expected).norm() < 1e-6);
  }
  CHECK(skipped <= 3);
}

TEST_CASE("denoise worker count does not change results") {
  ModNetParams params(tiny_config(), 43);
  Rng rng(25);
  PointCloud cloud;
  for (int i = 0; i < 150; ++i)
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.1, 0.1));
  DenoiseConfig one;
  one.n_patch = 40;
  one.batch = 16;
  one.threads = 1;
  DenoiseConfig four = one;
  four.threads = 4;
  const DenoiseResult a = denoise_cloud(cloud, params, one);
  const DenoiseResult b = denoise_cloud(cloud, params, four);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    CHECK(a.cloud.points[i] == b.cloud.points[i]);
}
