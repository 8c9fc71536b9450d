#include "modnet/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace modnet {

using ad::Tape;
using ad::Tensor;
using ad::Value;

namespace {

struct PatchTerms {
  Value l_s, l_r, l_p;
};

Tensor points_tensor(const GroundTruthPatch& gt) {
  Tensor t = Tensor::zeros({gt.m, 3});
  for (int j = 0; j < gt.m; ++j)
    t.data.segment(static_cast<Eigen::Index>(j) * 3, 3) =
        gt.gt_points[static_cast<std::size_t>(j)].array();
  return t;
}

void validate(const GroundTruthPatch& gt) {
  if (gt.m < 1 || gt.gt_points.size() != static_cast<std::size_t>(gt.m) ||
      gt.gt_normals.size() != static_cast<std::size_t>(gt.m))
    throw std::invalid_argument("ground-truth patch is empty or inconsistent");
}

// Shared subgraph for the projection and repulsion terms of one patch.
PatchTerms patch_terms(Value p_dot, const GroundTruthPatch& gt, const LossConfig& cfg,
                       bool want_projection, bool want_repulsion) {
  validate(gt);
  Tape& tape = *p_dot.tape;
  if (tape.value(p_dot).numel() != 3)
    throw std::invalid_argument("displaced point must be a 3-vector");

  const Value pts = tape.input(points_tensor(gt));
  const Value d = ad::sub(ad::broadcast_rows(p_dot, gt.m), pts);
  const Value sq = ad::sum_lastaxis(ad::mul(d, d));

  PatchTerms terms;
  if (want_projection) {
    if (!(gt.dobb > 0.0)) throw std::invalid_argument("degenerate ground-truth patch");

    // Normal of the displaced point: the nearest ground-truth point's normal,
    // held constant (no gradient through the nearest-neighbor choice).
    const Tensor& pv = tape.value(p_dot);
    const Vec3 p(pv.data[0], pv.data[1], pv.data[2]);
    int nearest = 0;
    double best = (p - gt.gt_points[0]).squaredNorm();
    for (int j = 1; j < gt.m; ++j) {
      const double dist = (p - gt.gt_points[static_cast<std::size_t>(j)]).squaredNorm();
      if (dist < best) {
        best = dist;
        nearest = j;
      }
    }
    const Vec3 n_pdot = gt.gt_normals[static_cast<std::size_t>(nearest)];

    const double angle = cfg.support_angle_deg * M_PI / 180.0;
    const double theta_denom = 1.0 - std::cos(angle);
    Tensor normals = Tensor::zeros({gt.m, 3});
    Tensor theta = Tensor::zeros({gt.m});
    for (int j = 0; j < gt.m; ++j) {
      const Vec3& nj = gt.gt_normals[static_cast<std::size_t>(j)];
      normals.data.segment(static_cast<Eigen::Index>(j) * 3, 3) = nj.array();
      theta.data[j] = std::exp(-(1.0 - n_pdot.dot(nj)) / theta_denom);
    }

    const double eps_p_sq = 16.0 * gt.dobb / static_cast<double>(gt.m);
    const Value proj = ad::abs_(ad::sum_lastaxis(ad::mul(d, tape.input(std::move(normals)))));
    const Value phi = ad::exp_(ad::scale(sq, -1.0 / eps_p_sq));
    const Value w = ad::mul(phi, tape.input(std::move(theta)));
    terms.l_s = ad::div(ad::sum(ad::mul(proj, w)), ad::sum(w));
  }
  if (want_repulsion) terms.l_r = ad::reduce_max(ad::sqrt_(sq));
  if (want_projection && want_repulsion)
    terms.l_p = ad::add(ad::scale(terms.l_s, cfg.alpha), ad::scale(terms.l_r, 1.0 - cfg.alpha));
  return terms;
}

}  // namespace

Value projection_loss(Value p_dot, const GroundTruthPatch& gt, const LossConfig& cfg) {
  return patch_terms(p_dot, gt, cfg, true, false).l_s;
}

Value repulsion_loss(Value p_dot, const GroundTruthPatch& gt) {
  return patch_terms(p_dot, gt, LossConfig{}, false, true).l_r;
}

Value patch_loss(Value p_dot, const GroundTruthPatch& gt, const LossConfig& cfg) {
  return patch_terms(p_dot, gt, cfg, true, true).l_p;
}

BatchLoss total_loss(const ForwardValues& output,
                     std::span<const std::array<GroundTruthPatch, 3>> gt_per_scale,
                     std::span<const GroundTruthPatch> gt_final, const LossConfig& cfg) {
  Tape& tape = *output.displacement.tape;
  const Tensor& dp = tape.value(output.displacement);
  const int batch = dp.dim(0);
  if (gt_per_scale.size() != static_cast<std::size_t>(batch) ||
      gt_final.size() != static_cast<std::size_t>(batch))
    throw std::invalid_argument("ground-truth patch count does not match batch size");
  if (batch < 1) throw std::invalid_argument("empty batch");

  std::array<Value, 3> sum_s{}, sum_r{}, sum_p{};
  Value sum_s_final, sum_r_final, sum_final;
  auto accumulate = [](Value& acc, Value v) { acc = acc.valid() ? ad::add(acc, v) : v; };

  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < 3; ++k) {
      const PatchTerms terms = patch_terms(ad::row(output.pre_offsets[k], b),
                                           gt_per_scale[static_cast<std::size_t>(b)][k], cfg,
                                           true, true);
      accumulate(sum_s[k], terms.l_s);
      accumulate(sum_r[k], terms.l_r);
      accumulate(sum_p[k], terms.l_p);
    }
    const PatchTerms fin = patch_terms(ad::row(output.displacement, b),
                                       gt_final[static_cast<std::size_t>(b)], cfg, true, true);
    accumulate(sum_s_final, fin.l_s);
    accumulate(sum_r_final, fin.l_r);
    accumulate(sum_final, fin.l_p);
  }

  const double inv_b = 1.0 / static_cast<double>(batch);
  Value l_dp = ad::scale(ad::add(ad::add(sum_p[0], sum_p[1]), sum_p[2]), inv_b);
  Value l_final = ad::scale(sum_final, inv_b);
  Value total = ad::add(ad::scale(l_dp, cfg.beta), l_final);

  BatchLoss out;
  out.total = total;
  for (int k = 0; k < 3; ++k) {
    out.breakdown.l_s_scale[k] = tape.value(sum_s[k]).scalar_value() * inv_b;
    out.breakdown.l_r_scale[k] = tape.value(sum_r[k]).scalar_value() * inv_b;
    out.breakdown.l_p_scale[k] = tape.value(sum_p[k]).scalar_value() * inv_b;
  }
  out.breakdown.l_s_final = tape.value(sum_s_final).scalar_value() * inv_b;
  out.breakdown.l_r_final = tape.value(sum_r_final).scalar_value() * inv_b;
  out.breakdown.l_dp = tape.value(l_dp).scalar_value();
  out.breakdown.l_final = tape.value(l_final).scalar_value();
  out.breakdown.l_total = tape.value(total).scalar_value();
  return out;
}

}  // namespace modnet
