#pragma once

#include <array>
#include <span>
#include <vector>

#include "modnet/model.hpp"
#include "modnet/patch.hpp"
#include "modnet/tape.hpp"

namespace modnet {

struct LossConfig {
  double alpha = 0.97;             // projection/repulsion trade-off
  double beta = 0.2;               // weight of the per-scale supervision
  double support_angle_deg = 15.0;
  int m_final = 500;               // cap for the final ground-truth patch
  double r_final_frac = 0.05;
  int m_per_scale = 500;           // cap for the per-scale ground-truth patches
};

/// Projection loss of a displaced point against a ground-truth patch:
/// weighted mean of |(p_dot - p_j) . n_j| with Gaussian spatial weights
/// (support width 4*sqrt(dobb/m)) and normal-similarity weights relative to
/// the normal of the ground-truth point nearest to p_dot (held constant).
ad::Value projection_loss(ad::Value p_dot, const GroundTruthPatch& gt, const LossConfig& cfg);

/// Max distance from the displaced point to the ground-truth patch;
/// subgradient routed to the farthest point (ties: lowest index).
ad::Value repulsion_loss(ad::Value p_dot, const GroundTruthPatch& gt);

/// alpha * L_s + (1 - alpha) * L_r.
ad::Value patch_loss(ad::Value p_dot, const GroundTruthPatch& gt, const LossConfig& cfg);

struct LossBreakdown {
  std::array<double, 3> l_s_scale{};
  std::array<double, 3> l_r_scale{};
  std::array<double, 3> l_p_scale{};
  double l_s_final = 0.0;
  double l_r_final = 0.0;
  double l_dp = 0.0;
  double l_final = 0.0;
  double l_total = 0.0;
};

struct BatchLoss {
  LossBreakdown breakdown;  // batch means
  ad::Value total;          // beta * L_dp + L_final, differentiable
};

/// Multi-offset objective over a batch: each pre-offset is supervised against
/// its own scale's ground-truth patch, the combined displacement against the
/// final patch; all components are batch means.
BatchLoss total_loss(const ForwardValues& output,
                     std::span<const std::array<GroundTruthPatch, 3>> gt_per_scale,
                     std::span<const GroundTruthPatch> gt_final, const LossConfig& cfg);

}  // namespace modnet
