#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modnet/kd_tree.hpp"
#include "modnet/loss.hpp"
#include "modnet/model.hpp"
#include "modnet/shapes.hpp"

namespace modnet {

struct TrainConfig {
  int epochs = 8;           // paper protocol uses 40
  int batch_size = 32;      // paper protocol uses 200
  double lr_start = 1e-4;
  double lr_end = 1e-7;
  std::uint64_t seed = 0;
  std::array<double, 3> radii_frac{0.03, 0.04, 0.05};
  int n_patch = 400;
  LossConfig loss;
  int patches_per_shape_per_epoch = 768;
  int microbatch = 8;       // fixed shard size; worker count never changes results
  double clip_norm = 5.0;   // global-norm gradient clip, <= 0 disables
  int threads = 1;
};

/// Geometric interpolation from lr_start at epoch 0 to lr_end at the last
/// epoch; a single-epoch run uses lr_start.
double lr_schedule(const TrainConfig& cfg, int epoch);

struct ShapeSpec {
  std::string name;
  ShapeKind kind = ShapeKind::kCube;
  ShapeParams params;
  int resolution = 24;
  int n_points = 2000;
};

struct DatasetEntry {
  std::string name;
  PointCloud clean;  // with normals
  TriMesh mesh;
  std::vector<std::pair<double, PointCloud>> noisy;  // (sigma_frac, cloud)
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::string split = "train";
};

/// Deterministic synthetic dataset: per shape, one clean sampling plus one
/// Gaussian-noised copy per grid level, with index correspondence preserved.
Dataset build_dataset(const std::vector<ShapeSpec>& specs, const std::vector<double>& noise_grid,
                      std::uint64_t seed);

struct EpochStats {
  LossBreakdown mean;
  int steps = 0;
  int patches = 0;
  int skipped = 0;  // samples without ground-truth support
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};
using StepLogger = std::function<void(const StepRecord&)>;

/// SGD training loop. Each step samples patch centers, builds multi-scale
/// patches with their per-scale and final ground-truth patches, and applies
/// one SGD update. Batches are split into fixed micro-batch shards whose
/// gradients are reduced in shard order, so the parameter trajectory depends
/// only on (seed, config, dataset), never on the worker count.
class Trainer {
 public:
  Trainer(ModNetParams& params, const Dataset& dataset, const TrainConfig& cfg);

  EpochStats run_epoch(int epoch, const StepLogger& logger = {});

 private:
  struct Sample {
    int entry, noise, point;
  };

  ModNetParams* params_;
  const Dataset* dataset_;
  TrainConfig cfg_;
  std::vector<KdTree> clean_index_;
  std::vector<std::vector<KdTree>> noisy_index_;
};

}  // namespace modnet
