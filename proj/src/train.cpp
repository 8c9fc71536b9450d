#include "modnet/train.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "modnet/parallel.hpp"
#include "modnet/rng.hpp"

namespace modnet {

double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (!(cfg.lr_start >= cfg.lr_end && cfg.lr_end > 0.0))
    throw std::invalid_argument("learning rate schedule requires lr_start >= lr_end > 0");
  if (epoch < 0 || epoch >= cfg.epochs) throw std::out_of_range("epoch outside schedule range");
  if (epoch == 0 || cfg.epochs == 1) return cfg.lr_start;
  if (epoch == cfg.epochs - 1) return cfg.lr_end;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

Dataset build_dataset(const std::vector<ShapeSpec>& specs, const std::vector<double>& noise_grid,
                      std::uint64_t seed) {
  if (specs.empty()) throw std::invalid_argument("dataset needs at least one shape");
  Dataset dataset;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const ShapeSpec& spec = specs[s];
    DatasetEntry entry;
    entry.name = spec.name;
    entry.mesh = gen_shape(spec.kind, spec.params, spec.resolution);
    Rng rng = Rng::derive(seed, {0x5A0F, s});
    entry.clean = sample_surface(entry.mesh, spec.n_points, rng);
    for (std::size_t v = 0; v < noise_grid.size(); ++v) {
      NoiseSpec noise;
      noise.model = NoiseModel::kGaussian;
      noise.sigma_frac = noise_grid[v];
      noise.seed = splitmix64(seed ^ (0xA01 + 1000 * s + v));
      entry.noisy.emplace_back(noise_grid[v], add_noise(entry.clean, noise));
    }
    dataset.entries.push_back(std::move(entry));
  }
  return dataset;
}

Trainer::Trainer(ModNetParams& params, const Dataset& dataset, const TrainConfig& cfg)
    : params_(&params), dataset_(&dataset), cfg_(cfg) {
  if (dataset.entries.empty()) throw std::invalid_argument("empty dataset");
  for (const DatasetEntry& entry : dataset.entries) {
    if (!entry.clean.has_normals())
      throw std::invalid_argument("training entries need clean normals: " + entry.name);
    if (entry.noisy.empty())
      throw std::invalid_argument("training entries need noisy clouds: " + entry.name);
    clean_index_.emplace_back(entry.clean);
    std::vector<KdTree> per_noise;
    for (const auto& [sigma, cloud] : entry.noisy) per_noise.emplace_back(cloud);
    noisy_index_.push_back(std::move(per_noise));
  }
}

namespace {

struct ShardResult {
  std::unique_ptr<ad::Tape> tape;  // kept alive for its pending BN updates
  std::vector<ad::Tensor> grads;
  LossBreakdown loss;
  int patches = 0;
  int skipped = 0;
};

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b, double w) {
  for (int k = 0; k < 3; ++k) {
    acc.l_s_scale[k] += w * b.l_s_scale[k];
    acc.l_r_scale[k] += w * b.l_r_scale[k];
    acc.l_p_scale[k] += w * b.l_p_scale[k];
  }
  acc.l_s_final += w * b.l_s_final;
  acc.l_r_final += w * b.l_r_final;
  acc.l_dp += w * b.l_dp;
  acc.l_final += w * b.l_final;
  acc.l_total += w * b.l_total;
}

}  // namespace

EpochStats Trainer::run_epoch(int epoch, const StepLogger& logger) {
  const double lr = lr_schedule(cfg_, epoch);
  const auto entries = static_cast<int>(dataset_->entries.size());

  // Fresh patch centers every epoch, shuffled across shapes and noise levels.
  Rng epoch_rng = Rng::derive(cfg_.seed, {0xE50C, static_cast<std::uint64_t>(epoch)});
  std::vector<Sample> samples;
  for (int s = 0; s < entries; ++s) {
    const DatasetEntry& entry = dataset_->entries[static_cast<std::size_t>(s)];
    for (int i = 0; i < cfg_.patches_per_shape_per_epoch; ++i) {
      Sample sample;
      sample.entry = s;
      sample.noise = static_cast<int>(epoch_rng.below(entry.noisy.size()));
      sample.point = static_cast<int>(epoch_rng.below(entry.clean.size()));
      samples.push_back(sample);
    }
  }
  for (std::size_t i = samples.size(); i > 1; --i)
    std::swap(samples[i - 1], samples[epoch_rng.below(i)]);

  EpochStats stats;
  const int batch_size = std::max(1, cfg_.batch_size);
  const int microbatch = std::max(1, std::min(cfg_.microbatch, batch_size));
  const int steps = (static_cast<int>(samples.size()) + batch_size - 1) / batch_size;

  for (int step = 0; step < steps; ++step) {
    const int begin = step * batch_size;
    const int end = std::min(static_cast<int>(samples.size()), begin + batch_size);
    const int shards = (end - begin + microbatch - 1) / microbatch;
    std::vector<ShardResult> results(static_cast<std::size_t>(shards));

    try {
      run_parallel(shards, cfg_.threads, [&](int shard) {
        ShardResult& res = results[static_cast<std::size_t>(shard)];
        const int sb = begin + shard * microbatch;
        const int se = std::min(end, sb + microbatch);

        std::vector<MultiScalePatch> patches;
        std::vector<std::array<GroundTruthPatch, 3>> gt_scales;
        std::vector<GroundTruthPatch> gt_final;
        for (int i = sb; i < se; ++i) {
          const Sample& sample = samples[static_cast<std::size_t>(i)];
          const DatasetEntry& entry = dataset_->entries[static_cast<std::size_t>(sample.entry)];
          const PointCloud& noisy =
              entry.noisy[static_cast<std::size_t>(sample.noise)].second;
          const KdTree& noisy_index =
              noisy_index_[static_cast<std::size_t>(sample.entry)]
                          [static_cast<std::size_t>(sample.noise)];
          Rng rng = Rng::derive(cfg_.seed, {0xBA7C, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(sample.entry),
                                            static_cast<std::uint64_t>(sample.noise),
                                            static_cast<std::uint64_t>(sample.point)});
          try {
            MultiScalePatch patch = extract_multiscale_patch(
                noisy, noisy_index, sample.point, cfg_.radii_frac, cfg_.n_patch, rng);
            std::array<GroundTruthPatch, 3> gts;
            for (int k = 0; k < 3; ++k)
              gts[k] = extract_gt_patch(entry.clean,
                                        clean_index_[static_cast<std::size_t>(sample.entry)],
                                        patch, cfg_.radii_frac[k], cfg_.loss.m_per_scale, rng);
            GroundTruthPatch fin = extract_gt_patch(
                entry.clean, clean_index_[static_cast<std::size_t>(sample.entry)], patch,
                cfg_.loss.r_final_frac, cfg_.loss.m_final, rng);
            patches.push_back(std::move(patch));
            gt_scales.push_back(std::move(gts));
            gt_final.push_back(std::move(fin));
          } catch (const std::runtime_error&) {
            ++res.skipped;  // isolated point or no ground-truth support
          }
        }
        if (patches.empty()) return;

        const int rows = static_cast<int>(patches.size());
        res.tape = std::make_unique<ad::Tape>(ad::Mode::kTrain);
        std::array<ad::Value, 3> patch_values;
        for (int k = 0; k < 3; ++k) {
          ad::Tensor t = ad::Tensor::zeros({rows, cfg_.n_patch, 3});
          for (int r = 0; r < rows; ++r)
            for (int p = 0; p < cfg_.n_patch; ++p)
              t.data.segment((static_cast<Eigen::Index>(r) * cfg_.n_patch + p) * 3, 3) =
                  patches[static_cast<std::size_t>(r)]
                      .scale_points[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)]
                      .array();
          patch_values[k] = res.tape->input(std::move(t));
        }
        const ForwardValues fwd = modnet_forward(*res.tape, patch_values, *params_);
        const BatchLoss loss = total_loss(fwd, gt_scales, gt_final, cfg_.loss);
        res.loss = loss.breakdown;
        res.patches = rows;
        res.tape->backward(loss.total, res.grads);
      });
    } catch (const std::exception& e) {
      throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) + " step " +
                               std::to_string(step) + ": " + e.what());
    }

    // Deterministic reduction: batch-norm statistics and gradients are
    // applied in shard order regardless of which worker finished first.
    int batch_patches = 0;
    LossBreakdown step_loss;
    for (ShardResult& res : results) {
      stats.skipped += res.skipped;
      if (res.patches == 0) continue;
      res.tape->apply_bn_updates();
      auto& registry = params_->params();
      for (std::size_t i = 0; i < res.grads.size(); ++i)
        if (!res.grads[i].empty()) registry[i]->grad.data += res.grads[i].data;
      add_breakdown(step_loss, res.loss, static_cast<double>(res.patches));
      batch_patches += res.patches;
    }
    if (batch_patches == 0) continue;

    if (cfg_.clip_norm > 0.0) ad::clip_grad_norm(params_->params(), cfg_.clip_norm);
    ad::sgd_step(params_->params(), lr);

    LossBreakdown mean;
    add_breakdown(mean, step_loss, 1.0 / static_cast<double>(batch_patches));
    if (logger) logger({epoch, step, lr, mean});
    add_breakdown(stats.mean, mean, static_cast<double>(batch_patches));
    stats.patches += batch_patches;
    ++stats.steps;
  }

  if (stats.patches > 0) {
    LossBreakdown mean;
    add_breakdown(mean, stats.mean, 1.0 / static_cast<double>(stats.patches));
    stats.mean = mean;
  }
  return stats;
}

}  // namespace modnet
