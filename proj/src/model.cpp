#include "modnet/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "modnet/parallel.hpp"
#include "modnet/rng.hpp"

namespace modnet {

using ad::Tape;
using ad::Tensor;
using ad::Value;

std::string ModelConfig::dimension_table() const {
  std::ostringstream os;
  os << "encoder:3";
  for (int w : encoder_widths) os << "->" << w;
  os << ";mspm:" << concat_width() << "->" << mspm_hidden;
  os << ";gate:" << mspm_hidden << "->" << feature_width();
  os << ";weight:" << mspm_hidden << "->" << weight_hidden << "->9";
  os << ";decoder:" << feature_width();
  for (int w : decoder_widths) os << "->" << w;
  os << "->3;scales:" << kScales;
  return os.str();
}

std::uint64_t ModelConfig::digest() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : dimension_table()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(-bound, bound);
  return t;
}

LinearLayer make_linear(const std::string& name, int in, int out, Rng& rng) {
  LinearLayer layer;
  layer.weight = ad::Parameter(name + ".weight", xavier_uniform(in, out, rng));
  layer.bias = ad::Parameter(name + ".bias", Tensor::zeros({out}));
  return layer;
}

}  // namespace

ModNetParams::ModNetParams(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  if (config_.encoder_widths.empty() || config_.decoder_widths.empty())
    throw std::invalid_argument("model config must list encoder and decoder widths");
  Rng rng = Rng::derive(init_seed, {0x1417});

  for (int k = 0; k < ModelConfig::kScales; ++k) {
    int in = 3;
    for (std::size_t l = 0; l < config_.encoder_widths.size(); ++l) {
      const int out = config_.encoder_widths[l];
      const std::string name =
          "pfe" + std::to_string(k) + ".l" + std::to_string(l);
      EncoderLayer layer;
      layer.fc = make_linear(name + ".fc", in, out, rng);
      layer.bn = ad::BatchNorm(name + ".bn", out);
      pfe[k].push_back(std::move(layer));
      in = out;
    }
  }

  const int feat = config_.feature_width();
  mspm_fc1 = make_linear("mspm.fc1", config_.concat_width(), config_.mspm_hidden, rng);
  for (int k = 0; k < ModelConfig::kScales; ++k)
    mspm_gate[k] = make_linear("mspm.gate" + std::to_string(k), config_.mspm_hidden, feat, rng);
  weight_fc1 = make_linear("mspm.weight1", config_.mspm_hidden, config_.weight_hidden, rng);
  weight_fc2 = make_linear("mspm.weight2", config_.weight_hidden, 9, rng);

  for (int k = 0; k < ModelConfig::kScales; ++k) {
    const std::string name = "mod" + std::to_string(k);
    decoders[k].dc1a = make_linear(name + ".dc1a", feat, config_.decoder_widths[0], rng);
    decoders[k].dc1b =
        make_linear(name + ".dc1b", config_.decoder_widths[0], config_.decoder_widths[1], rng);
    decoders[k].head_pre = make_linear(name + ".pre", config_.decoder_widths.back(), 3, rng);
    decoders[k].head_offset = make_linear(name + ".offset", config_.decoder_widths.back(), 3, rng);
  }

  auto reg = [&](LinearLayer& l) {
    registry_.push_back(&l.weight);
    registry_.push_back(&l.bias);
  };
  for (int k = 0; k < ModelConfig::kScales; ++k)
    for (EncoderLayer& layer : pfe[k]) {
      reg(layer.fc);
      registry_.push_back(&layer.bn.gamma);
      registry_.push_back(&layer.bn.beta);
    }
  reg(mspm_fc1);
  for (int k = 0; k < ModelConfig::kScales; ++k) reg(mspm_gate[k]);
  reg(weight_fc1);
  reg(weight_fc2);
  for (int k = 0; k < ModelConfig::kScales; ++k) {
    reg(decoders[k].dc1a);
    reg(decoders[k].dc1b);
    reg(decoders[k].head_pre);
    reg(decoders[k].head_offset);
  }
  for (std::size_t i = 0; i < registry_.size(); ++i) registry_[i]->index = static_cast<int>(i);
}

std::vector<std::pair<std::string, Tensor*>> ModNetParams::state_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (ad::Parameter* p : registry_) out.emplace_back(p->name, &p->value);
  for (int k = 0; k < ModelConfig::kScales; ++k)
    for (std::size_t l = 0; l < pfe[k].size(); ++l) {
      const std::string name = "pfe" + std::to_string(k) + ".l" + std::to_string(l) + ".bn";
      out.emplace_back(name + ".running_mean", &pfe[k][l].bn.running_mean);
      out.emplace_back(name + ".running_var", &pfe[k][l].bn.running_var);
    }
  return out;
}

Value pfe_forward(Value patch, std::vector<EncoderLayer>& layers) {
  Tape& tape = *patch.tape;
  const Tensor& pv = tape.value(patch);
  if (pv.rank() != 3 || pv.dim(2) != 3)
    throw std::invalid_argument("pfe_forward: expected [batch,points,3], got " +
                                ad::shape_str(pv.shape));
  const int batch = pv.dim(0), pts = pv.dim(1);
  Value h = ad::reshape(patch, {batch * pts, 3});
  for (EncoderLayer& layer : layers)
    h = ad::relu(ad::batchnorm(ad::linear(h, layer.fc.weight, layer.fc.bias), layer.bn));
  const int feat = tape.value(h).dim(1);
  h = ad::reshape(h, {batch, pts, feat});
  return ad::maxpool_points(h);
}

namespace {

// MSPM + MOD on top of already-computed low-level features; shared by the
// training and eval forward paths.
void fuse_and_decode(ForwardValues& out, ModNetParams& params) {
  Tape& tape = *out.low_feats[0].tape;
  const int batch = tape.value(out.low_feats[0]).dim(0);

  // MSPM: fuse, gate each scale feature, and regress per-axis scale weights.
  Value fused = ad::concat_lastaxis({out.low_feats[0], out.low_feats[1], out.low_feats[2]});
  Value h = ad::relu(ad::linear(fused, params.mspm_fc1.weight, params.mspm_fc1.bias));
  for (int k = 0; k < 3; ++k) {
    Value gate =
        ad::sigmoid(ad::linear(h, params.mspm_gate[k].weight, params.mspm_gate[k].bias));
    out.gated_feats[k] = ad::mul(out.low_feats[k], gate);
  }
  Value w = ad::relu(ad::linear(h, params.weight_fc1.weight, params.weight_fc1.bias));
  w = ad::linear(w, params.weight_fc2.weight, params.weight_fc2.bias);
  // Rows are coordinate axes, columns are scales; softmax normalizes each
  // axis independently over the three scales.
  out.axis_scale_weights = ad::softmax_axis(ad::reshape(w, {batch, 3, 3}), 2);
  for (int k = 0; k < 3; ++k)
    out.scale_weights[k] = ad::select_lastaxis(out.axis_scale_weights, k);

  // MOD: per-scale sub-decoders, then the weight-guided combination.
  std::array<Value, 3> terms;
  for (int k = 0; k < 3; ++k) {
    ModNetParams::Decoder& dec = params.decoders[k];
    Value t = ad::relu(ad::linear(out.gated_feats[k], dec.dc1a.weight, dec.dc1a.bias));
    t = ad::relu(ad::linear(t, dec.dc1b.weight, dec.dc1b.bias));
    out.pre_offsets[k] = ad::tanh_(ad::linear(t, dec.head_pre.weight, dec.head_pre.bias));
    out.offsets[k] = ad::tanh_(ad::linear(t, dec.head_offset.weight, dec.head_offset.bias));
    terms[k] = ad::mul(out.offsets[k], out.scale_weights[k]);
  }
  out.displacement = ad::add(ad::add(terms[0], terms[1]), terms[2]);
}

}  // namespace

ForwardValues modnet_forward(Tape& tape, const std::array<Value, 3>& patches,
                             ModNetParams& params) {
  const int batch = tape.value(patches[0]).dim(0);
  for (const Value& p : patches)
    if (tape.value(p).dim(0) != batch)
      throw std::invalid_argument("modnet_forward: inconsistent batch across scales");

  ForwardValues out;
  for (int k = 0; k < 3; ++k) out.low_feats[k] = pfe_forward(patches[k], params.pfe[k]);
  fuse_and_decode(out, params);
  return out;
}

ForwardOutput collect_output(const Tape& tape, const ForwardValues& values) {
  ForwardOutput out;
  for (int k = 0; k < 3; ++k) {
    out.low_feats[k] = tape.value(values.low_feats[k]);
    out.gated_feats[k] = tape.value(values.gated_feats[k]);
    out.pre_offsets[k] = tape.value(values.pre_offsets[k]);
    out.offsets[k] = tape.value(values.offsets[k]);
  }
  out.displacement = tape.value(values.displacement);

  // Transpose [B, axes, scales] into the exported [B, scales, axes] layout.
  const Tensor& sm = tape.value(values.axis_scale_weights);
  const int batch = sm.dim(0);
  out.weights = Tensor::zeros({batch, 3, 3});
  for (int b = 0; b < batch; ++b)
    for (int a = 0; a < 3; ++a)
      for (int k = 0; k < 3; ++k)
        out.weights.data[(b * 3 + k) * 3 + a] = sm.data[(b * 3 + a) * 3 + k];
  return out;
}

namespace {

// Lexicographically sorted distinct rows of a [P,3] slice. Eval-mode encoder
// layers act row-wise and max-pooling ignores multiplicity, so feeding each
// distinct point once is exact and makes the result independent of point
// order within the patch.
std::vector<Vec3> distinct_rows(const Tensor& patch, int b) {
  const int pts = patch.dim(1);
  std::vector<Vec3> rows(static_cast<std::size_t>(pts));
  for (int p = 0; p < pts; ++p) {
    const Eigen::Index base = (static_cast<Eigen::Index>(b) * pts + p) * 3;
    rows[static_cast<std::size_t>(p)] = Vec3(patch.data[base], patch.data[base + 1], patch.data[base + 2]);
  }
  auto less = [](const Vec3& a, const Vec3& c) {
    if (a.x() != c.x()) return a.x() < c.x();
    if (a.y() != c.y()) return a.y() < c.y();
    return a.z() < c.z();
  };
  std::sort(rows.begin(), rows.end(), less);
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const Vec3& a, const Vec3& c) { return a == c; }),
             rows.end());
  return rows;
}

}  // namespace

ForwardOutput modnet_eval(ModNetParams& params, const std::array<Tensor, 3>& patches) {
  const int batch = patches[0].dim(0);
  std::array<Tensor, 3> feats;

  const int feat = params.config().feature_width();
  for (int k = 0; k < 3; ++k) {
    if (patches[k].rank() != 3 || patches[k].dim(2) != 3 || patches[k].dim(0) != batch)
      throw std::invalid_argument("modnet_eval: expected [batch,points,3] patches");
    feats[k] = Tensor::zeros({batch, feat});
    // One stack per patch: identical patches then yield bit-identical
    // features regardless of their position in the batch.
    for (int b = 0; b < batch; ++b) {
      const std::vector<Vec3> rows = distinct_rows(patches[k], b);
      Tensor stacked = Tensor::zeros({static_cast<int>(rows.size()), 3});
      for (std::size_t r = 0; r < rows.size(); ++r)
        stacked.data.segment(static_cast<Eigen::Index>(r) * 3, 3) = rows[r].array();

      Tape tape(ad::Mode::kEval);
      Value h = tape.input(std::move(stacked));
      for (EncoderLayer& layer : params.pfe[k])
        h = ad::relu(ad::batchnorm(ad::linear(h, layer.fc.weight, layer.fc.bias), layer.bn));
      const Tensor& hv = tape.value(h);

      for (int f = 0; f < feat; ++f) {
        double best = hv.data[f];
        for (std::size_t r = 1; r < rows.size(); ++r)
          best = std::max(best, hv.data[static_cast<Eigen::Index>(r) * feat + f]);
        feats[k].data[static_cast<Eigen::Index>(b) * feat + f] = best;
      }
    }
  }

  Tape tape(ad::Mode::kEval);
  ForwardValues values;
  for (int k = 0; k < 3; ++k) values.low_feats[k] = tape.input(feats[k]);
  fuse_and_decode(values, params);
  return collect_output(tape, values);
}

DenoiseResult denoise_cloud(const PointCloud& noisy, ModNetParams& params,
                            const DenoiseConfig& config) {
  if (noisy.empty()) throw std::invalid_argument("empty point cloud");
  const int n = static_cast<int>(noisy.size());
  const KdTree index(noisy);

  DenoiseResult result;
  result.cloud.points.resize(static_cast<std::size_t>(n));
  result.weights.assign(static_cast<std::size_t>(n), Mat3::Constant(1.0 / 3.0));

  const int batch = std::max(1, config.batch);
  const int chunks = (n + batch - 1) / batch;
  std::atomic<int> isolated{0};

  run_parallel(chunks, config.threads, [&](int chunk) {
    const int begin = chunk * batch;
    const int end = std::min(n, begin + batch);

    std::vector<int> live;  // points with a usable patch
    std::vector<MultiScalePatch> patches;
    for (int i = begin; i < end; ++i) {
      Rng rng = Rng::derive(config.seed, {0x9A7C, static_cast<std::uint64_t>(i)});
      try {
        patches.push_back(
            extract_multiscale_patch(noisy, index, i, config.radii_frac, config.n_patch, rng));
        live.push_back(i);
      } catch (const std::exception&) {
        // Isolated points pass through unchanged.
        result.cloud.points[static_cast<std::size_t>(i)] = noisy.points[static_cast<std::size_t>(i)];
        isolated.fetch_add(1);
      }
    }
    if (live.empty()) return;

    const int rows = static_cast<int>(live.size());
    std::array<Tensor, 3> batch_patches;
    for (int k = 0; k < 3; ++k) {
      batch_patches[k] = Tensor::zeros({rows, config.n_patch, 3});
      for (int r = 0; r < rows; ++r)
        for (int p = 0; p < config.n_patch; ++p)
          batch_patches[k].data.segment(
              (static_cast<Eigen::Index>(r) * config.n_patch + p) * 3, 3) =
              patches[static_cast<std::size_t>(r)].scale_points[static_cast<std::size_t>(k)]
                     [static_cast<std::size_t>(p)]
                         .array();
    }

    const ForwardOutput out = modnet_eval(params, batch_patches);
    for (int r = 0; r < rows; ++r) {
      const MultiScalePatch& patch = patches[static_cast<std::size_t>(r)];
      const Vec3 dp(out.displacement.data[r * 3 + 0], out.displacement.data[r * 3 + 1],
                    out.displacement.data[r * 3 + 2]);
      const int i = live[static_cast<std::size_t>(r)];
      result.cloud.points[static_cast<std::size_t>(i)] =
          patch.center + patch.scale * (patch.rotation.transpose() * dp);
      Mat3 w;
      for (int k = 0; k < 3; ++k)
        for (int a = 0; a < 3; ++a) w(k, a) = out.weights.data[(r * 3 + k) * 3 + a];
      result.weights[static_cast<std::size_t>(i)] = w;
    }
  });

  result.isolated_count = isolated.load();
  return result;
}

void write_weights_file(const std::string& path, const std::vector<Mat3>& weights) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  for (const Mat3& w : weights) {
    std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", w(0, 0), w(0, 1),
                 w(0, 2), w(1, 0), w(1, 1), w(1, 2), w(2, 0), w(2, 1), w(2, 2));
  }
  std::fclose(f);
}

}  // namespace modnet
