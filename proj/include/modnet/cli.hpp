#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modnet/model.hpp"
#include "modnet/train.hpp"

namespace modnet::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kVerificationFailure = 3;

struct SynthOptions {
  std::vector<std::string> shapes;  // "name[:a[:b]]"
  int points = 2000;
  int resolution = 24;
  std::vector<std::string> noise;   // "model:sigma1[,sigma2,...]"
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};
int cmd_synth(const SynthOptions& opt);

struct TrainOptions {
  std::string manifest;
  TrainConfig train;
  ModelConfig model;
  std::uint64_t init_seed = 1;
  std::string out_dir = "out";
};
int cmd_train(const TrainOptions& opt);

struct DenoiseOptions {
  std::string checkpoint;
  std::string input;
  DenoiseConfig denoise;
  ModelConfig model;
  bool export_weights = false;
  std::string out_dir = "out";
};
int cmd_denoise(const DenoiseOptions& opt);

struct EvalOptions {
  std::string filtered;
  std::string gt;
  std::string mesh;  // optional OFF file
  bool paper_scale = false;
  std::string out_dir;  // empty: stdout only
};
int cmd_eval(const EvalOptions& opt);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int trials_per_op = 200;
  int e2e_batches = 5;
};
int cmd_gradcheck(const GradcheckOptions& opt);

// Manifest row written by synth and consumed by train. Paths are relative to
// the manifest file's directory.
struct ManifestRow {
  std::string shape;
  int n_points = 0;
  std::string noise_model;
  double sigma_frac = 0.0;
  std::uint64_t seed = 0;
  std::string mesh_file;
  std::string clean_file;
  std::string noisy_file;
};
std::vector<ManifestRow> read_manifest(const std::string& path);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace modnet::cli
