#include "modnet/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "modnet/checkpoint.hpp"
#include "modnet/gradcheck.hpp"
#include "modnet/metrics.hpp"
#include "modnet/rng.hpp"

namespace modnet::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

ShapeSpec parse_shape_spec(const std::string& text, int points, int resolution) {
  const auto parts = split(text, ':');
  if (parts.empty()) throw std::invalid_argument("empty shape spec");
  ShapeSpec spec;
  spec.name = parts[0];
  spec.kind = parse_shape_kind(parts[0]);
  spec.params = default_shape_params(spec.kind);
  if (parts.size() > 1) spec.params.a = std::stod(parts[1]);
  if (parts.size() > 2) spec.params.b = std::stod(parts[2]);
  spec.resolution = resolution;
  spec.n_points = points;
  return spec;
}

struct NoiseEntry {
  NoiseModel model;
  double sigma_frac;
};

std::vector<NoiseEntry> parse_noise_list(const std::vector<std::string>& specs) {
  std::vector<NoiseEntry> out;
  for (const std::string& text : specs) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("noise spec must look like model:sigma[,sigma...]: " + text);
    const NoiseModel model = parse_noise_model(text.substr(0, colon));
    for (const std::string& s : split(text.substr(colon + 1), ','))
      out.push_back({model, std::stod(s)});
  }
  if (out.empty()) throw std::invalid_argument("no noise levels given");
  return out;
}

std::string format_sigma(double sigma) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", sigma);
  return buf;
}

void echo(std::ostream& os, const std::string& key, const std::string& value) {
  os << key << " = " << value << "\n";
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string csv_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void echo_model(std::ostream& os, const ModelConfig& m) {
  echo(os, "encoder-widths", csv_list(m.encoder_widths));
  echo(os, "mspm-hidden", str(m.mspm_hidden));
  echo(os, "weight-hidden", str(m.weight_hidden));
  echo(os, "decoder-widths", csv_list(m.decoder_widths));
}

std::string radii_str(const std::array<double, 3>& r) {
  std::ostringstream os;
  os << r[0] << "," << r[1] << "," << r[2];
  return os.str();
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {  // fixed column set, written by synth
      header = false;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 8) throw std::runtime_error(path + ": malformed manifest row: " + line);
    ManifestRow row;
    row.shape = fields[0];
    row.n_points = std::stoi(fields[1]);
    row.noise_model = fields[2];
    row.sigma_frac = std::stod(fields[3]);
    row.seed = std::stoull(fields[4]);
    row.mesh_file = fields[5];
    row.clean_file = fields[6];
    row.noisy_file = fields[7];
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": manifest lists no clouds");
  return rows;
}

Dataset load_dataset(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset dataset;
  std::map<std::string, std::size_t> by_shape;
  for (const ManifestRow& row : read_manifest(manifest_path)) {
    auto it = by_shape.find(row.shape);
    if (it == by_shape.end()) {
      DatasetEntry entry;
      entry.name = row.shape;
      entry.clean = read_xyz((base / row.clean_file).string());
      if (!entry.clean.has_normals())
        throw std::runtime_error(row.clean_file + ": training needs clean normals (XYZN)");
      entry.mesh = read_off((base / row.mesh_file).string());
      it = by_shape.emplace(row.shape, dataset.entries.size()).first;
      dataset.entries.push_back(std::move(entry));
    }
    DatasetEntry& entry = dataset.entries[it->second];
    entry.noisy.emplace_back(row.sigma_frac, read_xyz((base / row.noisy_file).string()));
    if (entry.noisy.back().second.size() != entry.clean.size())
      throw std::runtime_error(row.noisy_file + ": noisy/clean size mismatch");
  }
  return dataset;
}

int cmd_synth(const SynthOptions& opt) {
  const auto noise = parse_noise_list(opt.noise);
  std::vector<ShapeSpec> specs;
  for (const std::string& s : opt.shapes)
    specs.push_back(parse_shape_spec(s, opt.points, opt.resolution));
  if (specs.empty()) throw std::invalid_argument("no shapes given");

  echo(std::cout, "command", "synth");
  echo(std::cout, "shapes", join(opt.shapes));
  echo(std::cout, "points", str(opt.points));
  echo(std::cout, "resolution", str(opt.resolution));
  echo(std::cout, "noise", join(opt.noise));
  echo(std::cout, "seed", str(opt.seed));
  echo(std::cout, "out", opt.out_dir);

  fs::create_directories(opt.out_dir);
  const fs::path out(opt.out_dir);
  std::ofstream manifest(out / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + opt.out_dir);
  manifest << "shape,n_points,noise_model,sigma_frac,seed,mesh,clean,noisy\n";

  for (std::size_t s = 0; s < specs.size(); ++s) {
    const ShapeSpec& spec = specs[s];
    const TriMesh mesh = gen_shape(spec.kind, spec.params, spec.resolution);
    Rng rng = Rng::derive(opt.seed, {0x5A0F, s});
    const PointCloud clean = sample_surface(mesh, spec.n_points, rng);

    const std::string mesh_file = spec.name + ".off";
    const std::string clean_file = spec.name + "_clean.xyzn";
    write_off((out / mesh_file).string(), mesh);
    write_xyz((out / clean_file).string(), clean);

    for (std::size_t v = 0; v < noise.size(); ++v) {
      NoiseSpec ns;
      ns.model = noise[v].model;
      ns.sigma_frac = noise[v].sigma_frac;
      ns.seed = splitmix64(opt.seed ^ (0xA01 + 1000 * s + v));
      const PointCloud noisy = add_noise(clean, ns);
      const std::string noisy_file = spec.name + "_" + noise_model_name(ns.model) + "_" +
                                     format_sigma(ns.sigma_frac) + ".xyz";
      write_xyz((out / noisy_file).string(), noisy);
      manifest << spec.name << ',' << spec.n_points << ',' << noise_model_name(ns.model) << ','
               << ns.sigma_frac << ',' << ns.seed << ',' << mesh_file << ',' << clean_file << ','
               << noisy_file << "\n";
    }
  }
  std::cout << "wrote " << specs.size() << " shapes x " << noise.size() << " noise levels to "
            << opt.out_dir << "\n";
  return kOk;
}

int cmd_train(const TrainOptions& opt) {
  std::ostringstream cfg;
  echo(cfg, "command", "train");
  echo(cfg, "data", opt.manifest);
  echo(cfg, "epochs", str(opt.train.epochs));
  echo(cfg, "batch-size", str(opt.train.batch_size));
  echo(cfg, "lr-start", str(opt.train.lr_start));
  echo(cfg, "lr-end", str(opt.train.lr_end));
  echo(cfg, "seed", str(opt.train.seed));
  echo(cfg, "init-seed", str(opt.init_seed));
  echo(cfg, "radii", radii_str(opt.train.radii_frac));
  echo(cfg, "n-patch", str(opt.train.n_patch));
  echo(cfg, "alpha", str(opt.train.loss.alpha));
  echo(cfg, "beta", str(opt.train.loss.beta));
  echo(cfg, "support-angle", str(opt.train.loss.support_angle_deg));
  echo(cfg, "m-final", str(opt.train.loss.m_final));
  echo(cfg, "r-final", str(opt.train.loss.r_final_frac));
  echo(cfg, "m-per-scale", str(opt.train.loss.m_per_scale));
  echo(cfg, "patches-per-shape", str(opt.train.patches_per_shape_per_epoch));
  echo(cfg, "microbatch", str(opt.train.microbatch));
  echo(cfg, "clip-norm", str(opt.train.clip_norm));
  echo(cfg, "threads", str(opt.train.threads));
  echo_model(cfg, opt.model);
  echo(cfg, "out", opt.out_dir);
  std::cout << cfg.str();

  const Dataset dataset = load_dataset(opt.manifest);
  fs::create_directories(opt.out_dir);
  const fs::path out(opt.out_dir);
  {
    std::ofstream echo_file(out / "config.txt");
    echo_file << cfg.str();
  }

  ModNetParams params(opt.model, opt.init_seed);
  Trainer trainer(params, dataset, opt.train);

  std::ofstream log(out / "train_log.csv");
  if (!log) throw std::runtime_error("cannot write training log in " + opt.out_dir);
  log << "epoch,step,lr,L_s1,L_s2,L_s3,L_r1,L_r2,L_r3,L_dp,L_final,L_total\n";
  char buf[512];
  const StepLogger logger = [&](const StepRecord& rec) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  rec.epoch, rec.step, rec.lr, rec.loss.l_s_scale[0], rec.loss.l_s_scale[1],
                  rec.loss.l_s_scale[2], rec.loss.l_r_scale[0], rec.loss.l_r_scale[1],
                  rec.loss.l_r_scale[2], rec.loss.l_dp, rec.loss.l_final, rec.loss.l_total);
    log << buf;
  };

  for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
    const EpochStats stats = trainer.run_epoch(epoch, logger);
    std::snprintf(buf, sizeof(buf),
                  "epoch %d: lr %.3g, steps %d, patches %d, skipped %d, mean L_total %.6g\n",
                  epoch, lr_schedule(opt.train, epoch), stats.steps, stats.patches, stats.skipped,
                  stats.mean.l_total);
    std::cout << buf << std::flush;
  }

  const std::string ckpt = (out / "modnet.ckpt").string();
  save_checkpoint(ckpt, params);
  std::cout << "checkpoint written to " << ckpt << "\n";
  return kOk;
}

int cmd_denoise(const DenoiseOptions& opt) {
  echo(std::cout, "command", "denoise");
  echo(std::cout, "checkpoint", opt.checkpoint);
  echo(std::cout, "input", opt.input);
  echo(std::cout, "radii", radii_str(opt.denoise.radii_frac));
  echo(std::cout, "n-patch", str(opt.denoise.n_patch));
  echo(std::cout, "batch", str(opt.denoise.batch));
  echo(std::cout, "threads", str(opt.denoise.threads));
  echo(std::cout, "seed", str(opt.denoise.seed));
  echo(std::cout, "export-weights", opt.export_weights ? "true" : "false");
  echo_model(std::cout, opt.model);
  echo(std::cout, "out", opt.out_dir);

  ModNetParams params(opt.model, 0);
  load_checkpoint(opt.checkpoint, params);
  const PointCloud noisy = read_xyz(opt.input);
  if (noisy.empty()) throw std::runtime_error(opt.input + ": empty point cloud");

  const DenoiseResult result = denoise_cloud(noisy, params, opt.denoise);
  if (result.isolated_count > 0)
    std::cout << "warning: " << result.isolated_count << " isolated points copied through\n";

  fs::create_directories(opt.out_dir);
  const std::string stem = fs::path(opt.input).stem().string();
  const std::string out_file = (fs::path(opt.out_dir) / (stem + "_denoised.xyz")).string();
  write_xyz(out_file, result.cloud);
  std::cout << "denoised cloud written to " << out_file << "\n";
  if (opt.export_weights) {
    const std::string weights_file =
        (fs::path(opt.out_dir) / (stem + "_weights.txt")).string();
    write_weights_file(weights_file, result.weights);
    std::cout << "scale weights written to " << weights_file << "\n";
  }
  return kOk;
}

int cmd_eval(const EvalOptions& opt) {
  echo(std::cout, "command", "eval");
  echo(std::cout, "filtered", opt.filtered);
  echo(std::cout, "gt", opt.gt);
  echo(std::cout, "mesh", opt.mesh.empty() ? "(none)" : opt.mesh);
  echo(std::cout, "paper-scale", opt.paper_scale ? "true" : "false");

  const PointCloud filtered = read_xyz(opt.filtered);
  const PointCloud gt = read_xyz(opt.gt);
  TriMesh mesh;
  const bool with_mesh = !opt.mesh.empty();
  if (with_mesh) mesh = read_off(opt.mesh);
  const MetricReport report = evaluate(filtered, gt, with_mesh ? &mesh : nullptr);

  // Stored CSV rows always carry raw values; Table-style x1e4/x1e2 scaling is
  // applied to the displayed line only.
  char raw[256];
  if (report.p2m)
    std::snprintf(raw, sizeof(raw), "%s,%zu,%zu,%.12g,%.12g,%.12g",
                  fs::path(opt.filtered).stem().string().c_str(), report.n_filtered, report.n_gt,
                  report.cd, report.mse, *report.p2m);
  else
    std::snprintf(raw, sizeof(raw), "%s,%zu,%zu,%.12g,%.12g,",
                  fs::path(opt.filtered).stem().string().c_str(), report.n_filtered, report.n_gt,
                  report.cd, report.mse);

  std::cout << "name,n_filtered,n_gt,cd,mse,p2m\n" << raw << "\n";
  if (opt.paper_scale) {
    char scaled[256];
    if (report.p2m)
      std::snprintf(scaled, sizeof(scaled),
                    "display (CD x1e4, MSE x1e2, P2M x1e4): %.4g %.4g %.4g", report.cd * 1e4,
                    report.mse * 1e2, *report.p2m * 1e4);
    else
      std::snprintf(scaled, sizeof(scaled), "display (CD x1e4, MSE x1e2): %.4g %.4g",
                    report.cd * 1e4, report.mse * 1e2);
    std::cout << scaled << "\n";
  }
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    const fs::path csv = fs::path(opt.out_dir) / "eval.csv";
    const bool fresh = !fs::exists(csv);
    std::ofstream out(csv, std::ios::app);
    if (fresh) out << "name,n_filtered,n_gt,cd,mse,p2m\n";
    out << raw << "\n";
  }
  return kOk;
}

int cmd_gradcheck(const GradcheckOptions& opt) {
  echo(std::cout, "command", "gradcheck");
  echo(std::cout, "seed", str(opt.seed));
  echo(std::cout, "trials-per-op", str(opt.trials_per_op));
  echo(std::cout, "e2e-batches", str(opt.e2e_batches));

  const GradCheckReport report = run_gradcheck(opt.seed, opt.trials_per_op, opt.e2e_batches);
  char buf[160];
  for (const GradCheckLine& line : report.lines) {
    std::snprintf(buf, sizeof(buf), "%-18s trials %-4d max rel err %.3e  tol %.0e  %s\n",
                  line.name.c_str(), line.trials, line.max_rel_err, line.tolerance,
                  line.pass ? "PASS" : "FAIL");
    std::cout << buf;
  }
  if (!report.all_pass()) {
    std::cout << "gradient check FAILED\n";
    return kVerificationFailure;
  }
  std::cout << "all gradient checks passed\n";
  return kOk;
}

}  // namespace modnet::cli
