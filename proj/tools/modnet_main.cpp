#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "modnet/cli.hpp"

namespace {

using namespace modnet;

void add_shared(CLI::App* cmd, std::uint64_t& seed, std::string& out, int& threads) {
  cmd->add_option("--seed", seed, "random seed");
  cmd->add_option("--out", out, "output directory");
  cmd->add_option("--threads", threads, "worker-count hint (never affects results)");
  cmd->set_config("--config", "", "plain-text key = value configuration file");
  cmd->allow_config_extras(false);
}

void add_model_flags(CLI::App* cmd, ModelConfig& model) {
  cmd->add_option("--encoder-widths", model.encoder_widths, "per-point MLP widths");
  cmd->add_option("--mspm-hidden", model.mspm_hidden, "fused-feature hidden width");
  cmd->add_option("--weight-hidden", model.weight_hidden, "scale-weight head hidden width");
  cmd->add_option("--decoder-widths", model.decoder_widths, "sub-decoder trunk widths");
}

void add_radii_flag(CLI::App* cmd, std::array<double, 3>& radii) {
  cmd->add_option("--radii", radii, "patch radii as fractions of the bbox diagonal");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MODNet multi-offset point cloud denoising toolchain"};
  app.require_subcommand(1);

  cli::SynthOptions synth;
  int synth_threads = 1;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--shapes", synth.shapes, "comma list of shapes, e.g. cube,sphere")
      ->required()
      ->delimiter(',');
  synth_cmd->add_option("--points", synth.points, "samples per shape");
  synth_cmd->add_option("--resolution", synth.resolution, "mesh tessellation resolution");
  synth_cmd->add_option("--noise", synth.noise, "noise spec model:sigma[,sigma...]")->required();
  add_shared(synth_cmd, synth.seed, synth.out_dir, synth_threads);

  cli::TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train on a synthesized dataset");
  train_cmd->add_option("--data", train.manifest, "manifest.csv from synth")->required();
  train_cmd->add_option("--epochs", train.train.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train.train.batch_size, "patches per SGD step");
  train_cmd->add_option("--lr-start", train.train.lr_start, "initial learning rate");
  train_cmd->add_option("--lr-end", train.train.lr_end, "final learning rate");
  train_cmd->add_option("--alpha", train.train.loss.alpha, "projection/repulsion trade-off");
  train_cmd->add_option("--beta", train.train.loss.beta, "per-scale supervision weight");
  train_cmd->add_option("--support-angle", train.train.loss.support_angle_deg,
                        "normal support angle in degrees");
  train_cmd->add_option("--m-final", train.train.loss.m_final, "final ground-truth patch cap");
  train_cmd->add_option("--r-final", train.train.loss.r_final_frac,
                        "final ground-truth radius fraction");
  train_cmd->add_option("--m-per-scale", train.train.loss.m_per_scale,
                        "per-scale ground-truth patch cap");
  train_cmd->add_option("--n-patch", train.train.n_patch, "points per patch");
  train_cmd->add_option("--patches-per-shape", train.train.patches_per_shape_per_epoch,
                        "patch centers per shape per epoch");
  train_cmd->add_option("--microbatch", train.train.microbatch, "gradient shard size");
  train_cmd->add_option("--clip-norm", train.train.clip_norm,
                        "global gradient norm clip (<= 0 disables)");
  train_cmd->add_option("--init-seed", train.init_seed, "parameter initialization seed");
  add_radii_flag(train_cmd, train.train.radii_frac);
  add_model_flags(train_cmd, train.model);
  add_shared(train_cmd, train.train.seed, train.out_dir, train.train.threads);

  cli::DenoiseOptions denoise;
  CLI::App* denoise_cmd = app.add_subcommand("denoise", "denoise a point cloud");
  denoise_cmd->add_option("--checkpoint", denoise.checkpoint, "trained checkpoint")->required();
  denoise_cmd->add_option("--input", denoise.input, "noisy XYZ cloud")->required();
  denoise_cmd->add_option("--n-patch", denoise.denoise.n_patch, "points per patch");
  denoise_cmd->add_option("--batch", denoise.denoise.batch, "patches per forward batch");
  denoise_cmd->add_flag("--export-weights", denoise.export_weights,
                        "write the per-point scale-weight file");
  add_radii_flag(denoise_cmd, denoise.denoise.radii_frac);
  add_model_flags(denoise_cmd, denoise.model);
  add_shared(denoise_cmd, denoise.denoise.seed, denoise.out_dir, denoise.denoise.threads);

  cli::EvalOptions eval;
  std::uint64_t eval_seed = 0;
  int eval_threads = 1;
  CLI::App* eval_cmd = app.add_subcommand("eval", "compute CD/MSE/P2M metrics");
  eval_cmd->add_option("--filtered", eval.filtered, "filtered XYZ cloud")->required();
  eval_cmd->add_option("--gt", eval.gt, "ground-truth cloud")->required();
  eval_cmd->add_option("--mesh", eval.mesh, "ground-truth OFF mesh (enables P2M)");
  eval_cmd->add_flag("--paper-scale", eval.paper_scale,
                     "also print CD x1e4, MSE x1e2, P2M x1e4");
  add_shared(eval_cmd, eval_seed, eval.out_dir, eval_threads);

  cli::GradcheckOptions gradcheck;
  std::string gradcheck_out;
  int gradcheck_threads = 1;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference verification of all gradients");
  gradcheck_cmd->add_option("--trials-per-op", gradcheck.trials_per_op, "random trials per op");
  gradcheck_cmd->add_option("--e2e-batches", gradcheck.e2e_batches, "end-to-end mini-batches");
  add_shared(gradcheck_cmd, gradcheck.seed, gradcheck_out, gradcheck_threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kUsageError;
  }

  try {
    if (synth_cmd->parsed()) return cli::cmd_synth(synth);
    if (train_cmd->parsed()) return cli::cmd_train(train);
    if (denoise_cmd->parsed()) return cli::cmd_denoise(denoise);
    if (eval_cmd->parsed()) return cli::cmd_eval(eval);
    if (gradcheck_cmd->parsed()) return cli::cmd_gradcheck(gradcheck);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kDataError;
  }
  return cli::kUsageError;
}
