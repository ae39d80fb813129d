// arthromap command-line tool.
//
// Configuration precedence, lowest first: built-in defaults, the --config
// file, --set overrides in the order given, then --dataset / --output.
// Reports go to stdout as JSON; failures print {"error": {...}} on stderr
// and exit with the error's code.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using arthromap::Error;
using arthromap::ErrorCode;
using arthromap::cli::Json;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string output;
};

void add_common(CLI::App* app, CommonOptions& opt) {
  app->add_option("-c,--config", opt.config, "JSON configuration file");
  app->add_option("--set", opt.overrides, "override a config key, e.g. --set fusion.voxel_size=0.5")->take_all();
  app->add_option("--dataset", opt.dataset, "dataset directory (config key 'dataset')");
  app->add_option("--output", opt.output, "output directory (config key 'output')");
}

arthromap::cli::Config load_config(const CommonOptions& opt) {
  Json root = Json::object();
  if (!opt.config.empty()) root = arthromap::cli::load_json(opt.config);
  if (!root.is_object()) throw Error(ErrorCode::kMalformedConfig, "config root must be an object");
  for (const auto& o : opt.overrides) arthromap::cli::apply_override(root, o);
  if (!opt.dataset.empty()) root["dataset"] = opt.dataset;
  if (!opt.output.empty()) root["output"] = opt.output;
  return arthromap::cli::parse_config(root);
}

int fail(int code, std::string_view kind, const std::string& message) {
  Json err{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arthromap: self-supervised pose losses, TSDF fusion and semantic meshing on oracle scenes"};
  app.require_subcommand(1);

  CommonOptions synth_opt, loss_opt, recover_opt, fuse_opt;
  auto* synth = app.add_subcommand("synth", "render an oracle dataset");
  add_common(synth, synth_opt);

  auto* loss = app.add_subcommand("loss", "evaluate the training objective on one target frame");
  add_common(loss, loss_opt);
  int loss_target = -1;
  std::vector<int> loss_sources;
  bool loss_stereo = false;
  std::string loss_pred;
  loss->add_option("--target", loss_target, "target frame index");
  loss->add_option("--sources", loss_sources, "source frame indices")->delimiter(',');
  loss->add_flag("--stereo", loss_stereo, "add the target's right image as a source");
  loss->add_option("--pred-trajectory", loss_pred, "predicted trajectory enabling the pose term");

  auto* recover = app.add_subcommand("recover-pose", "recover a relative pose by minimizing the objective");
  add_common(recover, recover_opt);
  int rec_target = -1, rec_source = -1;
  std::uint64_t rec_seed = 0;
  recover->add_option("--target", rec_target, "target frame index");
  recover->add_option("--source", rec_source, "source frame index");
  recover->add_option("--seed", rec_seed, "seed of the initial perturbation");

  auto* fuse = app.add_subcommand("fuse", "fuse a chunk of frames and extract the mesh");
  add_common(fuse, fuse_opt);

  auto* eval = app.add_subcommand("eval-ate", "absolute trajectory error between two trajectory files");
  std::string gt_path, est_path, eval_out;
  bool align = false;
  eval->add_option("gt", gt_path, "ground-truth trajectory")->required();
  eval->add_option("est", est_path, "estimated trajectory")->required();
  eval->add_flag("--align", align, "rigidly align the estimate to the ground truth first");
  eval->add_option("--output", eval_out, "also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    Json report;
    if (*synth) {
      report = arthromap::cli::run_synth(load_config(synth_opt));
    } else if (*loss) {
      auto cfg = load_config(loss_opt);
      if (loss_target >= 0) cfg.loss_eval.target = loss_target;
      if (!loss_sources.empty()) cfg.loss_eval.sources = loss_sources;
      if (loss_stereo) cfg.loss_eval.stereo = true;
      if (!loss_pred.empty()) cfg.loss_eval.pred_trajectory = loss_pred;
      report = arthromap::cli::run_loss(cfg);
    } else if (*recover) {
      auto cfg = load_config(recover_opt);
      if (rec_target >= 0) cfg.recover.target = rec_target;
      if (rec_source >= 0) cfg.recover.source = rec_source;
      if (recover->count("--seed")) cfg.recover.seed = rec_seed;
      report = arthromap::cli::run_recover(cfg);
    } else if (*fuse) {
      report = arthromap::cli::run_fuse(load_config(fuse_opt));
    } else if (*eval) {
      report = arthromap::cli::run_eval_ate(gt_path, est_path, align);
      if (!eval_out.empty()) arthromap::cli::write_json(eval_out, report);
    }
    std::cout << report.dump(2) << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(static_cast<int>(e.code()), arthromap::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
}
