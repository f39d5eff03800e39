#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tfd/classifier.hpp"
#include "tfd/error.hpp"
#include "tfd/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"faulty traffic-day detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string which;
  std::string variant = "pns";
  bool dump_recons = false;

  auto with_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON file")->required();
    return cmd;
  };

  CLI::App* gen = with_config(
      app.add_subcommand("gen-data", "generate the datasets into a run directory"));
  CLI::App* cwt = with_config(
      app.add_subcommand("render-cwt", "render the scalogram cache for every dataset"));
  CLI::App* vae = with_config(
      app.add_subcommand("train-vae", "train one of the twin autoencoders"));
  vae->add_option("--which", which, "positive or negative")->required();
  CLI::App* clf = with_config(app.add_subcommand(
      "train-classifier", "train one classifier variant, one model per seed"));
  clf->add_option("--variant", variant, "p, n, pn or pns (default pns)");
  CLI::App* eva = with_config(app.add_subcommand(
      "evaluate", "score the mixed test split with every trained classifier"));
  eva->add_flag("--dump-reconstructions", dump_recons,
                "also write sample reconstruction PGMs under eval/recon");
  CLI::App* rep = with_config(
      app.add_subcommand("report", "aggregate the per-classifier metrics into report.csv"));

  CLI11_PARSE(app, argc, argv);

  // Progress lines go to stdout unbuffered so a piped run stays watchable.
  std::cout << std::unitbuf;
  std::ostream* progress = &std::cout;

  const tfd::pipeline::RunConfig cfg = tfd::pipeline::load_run_config(config_path);
  if (gen->parsed()) {
    tfd::pipeline::gen_data(cfg, config_path, progress);
  } else if (cwt->parsed()) {
    tfd::pipeline::render_cwt(cfg, config_path, progress);
  } else if (vae->parsed()) {
    tfd::pipeline::train_vae_stage(cfg, config_path, which, progress);
  } else if (clf->parsed()) {
    tfd::pipeline::train_classifier_stage(cfg, config_path,
                                          tfd::clf::variant_from_name(variant),
                                          progress);
  } else if (eva->parsed()) {
    tfd::pipeline::evaluate_stage(cfg, config_path, dump_recons, progress);
  } else if (rep->parsed()) {
    tfd::pipeline::report_stage(cfg, config_path, progress);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const tfd::Error& e) {
    std::cerr << "error/" << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error/internal: " << e.what() << "\n";
    return 1;
  }
}
