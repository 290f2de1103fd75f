#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace fs = std::filesystem;
using namespace iaf::cli;

namespace {

// CLI11 binds plain values; these remember whether the flag was given to
// any of the subcommands sharing it.
template <typename T>
struct Opt {
  T value{};
  std::vector<CLI::Option*> opts;

  std::optional<T> get() const {
    for (const CLI::Option* o : opts) {
      if (o->count()) return value;
    }
    return std::nullopt;
  }
};

template <typename T>
void add(CLI::App* app, const std::string& name, Opt<T>& o, const std::string& help) {
  o.opts.push_back(app->add_option(name, o.value, help));
}

struct Common {
  Opt<fs::path> config, out;
  Opt<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool with_seed) {
  add(app, "--config", c.config, "run configuration (key = value text)");
  add(app, "--out", c.out, "output directory (default: $IAF_OUTPUT_DIR)");
  if (with_seed) add(app, "--seed", c.seed, "seed for this command's random stage");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Illumination-aware color/thermal pedestrian detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Common c;
  fs::path data;
  Opt<fs::path> model, ian, gate, detections;
  Opt<std::string> arch;
  Opt<double> force_weight;
  std::string weighting = "average", set = "test", plot_name = "curves.svg";
  std::vector<fs::path> curves;
  std::vector<std::string> labels;
  bool self_check = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic color/thermal dataset");
  add_common(synth, c, true);

  auto* train_ian = app.add_subcommand("train-ian", "train the day/night illumination network");
  train_ian->add_option("--data", data, "dataset directory")->required();
  add_common(train_ian, c, true);

  auto* train_det = app.add_subcommand("train-detector", "train a two-stream detector");
  train_det->add_option("--data", data, "dataset directory")->required();
  add(train_det, "--arch", arch, "input|early|halfway|late|score1|score2");
  add_common(train_det, c, true);

  auto* opt_gate = app.add_subcommand("optimize-gate", "fit the illumination gate on a frozen score2 detector");
  opt_gate->add_option("--data", data, "dataset directory")->required();
  add(opt_gate, "--model", model, "detector checkpoint");
  add(opt_gate, "--ian", ian, "illumination network checkpoint");
  add_common(opt_gate, c, true);

  auto* detect = app.add_subcommand("detect", "write detections for one dataset split");
  detect->add_option("--data", data, "dataset directory")->required();
  add(detect, "--model", model, "detector checkpoint");
  detect->add_option("--weighting", weighting, "average|hard01|ia")->capture_default_str();
  add(detect, "--ian", ian, "illumination network checkpoint (hard01, ia)");
  add(detect, "--gate", gate, "gate parameter file (ia)");
  add(detect, "--arch", arch, "expected architecture of --model");
  detect->add_option("--set", set, "dataset split")->capture_default_str();
  add(detect, "--force-weight", force_weight, "fixed color weight in place of the gate (ia)");
  add_common(detect, c, false);

  auto* evaluate = app.add_subcommand("eval", "miss-rate curves and log-average miss rate");
  evaluate->add_option("--data", data, "dataset directory")->required();
  add(evaluate, "--detections", detections, "detection file");
  evaluate->add_option("--set", set, "dataset split")->capture_default_str();
  evaluate->add_flag("--self-check", self_check, "score the ground truth itself; checks the dataset loads");
  add_common(evaluate, c, false);

  auto* compare = app.add_subcommand("compare", "rank the three weighting modes");
  compare->add_option("--data", data, "dataset directory")->required();
  add(compare, "--model", model, "score2 detector checkpoint");
  add(compare, "--ian", ian, "illumination network checkpoint");
  add(compare, "--gate", gate, "gate parameter file");
  compare->add_option("--set", set, "dataset split")->capture_default_str();
  add_common(compare, c, false);

  auto* plot = app.add_subcommand("plot", "render curve CSVs to a log-log SVG");
  plot->add_option("--curve", curves, "curve CSV (repeatable)")->required();
  plot->add_option("--label", labels, "legend label per curve");
  plot->add_option("--name", plot_name, "SVG file name")->capture_default_str();
  add(plot, "--out", c.out, "output directory (default: $IAF_OUTPUT_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      run_synth({c.config.get(), c.out.get(), c.seed.get()});
    } else if (train_ian->parsed()) {
      run_train_ian({data, c.config.get(), c.out.get(), c.seed.get(), std::nullopt});
    } else if (train_det->parsed()) {
      run_train_detector({data, c.config.get(), c.out.get(), c.seed.get(), arch.get()});
    } else if (opt_gate->parsed()) {
      run_optimize_gate({data, model.get(), ian.get(), c.config.get(), c.out.get(), c.seed.get()});
    } else if (detect->parsed()) {
      run_detect({data, model.get(), weighting, ian.get(), gate.get(), arch.get(), set, force_weight.get(),
                  c.config.get(), c.out.get()});
    } else if (evaluate->parsed()) {
      run_eval({data, detections.get(), set, self_check, c.config.get(), c.out.get()});
    } else if (compare->parsed()) {
      run_compare({data, model.get(), ian.get(), gate.get(), set, c.config.get(), c.out.get()});
    } else if (plot->parsed()) {
      run_plot({curves, labels, c.out.get(), plot_name});
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
