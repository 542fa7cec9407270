// rwlab run <config> [--out DIR] [--seed U64] [--threads N]
// rwlab --list-predictions
// rwlab predict <group> <measure>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rwlab/errors.hpp"
#include "rwlab/experiment.hpp"
#include "rwlab/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"random walk return probability and spectral profile lab"};
  bool list = false;
  int threads = 0;
  app.add_flag("--list-predictions", list, "print the registered prediction rules");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::NonNegativeNumber);

  auto* run = app.add_subcommand("run", "run an experiment config");
  std::string config, out = "out";
  uint64_t seed = 0;
  run->add_option("config", config, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory");
  auto* seed_opt = run->add_option("--seed", seed, "seed, overrides the config and RWLAB_SEED");

  auto* pred = app.add_subcommand("predict", "look up the predicted decay for a group and measure");
  std::string group, measure;
  pred->add_option("group", group)->required();
  pred->add_option("measure", measure)->required();

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) rwlab::set_threads(threads);

  if (list) {
    for (const auto& r : rwlab::prediction_rules()) std::cout << r.id << "\t" << r.pattern << "\t" << r.formula << "\n";
    if (!*run && !*pred) return 0;
  }

  try {
    if (*pred) {
      auto p = rwlab::predict(group, measure);
      if (!p) {
        std::cout << "no prediction\n";
        return 0;
      }
      std::cout << p->formula() << "\t" << p->rule << "\n";
      return 0;
    }
    if (*run) {
      std::ifstream in(config);
      std::stringstream ss;
      ss << in.rdbuf();
      auto cfg = rwlab::ExperimentConfig::parse(ss.str());
      if (*seed_opt) {
        cfg.seed = seed;
      } else if (!cfg.seed) {
        if (const char* env = std::getenv("RWLAB_SEED")) cfg.seed = std::stoull(env);
      }
      auto res = rwlab::run(cfg, out);
      for (const auto& f : res.files) std::cout << f << "\n";
      if (!res.error.empty()) std::cerr << res.error << "\n";
      return res.exit_code;
    }
  } catch (const rwlab::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (!list) std::cout << app.help();
  return 0;
}
