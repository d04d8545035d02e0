// Command-line front end for the studies.
//
//   sdnlw renorm --alpha 1 --n-ladder 4:4096:x2 --out DIR
//   sdnlw study strong|weak|wick|tuned --config FILE [--seed S] [--workers W] [--out DIR]
//   sdnlw plotdata --in DIR --out DIR

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "sdnlw/studies.hpp"

namespace {

int resolve_workers(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("SDNLW_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w > 0) return w;
    } catch (const std::exception&) {
    }
    throw sdnlw::ConfigError(std::string("SDNLW_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

int report(const sdnlw::StudyResult& r) {
  for (const auto& f : r.files) std::cout << "wrote " << f << '\n';
  for (const auto& m : r.messages) std::cout << m << '\n';
  std::cout << "exit " << r.exit_code << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  sdnlw::tune_allocator();
  CLI::App app{"Monte-Carlo laboratory for the truncated stochastic damped cubic wave equation on T^2"};
  app.require_subcommand(1);

  double alpha = 1.0;
  std::string ladder = "4:4096:x2";
  std::string out_dir = "out";
  auto* renorm = app.add_subcommand("renorm", "lambda_N against (3/4pi) alpha^2 log N");
  renorm->add_option("--alpha", alpha, "noise strength")->capture_default_str();
  renorm->add_option("--n-ladder", ladder, "start:stop:xF, start:stop:+D or a comma list")->capture_default_str();
  renorm->add_option("--out", out_dir, "output directory")->capture_default_str();

  std::string which, config;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::optional<std::string> study_out;
  auto* study = app.add_subcommand("study", "run a Monte-Carlo study from a config file");
  study->add_option("kind", which, "strong | weak | wick | tuned | lambda")->required();
  study->add_option("--config", config, "key = value config file")->required();
  study->add_option("--seed", seed, "overrides the config seed");
  study->add_option("--workers", workers, "worker threads (fallback: SDNLW_WORKERS, then 1)");
  study->add_option("--out", study_out, "overrides the config output_dir");

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plotdata", "collect figure CSVs and write manifest.json");
  plot->add_option("--in", plot_in, "study output directory")->required();
  plot->add_option("--out", plot_out, "plot data directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sdnlw::kExitConfig;
  }

  try {
    if (*renorm) {
      sdnlw::StudySpec spec;
      spec.study = sdnlw::StudyKind::lambda_asymptotics;
      spec.n_ladder = sdnlw::parse_ladder(ladder);
      spec.alpha_rule.kind = sdnlw::AlphaRule::constant;
      spec.alpha_rule.value = alpha;
      if (alpha == 0.0) throw sdnlw::ConfigError("alpha must be nonzero");
      spec.output_dir = out_dir;
      return report(sdnlw::run_lambda_study(spec));
    }
    if (*study) {
      sdnlw::StudySpec spec = sdnlw::load_study_spec(config);
      const auto kind = sdnlw::parse_study(which);
      if (kind != spec.study)
        throw sdnlw::ConfigError("config declares study '" + sdnlw::to_string(spec.study) + "', command asked for '" +
                                 which + "'");
      if (seed) spec.seed = *seed;
      if (study_out) spec.output_dir = *study_out;
      return report(sdnlw::run_study(spec, resolve_workers(workers)));
    }
    if (*plot) return report(sdnlw::emit_plotdata(plot_in, plot_out));
  } catch (const sdnlw::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sdnlw::kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sdnlw::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
