// Command-line entry point: synth, preprocess, train, evaluate, baseline, permtest.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "siamgcn/app.hpp"
#include "siamgcn/csv.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

siamgcn::RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                                  const std::filesystem::path& workdir) {
  siamgcn::RunConfig config;
  if (!config_path.empty()) {
    std::filesystem::path p(config_path);
    if (p.is_relative() && !std::filesystem::exists(p)) p = workdir / p;
    siamgcn::load_config(p, config);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw siamgcn::ValidationError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

void print_summary(const char* name, const siamgcn::MetricSummary& s) {
  std::printf("%-9s auc=%.4f knn=%.4f knn_same_site=%.4f p=%.3g\n", name, s.auc, s.knn_accuracy,
              s.knn_accuracy_same_site, s.p_value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Siamese spectral graph convolutional network for graph similarity metric learning"};
  cli.require_subcommand(1);

  std::string workdir = ".";
  std::string config_path;
  std::vector<std::string> overrides;
  cli.add_option("-w,--workdir", workdir, "Directory all relative paths resolve against")->capture_default_str();
  cli.add_option("-c,--config", config_path, "Config file ([section] key = value)");
  cli.add_option("-s,--set", overrides, "Override a config value, e.g. --set train.epochs=20")
      ->allow_extra_args(false);

  auto* synth = cli.add_subcommand("synth", "Write a synthetic cohort (coords, manifest, time series)");
  auto* preprocess = cli.add_subcommand("preprocess", "Compute connectivity profiles and the spatial graph");
  auto* train = cli.add_subcommand("train", "Split the cohort, sample pairs and train the siamese network");
  auto* evaluate = cli.add_subcommand("evaluate", "Score every test pair and write the evaluation report");
  auto* baseline = cli.add_subcommand("baseline", "PCA + Euclidean baseline distances only");
  auto* permtest = cli.add_subcommand("permtest", "Permutation test on a distances CSV");
  std::string distances_path;
  std::string column = "learned_distance";
  permtest->add_option("--distances", distances_path, "Distances CSV with a match column")->required();
  permtest->add_option("--column", column, "Distance column to test")->capture_default_str();

  CLI11_PARSE(cli, argc, argv);

  try {
    const std::filesystem::path wd(workdir);
    const siamgcn::RunConfig config = resolve_config(config_path, overrides, wd);
    if (synth->parsed()) {
      siamgcn::app::cmd_synth(config, wd);
    } else if (preprocess->parsed()) {
      siamgcn::app::cmd_preprocess(config, wd);
    } else if (train->parsed()) {
      siamgcn::app::cmd_train(config, wd);
    } else if (evaluate->parsed()) {
      const auto report = siamgcn::app::cmd_evaluate(config, wd);
      std::printf("test subjects=%zu pairs=%zu matching=%zu\n", report.n_subjects, report.n_pairs, report.n_matching);
      print_summary("learned", report.learned);
      print_summary("baseline", report.baseline);
      for (const auto& site : report.sites) {
        std::printf("site %s (n=%zu): learned knn=%.4f auc=%.4f | baseline knn=%.4f auc=%.4f\n",
                    site.site_id.c_str(), site.n_subjects, site.learned.knn_accuracy, site.learned.auc,
                    site.baseline.knn_accuracy, site.baseline.auc);
      }
    } else if (baseline->parsed()) {
      siamgcn::app::cmd_baseline(config, wd);
    } else if (permtest->parsed()) {
      const double p = siamgcn::app::cmd_permtest(config, wd, distances_path, column);
      std::printf("p_value=%s\n", siamgcn::csv::format_double(p).c_str());
    }
  } catch (const siamgcn::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const siamgcn::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
