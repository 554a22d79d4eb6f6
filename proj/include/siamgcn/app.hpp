#pragma once

#include <filesystem>
#include <string>

#include "siamgcn/config.hpp"
#include "siamgcn/evaluation.hpp"

// Subcommands of the siamgcn tool. All paths resolve against `workdir`.
//
// Layout written under the output directory:
//   coords.csv, manifest.csv, timeseries/<id>.csv       synth
//   profiles/<id>.csv, profiles/index.csv,
//   graph/adjacency.csv, graph/coords.csv, graph/graph.json  preprocess
//   model/checkpoint.json, model/checkpoint_epoch_NNNN.json,
//   model/loss_trace.csv, model/split.json                  train
//   eval/report.json, eval/roc_learned.csv,
//   eval/roc_baseline.csv, eval/distances.csv               evaluate
//   baseline/distances.csv, baseline/summary.json           baseline
// Each command also writes config.<command>.toml with the resolved config.
namespace siamgcn::app {

namespace fs = std::filesystem;

void cmd_synth(const RunConfig& config, const fs::path& workdir);
void cmd_preprocess(const RunConfig& config, const fs::path& workdir);
void cmd_train(const RunConfig& config, const fs::path& workdir);
EvalReport cmd_evaluate(const RunConfig& config, const fs::path& workdir);
void cmd_baseline(const RunConfig& config, const fs::path& workdir);

/// Permutation test on a distances CSV (as written by evaluate/baseline):
/// compares `column` between rows with match = 1 and match = 0. Returns
/// the p-value and writes permtest.json to the output directory.
double cmd_permtest(const RunConfig& config, const fs::path& workdir, const fs::path& distances,
                    const std::string& column);

/// Writes the report as JSON (schema "siamgcn-eval-report" version 1).
void write_report_json(const fs::path& path, const EvalReport& report, const RunConfig& config,
                       const std::string& graph_hash);

}  // namespace siamgcn::app
