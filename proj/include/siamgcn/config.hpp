#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "siamgcn/connectome.hpp"
#include "siamgcn/evaluation.hpp"
#include "siamgcn/model.hpp"
#include "siamgcn/spectral.hpp"
#include "siamgcn/training.hpp"

namespace siamgcn {

/// Every knob of a run. Defaults follow the reference experiment.
struct RunConfig {
  // [paths], relative to the working directory
  std::string atlas = "coords.csv";
  std::string manifest = "manifest.csv";
  std::string output = ".";

  // [graph]
  int graph_k = 10;
  WeightMode weight_mode = WeightMode::distance;
  LambdaMaxMethod lambda_max = LambdaMaxMethod::exact;

  // [model]
  std::vector<int> widths{64, 64};
  int k_order = 3;

  // [loss] and [train]
  TrainConfig train;
  std::size_t pair_budget = 0;  // 0: scale with the training set size
  double test_fraction = 0.1734;

  // [eval]
  EvalConfig eval;

  // [synth]
  int synth_subjects = 200;
  int synth_rois = 40;
  int synth_timepoints = 100;
  double synth_effect = 1.0;
  std::uint64_t synth_seed = 1;

  /// Applies one `section.key = value` assignment.
  void set(const std::string& key, const std::string& value);

  /// Range checks; throws ValidationError.
  void validate() const;

  /// Fully resolved config in the file format read by load_config.
  std::string dump() const;
};

/// Reads a key = value file with [section] headers and # comments into
/// `config`. Unknown keys are rejected.
void load_config(const std::filesystem::path& path, RunConfig& config);

/// Parses the same syntax from a string.
void parse_config(const std::string& text, RunConfig& config, const std::string& origin = "<string>");

}  // namespace siamgcn
