#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "siamgcn/common.hpp"
#include "siamgcn/spectral.hpp"

namespace siamgcn {

/// ROI centres in anatomical space, one row (x, y, z) per node.
struct RoiAtlas {
  Matrix coords;
  std::vector<std::string> names;

  Eigen::Index size() const { return coords.rows(); }
  void validate() const;
};

enum class WeightMode {
  distance,  // w_ij = ||v_i - v_j||
  gaussian,  // w_ij = exp(-d_ij^2 / (2 sigma^2)), sigma = mean kept distance
};

WeightMode parse_weight_mode(const std::string& text);
std::string to_string(WeightMode mode);

struct SpatialGraph {
  RoiAtlas atlas;
  Adjacency adjacency;
  int k_neighbors = 0;
  WeightMode weight_mode = WeightMode::distance;
};

struct SubjectRecord {
  std::string subject_id;
  int label = 0;  // 0 control, 1 patient
  std::string site_id;
  Matrix timeseries;  // T x R
};

/// Node signals for one subject: row i is the connectivity profile of ROI i.
struct GraphSignal {
  std::string subject_id;
  int label = 0;
  std::string site_id;
  Matrix features;  // R x R
};

/// k-nearest-neighbour graph over the ROI centres, symmetrized by union.
/// Neighbour ties are broken by node index.
SpatialGraph build_spatial_graph(const RoiAtlas& atlas, int k, WeightMode mode);

/// Column-wise z-scores with the sample (T - 1) standard deviation.
Matrix znormalize_timeseries(const Matrix& ts);

/// Pearson correlation between every pair of columns, clamped to [-1, 1]
/// with an exact unit diagonal.
Matrix pearson_profiles(const Matrix& ts);

GraphSignal to_graph_signal(const SubjectRecord& record);

/// Throws ValidationError unless features are square, symmetric, have a unit
/// diagonal and lie in [-1, 1].
void validate_graph_signal(const GraphSignal& signal);

/// Reads a manifest CSV with columns subject_id,label,site_id,timeseries_path.
/// Relative paths resolve against the manifest's directory. `expected_rois`
/// of 0 accepts any width shared by all subjects.
std::vector<SubjectRecord> load_cohort(const std::filesystem::path& manifest,
                                       Eigen::Index expected_rois = 0);

/// Knobs of the synthetic generator beyond size, effect and seed.
struct SynthOptions {
  int sites = 4;
  double subject_jitter = 1.0;       // per-subject perturbation of the shared mixing
  double effect_roi_fraction = 0.1;   // share of ROIs carrying the class effect
  double site_gain_min = 0.4;        // multiplicative latent gain, drawn once per site
  double site_gain_max = 1.6;
  double subject_gain_spread = 0.0;  // log-uniform per-subject gain in [e^-s, e^s]
};

/// Two balanced classes over `options.sites` sites. Subjects share a latent
/// covariance with per-subject and per-site variation. On a fixed subset of
/// ROIs a driver of relative strength `effect` is added: one common driver
/// for class 1, independent drivers for class 0. With effect = 0 the classes
/// are identically distributed.
std::vector<SubjectRecord> synth_cohort(int n_subjects, int r, int t, double effect,
                                        std::uint64_t seed, const SynthOptions& options = {});

/// Random ROI centres for synthetic cohorts, deterministic under seed.
RoiAtlas synth_atlas(int r, std::uint64_t seed);

}  // namespace siamgcn

namespace siamgcn {

/// Reads precomputed profiles: an index CSV with columns
/// subject_id,label,site_id,profile_path, one R x R CSV per subject.
std::vector<GraphSignal> load_profiles(const std::filesystem::path& index,
                                       Eigen::Index expected_rois = 0);

/// Coordinates CSV: R rows of x,y,z (header optional).
RoiAtlas load_atlas(const std::filesystem::path& coords);

}  // namespace siamgcn
