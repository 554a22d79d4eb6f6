#include "siamgcn/connectome.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <set>
#include <tuple>

#include "siamgcn/csv.hpp"
#include "siamgcn/random.hpp"

namespace siamgcn {

namespace fs = std::filesystem;

void RoiAtlas::validate() const {
  if (coords.cols() != 3) throw ValidationError("atlas coordinates must have 3 columns");
  if (coords.rows() < 2) throw ValidationError("atlas needs at least 2 ROIs");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != coords.rows()) {
    throw ValidationError("atlas names do not match coordinate count");
  }
  if (!coords.allFinite()) throw ValidationError("atlas coordinates must be finite");
  std::set<std::tuple<double, double, double>> seen;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    if (!seen.emplace(coords(i, 0), coords(i, 1), coords(i, 2)).second) {
      throw ValidationError("duplicate ROI coordinates at node " + std::to_string(i));
    }
  }
}

WeightMode parse_weight_mode(const std::string& text) {
  if (text == "distance") return WeightMode::distance;
  if (text == "gaussian") return WeightMode::gaussian;
  throw ValidationError("unknown weight mode '" + text + "' (expected distance or gaussian)");
}

std::string to_string(WeightMode mode) {
  return mode == WeightMode::distance ? "distance" : "gaussian";
}

SpatialGraph build_spatial_graph(const RoiAtlas& atlas, int k, WeightMode mode) {
  atlas.validate();
  const Eigen::Index n = atlas.size();
  if (k < 1 || k >= n) {
    throw ValidationError("k must satisfy 1 <= k < R (k = " + std::to_string(k) + ")");
  }

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      dist(i, j) = (atlas.coords.row(i) - atlas.coords.row(j)).norm();
    }
  }

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  std::vector<Eigen::Index> others;
  for (Eigen::Index i = 0; i < n; ++i) {
    others.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
    for (int m = 0; m < k; ++m) {
      const Eigen::Index j = others[static_cast<std::size_t>(m)];
      keep(i, j) = true;
      keep(j, i) = true;
    }
  }

  double sigma = 0.0;
  if (mode == WeightMode::gaussian) {
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (keep(i, j)) {
          sum += dist(i, j);
          ++count;
        }
      }
    }
    sigma = sum / static_cast<double>(count);
  }

  SpatialGraph graph;
  graph.atlas = atlas;
  graph.k_neighbors = k;
  graph.weight_mode = mode;
  graph.adjacency.w = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!keep(i, j)) continue;
      const double d = dist(i, j);
      graph.adjacency.w(i, j) =
          mode == WeightMode::distance ? d : std::exp(-d * d / (2.0 * sigma * sigma));
    }
  }
  return graph;
}

Matrix znormalize_timeseries(const Matrix& ts) {
  if (ts.rows() < 2) throw ValidationError("time series needs at least 2 samples");
  const double t = static_cast<double>(ts.rows());
  Matrix out(ts.rows(), ts.cols());
  for (Eigen::Index j = 0; j < ts.cols(); ++j) {
    const double mean = ts.col(j).mean();
    Vector centred = ts.col(j).array() - mean;
    const double sd = std::sqrt(centred.squaredNorm() / (t - 1.0));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      throw ValidationError("ROI " + std::to_string(j) + " has a constant time series");
    }
    out.col(j) = centred / sd;
  }
  return out;
}

Matrix pearson_profiles(const Matrix& ts) {
  const Matrix z = znormalize_timeseries(ts);
  const double denom = static_cast<double>(ts.rows()) - 1.0;
  Matrix corr = (z.transpose() * z) / denom;
  corr = (0.5 * (corr + corr.transpose())).eval();
  corr = corr.cwiseMax(-1.0).cwiseMin(1.0);
  corr.diagonal().setOnes();
  return corr;
}

GraphSignal to_graph_signal(const SubjectRecord& record) {
  GraphSignal signal;
  signal.subject_id = record.subject_id;
  signal.label = record.label;
  signal.site_id = record.site_id;
  try {
    signal.features = pearson_profiles(record.timeseries);
  } catch (const ValidationError& e) {
    throw ValidationError("subject " + record.subject_id + ": " + e.what());
  }
  return signal;
}

void validate_graph_signal(const GraphSignal& signal) {
  const Matrix& f = signal.features;
  const std::string who = "subject " + signal.subject_id + ": ";
  if (f.rows() != f.cols() || f.rows() < 1) throw ValidationError(who + "profiles must be square");
  if (!f.allFinite()) throw ValidationError(who + "profiles must be finite");
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    if (f(i, i) != 1.0) throw ValidationError(who + "profile diagonal must be 1");
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      if (f(i, j) != f(j, i)) throw ValidationError(who + "profiles must be symmetric");
      if (f(i, j) < -1.0 || f(i, j) > 1.0) throw ValidationError(who + "profile entries must lie in [-1, 1]");
    }
  }
  if (signal.label != 0 && signal.label != 1) throw ValidationError(who + "label must be 0 or 1");
}

namespace {

struct ManifestRow {
  std::size_t line = 0;
  std::string subject_id;
  int label = 0;
  std::string site_id;
  fs::path path;
};

std::vector<ManifestRow> read_manifest(const fs::path& manifest, const std::string& path_column) {
  std::ifstream probe(manifest);
  if (!probe) throw ValidationError("cannot open manifest: " + manifest.string());
  probe.close();

  const auto rows = csv::read_rows(manifest);
  std::vector<ManifestRow> out;
  const fs::path base = manifest.parent_path();
  std::set<std::string> ids;
  std::size_t line = 0;
  for (const auto& row : rows) {
    ++line;
    if (line == 1 && !row.empty() && row[0] == "subject_id") continue;
    const std::string where = manifest.string() + ":" + std::to_string(line) + ": ";
    if (row.size() != 4) {
      throw ValidationError(where + "expected 4 columns (subject_id,label,site_id," + path_column +
                            "), found " + std::to_string(row.size()));
    }
    ManifestRow r;
    r.line = line;
    r.subject_id = row[0];
    if (r.subject_id.empty()) throw ValidationError(where + "empty subject_id");
    if (!ids.insert(r.subject_id).second) throw ValidationError(where + "duplicate subject_id " + r.subject_id);
    if (row[1] == "0") {
      r.label = 0;
    } else if (row[1] == "1") {
      r.label = 1;
    } else {
      throw ValidationError(where + "unknown label '" + row[1] + "' (expected 0 or 1)");
    }
    r.site_id = row[2];
    if (r.site_id.empty()) throw ValidationError(where + "empty site_id");
    r.path = fs::path(row[3]);
    if (r.path.is_relative()) r.path = base / r.path;
    if (!fs::exists(r.path)) throw ValidationError(where + "missing file " + r.path.string());
    out.push_back(std::move(r));
  }
  if (out.empty()) warn("manifest " + manifest.string() + " lists no subjects");
  return out;
}

}  // namespace

std::vector<SubjectRecord> load_cohort(const fs::path& manifest, Eigen::Index expected_rois) {
  std::vector<SubjectRecord> cohort;
  Eigen::Index width = expected_rois;
  for (auto& row : read_manifest(manifest, "timeseries_path")) {
    const std::string where = manifest.string() + ":" + std::to_string(row.line) + ": ";
    SubjectRecord record;
    record.subject_id = row.subject_id;
    record.label = row.label;
    record.site_id = row.site_id;
    try {
      record.timeseries = csv::read_matrix(row.path);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (record.timeseries.rows() < 2) throw ValidationError(where + "time series needs at least 2 rows");
    if (width == 0) width = record.timeseries.cols();
    if (record.timeseries.cols() != width) {
      throw ValidationError(where + "expected " + std::to_string(width) + " ROI columns, found " +
                            std::to_string(record.timeseries.cols()));
    }
    cohort.push_back(std::move(record));
  }
  return cohort;
}

std::vector<GraphSignal> load_profiles(const fs::path& index, Eigen::Index expected_rois) {
  std::vector<GraphSignal> signals;
  Eigen::Index width = expected_rois;
  for (auto& row : read_manifest(index, "profile_path")) {
    const std::string where = index.string() + ":" + std::to_string(row.line) + ": ";
    GraphSignal signal;
    signal.subject_id = row.subject_id;
    signal.label = row.label;
    signal.site_id = row.site_id;
    try {
      signal.features = csv::read_matrix(row.path);
      validate_graph_signal(signal);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (width == 0) width = signal.features.rows();
    if (signal.features.rows() != width) {
      throw ValidationError(where + "expected " + std::to_string(width) + " ROIs, found " +
                            std::to_string(signal.features.rows()));
    }
    signals.push_back(std::move(signal));
  }
  return signals;
}

RoiAtlas load_atlas(const fs::path& coords) {
  RoiAtlas atlas;
  atlas.coords = csv::read_matrix(coords);
  atlas.validate();
  return atlas;
}

RoiAtlas synth_atlas(int r, std::uint64_t seed) {
  if (r < 2) throw ValidationError("synth_atlas: need at least 2 ROIs");
  Rng rng(seed ^ 0xa71a5ULL);
  RoiAtlas atlas;
  atlas.coords.resize(r, 3);
  // Points inside a brain-sized ellipsoid (mm).
  for (int i = 0; i < r; ++i) {
    double x, y, z;
    do {
      x = rng.uniform(-1.0, 1.0);
      y = rng.uniform(-1.0, 1.0);
      z = rng.uniform(-1.0, 1.0);
    } while (x * x + y * y + z * z > 1.0);
    atlas.coords(i, 0) = 70.0 * x;
    atlas.coords(i, 1) = 100.0 * y;
    atlas.coords(i, 2) = 60.0 * z;
    atlas.names.push_back("roi_" + std::to_string(i));
  }
  return atlas;
}

std::vector<SubjectRecord> synth_cohort(int n_subjects, int r, int t, double effect,
                                        std::uint64_t seed, const SynthOptions& options) {
  if (n_subjects < 0 || n_subjects % 2 != 0) {
    throw ValidationError("synth_cohort: n_subjects must be even and non-negative");
  }
  if (r < 2 || t < 2) throw ValidationError("synth_cohort: need r >= 2 and t >= 2");
  if (!(effect >= 0.0)) throw ValidationError("synth_cohort: effect must be >= 0");

  if (options.sites < 1) throw ValidationError("synth_cohort: need at least one site");
  const int n_sites = options.sites;
  Rng rng(seed);

  const int n_factors = std::max(2, r / 5);
  Matrix base_mixing(r, n_factors);
  for (Eigen::Index i = 0; i < base_mixing.size(); ++i) base_mixing.data()[i] = rng.normal();

  std::vector<double> site_gain(static_cast<std::size_t>(n_sites));
  for (auto& g : site_gain) g = rng.uniform(options.site_gain_min, options.site_gain_max);

  // ROIs carrying the class effect.
  std::vector<int> rois(static_cast<std::size_t>(r));
  std::iota(rois.begin(), rois.end(), 0);
  rng.shuffle(rois);
  const int n_effect = std::clamp(static_cast<int>(std::lround(options.effect_roi_fraction * r)), 2, r);
  rois.resize(static_cast<std::size_t>(n_effect));
  std::vector<SubjectRecord> cohort;
  cohort.reserve(static_cast<std::size_t>(n_subjects));
  for (int s = 0; s < n_subjects; ++s) {
    SubjectRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "sub%05d", s);
    rec.subject_id = id;
    rec.label = s % 2;
    const int site = (s / 2) % n_sites;
    rec.site_id = "site" + std::to_string(site + 1);

    Matrix mixing = base_mixing;
    for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] += options.subject_jitter * rng.normal();
    const double subject_gain = std::exp(options.subject_gain_spread * rng.uniform(-1.0, 1.0));
    mixing *= site_gain[static_cast<std::size_t>(site)] * subject_gain;

    Matrix latent(t, n_factors);
    for (Eigen::Index i = 0; i < latent.size(); ++i) latent.data()[i] = rng.normal();
    Matrix noise(t, r);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    Matrix ts = latent * mixing.transpose() + noise;

    // Class 1 shares one driver across the effect ROIs; class 0 gets
    // independent drivers with the same variance.
    Vector driver(t);
    for (std::size_t i = 0; i < rois.size(); ++i) {
      if (i == 0 || rec.label == 0) {
        for (int k = 0; k < t; ++k) driver(k) = rng.normal();
      }
      auto col = ts.col(rois[i]);
      const double sd = std::sqrt((col.array() - col.mean()).square().sum() / (t - 1));
      col += effect * sd * driver;
    }
    rec.timeseries = std::move(ts);
    cohort.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace siamgcn
