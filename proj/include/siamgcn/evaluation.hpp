#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "siamgcn/connectome.hpp"
#include "siamgcn/model.hpp"
#include "siamgcn/training.hpp"

namespace siamgcn {

struct RocPoint {
  double threshold = 0.0;  // scores >= threshold are called positive
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auc = 0.5;
  std::vector<RocPoint> points;  // starts at (0, 0), ends at (1, 1)
};

/// AUC as the Mann-Whitney statistic (ties count 1/2); higher scores mean
/// label 1. ROC points come from a sweep over the distinct scores.
RocResult roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Majority vote over the k nearest references per row of `distances`
/// (test x reference). Distance ties go to the lower reference index, vote
/// ties to label 0. Non-finite distances are never chosen, so +inf masks
/// a reference out (e.g. the subject itself).
std::vector<int> knn_classify(const Matrix& distances, std::span<const int> reference_labels, int k);

/// 1 - similarity in eval mode.
double learned_distance(const SiameseModel& model, const Matrix& signal_a, const Matrix& signal_b,
                        bool same_site);

/// Upper triangle (excluding the diagonal) of an R x R profile matrix.
Vector vectorize_profile(const Matrix& features);

struct PcaBasis {
  Vector mean;
  Matrix components;  // d x n_components, orthonormal columns
  Vector explained_variance;
  double retained_fraction = 0.0;
};

/// PCA of row-sample matrix `train`, keeping the fewest leading components
/// whose cumulative variance reaches `variance_keep`.
PcaBasis fit_pca(const Matrix& train, double variance_keep);

/// Pairwise Euclidean distances between the rows of `test` after
/// projection onto a PCA basis fitted on `train` (rows are samples).
Matrix pca_euclidean_baseline(const Matrix& train, const Matrix& test, double variance_keep);

/// Two-sided permutation test on |mean(a) - mean(b)|:
/// p = (1 + #{permuted >= observed}) / (n_perm + 1).
double permutation_test(std::span<const double> group_a, std::span<const double> group_b, int n_perm,
                        std::uint64_t seed);

struct EvalConfig {
  int knn_k = 3;
  double variance_keep = 0.99;
  int n_perm = 10000;
  std::uint64_t seed = 1;
};

struct PairDistance {
  std::size_t a = 0;  // cohort indices
  std::size_t b = 0;
  double learned = 0.0;
  double baseline = 0.0;
  bool match = false;
  bool same_site = false;
};

struct MetricSummary {
  double auc = 0.5;
  double knn_accuracy = 0.0;             // neighbours drawn from every test subject
  double knn_accuracy_same_site = 0.0;   // neighbours restricted to the subject's site
  double p_value = 1.0;                  // matching vs non-matching distances
  double mean_distance_matching = 0.0;
  double mean_distance_non_matching = 0.0;
};

struct SiteReport {
  std::string site_id;
  std::size_t n_subjects = 0;
  std::size_t n_pairs = 0;  // same-site pairs
  MetricSummary learned;
  MetricSummary baseline;
};

struct EvalReport {
  std::size_t n_subjects = 0;
  std::size_t n_pairs = 0;
  std::size_t n_matching = 0;
  int knn_k = 3;
  std::size_t pca_components = 0;
  MetricSummary learned;
  MetricSummary baseline;
  std::vector<SiteReport> sites;  // sorted by site id
  std::vector<RocPoint> roc_learned;
  std::vector<RocPoint> roc_baseline;
  std::vector<PairDistance> pairs;

  /// Throws ValidationError if an AUC/accuracy/p-value leaves [0, 1] or an
  /// ROC curve is not monotone.
  void check_invariants() const;
};

/// Full protocol on the test subjects: learned and PCA/Euclidean distances
/// for every test pair, ROC/AUC overall and per site, k-nn classification
/// of each test subject against the other test subjects, and permutation
/// tests. The PCA basis is fitted on the training subjects.
EvalReport evaluate(const SiameseModel& model, std::span<const GraphSignal> cohort,
                    std::span<const std::size_t> train, std::span<const std::size_t> test,
                    const EvalConfig& config);

}  // namespace siamgcn
