#include "siamgcn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "siamgcn/spectral.hpp"

namespace siamgcn {

RocResult roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auc: both label values must be present");
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("roc_auc: NaN score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks (1-based) of the positives; ranks are half-integers.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q) {
      if (labels[order[q]]) rank_sum += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  RocResult out;
  out.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

  out.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i;
    const double threshold = scores[order[i - 1]];
    while (j > 0 && scores[order[j - 1]] == threshold) {
      --j;
      (labels[order[j]] ? tp : fp) += 1;
    }
    out.points.push_back({threshold, static_cast<double>(fp) / nn, static_cast<double>(tp) / np});
    i = j;
  }
  return out;
}

std::vector<int> knn_classify(const Matrix& distances, std::span<const int> reference_labels, int k) {
  if (static_cast<std::size_t>(distances.cols()) != reference_labels.size()) {
    throw ValidationError("knn_classify: distance columns do not match reference labels");
  }
  if (k < 1 || k > distances.cols()) throw ValidationError("knn_classify: k must lie in [1, #references]");

  std::vector<int> predicted(static_cast<std::size_t>(distances.rows()));
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    candidates.clear();
    for (Eigen::Index j = 0; j < distances.cols(); ++j) {
      if (std::isfinite(distances(i, j))) candidates.push_back(j);
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const double da = distances(i, a);
                        const double db = distances(i, b);
                        return da != db ? da < db : a < b;
                      });
    int votes_one = 0;
    for (std::size_t q = 0; q < take; ++q) votes_one += reference_labels[static_cast<std::size_t>(candidates[q])] == 1;
    const int votes_zero = static_cast<int>(take) - votes_one;
    predicted[static_cast<std::size_t>(i)] = votes_one > votes_zero ? 1 : 0;
  }
  return predicted;
}

double learned_distance(const SiameseModel& model, const Matrix& signal_a, const Matrix& signal_b,
                        bool same_site) {
  return 1.0 - similarity(model, signal_a, signal_b, same_site);
}

Vector vectorize_profile(const Matrix& features) {
  const Eigen::Index r = features.rows();
  Vector v(r * (r - 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) v(pos++) = features(i, j);
  }
  return v;
}

PcaBasis fit_pca(const Matrix& train, double variance_keep) {
  const Eigen::Index n = train.rows();
  const Eigen::Index d = train.cols();
  if (n < 2) throw ValidationError("PCA needs at least 2 training samples");
  if (!(variance_keep > 0.0 && variance_keep <= 1.0)) throw ValidationError("variance_keep must lie in (0, 1]");

  PcaBasis basis;
  basis.mean = train.colwise().mean().transpose();
  const Matrix centred = train.rowwise() - basis.mean.transpose();
  const double denom = static_cast<double>(n - 1);

  // Eigenvectors of the smaller of the covariance and the Gram matrix; both
  // share the non-zero spectrum.
  Vector eigenvalues;
  Matrix directions;  // d x m, not yet truncated
  if (d <= n) {
    const auto eig = symmetric_eig(centred.transpose() * centred / denom);
    eigenvalues = eig.eigenvalues.reverse();
    directions = eig.eigenvectors.rowwise().reverse();
  } else {
    const auto eig = symmetric_eig(centred * centred.transpose() / denom);
    eigenvalues = eig.eigenvalues.reverse();
    const Matrix u = eig.eigenvectors.rowwise().reverse();
    directions.resize(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lambda = eigenvalues(i);
      directions.col(i) = lambda > 0.0 ? Vector(centred.transpose() * u.col(i) / std::sqrt(denom * lambda))
                                       : Vector::Zero(d);
    }
  }

  const double largest = eigenvalues.size() ? std::max(eigenvalues(0), 0.0) : 0.0;
  const double floor = 1e-12 * largest;
  double total = 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > floor) {
      total += eigenvalues(i);
      rank = i + 1;
    }
  }
  Eigen::Index keep = 0;
  double cumulative = 0.0;
  while (keep < rank && cumulative < variance_keep * total * (1.0 - 1e-12)) cumulative += eigenvalues(keep++);

  basis.components = directions.leftCols(keep);
  basis.explained_variance = eigenvalues.head(keep);
  basis.retained_fraction = total > 0.0 ? cumulative / total : 1.0;
  return basis;
}

Matrix pca_euclidean_baseline(const Matrix& train, const Matrix& test, double variance_keep) {
  if (train.cols() != test.cols()) throw ValidationError("PCA baseline: train and test feature widths differ");
  const PcaBasis basis = fit_pca(train, variance_keep);
  const Matrix projected = (test.rowwise() - basis.mean.transpose()) * basis.components;
  const Eigen::Index m = test.rows();
  Matrix dist = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      dist(i, j) = dist(j, i) = (projected.row(i) - projected.row(j)).norm();
    }
  }
  return dist;
}

double permutation_test(std::span<const double> group_a, std::span<const double> group_b, int n_perm,
                        std::uint64_t seed) {
  if (group_a.empty() || group_b.empty()) throw ValidationError("permutation_test: both groups must be non-empty");
  if (n_perm < 1) throw ValidationError("permutation_test: n_perm must be >= 1");

  std::vector<double> pooled(group_a.begin(), group_a.end());
  pooled.insert(pooled.end(), group_b.begin(), group_b.end());
  const std::size_t na = group_a.size();
  const std::size_t n = pooled.size();
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const double sum_a = std::accumulate(group_a.begin(), group_a.end(), 0.0);
  auto statistic = [&](double first_sum) {
    return std::abs(first_sum / static_cast<double>(na) - (total - first_sum) / static_cast<double>(n - na));
  };
  const double observed = statistic(sum_a);
  const double tolerance = 1e-12 * std::max(1.0, observed);

  Rng rng(seed);
  int extreme = 0;
  for (int p = 0; p < n_perm; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
      std::swap(pooled[i], pooled[i + rng.below(n - i)]);
      s += pooled[i];
    }
    if (statistic(s) >= observed - tolerance) ++extreme;
  }
  return (1.0 + extreme) / (static_cast<double>(n_perm) + 1.0);
}

void EvalReport::check_invariants() const {
  auto unit = [](double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(std::string("report field out of [0, 1]: ") + what);
  };
  auto summary = [&](const MetricSummary& s) {
    unit(s.auc, "auc");
    unit(s.knn_accuracy, "knn_accuracy");
    unit(s.knn_accuracy_same_site, "knn_accuracy_same_site");
    unit(s.p_value, "p_value");
  };
  summary(learned);
  summary(baseline);
  for (const auto& site : sites) {
    summary(site.learned);
    summary(site.baseline);
  }
  for (const auto* roc : {&roc_learned, &roc_baseline}) {
    for (std::size_t i = 1; i < roc->size(); ++i) {
      if ((*roc)[i].fpr < (*roc)[i - 1].fpr || (*roc)[i].tpr < (*roc)[i - 1].tpr) {
        throw ValidationError("ROC curve is not monotone");
      }
    }
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SubjectView {
  std::vector<int> labels;
  std::vector<std::string> sites;
};

// Accuracy over `subjects` (positions into the test set) when each one is
// classified from the others; `same_site_only` restricts neighbours to the
// subject's own site.
double knn_accuracy(const Matrix& dist, const SubjectView& view, const std::vector<std::size_t>& subjects,
                    int k, bool same_site_only) {
  std::size_t correct = 0;
  std::size_t counted = 0;
  const auto n = static_cast<Eigen::Index>(view.labels.size());
  for (std::size_t i : subjects) {
    Matrix row = dist.row(static_cast<Eigen::Index>(i));
    row(0, static_cast<Eigen::Index>(i)) = kInf;
    int available = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (same_site_only && view.sites[static_cast<std::size_t>(j)] != view.sites[i]) row(0, j) = kInf;
      if (std::isfinite(row(0, j))) ++available;
    }
    if (available == 0) continue;
    const auto pred = knn_classify(row, view.labels, std::min(k, available));
    ++counted;
    if (pred[0] == view.labels[i]) ++correct;
  }
  return counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
}

MetricSummary summarize(const Matrix& dist, const SubjectView& view, const std::vector<PairDistance>& pairs,
                        const std::vector<std::size_t>& pair_ids, const std::vector<std::size_t>& subjects,
                        bool learned, const EvalConfig& cfg, std::uint64_t seed, std::vector<RocPoint>* roc) {
  MetricSummary s;
  std::vector<double> scores;
  std::vector<std::uint8_t> match;
  std::vector<double> d_match;
  std::vector<double> d_non;
  for (std::size_t id : pair_ids) {
    const double d = learned ? pairs[id].learned : pairs[id].baseline;
    scores.push_back(-d);
    match.push_back(pairs[id].match ? 1 : 0);
    (pairs[id].match ? d_match : d_non).push_back(d);
  }
  const auto rr = roc_auc(scores, match);
  s.auc = rr.auc;
  if (roc) *roc = rr.points;
  s.mean_distance_matching = std::accumulate(d_match.begin(), d_match.end(), 0.0) / static_cast<double>(d_match.size());
  s.mean_distance_non_matching = std::accumulate(d_non.begin(), d_non.end(), 0.0) / static_cast<double>(d_non.size());
  s.p_value = permutation_test(d_match, d_non, cfg.n_perm, seed);
  s.knn_accuracy = knn_accuracy(dist, view, subjects, cfg.knn_k, false);
  s.knn_accuracy_same_site = knn_accuracy(dist, view, subjects, cfg.knn_k, true);
  return s;
}

}  // namespace

EvalReport evaluate(const SiameseModel& model, std::span<const GraphSignal> cohort,
                    std::span<const std::size_t> train, std::span<const std::size_t> test,
                    const EvalConfig& config) {
  if (test.size() < 2) throw ValidationError("evaluate: need at least 2 test subjects");
  if (config.knn_k < 1) throw ValidationError("evaluate: k-nn k must be >= 1");
  const std::size_t n = test.size();

  SubjectView view;
  std::vector<Matrix> embeddings;
  for (std::size_t idx : test) {
    view.labels.push_back(cohort[idx].label);
    view.sites.push_back(cohort[idx].site_id);
    embeddings.push_back(embed(model, cohort[idx].features));
  }

  Matrix train_features(static_cast<Eigen::Index>(train.size()), 0);
  Matrix test_features(static_cast<Eigen::Index>(n), 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Vector v = vectorize_profile(cohort[train[i]].features);
    if (i == 0) train_features.resize(static_cast<Eigen::Index>(train.size()), v.size());
    train_features.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vector v = vectorize_profile(cohort[test[i]].features);
    if (i == 0) test_features.resize(static_cast<Eigen::Index>(n), v.size());
    test_features.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  const PcaBasis basis = fit_pca(train_features, config.variance_keep);
  const Matrix base_dist = [&] {
    const Matrix projected = (test_features.rowwise() - basis.mean.transpose()) * basis.components;
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < d.rows(); ++j) d(i, j) = d(j, i) = (projected.row(i) - projected.row(j)).norm();
    }
    return d;
  }();

  EvalReport report;
  report.n_subjects = n;
  report.knn_k = config.knn_k;
  report.pca_components = static_cast<std::size_t>(basis.components.cols());

  Matrix learned_dist = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      PairDistance pd;
      pd.a = test[i];
      pd.b = test[j];
      pd.match = view.labels[i] == view.labels[j];
      pd.same_site = view.sites[i] == view.sites[j];
      pd.learned = 1.0 - similarity_from_embeddings(model, embeddings[i], embeddings[j], pd.same_site);
      pd.baseline = base_dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      learned_dist(ii, jj) = learned_dist(jj, ii) = pd.learned;
      report.pairs.push_back(pd);
    }
  }
  report.n_pairs = report.pairs.size();
  report.n_matching = static_cast<std::size_t>(
      std::count_if(report.pairs.begin(), report.pairs.end(), [](const PairDistance& p) { return p.match; }));
  if (report.n_matching == 0 || report.n_matching == report.n_pairs) {
    throw ValidationError("evaluate: test set needs subjects of both classes");
  }

  std::vector<std::size_t> all_pairs(report.n_pairs);
  std::iota(all_pairs.begin(), all_pairs.end(), std::size_t{0});
  std::vector<std::size_t> all_subjects(n);
  std::iota(all_subjects.begin(), all_subjects.end(), std::size_t{0});
  report.learned = summarize(learned_dist, view, report.pairs, all_pairs, all_subjects, true, config, config.seed,
                             &report.roc_learned);
  report.baseline = summarize(base_dist, view, report.pairs, all_pairs, all_subjects, false, config,
                              config.seed + 1, &report.roc_baseline);

  std::map<std::string, std::vector<std::size_t>> site_subjects;
  for (std::size_t i = 0; i < n; ++i) site_subjects[view.sites[i]].push_back(i);
  std::uint64_t site_seed = config.seed + 2;
  for (const auto& [site, members] : site_subjects) {
    if (members.size() < 2) {
      warn("site " + site + " has fewer than 2 test subjects; skipped in the per-site report");
      continue;
    }
    std::vector<std::size_t> pair_ids;
    std::size_t matching = 0;
    for (std::size_t p = 0; p < report.pairs.size(); ++p) {
      const auto& pd = report.pairs[p];
      if (pd.same_site && cohort[pd.a].site_id == site) {
        pair_ids.push_back(p);
        matching += pd.match;
      }
    }
    if (matching == 0 || matching == pair_ids.size()) {
      warn("site " + site + " has only one pair class among its test pairs; skipped in the per-site report");
      continue;
    }
    SiteReport sr;
    sr.site_id = site;
    sr.n_subjects = members.size();
    sr.n_pairs = pair_ids.size();
    sr.learned = summarize(learned_dist, view, report.pairs, pair_ids, members, true, config, site_seed++, nullptr);
    sr.baseline = summarize(base_dist, view, report.pairs, pair_ids, members, false, config, site_seed++, nullptr);
    report.sites.push_back(std::move(sr));
  }
  report.check_invariants();
  return report;
}

}  // namespace siamgcn
