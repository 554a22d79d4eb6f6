#pragma once

#include <functional>
#include <span>
#include <vector>

#include "siamgcn/connectome.hpp"
#include "siamgcn/model.hpp"
#include "siamgcn/objective.hpp"

namespace siamgcn {

/// Pairs per training subject in the reference setup (43000 pairs drawn
/// from 720 subjects).
inline constexpr double kPairsPerSubject = 43000.0 / 720.0;

struct SubjectPair {
  std::size_t a = 0;  // cohort indices, a != b
  std::size_t b = 0;
  bool match = false;      // same class label
  bool same_site = false;
};

struct PairSet {
  std::vector<SubjectPair> pairs;
  std::vector<int> usage;  // indexed by cohort position

  std::size_t matching() const;
  std::size_t non_matching() const { return pairs.size() - matching(); }
};

struct CohortSplit {
  std::vector<std::size_t> train;  // ascending cohort indices
  std::vector<std::size_t> test;
};

/// Greedy balanced sampler over `members`: repeatedly takes the least-used
/// subject and pairs it with the least-used partner of whichever class
/// (matching / non-matching) is behind, never repeating an unordered pair.
/// Usage ties are broken by a seeded random ranking.
PairSet sample_pairs(std::span<const GraphSignal> cohort, std::span<const std::size_t> members,
                     std::size_t budget, std::uint64_t seed);

/// Default pair budget for a training set of `n_subjects`.
std::size_t default_pair_budget(std::size_t n_subjects);

/// Site- and label-stratified random split. Every site with at least two
/// subjects contributes to both sides when 0 < test_fraction < 1; single
/// subject sites stay in training.
CohortSplit split_cohort(std::span<const GraphSignal> cohort, double test_fraction,
                         std::uint64_t seed);

/// Every unordered pair of `members`, in member order.
PairSet all_test_pairs(std::span<const GraphSignal> cohort, std::span<const std::size_t> members);

/// Splits pair indices into mini-batches of at most about `batch_size`,
/// each holding both matching and non-matching pairs.
std::vector<std::vector<std::size_t>> make_batches(const PairSet& pairs, std::size_t batch_size,
                                                   Rng& rng);

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 200;
  LossConfig loss;
  double learning_rate = 0.001;
  double dropout = 0.2;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  bool center_bias = true;  // start the FC bias at centering_bias()

  void validate() const;
};

struct TrainResult {
  SiameseModel model;
  std::vector<double> loss_trace;  // mean batch objective per epoch
};

/// Called after every `checkpoint_every`-th epoch and after the last one.
using CheckpointFn = std::function<void(int epoch, const SiameseModel& model)>;

/// FC bias that makes the mean pre-sigmoid activation over `pairs` zero
/// (no dropout). The node-wise merge is non-negative, so with bias 0 the
/// initial outputs share a random offset that can leave the sigmoid in its
/// flat region for many epochs.
double centering_bias(const SiameseModel& model, std::span<const GraphSignal> cohort,
                      const PairSet& pairs);

/// Mini-batch Adam on global loss + FC L2. Each epoch reshuffles the
/// stratified batches. Throws NumericError on a non-finite objective.
TrainResult train(SiameseModel model, std::span<const GraphSignal> cohort, const PairSet& pairs,
                  const TrainConfig& config, const CheckpointFn& on_checkpoint = {});

/// Objective of one batch and its gradient (global loss + L2), with
/// dropout masks drawn from `rng` in pair order.
struct BatchResult {
  double loss = 0.0;
  ModelGradients grads;
};
BatchResult batch_objective(const SiameseModel& model, std::span<const GraphSignal> cohort,
                            const PairSet& pairs, std::span<const std::size_t> batch,
                            const LossConfig& loss, double keep_prob, Rng& rng);

}  // namespace siamgcn
