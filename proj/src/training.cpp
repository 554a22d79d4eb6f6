#include "siamgcn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace siamgcn {

std::size_t PairSet::matching() const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const SubjectPair& p) { return p.match; }));
}

std::size_t default_pair_budget(std::size_t n_subjects) {
  return static_cast<std::size_t>(std::llround(kPairsPerSubject * static_cast<double>(n_subjects)));
}

namespace {

SubjectPair pair_of(std::span<const GraphSignal> cohort, std::size_t a, std::size_t b) {
  return {a, b, cohort[a].label == cohort[b].label, cohort[a].site_id == cohort[b].site_id};
}

}  // namespace

PairSet sample_pairs(std::span<const GraphSignal> cohort, std::span<const std::size_t> members,
                     std::size_t budget, std::uint64_t seed) {
  PairSet out;
  out.usage.assign(cohort.size(), 0);
  const std::size_t m = members.size();
  for (std::size_t idx : members) {
    if (idx >= cohort.size()) throw ValidationError("sample_pairs: member index out of range");
  }
  if (budget == 0) return out;

  std::size_t per_class[2] = {0, 0};
  for (std::size_t idx : members) ++per_class[cohort[idx].label == 1 ? 1 : 0];
  if (per_class[0] < 2 || per_class[1] < 2) {
    throw ValidationError("sample_pairs: need at least 2 subjects per class");
  }
  const std::size_t distinct = m * (m - 1) / 2;
  if (budget > distinct) {
    throw ValidationError("sample_pairs: budget " + std::to_string(budget) + " exceeds the " +
                          std::to_string(distinct) + " distinct pairs");
  }

  Rng rng(seed);
  std::vector<std::size_t> rank(m);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  rng.shuffle(rank);

  std::vector<int> usage(m, 0);
  std::vector<std::uint8_t> used(m * m, 0);
  std::vector<int> label(m);
  for (std::size_t i = 0; i < m; ++i) label[i] = cohort[members[i]].label;

  auto less_used = [&](std::size_t x, std::size_t y) {
    return usage[x] != usage[y] ? usage[x] < usage[y] : rank[x] < rank[y];
  };
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  auto best_partner = [&](std::size_t a, bool want_match) {
    std::size_t best = kNone;
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a || used[a * m + b] || (label[a] == label[b]) != want_match) continue;
      if (best == kNone || less_used(b, best)) best = b;
    }
    return best;
  };

  std::size_t n_match = 0;
  out.pairs.reserve(budget);
  std::vector<std::size_t> order(m);
  while (out.pairs.size() < budget) {
    const bool want_match = n_match <= out.pairs.size() - n_match;
    std::size_t a = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (less_used(i, a)) a = i;
    }

    std::size_t b = kNone;
    bool is_match = want_match;
    for (bool cls : {want_match, !want_match}) {
      b = best_partner(a, cls);
      if (b != kNone) {
        is_match = cls;
        break;
      }
    }
    if (b == kNone) {
      // The least-used subject is saturated; fall back through the others.
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), less_used);
      for (std::size_t cand : order) {
        for (bool cls : {want_match, !want_match}) {
          b = best_partner(cand, cls);
          if (b != kNone) {
            a = cand;
            is_match = cls;
            break;
          }
        }
        if (b != kNone) break;
      }
    }
    if (b == kNone) throw ValidationError("sample_pairs: budget is infeasible");

    used[a * m + b] = used[b * m + a] = 1;
    ++usage[a];
    ++usage[b];
    if (is_match) ++n_match;
    const std::size_t ca = members[std::min(a, b)];
    const std::size_t cb = members[std::max(a, b)];
    out.pairs.push_back(pair_of(cohort, ca, cb));
  }
  for (std::size_t i = 0; i < m; ++i) out.usage[members[i]] = usage[i];
  return out;
}

PairSet all_test_pairs(std::span<const GraphSignal> cohort, std::span<const std::size_t> members) {
  if (members.size() < 2) throw ValidationError("all_test_pairs: need at least 2 subjects");
  PairSet out;
  out.usage.assign(cohort.size(), 0);
  out.pairs.reserve(members.size() * (members.size() - 1) / 2);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      out.pairs.push_back(pair_of(cohort, members[i], members[j]));
      ++out.usage[members[i]];
      ++out.usage[members[j]];
    }
  }
  return out;
}

namespace {

// Integer allocation of `target` items proportional to `quota`, within
// [lo, hi] per group, by largest remainder. Ties go to the earlier group.
std::vector<std::size_t> apportion(const std::vector<double>& quota, const std::vector<std::size_t>& lo,
                                   const std::vector<std::size_t>& hi, std::size_t target) {
  const std::size_t n = quota.size();
  std::vector<std::size_t> alloc(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    alloc[i] = std::clamp(static_cast<std::size_t>(std::floor(quota[i])), lo[i], hi[i]);
    total += alloc[i];
  }
  while (total < target) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (alloc[i] >= hi[i]) continue;
      if (best == n || quota[i] - alloc[i] > quota[best] - alloc[best]) best = i;
    }
    if (best == n) break;
    ++alloc[best];
    ++total;
  }
  while (total > target) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (alloc[i] <= lo[i]) continue;
      if (best == n || quota[i] - alloc[i] < quota[best] - alloc[best]) best = i;
    }
    if (best == n) break;
    --alloc[best];
    --total;
  }
  return alloc;
}

}  // namespace

CohortSplit split_cohort(std::span<const GraphSignal> cohort, double test_fraction,
                         std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ValidationError("split_cohort: test_fraction must lie in [0, 1)");
  }
  CohortSplit split;
  const std::size_t n = cohort.size();
  if (test_fraction == 0.0 || n == 0) {
    split.train.resize(n);
    std::iota(split.train.begin(), split.train.end(), std::size_t{0});
    return split;
  }

  std::map<std::string, std::vector<std::size_t>> by_site;
  for (std::size_t i = 0; i < n; ++i) by_site[cohort[i].site_id].push_back(i);

  std::vector<double> quota;
  std::vector<std::size_t> lo, hi;
  for (const auto& [site, members] : by_site) {
    quota.push_back(test_fraction * static_cast<double>(members.size()));
    if (members.size() < 2) {
      warn("site " + site + " has a single subject; it stays in training");
      lo.push_back(0);
      hi.push_back(0);
    } else {
      lo.push_back(1);
      hi.push_back(members.size() - 1);
    }
  }
  const auto target = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto per_site = apportion(quota, lo, hi, target);

  Rng rng(seed);
  std::vector<std::uint8_t> is_test(n, 0);
  std::size_t s = 0;
  for (const auto& [site, members] : by_site) {
    const std::size_t n_test = per_site[s++];
    std::vector<std::size_t> groups[2];
    for (std::size_t idx : members) groups[cohort[idx].label == 1 ? 1 : 0].push_back(idx);
    std::vector<double> label_quota;
    std::vector<std::size_t> label_lo{0, 0}, label_hi;
    for (auto& g : groups) {
      rng.shuffle(g);
      label_quota.push_back(static_cast<double>(n_test) * static_cast<double>(g.size()) /
                            static_cast<double>(members.size()));
      label_hi.push_back(g.size());
    }
    const auto per_label = apportion(label_quota, label_lo, label_hi, n_test);
    for (int c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < per_label[static_cast<std::size_t>(c)]; ++i) is_test[groups[c][i]] = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? split.test : split.train).push_back(i);
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(const PairSet& pairs, std::size_t batch_size,
                                                   Rng& rng) {
  if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) groups[pairs.pairs[i].match ? 1 : 0].push_back(i);
  if (groups[0].empty() || groups[1].empty()) {
    throw ValidationError("pair set needs both matching and non-matching pairs");
  }
  rng.shuffle(groups[0]);
  rng.shuffle(groups[1]);

  const std::size_t total = pairs.pairs.size();
  std::size_t n_batches = (total + batch_size - 1) / batch_size;
  n_batches = std::min({n_batches, groups[0].size(), groups[1].size()});

  std::vector<std::vector<std::size_t>> batches(n_batches);
  for (auto& group : groups) {
    const std::size_t g = group.size();
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * g / n_batches;
      const std::size_t end = (b + 1) * g / n_batches;
      batches[b].insert(batches[b].end(), group.begin() + static_cast<std::ptrdiff_t>(begin),
                        group.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  for (auto& batch : batches) rng.shuffle(batch);
  return batches;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
  loss.validate();
}

BatchResult batch_objective(const SiameseModel& model, std::span<const GraphSignal> cohort,
                            const PairSet& pairs, std::span<const std::size_t> batch,
                            const LossConfig& loss, double keep_prob, Rng& rng) {
  // Each subject's branch is evaluated once per batch however many pairs use it.
  std::unordered_map<std::size_t, std::size_t> slot;
  std::vector<std::size_t> subjects;
  for (std::size_t p : batch) {
    for (std::size_t idx : {pairs.pairs[p].a, pairs.pairs[p].b}) {
      if (slot.emplace(idx, subjects.size()).second) subjects.push_back(idx);
    }
  }
  std::vector<BranchTape> tapes;
  tapes.reserve(subjects.size());
  for (std::size_t idx : subjects) tapes.push_back(branch_forward(model, cohort[idx].features));

  const Eigen::Index fc_size = model.fc_weights.size();
  std::vector<HeadTape> heads;
  std::vector<double> sims;
  std::vector<std::uint8_t> match;
  heads.reserve(batch.size());
  for (std::size_t p : batch) {
    const auto& pair = pairs.pairs[p];
    const Vector scale = keep_prob < 1.0 ? sample_dropout_scale(fc_size, keep_prob, rng) : Vector();
    heads.push_back(head_forward(model, tapes[slot[pair.a]].output, tapes[slot[pair.b]].output,
                                 pair.same_site, scale));
    sims.push_back(heads.back().similarity);
    match.push_back(pair.match ? 1 : 0);
  }

  const LossValue lv = global_loss(sims, match, loss);
  const L2Value l2 = l2_penalty(model.fc_weights, loss.l2_coeff);

  BatchResult out{lv.loss + l2.penalty, ModelGradients::zeros_like(model)};
  std::vector<Matrix> d_embed(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    d_embed[i] = Matrix::Zero(tapes[i].output.rows(), tapes[i].output.cols());
  }
  for (std::size_t q = 0; q < batch.size(); ++q) {
    const auto& pair = pairs.pairs[batch[q]];
    const std::size_t sa = slot[pair.a];
    const std::size_t sb = slot[pair.b];
    auto [da, db] = head_backward(model, tapes[sa].output, tapes[sb].output, heads[q],
                                  lv.d_similarity[q], out.grads);
    d_embed[sa] += da;
    d_embed[sb] += db;
  }
  for (std::size_t i = 0; i < subjects.size(); ++i) branch_backward(model, tapes[i], d_embed[i], out.grads);
  out.grads.fc_weights += l2.gradient;
  return out;
}

namespace {

std::string parameter_norms(SiameseModel& model) {
  std::ostringstream s;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    double sq = 0.0;
    for (const auto& t : model.layers[l].theta) sq += t.squaredNorm();
    s << "layer" << l << "=" << std::sqrt(sq) << " ";
  }
  s << "fc=" << model.fc_weights.norm() << " bias=" << model.fc_bias;
  return s.str();
}

}  // namespace

double centering_bias(const SiameseModel& model, std::span<const GraphSignal> cohort,
                      const PairSet& pairs) {
  if (pairs.pairs.empty()) throw ValidationError("centering_bias: empty pair set");
  std::unordered_map<std::size_t, Matrix> embeddings;
  const auto embedding = [&](std::size_t i) -> const Matrix& {
    auto it = embeddings.find(i);
    if (it == embeddings.end()) it = embeddings.emplace(i, embed(model, cohort[i].features)).first;
    return it->second;
  };
  double sum = 0.0;
  for (const SubjectPair& pair : pairs.pairs) {
    const HeadTape head = head_forward(model, embedding(pair.a), embedding(pair.b), pair.same_site, {});
    sum += head.pre_sigmoid;
  }
  return model.fc_bias - sum / static_cast<double>(pairs.pairs.size());
}

TrainResult train(SiameseModel model, std::span<const GraphSignal> cohort, const PairSet& pairs,
                  const TrainConfig& config, const CheckpointFn& on_checkpoint) {
  config.validate();
  if (pairs.pairs.empty()) throw ValidationError("train: empty pair set");
  if (config.center_bias) model.fc_bias = centering_bias(model, cohort, pairs);

  Rng rng(config.seed);
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  const double keep_prob = 1.0 - config.dropout;

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(pairs, config.batch_size, rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      BatchResult br = batch_objective(model, cohort, pairs, batches[b], config.loss, keep_prob, rng);
      if (!std::isfinite(br.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b + 1 << " ("
            << parameter_norms(model) << ")";
        throw NumericError(msg.str());
      }
      loss_sum += br.loss;
      adam_step(model, br.grads, adam);
    }
    result.loss_trace.push_back(loss_sum / static_cast<double>(batches.size()));
    if (on_checkpoint && (epoch % config.checkpoint_every == 0 || epoch == config.epochs)) {
      on_checkpoint(epoch, model);
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace siamgcn
