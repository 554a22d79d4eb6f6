#include <doctest.h>

#include <set>

#include "siamgcn/training.hpp"
#include "test_support.hpp"

using namespace siamgcn;
using siamgcn::testing::CaptureStderr;

namespace {

// Labels and sites only; sampling and splitting never read features.
std::vector<GraphSignal> labelled_cohort(const std::vector<int>& labels, const std::vector<std::string>& sites) {
  std::vector<GraphSignal> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i].subject_id = "s" + std::to_string(i);
    out[i].label = labels[i];
    out[i].site_id = sites[i];
  }
  return out;
}

// 871 subjects, 403 patients, over 20 sites of uneven size.
std::vector<GraphSignal> reference_cohort() {
  std::vector<int> labels;
  std::vector<std::string> sites;
  Rng rng(2017);
  for (int i = 0; i < 871; ++i) labels.push_back(i < 403 ? 1 : 0);
  rng.shuffle(labels);
  for (int i = 0; i < 871; ++i) {
    sites.push_back("site" + std::to_string(1 + (i * 7 + static_cast<int>(rng.below(3))) % 20));
  }
  return labelled_cohort(labels, sites);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void check_pair_set(const std::vector<GraphSignal>& cohort, const PairSet& ps) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& p : ps.pairs) {
    CHECK(p.a != p.b);
    CHECK(seen.insert({std::min(p.a, p.b), std::max(p.a, p.b)}).second);
    CHECK(p.match == (cohort[p.a].label == cohort[p.b].label));
    CHECK(p.same_site == (cohort[p.a].site_id == cohort[p.b].site_id));
  }
}

std::pair<int, int> usage_range(const PairSet& ps, const std::vector<std::size_t>& members) {
  int lo = 1 << 30, hi = 0;
  for (std::size_t m : members) {
    lo = std::min(lo, ps.usage[m]);
    hi = std::max(hi, ps.usage[m]);
  }
  return {lo, hi};
}

struct SmallProblem {
  std::vector<GraphSignal> cohort;
  SiameseModel model;
  PairSet pairs;
};

SmallProblem small_problem(double effect, std::uint64_t seed) {
  SmallProblem p;
  for (const auto& r : synth_cohort(40, 12, 80, effect, seed)) p.cohort.push_back(to_graph_signal(r));
  const SpatialGraph g = build_spatial_graph(synth_atlas(12, seed), 4, WeightMode::distance);
  ModelSpec spec;
  spec.input_features = 12;
  spec.widths = {8, 8};
  p.model = init_model(rescale_laplacian(normalized_laplacian(g.adjacency)), spec, seed);
  p.pairs = sample_pairs(p.cohort, iota_indices(40), 400, seed);
  return p;
}

}  // namespace

TEST_SUITE("sample_pairs") {
  TEST_CASE("two subjects per class, budget 4") {
    const auto cohort = labelled_cohort({0, 0, 1, 1}, {"A", "A", "A", "A"});
    const PairSet ps = sample_pairs(cohort, iota_indices(4), 4, 1);
    REQUIRE(ps.pairs.size() == 4);
    CHECK(ps.matching() == 2);
    CHECK(ps.non_matching() == 2);
    for (int u : ps.usage) CHECK(u == 2);
    check_pair_set(cohort, ps);
  }

  TEST_CASE("budget 0 is empty") {
    const auto cohort = labelled_cohort({0, 0, 1, 1}, {"A", "A", "B", "B"});
    CHECK(sample_pairs(cohort, iota_indices(4), 0, 1).pairs.empty());
  }

  TEST_CASE("720 subjects, 43000 pairs: balanced and uniform") {
    const auto ref = reference_cohort();
    const CohortSplit split = split_cohort(ref, 0.1734, 3);
    REQUIRE(split.train.size() == 720);
    const PairSet ps = sample_pairs(ref, split.train, 43000, 3);
    CHECK(ps.pairs.size() == 43000);
    const double imbalance = std::abs(static_cast<double>(ps.matching()) - static_cast<double>(ps.non_matching())) / 43000.0;
    CHECK(imbalance <= 0.02);
    const auto [lo, hi] = usage_range(ps, split.train);
    CHECK(hi - lo <= 2);
    for (std::size_t t : split.test) CHECK(ps.usage[t] == 0);
    check_pair_set(ref, ps);
  }

  TEST_CASE("uniform usage over many budgets and cohorts") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 4 + rng.below(30);
      std::vector<int> labels(n);
      std::vector<std::string> sites(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 2);
        sites[i] = rng.bernoulli(0.5) ? "A" : "B";
      }
      if (rng.bernoulli(0.5)) labels[n - 1] = 1;  // unbalanced classes too
      const auto cohort = labelled_cohort(labels, sites);
      const std::size_t max_pairs = n * (n - 1) / 2;
      const std::size_t budget = rng.below(max_pairs / 2 + 1);
      const PairSet ps = sample_pairs(cohort, iota_indices(n), budget, trial);
      CHECK(ps.pairs.size() == budget);
      const auto [lo, hi] = usage_range(ps, iota_indices(n));
      CHECK(hi - lo <= 2);
      check_pair_set(cohort, ps);
    }
  }

  TEST_CASE("deterministic under seed") {
    const auto ref = reference_cohort();
    const auto members = iota_indices(200);
    const PairSet a = sample_pairs(ref, members, 3000, 9);
    const PairSet b = sample_pairs(ref, members, 3000, 9);
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
      CHECK(a.pairs[i].a == b.pairs[i].a);
      CHECK(a.pairs[i].b == b.pairs[i].b);
    }
  }

  TEST_CASE("infeasible requests are errors") {
    const auto cohort = labelled_cohort({0, 0, 1, 1}, {"A", "A", "A", "A"});
    CHECK_THROWS_AS(sample_pairs(cohort, iota_indices(4), 7, 1), ValidationError);
    const auto lopsided = labelled_cohort({0, 0, 0, 1}, {"A", "A", "A", "A"});
    CHECK_THROWS_AS(sample_pairs(lopsided, iota_indices(4), 2, 1), ValidationError);
  }

  TEST_CASE("default budget keeps the reference ratio") {
    CHECK(default_pair_budget(720) == 43000);
    CHECK(default_pair_budget(166) == static_cast<std::size_t>(std::lround(166 * kPairsPerSubject)));
  }
}

TEST_SUITE("split_cohort") {
  TEST_CASE("871 subjects split 720 / 151") {
    const auto ref = reference_cohort();
    const CohortSplit s = split_cohort(ref, 0.1734, 1);
    CHECK(s.train.size() == 720);
    CHECK(s.test.size() == 151);
  }

  TEST_CASE("fraction 0 keeps everyone in training") {
    const auto ref = reference_cohort();
    const CohortSplit s = split_cohort(ref, 0.0, 1);
    CHECK(s.train.size() == 871);
    CHECK(s.test.empty());
  }

  TEST_CASE("every site with two or more subjects lands on both sides") {
    const auto ref = reference_cohort();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const CohortSplit s = split_cohort(ref, 0.1734, seed);
      std::set<std::string> train_sites, test_sites;
      for (std::size_t i : s.train) train_sites.insert(ref[i].site_id);
      for (std::size_t i : s.test) test_sites.insert(ref[i].site_id);
      CHECK(train_sites.size() == 20);
      CHECK(test_sites.size() == 20);
      std::set<std::size_t> all(s.train.begin(), s.train.end());
      all.insert(s.test.begin(), s.test.end());
      CHECK(all.size() == 871);
      CHECK(std::is_sorted(s.train.begin(), s.train.end()));
    }
  }

  TEST_CASE("label proportions follow the cohort within each site") {
    const auto ref = reference_cohort();
    const CohortSplit s = split_cohort(ref, 0.1734, 4);
    int test_patients = 0;
    for (std::size_t i : s.test) test_patients += ref[i].label;
    // 403 / 871 of 151 is about 70
    CHECK(std::abs(test_patients - 70) <= 6);
  }

  TEST_CASE("single-subject site stays in training with a warning") {
    const auto cohort = labelled_cohort({0, 1, 0, 1, 1}, {"A", "A", "A", "A", "lonely"});
    CaptureStderr capture;
    const CohortSplit s = split_cohort(cohort, 0.5, 2);
    CHECK(std::find(s.train.begin(), s.train.end(), 4u) != s.train.end());
    CHECK(capture.text().find("lonely") != std::string::npos);
  }

  TEST_CASE("deterministic under seed; fraction range checked") {
    const auto ref = reference_cohort();
    CHECK(split_cohort(ref, 0.2, 8).test == split_cohort(ref, 0.2, 8).test);
    CHECK(split_cohort(ref, 0.2, 8).test != split_cohort(ref, 0.2, 9).test);
    CHECK_THROWS_AS(split_cohort(ref, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(split_cohort(ref, -0.1, 1), ValidationError);
  }
}

TEST_SUITE("all_test_pairs") {
  TEST_CASE("151 subjects split 78 / 73") {
    std::vector<int> labels;
    for (int i = 0; i < 151; ++i) labels.push_back(i < 78 ? 1 : 0);
    const auto cohort = labelled_cohort(labels, std::vector<std::string>(151, "A"));
    const PairSet ps = all_test_pairs(cohort, iota_indices(151));
    CHECK(ps.pairs.size() == 11325);
    CHECK(ps.matching() == 5631);
    CHECK(ps.non_matching() == 5694);
    check_pair_set(cohort, ps);
  }

  TEST_CASE("two subjects give one pair") {
    const auto cohort = labelled_cohort({0, 1}, {"A", "B"});
    const PairSet ps = all_test_pairs(cohort, iota_indices(2));
    REQUIRE(ps.pairs.size() == 1);
    CHECK_FALSE(ps.pairs[0].match);
    CHECK_FALSE(ps.pairs[0].same_site);
  }
}

TEST_SUITE("make_batches") {
  TEST_CASE("each batch holds both classes and every pair appears once") {
    const auto ref = reference_cohort();
    const PairSet ps = sample_pairs(ref, iota_indices(100), 1000, 2);
    Rng rng(3);
    const auto batches = make_batches(ps, 200, rng);
    CHECK(batches.size() == 5);
    std::vector<int> seen(ps.pairs.size(), 0);
    for (const auto& b : batches) {
      bool pos = false, neg = false;
      for (std::size_t i : b) {
        ++seen[i];
        (ps.pairs[i].match ? pos : neg) = true;
      }
      CHECK(pos);
      CHECK(neg);
      CHECK(b.size() >= 190);
      CHECK(b.size() <= 210);
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_SUITE("train") {
  TEST_CASE("one epoch gives a trace of length one and a checkpoint") {
    SmallProblem p = small_problem(1.0, 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 100;
    std::vector<int> epochs;
    const TrainResult r = train(p.model, p.cohort, p.pairs, cfg, [&](int e, const SiameseModel&) { epochs.push_back(e); });
    CHECK(r.loss_trace.size() == 1);
    CHECK(epochs == std::vector<int>{1});
  }

  TEST_CASE("checkpoints every interval and at the end") {
    SmallProblem p = small_problem(1.0, 1);
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.batch_size = 200;
    cfg.checkpoint_every = 3;
    std::vector<int> epochs;
    train(p.model, p.cohort, p.pairs, cfg, [&](int e, const SiameseModel&) { epochs.push_back(e); });
    CHECK(epochs == std::vector<int>{3, 6, 7});
  }

  TEST_CASE("fixed seed gives bit-identical parameters") {
    SmallProblem p = small_problem(1.0, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 100;
    const TrainResult a = train(p.model, p.cohort, p.pairs, cfg);
    const TrainResult b = train(p.model, p.cohort, p.pairs, cfg);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.model.fc_weights == b.model.fc_weights);
    CHECK(a.model.layers[1].theta[2] == b.model.layers[1].theta[2]);
    cfg.seed = 99;
    const TrainResult c = train(p.model, p.cohort, p.pairs, cfg);
    CHECK(a.model.fc_weights != c.model.fc_weights);
  }

  TEST_CASE("separable cohort: loss goes down") {
    SmallProblem p = small_problem(1.0, 3);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 100;
    const TrainResult r = train(p.model, p.cohort, p.pairs, cfg);
    MESSAGE("first " << r.loss_trace.front() << " last " << r.loss_trace.back());
    CHECK(r.loss_trace.back() < r.loss_trace.front());
  }

  TEST_CASE("centring bias zeroes the mean pre-sigmoid") {
    SmallProblem p = small_problem(1.0, 4);
    p.model.fc_bias = centering_bias(p.model, p.cohort, p.pairs);
    double sum = 0.0;
    for (const auto& pair : p.pairs.pairs) {
      const auto r = siamese_forward(p.model, p.cohort[pair.a].features, p.cohort[pair.b].features, pair.same_site,
                                     Mode::eval, nullptr);
      sum += r.tape.head.pre_sigmoid;
    }
    CHECK(std::abs(sum / static_cast<double>(p.pairs.pairs.size())) < 1e-10);
  }

  TEST_CASE("non-finite loss aborts with a diagnostic") {
    SmallProblem p = small_problem(1.0, 5);
    p.model.fc_weights(0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.center_bias = false;
    try {
      train(p.model, p.cohort, p.pairs, cfg);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1") != std::string::npos);
      CHECK(msg.find("batch 1") != std::string::npos);
    }
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    SmallProblem p = small_problem(1.0, 6);
    CHECK_THROWS_AS(train(p.model, p.cohort, PairSet{}, TrainConfig{}), ValidationError);
  }
}
