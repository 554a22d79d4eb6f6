#include <doctest.h>

#include <algorithm>

#include "siamgcn/objective.hpp"
#include "test_support.hpp"

using namespace siamgcn;
using siamgcn::testing::rel_error;

namespace {

// Direct evaluation of the loss from its definition.
double loss_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& match, const LossConfig& cfg) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < s.size(); ++i) (match[i] ? pos : neg).push_back(s[i]);
  const auto mean = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
  };
  const auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
  };
  return var(pos) + var(neg) + cfg.lambda_weight * std::max(0.0, cfg.margin - (mean(pos) - mean(neg)));
}

}  // namespace

TEST_SUITE("global_loss") {
  TEST_CASE("perfect separation gives zero") {
    const std::vector<double> s{1, 1, 1, 0, 0};
    const std::vector<std::uint8_t> m{1, 1, 1, 0, 0};
    const LossValue v = global_loss(s, m, {});
    CHECK(v.loss == 0.0);
    for (double d : v.d_similarity) CHECK(d == 0.0);
  }

  TEST_CASE("one pair of each class at one half") {
    const std::vector<double> s{0.5, 0.5};
    const std::vector<std::uint8_t> m{1, 0};
    const LossValue v = global_loss(s, m, {});
    CHECK(std::abs(v.loss - 0.21) <= 1e-12);
    CHECK(v.d_similarity[0] == doctest::Approx(-0.35));
    CHECK(v.d_similarity[1] == doctest::Approx(0.35));
  }

  TEST_CASE("two pairs per class") {
    const std::vector<double> s{0.8, 0.6, 0.3, 0.1};
    const std::vector<std::uint8_t> m{1, 1, 0, 0};
    CHECK(std::abs(global_loss(s, m, {}).loss - 0.055) <= 1e-12);
  }

  TEST_CASE("random batches match the definition and central differences") {
    Rng rng(1);
    const LossConfig cfg;
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng.below(30);
      std::vector<double> s(n);
      std::vector<std::uint8_t> m(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform();
        m[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
      }
      m[0] = 1;
      m[1] = 0;
      const LossValue v = global_loss(s, m, cfg);
      CHECK(std::abs(v.loss - loss_oracle(s, m, cfg)) <= 1e-14);
      CHECK(v.loss >= 0.0);

      double pos = 0, neg = 0;
      int np = 0, nn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (m[i]) {
          pos += s[i];
          ++np;
        } else {
          neg += s[i];
          ++nn;
        }
      }
      // Quadratic away from the hinge, so a wide step has no truncation error.
      if (std::abs(pos / np - neg / nn - cfg.margin) < 1e-2) continue;
      ++checked;
      const double h = 1e-3;
      for (std::size_t i = 0; i < n; ++i) {
        auto up = s, down = s;
        up[i] += h;
        down[i] -= h;
        const double numeric = (loss_oracle(up, m, cfg) - loss_oracle(down, m, cfg)) / (2 * h);
        CHECK(rel_error(v.d_similarity[i], numeric) <= 1e-7);
      }
    }
    CHECK(checked > 100);
  }

  TEST_CASE("hinge boundary uses the inactive branch") {
    LossConfig cfg;
    cfg.margin = 0.5;
    const std::vector<double> s{0.75, 0.25};
    const std::vector<std::uint8_t> m{1, 0};
    const LossValue v = global_loss(s, m, cfg);
    CHECK(v.loss == 0.0);
    CHECK(v.d_similarity[0] == 0.0);
    CHECK(v.d_similarity[1] == 0.0);
  }

  TEST_CASE("permutation and constant shift leave the loss unchanged") {
    Rng rng(2);
    std::vector<double> s(12);
    std::vector<std::uint8_t> m(12);
    for (std::size_t i = 0; i < 12; ++i) {
      s[i] = rng.uniform(0.2, 0.7);
      m[i] = static_cast<std::uint8_t>(i % 3 == 0);
    }
    const double base = global_loss(s, m, {}).loss;
    std::vector<std::size_t> order(12);
    for (std::size_t i = 0; i < 12; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<double> ps;
    std::vector<std::uint8_t> pm;
    for (std::size_t i : order) {
      ps.push_back(s[i]);
      pm.push_back(m[i]);
    }
    CHECK(global_loss(ps, pm, {}).loss == doctest::Approx(base).epsilon(1e-14));
    for (double& x : s) x += 0.2;
    CHECK(global_loss(s, m, {}).loss == doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("a single pair class is an error") {
    const std::vector<double> s{0.4, 0.6};
    const std::vector<std::uint8_t> same{1, 1};
    CHECK_THROWS_AS(global_loss(s, same, {}), ValidationError);
    const std::vector<std::uint8_t> short_flags{1};
    CHECK_THROWS_AS(global_loss(s, short_flags, {}), ValidationError);
  }

  TEST_CASE("config ranges") {
    LossConfig c;
    CHECK_NOTHROW(c.validate());
    c.margin = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.margin = 1.0;
    CHECK_NOTHROW(c.validate());
    c.lambda_weight = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = LossConfig{};
    c.l2_coeff = -0.1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
  }
}

TEST_SUITE("l2_penalty") {
  TEST_CASE("hand values") {
    CHECK(l2_penalty(Vector::Zero(4), 0.005).penalty == 0.0);
    Vector w(2);
    w << 1, -1;
    const L2Value v = l2_penalty(w, 0.005);
    CHECK(v.penalty == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(v.gradient(0) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(v.gradient(1) == doctest::Approx(-0.01).epsilon(1e-15));
  }

  TEST_CASE("finite differences") {
    Rng rng(3);
    Vector w = siamgcn::testing::random_vector(9, rng);
    const L2Value v = l2_penalty(w, 0.005);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Vector up = w, down = w;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      const double numeric = (l2_penalty(up, 0.005).penalty - l2_penalty(down, 0.005).penalty) / 2e-6;
      CHECK(std::abs(v.gradient(i) - numeric) <= 1e-8);
    }
  }
}

TEST_SUITE("adam_step") {
  TEST_CASE("zero gradient leaves parameters unchanged") {
    std::vector<double> p{0.3, -1.2};
    const std::vector<double> g{0.0, 0.0};
    AdamState st;
    adam_step(p, g, st);
    CHECK(p[0] == 0.3);
    CHECK(p[1] == -1.2);
    CHECK(st.step == 1);
  }

  TEST_CASE("first step moves by about the learning rate") {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    AdamState st;
    adam_step(p, g, st);
    CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-6));
  }

  TEST_CASE("matches the update rule written out") {
    Rng rng(4);
    std::vector<double> p{0.5, -0.25, 2.0};
    std::vector<double> ref = p, m1(3, 0.0), m2(3, 0.0);
    AdamState st;
    for (int t = 1; t <= 25; ++t) {
      std::vector<double> g{rng.normal(), rng.normal(), rng.normal()};
      adam_step(p, g, st);
      for (int i = 0; i < 3; ++i) {
        m1[i] = 0.9 * m1[i] + 0.1 * g[i];
        m2[i] = 0.999 * m2[i] + 0.001 * g[i] * g[i];
        const double mh = m1[i] / (1 - std::pow(0.9, t));
        const double vh = m2[i] / (1 - std::pow(0.999, t));
        ref[i] -= 0.001 * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-14);
  }

  TEST_CASE("descends a parabola") {
    std::vector<double> x{1.0};
    AdamState st;
    st.learning_rate = 0.01;
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> g{2.0 * x[0]};
      adam_step(x, g, st);
    }
    CHECK(std::abs(x[0]) < 0.9);
  }

  TEST_CASE("shape changes are errors") {
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{1.0};
    AdamState st;
    CHECK_THROWS_AS(adam_step(p, g, st), ValidationError);
    const std::vector<double> g2{1.0, 1.0};
    adam_step(p, g2, st);
    std::vector<double> p3{1.0, 2.0, 3.0};
    const std::vector<double> g3{1.0, 1.0, 1.0};
    CHECK_THROWS_AS(adam_step(p3, g3, st), ValidationError);
  }
}
