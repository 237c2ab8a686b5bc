#include <doctest.h>

#include "contextgen/metrics.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace contextgen;

TEST_CASE("box IoU") {
  const BBox a{0, 0, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {4, 4, 2, 2}) == 0.0);
  CHECK(iou(a, {1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(iou_cells(a, {1, 1, 2, 2}) == std::pair<long long, long long>{1, 7});

  SUBCASE("symmetry and self-identity on random boxes") {
    Rng rng(55);
    for (int t = 0; t < 200; ++t) {
      const BBox x = testsupport::random_box(rng, 12, 12);
      const BBox y = testsupport::random_box(rng, 12, 12);
      CHECK(iou(x, y) == iou(y, x));
      CHECK(iou(x, x) == 1.0);
      CHECK(iou(x, y) >= 0.0);
      CHECK(iou(x, y) <= 1.0);
    }
  }
  SUBCASE("matches the rasterized cell-counting oracle exactly") {
    Rng rng(56);
    for (int t = 0; t < 300; ++t) {
      const BBox x = testsupport::random_box(rng, 10, 10);
      const BBox y = testsupport::random_box(rng, 10, 10);
      CHECK(iou_cells(x, y) == testsupport::raster_iou_cells(x, y));
    }
  }
}

TEST_CASE("mean IoU") {
  EvalCase perfect{"p", {{1, {0, 0, 2, 2}, {0, 0, 2, 2}}, {2, {3, 3, 2, 2}, {3, 3, 2, 2}}}};
  CHECK(miou(perfect) == 1.0);

  EvalCase half{"h", {{1, {0, 0, 2, 2}, {0, 0, 2, 2}}, {2, {0, 0, 2, 2}, {4, 4, 2, 2}}}};
  CHECK(miou(half) == 0.5);

  CHECK_THROWS_AS(miou(EvalCase{"empty", {}}), std::invalid_argument);

  SUBCASE("random cases equal the brute-force cell-level mean") {
    Rng rng(57);
    for (int t = 0; t < 60; ++t) {
      EvalCase c{"r", {}};
      const int n = rng.uniform_int(1, 5);
      for (int i = 1; i <= n; ++i)
        c.instances.push_back(
            {i, testsupport::random_box(rng, 9, 9), testsupport::random_box(rng, 9, 9)});
      double expect = 0.0;
      for (const EvalInstance& inst : c.instances) {
        const auto [inter, uni] = testsupport::raster_iou_cells(inst.target, inst.predicted);
        expect += uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
      }
      expect /= n;
      CHECK(miou(c) == expect);
    }
  }
}

namespace {

/// Independent reimplementation used to pin down the default threshold
/// semantics before trusting success_rates.
std::pair<double, double> naive_rates(const std::vector<EvalCase>& cases, double thr) {
  long long inst_ok = 0, inst_all = 0, case_ok = 0;
  for (const auto& c : cases) {
    bool all = true;
    for (const auto& i : c.instances) {
      const auto [inter, uni] = testsupport::raster_iou_cells(i.target, i.predicted);
      const double v = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
      ++inst_all;
      if (v >= thr)
        ++inst_ok;
      else
        all = false;
    }
    if (all) ++case_ok;
  }
  return {static_cast<double>(inst_ok) / static_cast<double>(inst_all),
          static_cast<double>(case_ok) / static_cast<double>(cases.size())};
}

std::vector<EvalCase> random_suite(Rng& rng, int cases, int instances_per_case) {
  std::vector<EvalCase> suite;
  for (int c = 0; c < cases; ++c) {
    EvalCase ec{std::to_string(c), {}};
    for (int i = 1; i <= instances_per_case; ++i) {
      const BBox target = testsupport::random_box(rng, 10, 10);
      // jittered prediction keeps IoU values spread across (0, 1]
      BBox pred = target;
      pred.x = std::min(std::max(0, pred.x + rng.uniform_int(-2, 2)), 10 - pred.w);
      pred.y = std::min(std::max(0, pred.y + rng.uniform_int(-2, 2)), 10 - pred.h);
      ec.instances.push_back({i, target, pred});
    }
    suite.push_back(std::move(ec));
  }
  return suite;
}

}  // namespace

TEST_CASE("success rates") {
  SUBCASE("all perfect") {
    std::vector<EvalCase> cases = {
        {"a", {{1, {0, 0, 2, 2}, {0, 0, 2, 2}}}},
        {"b", {{1, {1, 1, 3, 3}, {1, 1, 3, 3}}, {2, {0, 0, 1, 1}, {0, 0, 1, 1}}}}};
    const SuccessRates r = success_rates(cases);
    CHECK(r.instance_rate == 1.0);
    CHECK(r.case_rate == 1.0);
  }
  SUBCASE("mixed case at threshold 0.5") {
    // IoUs 0.6 (= 3/5) and 0.4 (= 2/5)
    std::vector<EvalCase> cases = {{"m",
                                    {{1, {0, 0, 4, 1}, {1, 0, 4, 1}},
                                     {2, {0, 0, 2, 1}, {0, 0, 5, 1}}}}};
    const auto ious = instance_ious(cases[0]);
    REQUIRE(ious[0] == 0.6);
    REQUIRE(ious[1] == 0.4);
    const SuccessRates r = success_rates(cases, 0.5);
    CHECK(r.instance_rate == 0.5);
    CHECK(r.case_rate == 0.0);
  }
  SUBCASE("instance successes at exactly the threshold count") {
    std::vector<EvalCase> cases = {{"t", {{1, {0, 0, 1, 2}, {0, 1, 1, 2}}}}};
    // IoU = 1/3; threshold 1/3 exactly -> success
    const SuccessRates r = success_rates(cases, 1.0 / 3.0);
    CHECK(r.instances_ok == 1);
  }
  SUBCASE("threshold must lie inside (0,1)") {
    std::vector<EvalCase> cases = {{"x", {{1, {0, 0, 1, 1}, {0, 0, 1, 1}}}}};
    CHECK_THROWS_AS(success_rates(cases, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(success_rates(cases, 1.0), std::invalid_argument);
  }
  SUBCASE("agrees with an independent reimplementation, default 0.5") {
    Rng rng(58);
    for (int t = 0; t < 20; ++t) {
      const auto suite = random_suite(rng, 8, rng.uniform_int(1, 4));
      const auto [isr, sr] = naive_rates(suite, 0.5);
      const SuccessRates r = success_rates(suite);
      CHECK(r.instance_rate == isr);
      CHECK(r.case_rate == sr);
    }
  }
  SUBCASE("SR never exceeds I-SR on level-style suites") {
    Rng rng(59);
    for (int t = 0; t < 40; ++t) {
      const int per_case = rng.uniform_int(1, 6);
      const auto suite = random_suite(rng, 10, per_case);
      const SuccessRates r = success_rates(suite, 0.5);
      CHECK(r.case_rate <= r.instance_rate);
    }
  }
}
