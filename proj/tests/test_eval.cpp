#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "pq4d/eval.hpp"
#include "pq4d/rng.hpp"

using namespace pq;

namespace {

BinaryMask mask_of(std::initializer_list<int> set_pixels, int size = 8) {
  BinaryMask m(size, size);
  for (int p : set_pixels) m.values[static_cast<std::size_t>(p)] = 1;
  return m;
}

QueryRecord record_of(std::vector<BinaryMask> pred, std::vector<BinaryMask> gt,
                      QueryType type = QueryType::kAttribute) {
  QueryRecord r;
  r.id = "q";
  r.type = type;
  for (int i = 0; i < static_cast<int>(pred.size()); ++i) r.test_frames.push_back(i);
  r.predicted = std::move(pred);
  r.ground_truth = std::move(gt);
  return r;
}

BinaryMask random_mask(Rng& rng, double density = 0.4, int size = 8) {
  BinaryMask m(size, size);
  for (auto& v : m.values) v = rng.bernoulli(density);
  return m;
}

}  // namespace

TEST_CASE("query type names round-trip") {
  for (QueryType t : kAllQueryTypes) {
    CHECK(parse_query_type(query_type_name(t)) == t);
  }
  CHECK(query_type_name(QueryType::kSpatial) == "spatial");
  CHECK_THROWS_AS(parse_query_type("color"), std::invalid_argument);
}

TEST_CASE("miou: exact match is 1, disjoint is 0") {
  const auto a = mask_of({0, 1, 2});
  const auto b = mask_of({10, 11});
  CHECK(miou(record_of({a, a}, {a, a})) == 1.0);
  CHECK(miou(record_of({a, a}, {b, b})) == 0.0);
}

TEST_CASE("miou: hand mean of per-frame IoUs") {
  // Frame 0: identical (IoU 1). Frame 1: {0,1} vs {1,2} -> 1/3.
  const auto same = mask_of({0, 1, 2});
  const QueryRecord r = record_of({same, mask_of({0, 1})}, {same, mask_of({1, 2})});
  CHECK(miou(r) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("miou: frame order invariance and self-evaluation") {
  Rng rng(5);
  std::vector<BinaryMask> pred, gt;
  for (int i = 0; i < 6; ++i) {
    pred.push_back(random_mask(rng));
    gt.push_back(random_mask(rng));
  }
  const double base = miou(record_of(pred, gt));
  std::vector<int> order = {5, 2, 0, 4, 1, 3};
  std::vector<BinaryMask> pred_p, gt_p;
  for (int i : order) {
    pred_p.push_back(pred[static_cast<std::size_t>(i)]);
    gt_p.push_back(gt[static_cast<std::size_t>(i)]);
  }
  CHECK(miou(record_of(pred_p, gt_p)) == doctest::Approx(base).epsilon(1e-12));
  CHECK(miou(record_of(pred, pred)) == 1.0);
  CHECK(base >= 0.0);
  CHECK(base <= 1.0);
}

TEST_CASE("miou/macc input validation") {
  QueryRecord empty;
  CHECK_THROWS_AS(miou(empty), std::invalid_argument);
  CHECK_THROWS_AS(macc({}), std::invalid_argument);

  QueryRecord bad = record_of({mask_of({0})}, {BinaryMask(4, 4)});
  CHECK_THROWS_AS(miou(bad), std::invalid_argument);

  QueryRecord misaligned = record_of({mask_of({0}), mask_of({1})}, {mask_of({0}), mask_of({1})});
  misaligned.test_frames.pop_back();
  CHECK_THROWS_AS(miou(misaligned), std::invalid_argument);
}

TEST_CASE("macc: trivial extremes") {
  const auto a = mask_of({0, 1, 2});
  const auto b = mask_of({20, 21});
  CHECK(macc({record_of({a, a, a}, {a, a, a})}) == 1.0);
  CHECK(macc({record_of({a, a}, {b, b})}) == 0.0);
}

TEST_CASE("macc: mean of per-query ratios") {
  const auto a = mask_of({0, 1, 2});
  const auto b = mask_of({20, 21});
  // Query 1: both frames intersect -> 1.0. Query 2: one of two -> 0.5.
  const QueryRecord q1 = record_of({a, a}, {a, a});
  const QueryRecord q2 = record_of({a, a}, {a, b});
  CHECK(macc({q1, q2}) == doctest::Approx(0.75).epsilon(1e-12));
  // Query order invariance.
  CHECK(macc({q2, q1}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("macc: any non-empty overlap counts at the default floor") {
  // One shared pixel out of many: IoU is tiny but the frame still counts.
  const auto pred = mask_of({0, 1, 2, 3, 4, 5, 6, 7});
  const auto gt = mask_of({7, 40, 41, 42});
  CHECK(macc({record_of({pred}, {gt})}) == 1.0);
  // A positive IoU floor can reject the same frame.
  CHECK(macc({record_of({pred}, {gt})}, 0.5) == 0.0);
  // Empty prediction and empty GT share no pixels, so the frame is incorrect.
  CHECK(macc({record_of({BinaryMask(8, 8)}, {BinaryMask(8, 8)})}) == 0.0);
}

TEST_CASE("macc equals a naive per-pixel double loop on random fixtures") {
  Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<QueryRecord> records;
    const int queries = 1 + static_cast<int>(rng.next_below(4));
    for (int q = 0; q < queries; ++q) {
      std::vector<BinaryMask> pred, gt;
      const int frames = 1 + static_cast<int>(rng.next_below(4));
      for (int f = 0; f < frames; ++f) {
        pred.push_back(random_mask(rng, 0.3));
        gt.push_back(random_mask(rng, 0.3));
      }
      records.push_back(record_of(std::move(pred), std::move(gt)));
    }

    double naive_sum = 0.0;
    for (const QueryRecord& r : records) {
      int correct = 0;
      for (std::size_t f = 0; f < r.predicted.size(); ++f) {
        bool hit = false;
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const std::size_t p = static_cast<std::size_t>(y * 8 + x);
            if (r.predicted[f].values[p] && r.ground_truth[f].values[p]) hit = true;
          }
        }
        correct += hit;
      }
      naive_sum += static_cast<double>(correct) / static_cast<double>(r.predicted.size());
    }
    const double naive = naive_sum / static_cast<double>(records.size());
    CHECK(macc(records) == naive);
    CHECK(macc(records) >= 0.0);
    CHECK(macc(records) <= 1.0);
  }
}

TEST_CASE("aggregate_by_type: single type populates one row") {
  const auto a = mask_of({0, 1});
  const MetricsTable table = aggregate_by_type({record_of({a}, {a}, QueryType::kAction)});
  CHECK(table.per_type[static_cast<int>(QueryType::kAction)].present);
  CHECK(table.per_type[static_cast<int>(QueryType::kAction)].miou == 1.0);
  CHECK(table.per_type[static_cast<int>(QueryType::kAction)].macc == 1.0);
  CHECK(table.per_type[static_cast<int>(QueryType::kAction)].query_count == 1);
  CHECK(!table.per_type[static_cast<int>(QueryType::kAttribute)].present);
  CHECK(!table.per_type[static_cast<int>(QueryType::kSpatial)].present);
  CHECK(!table.per_type[static_cast<int>(QueryType::kInteraction)].present);
  CHECK(table.overall.present);
  CHECK(table.overall.query_count == 1);
}

TEST_CASE("aggregate_by_type: hand-computed two-type table") {
  const auto a = mask_of({0, 1, 2});       // |a| = 3
  const auto b = mask_of({2, 3, 4});       // IoU(a,b) = 1/5
  const auto c = mask_of({40, 41});        // disjoint from a
  // attribute q1: frames IoU {1, 1/5} -> miou 0.6; both frames intersect -> acc 1.
  const QueryRecord q1 = record_of({a, a}, {a, b}, QueryType::kAttribute);
  // attribute q2: frames IoU {0} -> miou 0; no intersection -> acc 0.
  const QueryRecord q2 = record_of({a}, {c}, QueryType::kAttribute);
  // spatial q3: IoU {1/5, 1/5} -> miou 0.2; both intersect -> acc 1.
  const QueryRecord q3 = record_of({a, b}, {b, a}, QueryType::kSpatial);

  const MetricsTable table = aggregate_by_type({q1, q2, q3});
  const auto& attr = table.per_type[static_cast<int>(QueryType::kAttribute)];
  const auto& spat = table.per_type[static_cast<int>(QueryType::kSpatial)];
  CHECK(attr.present);
  CHECK(attr.query_count == 2);
  CHECK(attr.miou == doctest::Approx(0.3).epsilon(1e-12));   // (0.6 + 0) / 2
  CHECK(attr.macc == doctest::Approx(0.5).epsilon(1e-12));   // (1 + 0) / 2
  CHECK(spat.present);
  CHECK(spat.query_count == 1);
  CHECK(spat.miou == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(spat.macc == 1.0);
  CHECK(table.overall.query_count == 3);
  CHECK(table.overall.miou == doctest::Approx((0.6 + 0.0 + 0.2) / 3.0).epsilon(1e-12));
  CHECK(table.overall.macc == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("aggregate_by_type: record order invariance") {
  Rng rng(17);
  std::vector<QueryRecord> records;
  for (int q = 0; q < 8; ++q) {
    std::vector<BinaryMask> pred, gt;
    for (int f = 0; f < 3; ++f) {
      pred.push_back(random_mask(rng));
      gt.push_back(random_mask(rng));
    }
    records.push_back(
        record_of(std::move(pred), std::move(gt), kAllQueryTypes[rng.next_below(4)]));
  }
  const MetricsTable base = aggregate_by_type(records);
  std::vector<QueryRecord> shuffled = records;
  rng.shuffle(shuffled);
  const MetricsTable again = aggregate_by_type(shuffled);
  for (int k = 0; k < 4; ++k) {
    CHECK(base.per_type[k].present == again.per_type[k].present);
    CHECK(base.per_type[k].query_count == again.per_type[k].query_count);
    CHECK(base.per_type[k].miou == doctest::Approx(again.per_type[k].miou).epsilon(1e-12));
    CHECK(base.per_type[k].macc == doctest::Approx(again.per_type[k].macc).epsilon(1e-12));
  }
  CHECK(base.overall.miou == doctest::Approx(again.overall.miou).epsilon(1e-12));
  CHECK(base.overall.macc == doctest::Approx(again.overall.macc).epsilon(1e-12));
}
