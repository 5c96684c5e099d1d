#pragma once

#include <array>
#include <string>
#include <vector>

#include "pq4d/geometry.hpp"

namespace pq {

enum class QueryType { kAttribute = 0, kAction = 1, kSpatial = 2, kInteraction = 3 };

inline constexpr std::array<QueryType, 4> kAllQueryTypes = {
    QueryType::kAttribute, QueryType::kAction, QueryType::kSpatial, QueryType::kInteraction};

std::string query_type_name(QueryType type);
QueryType parse_query_type(const std::string& name);

struct QueryRecord {
  std::string id;
  QueryType type = QueryType::kAttribute;
  std::vector<int> test_frames;
  std::vector<BinaryMask> predicted;
  std::vector<BinaryMask> ground_truth;

  void validate() const;
};

/// Mean per-frame IoU over the record's test frames.
double miou(const QueryRecord& record);

/// Fraction of test frames whose prediction overlaps ground truth (and, when
/// min_iou > 0, clears that IoU floor), averaged over queries.
double macc(const std::vector<QueryRecord>& records, double min_iou = 0.0);

struct TypeMetrics {
  bool present = false;
  int query_count = 0;
  double miou = 0.0;
  double macc = 0.0;
};

struct MetricsTable {
  std::array<TypeMetrics, 4> per_type;  // indexed by QueryType
  TypeMetrics overall;
};

MetricsTable aggregate_by_type(const std::vector<QueryRecord>& records, double min_iou = 0.0);

}  // namespace pq
