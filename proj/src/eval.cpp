#include "pq4d/eval.hpp"

#include <stdexcept>

namespace pq {

std::string query_type_name(QueryType type) {
  switch (type) {
    case QueryType::kAttribute: return "attribute";
    case QueryType::kAction: return "action";
    case QueryType::kSpatial: return "spatial";
    case QueryType::kInteraction: return "interaction";
  }
  throw std::invalid_argument("unknown query type");
}

QueryType parse_query_type(const std::string& name) {
  for (QueryType type : kAllQueryTypes) {
    if (query_type_name(type) == name) return type;
  }
  throw std::invalid_argument("unknown query type: " + name);
}

void QueryRecord::validate() const {
  if (test_frames.empty()) throw std::invalid_argument("query has no test frames");
  if (predicted.size() != test_frames.size() || ground_truth.size() != test_frames.size()) {
    throw std::invalid_argument("query mask counts do not match test frame count");
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!predicted[i].same_size(ground_truth[i])) {
      throw std::invalid_argument("prediction/ground-truth dimensions differ");
    }
  }
}

double miou(const QueryRecord& record) {
  record.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < record.predicted.size(); ++i) {
    sum += mask_iou(record.predicted[i], record.ground_truth[i]);
  }
  return sum / static_cast<double>(record.predicted.size());
}

namespace {

bool frame_correct(const BinaryMask& pred, const BinaryMask& gt, double min_iou) {
  std::size_t intersection = 0;
  for (std::size_t p = 0; p < pred.values.size(); ++p) {
    intersection += pred.values[p] && gt.values[p];
  }
  if (intersection == 0) return false;
  return min_iou <= 0.0 || mask_iou(pred, gt) >= min_iou;
}

double query_accuracy(const QueryRecord& record, double min_iou) {
  record.validate();
  int correct = 0;
  for (std::size_t i = 0; i < record.predicted.size(); ++i) {
    correct += frame_correct(record.predicted[i], record.ground_truth[i], min_iou);
  }
  return static_cast<double>(correct) / static_cast<double>(record.predicted.size());
}

}  // namespace

double macc(const std::vector<QueryRecord>& records, double min_iou) {
  if (records.empty()) throw std::invalid_argument("macc needs at least one query");
  double sum = 0.0;
  for (const QueryRecord& record : records) sum += query_accuracy(record, min_iou);
  return sum / static_cast<double>(records.size());
}

MetricsTable aggregate_by_type(const std::vector<QueryRecord>& records, double min_iou) {
  MetricsTable table;
  auto fill = [&](TypeMetrics& row, const std::vector<const QueryRecord*>& group) {
    if (group.empty()) return;
    row.present = true;
    row.query_count = static_cast<int>(group.size());
    double iou_sum = 0.0, acc_sum = 0.0;
    for (const QueryRecord* record : group) {
      iou_sum += miou(*record);
      acc_sum += query_accuracy(*record, min_iou);
    }
    row.miou = iou_sum / static_cast<double>(group.size());
    row.macc = acc_sum / static_cast<double>(group.size());
  };

  std::array<std::vector<const QueryRecord*>, 4> groups;
  std::vector<const QueryRecord*> all;
  for (const QueryRecord& record : records) {
    groups[static_cast<std::size_t>(record.type)].push_back(&record);
    all.push_back(&record);
  }
  for (std::size_t k = 0; k < groups.size(); ++k) fill(table.per_type[k], groups[k]);
  fill(table.overall, all);
  return table;
}

}  // namespace pq
