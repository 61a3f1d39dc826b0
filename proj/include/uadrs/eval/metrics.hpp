#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uadrs/core/error.hpp"

namespace uadrs::eval {

/// rows = ground truth, cols = prediction
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<int64_t> counts;  // C*C, row-major

  int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * n_classes + pred]; }
  int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * n_classes + pred]; }
  int64_t total() const;
  int64_t trace() const;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double oa = 0.0;
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
  int64_t n_units = 0;
  // provenance
  std::string victim;
  std::string batch_source;
};

double overall_accuracy(const std::vector<int32_t>& preds,
                        const std::vector<int32_t>& labels);

ConfusionMatrix confusion(const std::vector<int32_t>& preds,
                          const std::vector<int32_t>& labels, int n_classes);

/// Zero-denominator convention: empty classes score 0 (strict=false) or
/// raise a RangeError (strict=true). Macro-F1 averages over all C classes.
MetricReport per_class_f1(const ConfusionMatrix& cm, bool strict = false);

/// Full report = OA + per-class scores in one pass.
MetricReport score(const std::vector<int32_t>& preds,
                   const std::vector<int32_t>& labels, int n_classes,
                   bool strict = false);

/// One CSV row mirroring the paper's result-table layout.
struct ResultRow {
  std::string dataset;
  std::string victim;
  std::string attack;
  std::string defense;
  int tm = -1;  // -1 prints as empty
  double oa = 0.0;
  double macro_f1 = 0.0;
  int64_t n_units = 0;
  uint64_t seed = 0;
};

std::string csv_header();
std::string csv_row(const ResultRow& r);

/// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace uadrs::eval
