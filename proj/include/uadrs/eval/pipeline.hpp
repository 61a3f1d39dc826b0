#pragma once

#include <filesystem>

#include "uadrs/data/dataset.hpp"
#include "uadrs/eval/metrics.hpp"
#include "uadrs/victim/victim.hpp"

namespace uadrs::eval {

/// Manifest fields a persisted result row is keyed by.
struct RunContext {
  std::string dataset;
  std::string victim;
  std::string attack = "none";
  std::string defense = "none";
  int tm = -1;  // noise level when a purifier ran, else -1
  uint64_t seed = 0;
};

/// Creates the table with the schema header when absent. A row already
/// present byte-for-byte is not appended again, so reruns are idempotent.
void append_result(const std::filesystem::path& csv, const ResultRow& row);

/// Scores the victim on the batch, appends one row to `results_csv`, and
/// returns the full report. Classification scores over samples,
/// segmentation over pooled pixels.
MetricReport evaluate_pipeline(const victim::VictimModel& victim,
                               const data::LabeledBatch& batch,
                               const RunContext& ctx,
                               const std::filesystem::path& results_csv);

/// The Table-3 delta: purified minus attacked.
inline double delta_oa(const MetricReport& purified,
                       const MetricReport& attacked) {
  return purified.oa - attacked.oa;
}

}  // namespace uadrs::eval
