#include <fstream>

#include "uadrs/eval/pipeline.hpp"

#include "uadrs/data/manifest.hpp"
#include "uadrs/nn/ops.hpp"

namespace uadrs::eval {

void append_result(const std::filesystem::path& csv, const ResultRow& row) {
  std::string text;
  if (std::filesystem::exists(csv)) {
    std::ifstream in(csv, std::ios::binary);
    if (!in) throw IoError("cannot read result table: " + csv.string());
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (text.empty()) text = csv_header();
  const std::string line = csv_row(row);
  if (text.find(line) != std::string::npos) return;
  text += line;
  data::atomic_write_text(csv, text);
}

MetricReport evaluate_pipeline(const victim::VictimModel& victim,
                               const data::LabeledBatch& batch,
                               const RunContext& ctx,
                               const std::filesystem::path& results_csv) {
  if (ctx.dataset.empty() || ctx.victim.empty())
    throw IntegrityError(
        "result row needs dataset and victim provenance, got dataset='" +
        ctx.dataset + "' victim='" + ctx.victim + "'");
  if (batch.images.n() < 1)
    throw InsufficientDataError("nothing to evaluate");
  if (batch.task != victim.task())
    throw CompatibilityError("batch task " + data::task_name(batch.task) +
                             " does not match victim task " +
                             data::task_name(victim.task()));
  if (batch.images.channels() != victim.in_channels() ||
      batch.images.height() != victim.image_size() ||
      batch.images.width() != victim.image_size())
    throw CompatibilityError(
        "batch geometry " + batch.images.pixels.shape_str() +
        " does not fit a victim built for " +
        std::to_string(victim.in_channels()) + "x" +
        std::to_string(victim.image_size()) + "x" +
        std::to_string(victim.image_size()));

  const std::vector<int32_t> preds =
      nn::argmax_classes(victim.forward_logits(batch.images.pixels));
  MetricReport report = score(preds, batch.labels, victim.n_classes());
  report.victim = ctx.victim;
  report.batch_source = ctx.attack + "+" + ctx.defense;

  ResultRow row;
  row.dataset = ctx.dataset;
  row.victim = ctx.victim;
  row.attack = ctx.attack;
  row.defense = ctx.defense;
  row.tm = ctx.tm;
  row.oa = report.oa;
  row.macro_f1 = report.macro_f1;
  row.n_units = report.n_units;
  row.seed = ctx.seed;
  append_result(results_csv, row);
  return report;
}

}  // namespace uadrs::eval
