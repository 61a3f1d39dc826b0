#include "uadrs/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace uadrs::eval {

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (int c = 0; c < n_classes; ++c) t += at(c, c);
  return t;
}

double overall_accuracy(const std::vector<int32_t>& preds,
                        const std::vector<int32_t>& labels) {
  if (preds.size() != labels.size())
    throw ShapeError("accuracy: prediction/label count mismatch");
  if (preds.empty()) throw RangeError("accuracy of an empty set is undefined");
  int64_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

ConfusionMatrix confusion(const std::vector<int32_t>& preds,
                          const std::vector<int32_t>& labels, int n_classes) {
  if (preds.size() != labels.size())
    throw ShapeError("confusion: prediction/label count mismatch");
  if (n_classes < 1) throw RangeError("confusion needs >= 1 class");
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(static_cast<size_t>(n_classes) * n_classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    const int32_t t = labels[i], p = preds[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw SchemaError("class index outside [0," + std::to_string(n_classes) +
                        ") at unit " + std::to_string(i));
    ++cm.at(t, p);
  }
  return cm;
}

MetricReport per_class_f1(const ConfusionMatrix& cm, bool strict) {
  const int C = cm.n_classes;
  MetricReport rep;
  rep.per_class.resize(static_cast<size_t>(C));
  rep.n_units = cm.total();
  rep.oa = rep.n_units > 0
               ? static_cast<double>(cm.trace()) / static_cast<double>(rep.n_units)
               : 0.0;
  double f1_sum = 0.0;
  for (int c = 0; c < C; ++c) {
    int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    ClassScores& s = rep.per_class[static_cast<size_t>(c)];
    if (tp + fp == 0) {
      if (strict)
        throw RangeError("precision undefined for class " + std::to_string(c));
      s.precision = 0.0;
    } else {
      s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
      if (strict)
        throw RangeError("recall undefined for class " + std::to_string(c));
      s.recall = 0.0;
    } else {
      s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    f1_sum += s.f1;
  }
  rep.macro_f1 = C > 0 ? f1_sum / C : 0.0;
  return rep;
}

MetricReport score(const std::vector<int32_t>& preds,
                   const std::vector<int32_t>& labels, int n_classes,
                   bool strict) {
  MetricReport rep = per_class_f1(confusion(preds, labels, n_classes), strict);
  rep.oa = overall_accuracy(preds, labels);  // same value, direct route
  return rep;
}

std::string csv_header() {
  return "dataset,victim,attack,defense,Tm,OA,macroF1,n_units,seed";
}

namespace {

// RFC-4180 quoting; attack specs legitimately contain commas.
std::string esc(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string csv_row(const ResultRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%lld,%llu", r.oa, r.macro_f1,
                static_cast<long long>(r.n_units),
                static_cast<unsigned long long>(r.seed));
  const std::string tm = r.tm >= 0 ? std::to_string(r.tm) : "";
  return esc(r.dataset) + "," + esc(r.victim) + "," + esc(r.attack) + "," +
         esc(r.defense) + "," + tm + "," + buf;
}

namespace {

// fractional (average) ranks, 1-based
std::vector<double> ranks_of(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("spearman needs equally long sequences");
  if (a.size() < 2)
    throw InsufficientDataError("spearman needs at least 2 points");
  const std::vector<double> ra = ranks_of(a), rb = ranks_of(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw NumericalError("spearman undefined for a constant sequence");
  return cov / std::sqrt(va * vb);
}

}  // namespace uadrs::eval
