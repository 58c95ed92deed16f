#include "ettag/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iterator>

#include "ettag/error.hpp"

namespace ettag {
namespace {

const DocScore& pick(const DatasetReport& r, Averaging a) {
  return a == Averaging::Micro ? r.micro : r.macro;
}

std::string cell(double fraction, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%*.1f", width, fraction * 100.0);
  return buf;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  if (out.size() < width) out.append(width - out.size(), ' ');
  return out;
}

}  // namespace

DocScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  DocScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

DocScore prf1(std::span<const EntityId> pred, std::span<const EntityId> gold) {
  std::size_t tp = 0;
  auto p = pred.begin();
  auto g = gold.begin();
  while (p != pred.end() && g != gold.end()) {
    if (*p < *g) {
      ++p;
    } else if (*g < *p) {
      ++g;
    } else {
      ++tp;
      ++p;
      ++g;
    }
  }
  return score_counts(tp, pred.size() - tp, gold.size() - tp);
}

DatasetReport aggregate(std::span<const DocScore> scores) {
  if (scores.empty()) throw Error(ErrorKind::EmptyDataset, "cannot aggregate zero documents");
  DatasetReport r;
  r.per_doc.assign(scores.begin(), scores.end());
  r.n_docs = scores.size();
  std::size_t tp = 0, fp = 0, fn = 0;
  double p = 0.0, rec = 0.0, f = 0.0;
  for (const auto& s : scores) {
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
    p += s.precision;
    rec += s.recall;
    f += s.f1;
  }
  r.micro = score_counts(tp, fp, fn);
  const double n = static_cast<double>(scores.size());
  r.macro = {tp, fp, fn, p / n, rec / n, f / n};
  return r;
}

double cross_dataset_average(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyDataset, "cannot average zero datasets");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double cross_dataset_average(std::span<const NamedReport> reports, Averaging averaging) {
  std::vector<double> f1;
  f1.reserve(reports.size());
  for (const auto& r : reports) f1.push_back(pick(r.report, averaging).f1);
  return cross_dataset_average(f1);
}

ReportStyle parse_report_style(std::string_view s) {
  if (s == "table2") return ReportStyle::Table2;
  if (s == "table4") return ReportStyle::Table4;
  throw Error(ErrorKind::InvalidArgument, "unknown report style: " + std::string(s));
}

std::string format_report(std::span<const NamedReport> reports, ReportStyle style,
                          Averaging averaging) {
  if (reports.empty()) throw Error(ErrorKind::EmptyDataset, "no datasets to report");
  const std::size_t label = 6;
  std::vector<std::size_t> widths;
  for (const auto& r : reports) widths.push_back(std::max<std::size_t>(7, r.name.size() + 2));
  const std::size_t avg_width = 7;

  std::string header = pad("", label);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    header += std::string(widths[i] - reports[i].name.size(), ' ') + reports[i].name;
  }
  header += std::string(avg_width - 4, ' ') + "Avg.";

  std::string out = header + '\n';
  out.append(header.size(), '-');
  out += '\n';

  auto row = [&](std::string_view name, double DocScore::*field) {
    std::vector<double> values;
    out += pad(name, label);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      values.push_back(pick(reports[i].report, averaging).*field);
      out += cell(values.back(), static_cast<int>(widths[i]));
    }
    out += cell(cross_dataset_average(values), static_cast<int>(avg_width)) + '\n';
  };
  if (style == ReportStyle::Table4) {
    row("P", &DocScore::precision);
    row("R", &DocScore::recall);
  } else {
    row("F1", &DocScore::f1);
  }
  out += pad("Docs", label);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string n = std::to_string(reports[i].report.n_docs);
    out += std::string(widths[i] > n.size() ? widths[i] - n.size() : 1, ' ') + n;
  }
  out += std::string(avg_width - 1, ' ') + "-\n";
  return out;
}

}  // namespace ettag
