#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ettag/catalog.hpp"

namespace ettag {

/// Set-based scores for one document. Empty-set conventions: precision is 1
/// when nothing was predicted, recall is 1 when the gold set is empty, and
/// F1 is 0 when precision + recall is 0.
struct DocScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

/// Scores from counts alone.
DocScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Both inputs must be sorted and unique.
DocScore prf1(std::span<const EntityId> pred, std::span<const EntityId> gold);

struct DatasetReport {
  std::vector<DocScore> per_doc;
  DocScore micro;
  /// Means of the per-document precision, recall and F1; counts are summed.
  DocScore macro;
  std::size_t n_docs = 0;
};

/// Throws EmptyDataset on an empty list.
DatasetReport aggregate(std::span<const DocScore> scores);

enum class Averaging { Micro, Macro };

/// Unweighted mean over datasets. Throws EmptyDataset on an empty list.
double cross_dataset_average(std::span<const double> values);

struct NamedReport {
  std::string name;
  DatasetReport report;
};

/// Mean F1 across datasets, using each dataset's micro or macro F1.
double cross_dataset_average(std::span<const NamedReport> reports,
                             Averaging averaging = Averaging::Micro);

enum class ReportStyle { Table2, Table4 };

ReportStyle parse_report_style(std::string_view s);

/// Fixed-width table, one column per dataset plus "Avg.", values in percent
/// with one decimal place. Table2 prints an F1 row; Table4 prints P and R
/// rows. A final row holds document counts.
std::string format_report(std::span<const NamedReport> reports, ReportStyle style,
                          Averaging averaging = Averaging::Micro);

}  // namespace ettag
