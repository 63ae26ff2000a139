#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"

#include <nlohmann/json.hpp>

namespace dcnn {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;    // row sum: true instances
  std::int64_t predicted = 0;  // column sum
};

/// Confusion matrix (rows = true class, cols = predicted) plus the derived
/// per-class and aggregate rates. All 0/0 cases resolve to 0; classes absent
/// from both axes are excluded from the macro average and carry weight 0 in
/// the weighted F1.
struct EvalReport {
  std::vector<std::vector<std::int64_t>> confusion;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::int64_t total = 0;
};

inline EvalReport report_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
  const std::size_t classes = confusion.size();
  EvalReport report;
  report.confusion = std::move(confusion);
  report.per_class.resize(classes);

  std::int64_t diagonal = 0;
  double weighted_sum = 0.0, macro_sum = 0.0;
  std::int64_t support_total = 0, macro_classes = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    std::int64_t row = 0, col = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      row += report.confusion[k][j];
      col += report.confusion[j][k];
      report.total += report.confusion[k][j];
    }
    ClassMetrics& m = report.per_class[k];
    m.support = row;
    m.predicted = col;
    const std::int64_t hit = report.confusion[k][k];
    diagonal += hit;
    m.recall = row > 0 ? static_cast<double>(hit) / static_cast<double>(row) : 0.0;
    m.precision = col > 0 ? static_cast<double>(hit) / static_cast<double>(col) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
    weighted_sum += static_cast<double>(row) * m.f1;
    support_total += row;
    if (row > 0 || col > 0) {
      macro_sum += m.f1;
      ++macro_classes;
    }
  }
  report.accuracy = report.total > 0 ? static_cast<double>(diagonal) / static_cast<double>(report.total) : 0.0;
  report.weighted_f1 = support_total > 0 ? weighted_sum / static_cast<double>(support_total) : 0.0;
  report.macro_f1 = macro_classes > 0 ? macro_sum / static_cast<double>(macro_classes) : 0.0;
  return report;
}

enum class ReportFormat { plain_table, csv, json_lines };

inline ReportFormat parse_report_format(const std::string& name) {
  if (name == "plain" || name == "plain_table" || name == "table") return ReportFormat::plain_table;
  if (name == "csv") return ReportFormat::csv;
  if (name == "jsonl" || name == "json_lines" || name == "json") return ReportFormat::json_lines;
  throw ConfigError("unknown report format '" + name + "' (expected plain, csv or jsonl)");
}

/// Per-class table in label order plus aggregate rows.
inline std::string format_report(const EvalReport& report, const std::vector<std::string>& labels,
                                 ReportFormat format) {
  if (labels.size() != report.per_class.size())
    throw ConfigError("format_report: label count does not match report");
  std::ostringstream os;
  switch (format) {
    case ReportFormat::plain_table: {
      os << std::left << std::setw(12) << "class" << std::right << std::setw(10) << "precision"
         << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support"
         << '\n';
      os << std::fixed << std::setprecision(4);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        const ClassMetrics& m = report.per_class[k];
        os << std::left << std::setw(12) << labels[k] << std::right << std::setw(10) << m.precision
           << std::setw(10) << m.recall << std::setw(10) << m.f1 << std::setw(10) << m.support
           << '\n';
      }
      os << std::left << std::setw(12) << "accuracy" << std::right << std::setw(10)
         << report.accuracy << '\n';
      os << std::left << std::setw(12) << "weighted_f1" << std::right << std::setw(10)
         << report.weighted_f1 << '\n';
      os << std::left << std::setw(12) << "macro_f1" << std::right << std::setw(10)
         << report.macro_f1 << '\n';
      os << std::left << std::setw(12) << "evaluated" << std::right << std::setw(10) << report.total
         << '\n';
      break;
    }
    case ReportFormat::csv: {
      os << "class,precision,recall,f1,support\n";
      os << std::setprecision(17);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        const ClassMetrics& m = report.per_class[k];
        os << labels[k] << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ','
           << m.support << '\n';
      }
      os << "accuracy," << report.accuracy << ",,,\n";
      os << "weighted_f1," << report.weighted_f1 << ",,,\n";
      os << "macro_f1," << report.macro_f1 << ",,," << '\n';
      break;
    }
    case ReportFormat::json_lines: {
      for (std::size_t k = 0; k < labels.size(); ++k) {
        const ClassMetrics& m = report.per_class[k];
        nlohmann::json line{{"class", labels[k]},
                            {"precision", m.precision},
                            {"recall", m.recall},
                            {"f1", m.f1},
                            {"support", m.support}};
        os << line.dump() << '\n';
      }
      nlohmann::json aggregate{{"accuracy", report.accuracy},
                               {"weighted_f1", report.weighted_f1},
                               {"macro_f1", report.macro_f1},
                               {"evaluated", report.total}};
      os << aggregate.dump() << '\n';
      break;
    }
  }
  return os.str();
}

}  // namespace dcnn
