#include <doctest.h>

#include <sstream>

#include "dcnn/metrics.hpp"
#include "dcnn/model.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/trainer.hpp"
#include "synth.hpp"

#include <nlohmann/json.hpp>

using dcnn::EvalReport;

TEST_CASE("metrics from a small worked confusion matrix") {
  // [[2,0],[1,1]]: recall (1, 1/2); precision (2/3, 1); f1 (0.8, 2/3)
  const EvalReport report = dcnn::report_from_confusion({{2, 0}, {1, 1}});
  CHECK(report.per_class[0].recall == doctest::Approx(1.0));
  CHECK(report.per_class[1].recall == doctest::Approx(0.5));
  CHECK(report.per_class[0].precision == doctest::Approx(2.0 / 3.0));
  CHECK(report.per_class[1].precision == doctest::Approx(1.0));
  CHECK(report.per_class[0].f1 == doctest::Approx(0.8));
  CHECK(report.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(report.accuracy == doctest::Approx(0.75));
  CHECK(report.total == 4);
  // weighted by support 2 and 2
  CHECK(report.weighted_f1 == doctest::Approx((2.0 * 0.8 + 2.0 * (2.0 / 3.0)) / 4.0));
}

TEST_CASE("perfect predictions score 1 everywhere") {
  const EvalReport report = dcnn::report_from_confusion({{3, 0, 0}, {0, 5, 0}, {0, 0, 2}});
  for (const dcnn::ClassMetrics& m : report.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(report.accuracy == 1.0);
  CHECK(report.weighted_f1 == 1.0);
  CHECK(report.macro_f1 == 1.0);
}

TEST_CASE("a class absent from truth and predictions is zeroed and excluded") {
  const EvalReport report = dcnn::report_from_confusion({{4, 0, 0}, {0, 4, 0}, {0, 0, 0}});
  CHECK(report.per_class[2].precision == 0.0);
  CHECK(report.per_class[2].recall == 0.0);
  CHECK(report.per_class[2].f1 == 0.0);
  CHECK(report.macro_f1 == doctest::Approx(1.0));     // two live classes only
  CHECK(report.weighted_f1 == doctest::Approx(1.0));  // support 0 carries no weight
  CHECK(report.accuracy == 1.0);
}

TEST_CASE("metric identities hold on random confusion matrices") {
  dcnn::Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::int64_t>> confusion(6, std::vector<std::int64_t>(6, 0));
    std::int64_t total = 0, diagonal = 0;
    for (auto& row : confusion)
      for (auto& cell : row) {
        cell = static_cast<std::int64_t>(rng.next_below(20));
        total += cell;
      }
    for (int k = 0; k < 6; ++k) diagonal += confusion[k][k];
    if (total == 0) continue;
    const EvalReport report = dcnn::report_from_confusion(confusion);
    CHECK(report.total == total);
    CHECK(report.accuracy ==
          doctest::Approx(static_cast<double>(diagonal) / static_cast<double>(total)));
    double weighted = 0.0;
    std::int64_t support = 0;
    for (const dcnn::ClassMetrics& m : report.per_class) {
      weighted += static_cast<double>(m.support) * m.f1;
      support += m.support;
    }
    CHECK(report.weighted_f1 == doctest::Approx(weighted / static_cast<double>(support)));
    for (const dcnn::ClassMetrics& m : report.per_class) {
      CHECK(m.precision >= 0.0);
      CHECK(m.precision <= 1.0);
      CHECK(m.recall >= 0.0);
      CHECK(m.recall <= 1.0);
      CHECK(m.f1 >= 0.0);
      CHECK(m.f1 <= 1.0);
    }
  }
}

TEST_CASE("plain report lists classes in the given order") {
  const EvalReport report =
      dcnn::report_from_confusion({{1, 0, 0, 0, 0, 0},
                                   {0, 1, 0, 0, 0, 0},
                                   {0, 0, 1, 0, 0, 0},
                                   {0, 0, 0, 1, 0, 0},
                                   {0, 0, 0, 0, 1, 0},
                                   {0, 0, 0, 0, 0, 1}});
  const std::string text =
      dcnn::format_report(report, dcnn::v1_labels().names, dcnn::ReportFormat::plain_table);
  const std::size_t walking = text.find("Walking");
  const std::size_t jogging = text.find("Jogging");
  const std::size_t upstairs = text.find("Upstairs");
  const std::size_t downstairs = text.find("Downstairs");
  const std::size_t sitting = text.find("Sitting");
  const std::size_t standing = text.find("Standing");
  REQUIRE(walking != std::string::npos);
  CHECK(walking < jogging);
  CHECK(jogging < upstairs);
  CHECK(upstairs < downstairs);
  CHECK(downstairs < sitting);
  CHECK(sitting < standing);
  CHECK(text.find("weighted_f1") != std::string::npos);

  const std::string v2 =
      dcnn::format_report(report, dcnn::v2_labels().names, dcnn::ReportFormat::plain_table);
  CHECK(v2.find("Stairs") != std::string::npos);
  CHECK(v2.find("LyingDown") != std::string::npos);
}

TEST_CASE("csv report round-trips through a parser") {
  const EvalReport report = dcnn::report_from_confusion({{7, 2}, {1, 9}});
  const std::string text =
      dcnn::format_report(report, {"Walking", "Jogging"}, dcnn::ReportFormat::csv);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "class,precision,recall,f1,support");
  for (int k = 0; k < 2; ++k) {
    REQUIRE(std::getline(lines, line));
    std::istringstream cells(line);
    std::string name, precision, recall, f1, support;
    std::getline(cells, name, ',');
    std::getline(cells, precision, ',');
    std::getline(cells, recall, ',');
    std::getline(cells, f1, ',');
    std::getline(cells, support, ',');
    CHECK(std::stod(precision) == report.per_class[static_cast<std::size_t>(k)].precision);
    CHECK(std::stod(recall) == report.per_class[static_cast<std::size_t>(k)].recall);
    CHECK(std::stod(f1) == report.per_class[static_cast<std::size_t>(k)].f1);
    CHECK(std::stoll(support) == report.per_class[static_cast<std::size_t>(k)].support);
  }
}

TEST_CASE("json lines report parses line by line") {
  const EvalReport report = dcnn::report_from_confusion({{7, 2}, {1, 9}});
  const std::string text =
      dcnn::format_report(report, {"Walking", "Jogging"}, dcnn::ReportFormat::json_lines);
  std::istringstream lines(text);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    const nlohmann::json parsed = nlohmann::json::parse(line);
    ++rows;
    if (parsed.contains("class")) CHECK(parsed.contains("f1"));
  }
  CHECK(rows == 3);  // two classes + aggregates
}

TEST_CASE("unknown format names are rejected") {
  CHECK_THROWS_AS(dcnn::parse_report_format("yaml"), dcnn::ConfigError);
  CHECK(dcnn::parse_report_format("plain") == dcnn::ReportFormat::plain_table);
  CHECK(dcnn::parse_report_format("csv") == dcnn::ReportFormat::csv);
  CHECK(dcnn::parse_report_format("jsonl") == dcnn::ReportFormat::json_lines);
}

TEST_CASE("evaluate fills a conserving confusion matrix and breaks ties low") {
  // zero parameters -> all-zero logits -> every tie resolves to class 0
  const dcnn::NetworkConfig cfg = synth::tiny_network(16, 4);
  dcnn::ModelParams params = dcnn::init_params(cfg, 1);
  for (dcnn::Tensor& w : params.weights) w.fill(0.0);
  dcnn::SegmentSet set = synth::segment_set(0, 40, 16, 4, 77);
  const EvalReport report = dcnn::evaluate(params, cfg, set.test);
  CHECK(report.total == 40);
  std::int64_t predicted_zero = 0;
  for (int k = 0; k < 4; ++k) predicted_zero += report.confusion[static_cast<std::size_t>(k)][0];
  CHECK(predicted_zero == 40);
  CHECK_THROWS_AS(dcnn::evaluate(params, cfg, {}), dcnn::ConfigError);
}
