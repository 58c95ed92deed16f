#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "../support.hpp"
#include "ettag/error.hpp"
#include "ettag/metrics.hpp"

using namespace ettag;

namespace {

struct Table2Row {
  std::string label;
  std::vector<double> f1;
  double avg;
};

std::vector<Table2Row> load_table2() {
  std::ifstream in(ETTAG_FIXTURE_DIR "/table2.tsv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  std::vector<Table2Row> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string model, training, cell;
    std::getline(ss, model, '\t');
    std::getline(ss, training, '\t');
    std::vector<double> values;
    while (std::getline(ss, cell, '\t')) values.push_back(std::stod(cell));
    const double avg = values.back();
    values.pop_back();
    rows.push_back({model + " / " + training, values, avg});
  }
  return rows;
}

DatasetReport single(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::vector<DocScore> s = {score_counts(tp, fp, fn)};
  return aggregate(s);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("prf1 on small hand cases") {
    const std::vector<EntityId> none;
    auto s = prf1(std::vector<EntityId>{1, 2}, std::vector<EntityId>{2, 3});
    CHECK(s.tp == 1);
    CHECK(s.fp == 1);
    CHECK(s.fn == 1);
    CHECK(s.precision == 0.5);
    CHECK(s.recall == 0.5);
    CHECK(s.f1 == 0.5);

    s = prf1(none, none);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);

    s = prf1(none, std::vector<EntityId>{4});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f1 == 0.0);

    s = prf1(std::vector<EntityId>{4}, none);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 1.0);

    s = prf1(std::vector<EntityId>{1}, std::vector<EntityId>{2});
    CHECK(s.f1 == 0.0);
  }

  TEST_CASE("prf1 matches brute-force counting on 10k random pairs") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 10000; ++i) {
      const auto pred = testing::random_set(rng, 50, 80);
      const auto gold = testing::random_set(rng, 50, 80);
      const auto s = prf1(pred, gold);
      const auto c = testing::brute_counts(pred, gold);
      CHECK(s.tp == c.tp);
      CHECK(s.fp == c.fp);
      CHECK(s.fn == c.fn);
      const double p = pred.empty() ? 1.0 : double(c.tp) / double(c.tp + c.fp);
      const double r = gold.empty() ? 1.0 : double(c.tp) / double(c.tp + c.fn);
      const double f = p + r == 0.0 ? 0.0 : 2 * p * r / (p + r);
      CHECK(s.precision == p);
      CHECK(s.recall == r);
      CHECK(s.f1 == f);
    }
  }

  TEST_CASE("swapping prediction and gold swaps precision and recall") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
      const auto a = testing::random_set(rng, 20, 30);
      const auto b = testing::random_set(rng, 20, 30);
      const auto ab = prf1(a, b), ba = prf1(b, a);
      CHECK(ab.precision == ba.recall);
      CHECK(ab.recall == ba.precision);
      CHECK(ab.f1 == ba.f1);
      CHECK(ab.f1 <= std::max(ab.precision, ab.recall) + 1e-12);
      CHECK(ab.f1 >= 0.0);
      CHECK(ab.f1 <= 1.0);
    }
  }

  TEST_CASE("aggregate separates micro and macro") {
    const std::vector<DocScore> docs = {score_counts(1, 0, 0), score_counts(0, 1, 1)};
    const auto r = aggregate(docs);
    CHECK(r.n_docs == 2);
    CHECK(r.micro.precision == 0.5);
    CHECK(r.micro.recall == 0.5);
    CHECK(r.macro.precision == 0.5);
    CHECK(r.macro.f1 == 0.5);
    CHECK(r.micro.tp == 1);
    CHECK(r.micro.fp == 1);

    const auto one = single(2, 1, 3);
    CHECK(one.micro.f1 == one.macro.f1);
    CHECK(one.micro.precision == one.macro.precision);

    try {
      aggregate(std::vector<DocScore>{});
      FAIL("expected EmptyDataset");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyDataset);
    }
  }

  TEST_CASE("cross-dataset averages reproduce the Avg. column of the fixture") {
    const auto rows = load_table2();
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
      CAPTURE(row.label);
      CHECK(std::abs(cross_dataset_average(row.f1) - row.avg) <= 0.05);
    }
    const std::vector<double> same = {0.3, 0.3, 0.3};
    CHECK(cross_dataset_average(same) == doctest::Approx(0.3));
  }

  TEST_CASE("named reports average the chosen per-dataset F1") {
    std::vector<NamedReport> reports;
    reports.push_back({"A", aggregate(std::vector<DocScore>{score_counts(1, 0, 0), score_counts(0, 1, 1)})});
    reports.push_back({"B", single(1, 1, 0)});
    const double micro = (0.5 + 2.0 / 3.0) / 2.0;
    CHECK(cross_dataset_average(reports, Averaging::Micro) == doctest::Approx(micro));
    const double macro = ((1.0 + 0.0) / 2.0 + 2.0 / 3.0) / 2.0;
    CHECK(cross_dataset_average(reports, Averaging::Macro) == doctest::Approx(macro));
  }

  TEST_CASE("format_report lays datasets out as columns") {
    std::vector<NamedReport> reports;
    reports.push_back({"AIDA", single(1, 1, 0)});
    reports.push_back({"MSNBC", single(1, 0, 1)});
    const auto t2 = format_report(reports, ReportStyle::Table2);
    CHECK(t2.find("AIDA") < t2.find("MSNBC"));
    CHECK(t2.find("Avg.") != std::string::npos);
    CHECK(t2.find("F1") != std::string::npos);
    CHECK(t2.find("66.7") != std::string::npos);
    const auto t4 = format_report(reports, ReportStyle::Table4);
    CHECK(t4.find("\nP ") != std::string::npos);
    CHECK(t4.find("\nR ") != std::string::npos);
    CHECK(t4.find("50.0") != std::string::npos);
    CHECK(t4.find("100.0") != std::string::npos);
    CHECK(t4.find("75.0") != std::string::npos);
    // every row has the same width
    std::stringstream ss(t4);
    std::string line;
    std::size_t width = 0;
    while (std::getline(ss, line)) {
      if (width == 0) width = line.size();
      CHECK(line.size() == width);
    }
    CHECK(parse_report_style("table4") == ReportStyle::Table4);
    CHECK_THROWS_AS(parse_report_style("table9"), Error);
  }
}
