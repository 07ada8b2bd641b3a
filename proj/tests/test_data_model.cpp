#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rbmchoice/data_model.hpp"
#include "support/oracles.hpp"

using namespace rbmchoice;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "rbmchoice_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

VariableCatalog six_modes() {
  VariableCatalog c;
  c.alternatives = {"Bus", "CarRental", "Car", "Plane", "TrainHotel", "Train"};
  c.reference = 5;
  c.alt_specific_vars = {"cost"};
  c.generic_vars = {"male"};
  return c;
}

std::string six_mode_header() {
  std::string h = "choice";
  for (const auto& a : six_modes().alternatives) h += ",av_" + a;
  for (const auto& a : six_modes().alternatives) h += ",cost_" + a;
  return h + ",male\n";
}

std::string six_mode_row(const std::string& choice, const std::string& av, const std::string& male) {
  return choice + "," + av + ",10,20,30,40,50,60," + male + "\n";
}

}  // namespace

TEST_CASE("load dataset") {
  SUBCASE("three valid rows") {
    const auto p = write_temp("three.csv", six_mode_header() + six_mode_row("Bus", "1,1,1,1,1,1", "1") +
                                               six_mode_row("5", "1,1,1,1,1,1", "0") +
                                               six_mode_row("Plane", "0,1,1,1,1,1", "1"));
    const auto ds = load_dataset(p, six_modes());
    CHECK(ds.size() == 3);
    CHECK(ds.catalog.alternatives == six_modes().alternatives);
    CHECK(ds.rows[0].choice == 0);
    CHECK(ds.rows[1].choice == 5);
    CHECK(ds.rows[2].choice == 3);
    CHECK(ds.rows[2].availability[0] == 0);
    CHECK(ds.rows[0].alt_attributes(3, 0) == 40.0);
    CHECK_FALSE(ds.has_indicators());
  }
  SUBCASE("an unavailable choice names its row") {
    const auto p = write_temp("unavail.csv", six_mode_header() + six_mode_row("Bus", "1,1,1,1,1,1", "1") +
                                                 six_mode_row("Bus", "0,1,1,1,1,1", "1") +
                                                 six_mode_row("Car", "1,1,1,1,1,1", "0"));
    try {
      load_dataset(p, six_modes());
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(e.row() == 2);
      CHECK(std::string(e.what()).find("Bus") != std::string::npos);
    }
  }
  SUBCASE("scale factors multiply the raw values") {
    const auto p = write_temp("scaled.csv", six_mode_header() + six_mode_row("Bus", "1,1,1,1,1,1", "1") +
                                                six_mode_row("Car", "1,1,1,1,1,1", "0"));
    LoadOptions opt;
    opt.scale_factors = {0.01};
    const auto ds = load_dataset(p, six_modes(), opt);
    CHECK(ds.rows[0].alt_attributes(0, 0) == doctest::Approx(0.10));
    CHECK(ds.rows[1].alt_attributes(5, 0) == doctest::Approx(0.60));
    CHECK(ds.scale_factors == std::vector<double>{0.01});
  }
  SUBCASE("missing file and missing columns") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/x.csv", six_modes()), DataError);
    const auto p = write_temp("nocol.csv", "choice,av_Bus\nBus,1\n");
    CHECK_THROWS_WITH_AS(load_dataset(p, six_modes()), doctest::Contains("missing column"), DataError);
  }
  SUBCASE("a generic value outside 0/1 is rejected with its row") {
    const auto p = write_temp("badgen.csv", six_mode_header() + six_mode_row("Bus", "1,1,1,1,1,1", "2"));
    try {
      load_dataset(p, six_modes());
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(e.row() == 1);
    }
  }
  SUBCASE("likert indicators, blanks for missing responses and binned columns") {
    VariableCatalog c;
    c.alternatives = {"a", "b"};
    c.reference = 1;
    c.generic_vars = {"young", "mid", "old"};
    c.indicator_vars = {{"safety_a", "a"}};
    const auto p = write_temp("likert.csv",
                              "choice,av_a,av_b,age,safety_a\n"
                              "a,1,1,22,2\n"
                              "b,1,1,30,5\n"
                              "b,1,1,70,\n");
    LoadOptions opt;
    opt.indicator_coding = IndicatorCoding::likert5;
    opt.binned = {{"age", {25, 45}, {"young", "mid", "old"}}};
    const auto ds = load_dataset(p, c, opt);
    REQUIRE(ds.rows[0].indicators);
    CHECK((*ds.rows[0].indicators)[0] == 1.0);
    CHECK((*ds.rows[1].indicators)[0] == 0.0);
    CHECK_FALSE(ds.rows[2].indicators);
    CHECK(ds.rows[0].generic == Eigen::Vector3d(1, 0, 0));
    CHECK(ds.rows[1].generic == Eigen::Vector3d(0, 1, 0));
    CHECK(ds.rows[2].generic == Eigen::Vector3d(0, 0, 1));
  }
}

TEST_CASE("write and reload round trip") {
  Rng rng(3);
  auto cat = oracle::catalog(4, 2, 3, 2);
  auto ds = oracle::random_dataset(cat, 25, rng, true);
  ds.rows[4].indicators.reset();
  std::ostringstream out;
  write_dataset(ds, out);
  const auto p = write_temp("roundtrip.csv", out.str());
  const auto back = load_dataset(p, cat);
  REQUIRE(back.size() == ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    CHECK(back.rows[n].choice == ds.rows[n].choice);
    CHECK(back.rows[n].availability == ds.rows[n].availability);
    CHECK(back.rows[n].alt_attributes == ds.rows[n].alt_attributes);
    CHECK(back.rows[n].generic == ds.rows[n].generic);
    CHECK(back.rows[n].indicators.has_value() == ds.rows[n].indicators.has_value());
  }
}

TEST_CASE("likert binarization") {
  CHECK(binarize_likert(1) == 1);
  CHECK(binarize_likert(3) == 1);
  CHECK(binarize_likert(4) == 0);
  CHECK(binarize_likert(5) == 0);
  CHECK(binarize_likert(5, true) == 1);
  CHECK_THROWS_AS(binarize_likert(0), std::out_of_range);
  CHECK_THROWS_AS(binarize_likert(6), std::out_of_range);
}

TEST_CASE("continuous categorization") {
  const std::vector<double> edges{25, 45};
  CHECK(categorize_continuous(30, edges) == std::vector<int>{0, 1, 0});
  CHECK(categorize_continuous(25, edges) == std::vector<int>{0, 1, 0});
  CHECK(categorize_continuous(70, edges) == std::vector<int>{0, 0, 1});
  CHECK(categorize_continuous(45, edges) == std::vector<int>{0, 0, 1});
  CHECK(categorize_continuous(3, edges) == std::vector<int>{1, 0, 0});
}

TEST_CASE("validation") {
  Rng rng(8);
  auto cat = oracle::catalog(3, 1, 2);
  auto ds = oracle::random_dataset(cat, 10, rng);
  for (std::size_t n = 0; n < 10; ++n) {
    ds.rows[n].choice = n % 3;
    ds.rows[n].availability = {1, 1, 1};
  }
  SUBCASE("clean data passes") {
    const auto d = validate(ds);
    CHECK(d.n_rows == 10);
    CHECK(d.ok());
    CHECK(d.warnings.empty());
    CHECK(d.choice_counts == std::vector<std::size_t>{4, 3, 3});
  }
  SUBCASE("a generic value of 2 fails with its row index") {
    ds.rows[6].generic[1] = 2.0;
    const auto d = validate(ds);
    CHECK_FALSE(d.ok());
    bool found = false;
    for (const auto& c : d.checks)
      if (!c.passed) found = found || c.failing_rows == std::vector<std::size_t>{6};
    CHECK(found);
    CHECK(format_diagnostics(d).find("FAIL") != std::string::npos);
  }
  SUBCASE("an alternative nobody picks is a warning") {
    ds.rows.resize(5);
    for (auto& r : ds.rows) r.choice = r.choice == 2 ? 0 : r.choice;
    const auto d = validate(ds);
    CHECK(d.ok());
    REQUIRE(d.warnings.size() == 1);
    CHECK(d.warnings[0].find("alt2") != std::string::npos);
    CHECK(d.choice_counts == std::vector<std::size_t>{3, 2, 0});
  }
}
