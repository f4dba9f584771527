#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "rankcorr/csv.hpp"
#include "rankcorr/dataset.hpp"
#include "rankcorr/weights.hpp"

using namespace rankcorr;

namespace {

CsvSchema numeric_schema() {
  CsvSchema s;
  s.cluster_col = "cl";
  s.x_col = "x";
  s.y_col = "y";
  return s;
}

}  // namespace

TEST_CASE("load_csv groups rows by cluster in first-appearance order") {
  std::istringstream in("cl,x,y\nA,1,2\nB,3,4\nA,5,6\n");
  const auto ds = load_csv(in, numeric_schema());
  REQUIRE(ds.n_clusters() == 2);
  REQUIRE(ds.n_total() == 3);
  REQUIRE(ds.cluster_ids()[0] == "A");
  REQUIRE(ds.cluster_size(0) == 2);
  REQUIRE(ds.cluster_size(1) == 1);
  REQUIRE(ds.x_in(0)[1] == 5.0);
  REQUIRE(ds.y_in(1)[0] == 4.0);
}

TEST_CASE("load_csv errors name the row and column") {
  std::istringstream bad("cl,x,y\nA,1,2\nA,abc,4\n");
  try {
    load_csv(bad, numeric_schema());
    FAIL("expected data_error");
  } catch (const data_error& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("abc") != std::string::npos);
    REQUIRE(msg.find("'x'") != std::string::npos);
    REQUIRE(msg.find("row 2") != std::string::npos);
  }

  std::istringstream missing("cl,x\nA,1\n");
  REQUIRE_THROWS_AS(load_csv(missing, numeric_schema()), data_error);

  std::istringstream empty("");
  REQUIRE_THROWS_AS(load_csv(empty, numeric_schema()), data_error);

  std::istringstream emptyval("cl,x,y\nA,,2\n");
  REQUIRE_THROWS_AS(load_csv(emptyval, numeric_schema()), data_error);
}

TEST_CASE("ordinal levels map to codes by declared order") {
  CsvSchema s = numeric_schema();
  s.x_spec.kind = ValueKind::Ordinal;
  s.x_spec.levels = {"low", "mid", "high"};
  std::istringstream in("cl,x,y\nA,mid,1\nA,low,2\nB,high,3\n");
  const auto ds = load_csv(in, s);
  REQUIRE(ds.x()[0] == 1.0);
  REQUIRE(ds.x()[1] == 0.0);
  REQUIRE(ds.x()[2] == 2.0);

  std::istringstream bad("cl,x,y\nA,huge,1\n");
  REQUIRE_THROWS_AS(load_csv(bad, s), data_error);
}

TEST_CASE("CSV round-trip preserves the dataset") {
  CsvSchema s = numeric_schema();
  s.y_spec.kind = ValueKind::Ordinal;
  s.y_spec.levels = {"a", "b", "c"};
  std::istringstream in("cl,x,y\nq 1,0.12345678901234567,b\nz,-3.5e-7,a\nq 1,4,c\n");
  const auto ds = load_csv(in, s);
  std::ostringstream out;
  save_csv(out, ds, s);
  std::istringstream back(out.str());
  const auto ds2 = load_csv(back, s);
  REQUIRE(ds2.cluster_ids() == ds.cluster_ids());
  REQUIRE(ds2.x() == ds.x());
  REQUIRE(ds2.y() == ds.y());
  REQUIRE(ds2.x_spec().kind == ds.x_spec().kind);
  REQUIRE(ds2.y_spec().levels == ds.y_spec().levels);
}

TEST_CASE("weight schemes") {
  std::istringstream in("cl,x,y\nA,1,1\nA,2,2\nB,3,3\n");
  const auto ds = load_csv(in, numeric_schema());

  const auto wc = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE(wc.w[0] == Catch::Approx(0.25).epsilon(0));
  REQUIRE(wc.w[1] == Catch::Approx(0.25).epsilon(0));
  REQUIRE(wc.w[2] == Catch::Approx(0.5).epsilon(0));
  REQUIRE(std::fabs(wc.total() - 1.0) < 1e-12);
  for (double cw : wc.cluster_w) REQUIRE(std::fabs(cw - 0.5) < 1e-12);

  const auto wo = compute_weights(ds, WeightScheme::EqualObservation);
  for (double v : wo.w) REQUIRE(v == Catch::Approx(1.0 / 3.0));
  REQUIRE(std::fabs(wo.total() - 1.0) < 1e-12);
}

TEST_CASE("dataset validation") {
  VariableSpec num;
  REQUIRE_THROWS_AS(
      ClusteredDataset({"A", "A"}, {0, 1, 2}, {1.0, 2.0}, {1.0, 2.0}, num, num),
      data_error);
  REQUIRE_THROWS_AS(ClusteredDataset({"A"}, {0, 1},
                                     {std::numeric_limits<double>::quiet_NaN()},
                                     {1.0}, num, num),
                    data_error);
  VariableSpec ord;
  ord.kind = ValueKind::Ordinal;
  ord.levels = {"a", "b"};
  REQUIRE_THROWS_AS(ClusteredDataset({"A"}, {0, 1}, {5.0}, {1.0}, ord, num),
                    data_error);
}
