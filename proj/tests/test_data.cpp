#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ipmtmle/data.hpp"
#include "ipmtmle/rng.hpp"
#include "test_helpers.hpp"

using namespace ipmtmle;
using test_helpers::write_temp;

TEST_CASE("median split for four values") {
  SizeGrid g = build_quantile_grid({1, 2, 3, 4}, 2);
  CHECK(g.n_classes == 2);
  CHECK(g.split_points.size() == 1);
  CHECK(g.split_points[0] == doctest::Approx(2.5));
  CHECK(g.discretize(1) == 1);
  CHECK(g.discretize(2) == 1);
  CHECK(g.discretize(3) == 2);
  CHECK(g.discretize(4) == 2);
}

TEST_CASE("zero-inflated sample gets a dedicated seedling class") {
  Rng rng(11);
  std::vector<double> values;
  for (int k = 0; k < 4000; ++k)
    values.push_back(rng.bernoulli(0.35) ? 0.0 : rng.beta(2, 2));
  SizeGrid g = build_quantile_grid(values, 100);
  CHECK(g.n_classes == 100);
  CHECK(g.has_seedling_class);
  CHECK(g.split_points[0] == 0.0);
  std::vector<int> count(g.n_classes, 0);
  for (double v : values) count[g.discretize(v) - 1] += 1;
  long zeros = std::count(values.begin(), values.end(), 0.0);
  CHECK(count[0] == zeros);
  int lo = count[1], hi = count[1];
  for (int c = 1; c < g.n_classes; ++c) {
    lo = std::min(lo, count[c]);
    hi = std::max(hi, count[c]);
  }
  CHECK(hi - lo <= 2);  // near-equal positive classes
}

TEST_CASE("uniform draws land 80..120 per class at n=1000, N=10") {
  int bad_runs = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    std::vector<double> values;
    for (int k = 0; k < 1000; ++k) values.push_back(rng.uniform());
    SizeGrid g = build_quantile_grid(values, 10);
    std::vector<int> count(10, 0);
    for (double v : values) count[g.discretize(v) - 1] += 1;
    bool ok = true;
    for (int c : count) ok = ok && c >= 80 && c <= 120;
    if (!ok) ++bad_runs;
  }
  CHECK(bad_runs <= 1);
}

TEST_CASE("distinct-valued samples give balanced classes") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> values;
    for (int k = 0; k < 500; ++k) values.push_back(rng.uniform());
    SizeGrid g = build_quantile_grid(values, 7);
    std::vector<int> count(g.n_classes, 0);
    for (double v : values) count[g.discretize(v) - 1] += 1;
    int lo = count[0], hi = count[0];
    for (int c : count) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("grid degenerate when fewer distinct values than classes") {
  CHECK_THROWS_WITH_AS(build_quantile_grid({1, 1, 1, 2}, 3), doctest::Contains("grid degenerate"),
                       Error);
}

TEST_CASE("discretize boundary and monotonicity") {
  SizeGrid g;
  g.n_classes = 2;
  g.split_points = {0.5};
  CHECK(g.discretize(0.7) == 2);
  CHECK(g.discretize(0.5) == 1);  // equal goes to the lower class
  SizeGrid s;
  s.n_classes = 3;
  s.has_seedling_class = true;
  s.split_points = {0.0, 0.5};
  CHECK(s.discretize(0.0) == 1);
  CHECK(s.discretize(1e-9) == 2);
  Rng rng(2);
  double prev = -1;
  int prev_class = 0;
  for (int k = 0; k <= 100; ++k) {
    double z = k / 100.0;
    int c = s.discretize(z);
    if (prev >= 0) {
      CHECK(z >= prev);
      CHECK(c >= prev_class);
    }
    prev = z;
    prev_class = c;
  }
  (void)rng;
}

namespace {

const char* kTableCsv =
    "id,z_t,s,z_next,y_1,y_2\n"
    "1,0.10,1,0.35,0,1\n"
    "2,0.20,1,0.60,2,1\n"
    "3,0.45,0,,1,1\n"
    "4,0.08,1,0.55,0,0\n"
    "5,0.62,1,0.90,1,0\n";

} // namespace

TEST_CASE("table-shaped csv reads into records") {
  std::string path = write_temp("table.csv", kTableCsv);
  SchemaConfig schema;
  schema.n_classes = 2;
  Dataset ds = read_dataset(path, schema);
  CHECK(ds.records.size() == 5);
  const auto& r3 = ds.records[2];
  CHECK(r3.survived == 0);
  CHECK(r3.z_next_class == 0);
  CHECK(r3.total_offspring() == 2);  // offspring retained for the dead individual
  CHECK_FALSE(ds.has_env());
}

TEST_CASE("csv error paths carry row numbers") {
  SchemaConfig schema;
  schema.n_classes = 2;
  std::string empty = write_temp("empty.csv", "id,z_t,s,z_next,y_1\n");
  CHECK_THROWS_WITH_AS(read_dataset(empty, schema), doctest::Contains("no records"), Error);

  std::string missing = write_temp("missing.csv", "id,z_t,z_next,y_1\n1,0.2,0.3,0\n");
  CHECK_THROWS_WITH_AS(read_dataset(missing, schema), doctest::Contains("missing required column"),
                       Error);

  std::string bads = write_temp("bads.csv",
                                "id,z_t,s,z_next,y_1\n1,0.2,1,0.3,0\n2,0.4,2,0.5,0\n");
  CHECK_THROWS_WITH_AS(read_dataset(bads, schema), doctest::Contains("row 3"), Error);

  std::string negy = write_temp("negy.csv",
                                "id,z_t,s,z_next,y_1\n1,0.2,1,0.3,0\n2,0.4,1,0.5,-2\n");
  CHECK_THROWS_WITH_AS(read_dataset(negy, schema), doctest::Contains("negative offspring"), Error);

  std::string nonext = write_temp("nonext.csv", "id,z_t,s,z_next,y_1\n1,0.2,1,,0\n2,0.4,0,,0\n");
  CHECK_THROWS_WITH_AS(read_dataset(nonext, schema), doctest::Contains("survivor missing"), Error);
}

TEST_CASE("all-zero offspring columns are a valid dataset") {
  std::string path = write_temp("zeroy.csv",
                                "id,z_t,s,z_next,y_1,y_2\n"
                                "1,0.1,1,0.2,0,0\n"
                                "2,0.5,1,0.6,0,0\n"
                                "3,0.9,0,,0,0\n");
  SchemaConfig schema;
  schema.n_classes = 2;
  Dataset ds = read_dataset(path, schema);
  for (const auto& r : ds.records) CHECK(r.total_offspring() == 0);
}

TEST_CASE("long-format offspring rows fold into parent counts") {
  std::string recruits = write_temp("recruits.csv",
                                    "parent_id,z,count\n"
                                    "1,0.05,2\n"
                                    "1,0.70,1\n"
                                    "2,0.05,1\n");
  std::string path = write_temp("long_main.csv",
                                "id,z_t,s,z_next\n"
                                "1,0.2,1,0.3\n"
                                "2,0.6,1,0.7\n"
                                "3,0.9,0,\n");
  SchemaConfig schema;
  schema.n_classes = 2;
  schema.offspring_long_file = recruits;
  Dataset ds = read_dataset(path, schema);
  CHECK(ds.records[0].total_offspring() == 3);
  CHECK(ds.records[0].offspring_in(ds.grid.discretize(0.05)) == 2);
  CHECK(ds.records[1].total_offspring() == 1);
  CHECK(ds.records[2].total_offspring() == 0);
}

TEST_CASE("round trip reproduces class columns bit-exactly") {
  std::string path = write_temp("round1.csv", kTableCsv);
  SchemaConfig schema;
  schema.n_classes = 2;
  Dataset ds = read_dataset(path, schema);
  std::string out1 = write_temp("round2.csv", "");
  write_dataset(out1, ds);

  SchemaConfig schema2;  // the written schema names
  schema2.n_classes = 2;
  Dataset ds2 = read_dataset(out1, schema2);
  std::string out2 = write_temp("round3.csv", "");
  write_dataset(out2, ds2);

  std::ifstream f1(out1), f2(out2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  for (std::size_t k = 0; k < ds.records.size(); ++k) {
    CHECK(ds.records[k].z_class == ds2.records[k].z_class);
    CHECK(ds.records[k].z_next_class == ds2.records[k].z_next_class);
  }
}

TEST_CASE("env labels must be all-or-none") {
  Dataset ds = test_helpers::make_dataset(2);
  ds.records.push_back(test_helpers::make_record(ds.grid, 1, 1, {}, "a"));
  ds.records.push_back(test_helpers::make_record(ds.grid, 2, 0));
  ds.env_levels = {"a"};
  CHECK_THROWS_AS(ds.validate(), Error);
}

TEST_CASE("canonical record order depends on content only") {
  Dataset ds = test_helpers::make_dataset(3);
  ds.records.push_back(test_helpers::make_record(ds.grid, 2, 1));
  ds.records.push_back(test_helpers::make_record(ds.grid, 1, 3, {{1, 2}}));
  ds.records.push_back(test_helpers::make_record(ds.grid, 3, 0));
  std::vector<std::size_t> all{0, 1, 2};
  auto order = canonical_record_order(ds.records, all);

  Dataset perm = ds;
  std::swap(perm.records[0], perm.records[2]);
  auto order2 = canonical_record_order(perm.records, all);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& a = ds.records[order[k]];
    const auto& b = perm.records[order2[k]];
    CHECK(a.z_class == b.z_class);
    CHECK(a.z_next_class == b.z_next_class);
  }
}
