#ifndef IPMTMLE_DATA_HPP
#define IPMTMLE_DATA_HPP

#include <string>
#include <utility>
#include <vector>

#include "ipmtmle/common.hpp"

namespace ipmtmle {

// Quantile-based size discretization. Class c covers (split[c-2], split[c-1]]
// with open ends; a value equal to a split point goes to the lower class.
// When the sample contains exact zeros, 0 itself is the first split so the
// zero (seedling) values form class 1 on their own.
struct SizeGrid {
  int n_classes = 0;
  std::vector<double> split_points;  // strictly increasing, size n_classes-1
  bool has_seedling_class = false;
  double lo = 0.0;  // observed data range; used for class representatives
  double hi = 1.0;

  int discretize(double z) const;
  double class_lo(int c) const;   // 1-based class
  double class_hi(int c) const;
  double representative(int c) const;
};

SizeGrid build_quantile_grid(const std::vector<double>& values, int n_classes);
int discretize(double z, const SizeGrid& grid);

struct IndividualRecord {
  std::string id;
  double z_continuous = 0.0;   // in [0,1]; 0 = seedling
  int z_class = 0;             // 1..N
  int survived = 0;            // {0,1}
  double z_next_continuous = 0.0;  // meaningful iff survived
  int z_next_class = 0;        // 0..N; 0 iff died
  std::vector<std::pair<int, int>> offspring;  // (class, count), sorted by class
  std::string env_label;       // empty when the dataset has no environment column
  std::vector<double> covariates;

  int offspring_in(int cls) const;
  int total_offspring() const;
};

struct Dataset {
  std::vector<IndividualRecord> records;
  SizeGrid grid;
  std::vector<std::string> env_levels;    // distinct labels, sorted; empty if none
  std::vector<std::string> covariate_names;

  bool has_env() const { return !env_levels.empty(); }
  void validate() const;  // class ranges, survival/death consistency, env all-or-none
};

struct SchemaConfig {
  std::string id_col = "id";
  std::string z_col = "z_t";
  std::string survival_col = "s";
  std::string z_next_col = "z_next";
  std::string offspring_prefix = "y_";
  std::string env_col;                     // empty = no environment column
  std::vector<std::string> covariate_cols;
  int n_classes = 100;
  std::vector<double> grid_splits;         // optional explicit grid
  bool grid_has_seedling = false;
  std::string offspring_long_file;         // optional (parent_id, z[, count]) CSV

  static SchemaConfig from_json_text(const std::string& text);
  static SchemaConfig from_json_file(const std::string& path);
};

Dataset read_dataset(const std::string& path, const SchemaConfig& schema = {});
void write_dataset(const std::string& path, const Dataset& ds);

// Content-based ordering of record indices. Fitting code sorts each fold this
// way first, so every downstream reduction depends on the records as a
// multiset, not on their file order.
std::vector<std::size_t> canonical_record_order(const std::vector<IndividualRecord>& records,
                                                const std::vector<std::size_t>& subset);

} // namespace ipmtmle

#endif
