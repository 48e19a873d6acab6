#include "ipmtmle/data.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ipmtmle {

int SizeGrid::discretize(double z) const {
  // 1 + number of split points strictly below z; equal goes to the lower class.
  int lo = 0, hi = static_cast<int>(split_points.size());
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (split_points[mid] < z) lo = mid + 1; else hi = mid;
  }
  return 1 + lo;
}

double SizeGrid::class_lo(int c) const {
  if (c <= 1) return std::min(lo, split_points.empty() ? lo : split_points.front());
  return split_points[c - 2];
}

double SizeGrid::class_hi(int c) const {
  if (c >= n_classes) return std::max(hi, split_points.empty() ? hi : split_points.back());
  return split_points[c - 1];
}

double SizeGrid::representative(int c) const {
  if (has_seedling_class && c == 1) return 0.0;
  return 0.5 * (class_lo(c) + class_hi(c));
}

int discretize(double z, const SizeGrid& grid) { return grid.discretize(z); }

SizeGrid build_quantile_grid(const std::vector<double>& values, int n_classes) {
  if (values.empty()) throw data_error("build_quantile_grid: empty sample");
  if (n_classes < 2) throw data_error("build_quantile_grid: need at least 2 classes");

  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  std::set<double> distinct(sorted.begin(), sorted.end());
  if (static_cast<int>(distinct.size()) < n_classes)
    throw data_error("grid degenerate: fewer distinct values than classes");

  SizeGrid g;
  g.lo = sorted.front();
  g.hi = sorted.back();

  std::vector<double> splits;
  bool zeros = sorted.front() == 0.0 && sorted.back() > 0.0 &&
               std::count(sorted.begin(), sorted.end(), 0.0) > 0;
  if (zeros) {
    // Zero values form class 1; remaining splits are quantiles of the positives.
    std::vector<double> pos;
    for (double v : sorted)
      if (v > 0.0) pos.push_back(v);
    splits.push_back(0.0);
    int pos_classes = n_classes - 1;
    for (int k = 1; k < pos_classes; ++k)
      splits.push_back(quantile_sorted(pos, static_cast<double>(k) / pos_classes));
    g.has_seedling_class = true;
  } else {
    for (int k = 1; k < n_classes; ++k)
      splits.push_back(quantile_sorted(sorted, static_cast<double>(k) / n_classes));
  }

  // Collapse duplicates, then drop any split that would leave a class empty.
  std::sort(splits.begin(), splits.end());
  splits.erase(std::unique(splits.begin(), splits.end()), splits.end());
  bool changed = true;
  while (changed && !splits.empty()) {
    changed = false;
    std::vector<int> counts(splits.size() + 1, 0);
    for (double v : sorted) {
      int lo = 0, hi = static_cast<int>(splits.size());
      while (lo < hi) {
        int mid = (lo + hi) / 2;
        if (splits[mid] < v) lo = mid + 1; else hi = mid;
      }
      counts[lo]++;
    }
    for (std::size_t c = 0; c + 1 <= splits.size(); ++c) {
      if (counts[c] == 0) {
        splits.erase(splits.begin() + static_cast<long>(c));
        changed = true;
        break;
      }
    }
    if (!changed && counts.back() == 0) {
      splits.pop_back();
      changed = true;
    }
  }

  g.split_points = splits;
  g.n_classes = static_cast<int>(splits.size()) + 1;
  if (g.n_classes < 2) throw data_error("grid degenerate: all values identical");
  return g;
}

int IndividualRecord::offspring_in(int cls) const {
  for (const auto& [c, k] : offspring)
    if (c == cls) return k;
  return 0;
}

int IndividualRecord::total_offspring() const {
  int t = 0;
  for (const auto& [c, k] : offspring) t += k;
  return t;
}

void Dataset::validate() const {
  int n = grid.n_classes;
  bool any_env = false, all_env = true;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.z_class < 1 || r.z_class > n)
      throw data_error("record " + std::to_string(i + 1) + ": class out of range");
    if (r.z_next_class < 0 || r.z_next_class > n)
      throw data_error("record " + std::to_string(i + 1) + ": next class out of range");
    if ((r.survived == 0) != (r.z_next_class == 0))
      throw data_error("record " + std::to_string(i + 1) + ": survival/death class mismatch");
    for (const auto& [c, k] : r.offspring) {
      if (c < 1 || c > n || k < 0)
        throw data_error("record " + std::to_string(i + 1) + ": bad offspring entry");
    }
    if (!r.env_label.empty()) any_env = true; else all_env = false;
  }
  if (any_env && !all_env)
    throw data_error("environment label present for some records but not all");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw data_error("row " + std::to_string(row) + ": cannot parse '" + s +
                     "' in column " + col);
  }
}

} // namespace

Dataset read_dataset(const std::string& path, const SchemaConfig& schema) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw data_error("no records");
  auto cols = split_csv_line(header);
  for (auto& c : cols) c = trim(c);

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] == name) return static_cast<int>(k);
    return -1;
  };
  auto require_col = [&](const std::string& name) -> int {
    int k = find_col(name);
    if (k < 0) throw data_error("missing required column: " + name);
    return k;
  };

  int ci = require_col(schema.id_col);
  int cz = require_col(schema.z_col);
  int cs = require_col(schema.survival_col);
  int cn = require_col(schema.z_next_col);
  int ce = schema.env_col.empty() ? -1 : require_col(schema.env_col);
  std::vector<int> ccov;
  for (const auto& name : schema.covariate_cols) ccov.push_back(require_col(name));
  std::vector<std::pair<int, int>> ycols;  // (column index, class)
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const std::string& name = cols[k];
    if (name.rfind(schema.offspring_prefix, 0) == 0) {
      std::string tail = name.substr(schema.offspring_prefix.size());
      if (!tail.empty() && tail.find_first_not_of("0123456789") == std::string::npos)
        ycols.emplace_back(static_cast<int>(k), std::stoi(tail));
    }
  }

  struct RawRow {
    std::string id;
    double z;
    int s;
    bool has_next;
    double z_next;
    std::string env;
    std::vector<double> covs;
    std::vector<std::pair<int, int>> y;
  };
  std::vector<RawRow> raw;
  std::string line;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < cols.size()) f.resize(cols.size());
    RawRow r;
    r.id = trim(f[ci]);
    r.z = parse_double(trim(f[cz]), rowno, schema.z_col);
    std::string sv = trim(f[cs]);
    if (sv != "0" && sv != "1")
      throw data_error("row " + std::to_string(rowno) + ": non-binary " + schema.survival_col +
                       " value '" + sv + "'");
    r.s = sv == "1" ? 1 : 0;
    std::string zn = trim(f[cn]);
    r.has_next = !zn.empty();
    r.z_next = r.has_next ? parse_double(zn, rowno, schema.z_next_col) : 0.0;
    if (r.s == 1 && !r.has_next)
      throw data_error("row " + std::to_string(rowno) + ": survivor missing " + schema.z_next_col);
    if (ce >= 0) r.env = trim(f[ce]);
    for (int k : ccov) r.covs.push_back(parse_double(trim(f[k]), rowno, cols[k]));
    for (const auto& [k, cls] : ycols) {
      std::string yv = trim(f[k]);
      if (yv.empty()) yv = "0";
      double y = parse_double(yv, rowno, cols[k]);
      if (y < 0 || y != std::floor(y))
        throw data_error("row " + std::to_string(rowno) + ": negative offspring count in " + cols[k]);
      if (y > 0) r.y.emplace_back(cls, static_cast<int>(y));
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw data_error("no records");

  Dataset ds;
  if (!schema.grid_splits.empty()) {
    ds.grid.split_points = schema.grid_splits;
    ds.grid.n_classes = static_cast<int>(schema.grid_splits.size()) + 1;
    ds.grid.has_seedling_class = schema.grid_has_seedling;
    double lo = raw.front().z, hi = raw.front().z;
    for (const auto& r : raw) { lo = std::min(lo, r.z); hi = std::max(hi, r.z); }
    ds.grid.lo = lo;
    ds.grid.hi = hi;
  } else {
    std::vector<double> zs;
    zs.reserve(raw.size());
    for (const auto& r : raw) zs.push_back(r.z);
    ds.grid = build_quantile_grid(zs, schema.n_classes);
  }

  // Long-format recruits: one row per recruit with its parent's id.
  std::map<std::string, std::vector<std::pair<int, int>>> long_y;
  if (!schema.offspring_long_file.empty()) {
    std::ifstream lin(schema.offspring_long_file);
    if (!lin) throw data_error("cannot open " + schema.offspring_long_file);
    std::string lh;
    if (!std::getline(lin, lh)) throw data_error("no records in offspring file");
    auto lcols = split_csv_line(lh);
    for (auto& c : lcols) c = trim(c);
    int lp = -1, lz = -1, lc = -1;
    for (std::size_t k = 0; k < lcols.size(); ++k) {
      if (lcols[k] == "parent_id") lp = static_cast<int>(k);
      if (lcols[k] == "z") lz = static_cast<int>(k);
      if (lcols[k] == "count") lc = static_cast<int>(k);
    }
    if (lp < 0 || lz < 0)
      throw data_error("offspring file needs parent_id and z columns");
    std::size_t lrow = 1;
    while (std::getline(lin, line)) {
      ++lrow;
      if (trim(line).empty()) continue;
      auto f = split_csv_line(line);
      double z = parse_double(trim(f[lz]), lrow, "z");
      int count = 1;
      if (lc >= 0 && !trim(f[lc]).empty()) {
        double c = parse_double(trim(f[lc]), lrow, "count");
        if (c < 0 || c != std::floor(c))
          throw data_error("row " + std::to_string(lrow) + ": negative offspring count in count");
        count = static_cast<int>(c);
      }
      int cls = ds.grid.discretize(z);
      auto& vec = long_y[trim(f[lp])];
      bool found = false;
      for (auto& [c0, k0] : vec)
        if (c0 == cls) { k0 += count; found = true; break; }
      if (!found) vec.emplace_back(cls, count);
    }
  }

  std::set<std::string> envs;
  for (auto& r : raw) {
    IndividualRecord rec;
    rec.id = r.id;
    rec.z_continuous = r.z;
    rec.z_class = ds.grid.discretize(r.z);
    rec.survived = r.s;
    rec.z_next_continuous = r.has_next ? r.z_next : 0.0;
    rec.z_next_class = r.s == 1 ? ds.grid.discretize(r.z_next) : 0;
    rec.offspring = r.y;
    auto it = long_y.find(r.id);
    if (it != long_y.end()) {
      for (const auto& [cls, k] : it->second) {
        bool found = false;
        for (auto& [c0, k0] : rec.offspring)
          if (c0 == cls) { k0 += k; found = true; break; }
        if (!found) rec.offspring.emplace_back(cls, k);
      }
    }
    std::sort(rec.offspring.begin(), rec.offspring.end());
    rec.env_label = r.env;
    rec.covariates = r.covs;
    if (!r.env.empty()) envs.insert(r.env);
    ds.records.push_back(std::move(rec));
  }
  ds.env_levels.assign(envs.begin(), envs.end());
  ds.covariate_names = schema.covariate_cols;
  ds.validate();
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "id,z_t,z_class,s,z_next,z_next_class";
  for (int j = 1; j <= ds.grid.n_classes; ++j) out << ",y_" << j;
  if (ds.has_env()) out << ",env";
  for (const auto& c : ds.covariate_names) out << "," << c;
  out << "\n";
  for (const auto& r : ds.records) {
    out << r.id << "," << fmt(r.z_continuous) << "," << r.z_class << "," << r.survived << ",";
    if (r.survived) out << fmt(r.z_next_continuous);
    out << "," << r.z_next_class;
    for (int j = 1; j <= ds.grid.n_classes; ++j) out << "," << r.offspring_in(j);
    if (ds.has_env()) out << "," << r.env_label;
    for (double c : r.covariates) out << "," << fmt(c);
    out << "\n";
  }
}

std::vector<std::size_t> canonical_record_order(const std::vector<IndividualRecord>& records,
                                                const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> order(subset);
  auto key_less = [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    if (ra.env_label != rb.env_label) return ra.env_label < rb.env_label;
    if (ra.z_class != rb.z_class) return ra.z_class < rb.z_class;
    if (ra.survived != rb.survived) return ra.survived < rb.survived;
    if (ra.z_next_class != rb.z_next_class) return ra.z_next_class < rb.z_next_class;
    if (ra.z_continuous != rb.z_continuous) return ra.z_continuous < rb.z_continuous;
    if (ra.z_next_continuous != rb.z_next_continuous)
      return ra.z_next_continuous < rb.z_next_continuous;
    if (ra.offspring != rb.offspring) return ra.offspring < rb.offspring;
    if (ra.covariates != rb.covariates) return ra.covariates < rb.covariates;
    return ra.id < rb.id;
  };
  std::sort(order.begin(), order.end(), key_less);
  return order;
}

SchemaConfig SchemaConfig::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SchemaConfig s;
  if (j.contains("id_col")) s.id_col = j["id_col"].get<std::string>();
  if (j.contains("z_col")) s.z_col = j["z_col"].get<std::string>();
  if (j.contains("survival_col")) s.survival_col = j["survival_col"].get<std::string>();
  if (j.contains("z_next_col")) s.z_next_col = j["z_next_col"].get<std::string>();
  if (j.contains("offspring_prefix")) s.offspring_prefix = j["offspring_prefix"].get<std::string>();
  if (j.contains("env_col")) s.env_col = j["env_col"].get<std::string>();
  if (j.contains("covariate_cols")) s.covariate_cols = j["covariate_cols"].get<std::vector<std::string>>();
  if (j.contains("n_classes")) s.n_classes = j["n_classes"].get<int>();
  if (j.contains("grid_splits")) s.grid_splits = j["grid_splits"].get<std::vector<double>>();
  if (j.contains("grid_has_seedling")) s.grid_has_seedling = j["grid_has_seedling"].get<bool>();
  if (j.contains("offspring_long_file")) s.offspring_long_file = j["offspring_long_file"].get<std::string>();
  return s;
}

SchemaConfig SchemaConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

} // namespace ipmtmle
