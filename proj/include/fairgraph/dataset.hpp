#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairgraph/config.hpp"
#include "fairgraph/error.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

enum class SimilarityKind { cosine, jaccard };

inline SimilarityKind similarity_from(const std::string& name) {
  if (name == "cosine") return SimilarityKind::cosine;
  if (name == "jaccard") return SimilarityKind::jaccard;
  throw ConfigError("unknown similarity kind: '" + name + "' (expected cosine or jaccard)");
}

inline std::string similarity_name(SimilarityKind kind) {
  return kind == SimilarityKind::cosine ? "cosine" : "jaccard";
}

// Description of an on-disk tabular dataset. The graph comes either from an
// explicit edge list or from attribute similarity, never both.
struct DatasetSpec {
  std::string name;
  std::string attribute_file;
  std::string edge_file;              // empty when absent
  double similarity_threshold = 0.0;  // 0 when absent; valid values lie in (0, 1]
  SimilarityKind similarity = SimilarityKind::cosine;
  std::string sensitive_column;
  std::string label_column;
  std::string ranking_column;  // empty when the dataset has no ranking variable
  // Raw cell value mapped to 1; empty selects the default rule
  // (most frequent value -> 0, everything else -> 1).
  std::string sensitive_protected_value;
  std::string label_positive_value;

  void validate() const {
    if (attribute_file.empty()) throw ConfigError("dataset spec: attribute_file is required");
    if (sensitive_column.empty()) throw ConfigError("dataset spec: sensitive_column is required");
    if (label_column.empty()) throw ConfigError("dataset spec: label_column is required");
    const bool has_edges = !edge_file.empty();
    const bool has_sim = similarity_threshold != 0.0;
    if (has_edges == has_sim)
      throw ConfigError(
          "dataset spec: exactly one of edge_file and similarity_threshold must be set");
    if (has_sim && (similarity_threshold <= 0.0 || similarity_threshold > 1.0))
      throw ConfigError("dataset spec: similarity_threshold must lie in (0, 1]");
    if (sensitive_column == label_column)
      throw ConfigError("dataset spec: sensitive_column and label_column must differ");
    if (!ranking_column.empty() && ranking_column == label_column)
      throw ConfigError("dataset spec: ranking_column cannot be the label column");
    if (!ranking_column.empty() && ranking_column == sensitive_column)
      throw ConfigError("dataset spec: ranking_column cannot be the sensitive column");
  }

  // Reads a `key = value` spec file. Relative data paths are resolved
  // against the spec file's directory.
  static DatasetSpec from_file(const std::string& path) {
    const KeyValueConfig cfg = KeyValueConfig::from_file(path);
    cfg.require_keys(
        {"name", "attribute_file", "edge_file", "similarity_threshold", "similarity",
         "sensitive_column", "label_column", "ranking_column", "sensitive_protected_value",
         "label_positive_value"},
        {"attribute_file", "sensitive_column", "label_column"});
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    const auto resolve = [&](const std::string& p) -> std::string {
      if (p.empty()) return p;
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    DatasetSpec spec;
    spec.name = cfg.get_string("name", std::filesystem::path(path).stem().string());
    spec.attribute_file = resolve(cfg.get_string("attribute_file"));
    spec.edge_file = resolve(cfg.get_string("edge_file", ""));
    spec.similarity_threshold = cfg.get_double("similarity_threshold", 0.0);
    spec.similarity = similarity_from(cfg.get_string("similarity", "cosine"));
    spec.sensitive_column = cfg.get_string("sensitive_column");
    spec.label_column = cfg.get_string("label_column");
    spec.ranking_column = cfg.get_string("ranking_column", "");
    spec.sensitive_protected_value = cfg.get_string("sensitive_protected_value", "");
    spec.label_positive_value = cfg.get_string("label_positive_value", "");
    spec.validate();
    return spec;
  }
};

namespace detail {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // rows[i] has header.size() cells
  std::vector<int> line_numbers;               // 1-based source line per row
};

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

inline Table read_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open attribute file: " + path);
  Table t;
  std::string line;
  int lineno = 0;
  char delim = ',';
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      t.header = split_line(line, delim);
      for (auto& h : t.header)
        if (h.empty())
          throw ParseError(path + ":" + std::to_string(lineno) + ": empty column name in header");
      continue;
    }
    auto cells = split_line(line, delim);
    if (cells.size() != t.header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (cells[c].empty())
        throw ParseError(path + ":" + std::to_string(lineno) + ": empty cell in column '" +
                         t.header[c] + "'");
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError(path + ": file is empty");
  if (t.rows.empty()) throw ParseError(path + ": no data rows");
  return t;
}

inline bool parse_number(const std::string& s, double* out) {
  std::size_t pos = 0;
  try {
    *out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

// Maps raw cell values of one column to {0, 1}. With an explicit positive
// value that value becomes 1; otherwise the most frequent value becomes 0
// (frequency ties broken toward the lexicographically smaller value).
inline Eigen::VectorXi binarize_column(const std::vector<std::string>& cells,
                                       const std::string& positive_value,
                                       const std::string& column, const std::string& path) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(cells.size()));
  if (!positive_value.empty()) {
    bool seen = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = cells[i] == positive_value ? 1 : 0;
      seen = seen || cells[i] == positive_value;
    }
    if (!seen)
      throw ConfigError(path + ": column '" + column + "' never takes the configured value '" +
                        positive_value + "'");
    return out;
  }
  std::map<std::string, int> counts;
  for (const auto& c : cells) ++counts[c];
  std::string zero_value = counts.begin()->first;
  int best = counts.begin()->second;
  for (const auto& [value, count] : counts)
    if (count > best) {
      best = count;
      zero_value = value;
    }
  for (std::size_t i = 0; i < cells.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = cells[i] == zero_value ? 0 : 1;
  return out;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Connects u and v when the similarity of their attribute rows exceeds the
// threshold (strictly). Cosine treats zero-norm rows as dissimilar to
// everything; jaccard compares the supports {j : x_j > 0}.
inline std::vector<std::pair<int, int>> build_similarity_graph(
    const Eigen::MatrixXd& rows, double threshold,
    SimilarityKind kind = SimilarityKind::cosine) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw ConfigError("similarity threshold must lie in (0, 1]");
  const int n = static_cast<int>(rows.rows());
  std::vector<std::pair<int, int>> edges;
  if (kind == SimilarityKind::cosine) {
    Eigen::VectorXd norms = rows.rowwise().norm();
    for (int u = 0; u < n; ++u) {
      if (norms[u] == 0.0) continue;
      for (int v = u + 1; v < n; ++v) {
        if (norms[v] == 0.0) continue;
        const double sim = rows.row(u).dot(rows.row(v)) / (norms[u] * norms[v]);
        if (sim > threshold) edges.emplace_back(u, v);
      }
    }
    return edges;
  }
  std::vector<std::vector<int>> support(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u)
    for (int j = 0; j < rows.cols(); ++j)
      if (rows(u, j) > 0.0) support[static_cast<std::size_t>(u)].push_back(j);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      const auto& a = support[static_cast<std::size_t>(u)];
      const auto& b = support[static_cast<std::size_t>(v)];
      std::size_t i = 0, j = 0, both = 0;
      while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) ++both, ++i, ++j;
        else if (a[i] < b[j]) ++i;
        else ++j;
      }
      const std::size_t either = a.size() + b.size() - both;
      if (either == 0) continue;
      const double sim = static_cast<double>(both) / static_cast<double>(either);
      if (sim > threshold) edges.emplace_back(u, v);
    }
  return edges;
}

namespace detail {

inline std::vector<std::pair<int, int>> read_edge_list(const std::string& path, int n) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open edge file: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    for (auto& ch : line)
      if (ch == ',' || ch == '\t' || ch == ';') ch = ' ';
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    long a = 0, b = 0;
    std::string extra;
    if (!(ss >> a >> b) || (ss >> extra))
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected two integer node ids");
    if (a < 0 || a >= n || b < 0 || b >= n)
      throw ParseError(path + ":" + std::to_string(lineno) + ": node id out of range [0, " +
                       std::to_string(n) + ")");
    edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  }
  return edges;
}

}  // namespace detail

// Reads the attribute table, binarizes the sensitive and label columns,
// one-hot encodes any non-numeric column, and attaches the graph from the
// edge file or from attribute similarity. The label column never appears in
// the attribute matrix; the sensitive column does (as its 0/1 encoding).
inline AttributedGraph load_dataset(const DatasetSpec& spec) {
  spec.validate();
  const detail::Table table = detail::read_table(spec.attribute_file);
  const int n = static_cast<int>(table.rows.size());
  const int num_cols = static_cast<int>(table.header.size());

  const auto find_column = [&](const std::string& name) {
    for (int c = 0; c < num_cols; ++c)
      if (table.header[static_cast<std::size_t>(c)] == name) return c;
    throw MissingColumn(spec.attribute_file + ": no column named '" + name + "'");
  };
  const int sensitive_col = find_column(spec.sensitive_column);
  const int label_col = find_column(spec.label_column);
  const int ranking_col = spec.ranking_column.empty() ? -1 : find_column(spec.ranking_column);

  const auto column_cells = [&](int c) {
    std::vector<std::string> cells(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      cells[static_cast<std::size_t>(i)] =
          table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return cells;
  };

  const Eigen::VectorXi sensitive =
      detail::binarize_column(column_cells(sensitive_col), spec.sensitive_protected_value,
                              spec.sensitive_column, spec.attribute_file);
  const Eigen::VectorXi labels =
      detail::binarize_column(column_cells(label_col), spec.label_positive_value,
                              spec.label_column, spec.attribute_file);

  // First pass: classify every remaining column as numeric or categorical.
  std::vector<bool> numeric(static_cast<std::size_t>(num_cols), true);
  for (int c = 0; c < num_cols; ++c) {
    if (c == sensitive_col || c == label_col) continue;
    for (int i = 0; i < n && numeric[static_cast<std::size_t>(c)]; ++i) {
      double v;
      if (!detail::parse_number(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], &v))
        numeric[static_cast<std::size_t>(c)] = false;
    }
    if (c == ranking_col && !numeric[static_cast<std::size_t>(c)]) {
      for (int i = 0; i < n; ++i) {
        double v;
        if (!detail::parse_number(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], &v))
          throw ParseError(spec.attribute_file + ":" +
                           std::to_string(table.line_numbers[static_cast<std::size_t>(i)]) +
                           ": ranking column '" + spec.ranking_column + "' is not numeric");
      }
    }
  }

  // Second pass: assemble the attribute layout in header order, expanding
  // categorical columns into one column per sorted distinct value.
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;
  int sensitive_index = -1, ranking_index = -1;
  for (int c = 0; c < num_cols; ++c) {
    const std::string& colname = table.header[static_cast<std::size_t>(c)];
    if (c == label_col) continue;
    if (c == sensitive_col) {
      sensitive_index = static_cast<int>(columns.size());
      columns.push_back(sensitive.cast<double>());
      names.push_back(colname);
      continue;
    }
    if (numeric[static_cast<std::size_t>(c)]) {
      Eigen::VectorXd col(n);
      for (int i = 0; i < n; ++i) {
        double v;
        detail::parse_number(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], &v);
        col[i] = v;
      }
      if (c == ranking_col) ranking_index = static_cast<int>(columns.size());
      columns.push_back(std::move(col));
      names.push_back(colname);
      continue;
    }
    std::set<std::string> distinct;
    for (int i = 0; i < n; ++i)
      distinct.insert(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
    for (const auto& value : distinct) {
      Eigen::VectorXd col(n);
      for (int i = 0; i < n; ++i)
        col[i] = table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] == value
                     ? 1.0
                     : 0.0;
      columns.push_back(std::move(col));
      names.push_back(colname + "=" + value);
    }
  }

  Eigen::MatrixXd attributes(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    attributes.col(static_cast<Eigen::Index>(j)) = columns[j];

  std::vector<std::pair<int, int>> edges;
  if (!spec.edge_file.empty()) {
    edges = detail::read_edge_list(spec.edge_file, n);
  } else {
    Eigen::MatrixXd sim_rows(n, attributes.cols() - 1);
    Eigen::Index out = 0;
    for (Eigen::Index j = 0; j < attributes.cols(); ++j)
      if (static_cast<int>(j) != sensitive_index) sim_rows.col(out++) = attributes.col(j);
    edges = build_similarity_graph(minmax_scale(sim_rows), spec.similarity_threshold,
                                   spec.similarity);
  }

  return AttributedGraph::build(n, edges, attributes, sensitive, labels, sensitive_index,
                                ranking_index, names);
}

// Writes <name>_attributes.csv, <name>_edges.csv and <name>.spec into `dir`
// so that load_dataset(DatasetSpec::from_file(<name>.spec)) reproduces the
// graph exactly. Returns the spec path. The written spec pins the 0/1
// encodings so a reload never re-derives them from value frequencies.
inline std::string save_dataset(const AttributedGraph& g, const std::string& dir,
                                const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string attr_name = name + "_attributes.csv";
  const std::string edge_name = name + "_edges.csv";
  const std::string spec_name = name + ".spec";

  {
    std::ofstream os(fs::path(dir) / attr_name);
    if (!os) throw ParseError("cannot write " + (fs::path(dir) / attr_name).string());
    const auto& names = g.attribute_names();
    for (std::size_t j = 0; j < names.size(); ++j) os << names[j] << ',';
    os << "label\n";
    for (int i = 0; i < g.num_nodes(); ++i) {
      for (Eigen::Index j = 0; j < g.attributes().cols(); ++j)
        os << detail::format_value(g.attributes()(i, j)) << ',';
      os << g.labels()[i] << '\n';
    }
  }
  {
    std::ofstream os(fs::path(dir) / edge_name);
    if (!os) throw ParseError("cannot write " + (fs::path(dir) / edge_name).string());
    for (const auto& [u, v] : g.edge_list()) os << u << ',' << v << '\n';
  }
  const std::string spec_path = (fs::path(dir) / spec_name).string();
  {
    std::ofstream os(spec_path);
    if (!os) throw ParseError("cannot write " + spec_path);
    os << "name = " << name << '\n';
    os << "attribute_file = " << attr_name << '\n';
    os << "edge_file = " << edge_name << '\n';
    os << "sensitive_column = " << g.attribute_names()[static_cast<std::size_t>(g.sensitive_index())]
       << '\n';
    os << "label_column = label\n";
    if (g.ranking_index() >= 0)
      os << "ranking_column = "
         << g.attribute_names()[static_cast<std::size_t>(g.ranking_index())] << '\n';
    os << "sensitive_protected_value = 1\n";
    os << "label_positive_value = 1\n";
  }
  return spec_path;
}

// Parameters of the two-group synthetic generator. Homophily values are the
// fraction of edges joining same-group (h_s) or same-label (h_l) endpoints.
struct SyntheticSpec {
  int n = 1000;
  double homophily_sensitive = 0.7;
  double homophily_label = 0.7;
  double protected_fraction = 0.3;
  double pos_rate_protected = 0.3;  // P(y=1 | s=1)
  double pos_rate_other = 0.5;      // P(y=1 | s=0)
  int dims = 8;                     // includes the sensitive and ranking columns
  double noise = 1.0;
  double label_signal = 1.0;        // additive shift of feature columns for y=1 nodes
  double avg_degree = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 8) throw ConfigError("synthetic spec: n must be at least 8");
    const auto open_unit = [](double v, const char* what) {
      if (!(v > 0.0 && v < 1.0))
        throw ConfigError(std::string("synthetic spec: ") + what + " must lie in (0, 1)");
    };
    open_unit(homophily_sensitive, "h_s");
    open_unit(homophily_label, "h_l");
    open_unit(protected_fraction, "protected_fraction");
    open_unit(pos_rate_protected, "pos_rate_protected");
    open_unit(pos_rate_other, "pos_rate_other");
    if (dims < 2) throw ConfigError("synthetic spec: dims must be at least 2");
    if (noise < 0.0) throw ConfigError("synthetic spec: noise must be non-negative");
    if (avg_degree <= 0.0) throw ConfigError("synthetic spec: avg_degree must be positive");
    if (avg_degree >= static_cast<double>(n) - 1.0)
      throw InfeasibleSpec("synthetic spec: avg_degree must be below n - 1");
  }

  static SyntheticSpec from_file(const std::string& path) {
    const KeyValueConfig cfg = KeyValueConfig::from_file(path);
    cfg.require_keys({"n", "h_s", "h_l", "protected_fraction", "pos_rate_protected",
                      "pos_rate_other", "dims", "noise", "label_signal", "avg_degree", "seed"},
                     {});
    SyntheticSpec s;
    s.n = static_cast<int>(cfg.get_int("n", s.n));
    s.homophily_sensitive = cfg.get_double("h_s", s.homophily_sensitive);
    s.homophily_label = cfg.get_double("h_l", s.homophily_label);
    s.protected_fraction = cfg.get_double("protected_fraction", s.protected_fraction);
    s.pos_rate_protected = cfg.get_double("pos_rate_protected", s.pos_rate_protected);
    s.pos_rate_other = cfg.get_double("pos_rate_other", s.pos_rate_other);
    s.dims = static_cast<int>(cfg.get_int("dims", s.dims));
    s.noise = cfg.get_double("noise", s.noise);
    s.label_signal = cfg.get_double("label_signal", s.label_signal);
    s.avg_degree = cfg.get_double("avg_degree", s.avg_degree);
    s.seed = cfg.get_u64("seed", s.seed);
    s.validate();
    return s;
  }
};

namespace detail {

using PairSet = std::set<std::pair<int, int>>;

inline std::pair<int, int> canonical_pair(int u, int v) {
  return u < v ? std::make_pair(u, v) : std::make_pair(v, u);
}

// Samples `want` distinct pairs with endpoints drawn from `a` and `b`
// (a == b means both endpoints from the same group). Enumerates the full
// pair space when it is small relative to the request, otherwise rejection
// sampling; `taken` carries pairs that are already edges.
inline void sample_pairs(const std::vector<int>& a, const std::vector<int>& b, bool same_group,
                         long long want, Rng& rng, PairSet& taken,
                         std::vector<std::pair<int, int>>& out) {
  if (want <= 0) return;
  const long long total =
      same_group ? static_cast<long long>(a.size()) * (static_cast<long long>(a.size()) - 1) / 2
                 : static_cast<long long>(a.size()) * static_cast<long long>(b.size());
  if (want > total) throw InfeasibleSpec("synthetic spec: more edges requested than pairs exist");
  if (3 * want >= total || total <= 4096) {
    std::vector<std::pair<int, int>> pool;
    pool.reserve(static_cast<std::size_t>(total));
    if (same_group) {
      for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j)
          pool.push_back(canonical_pair(a[i], a[j]));
    } else {
      for (int u : a)
        for (int v : b) pool.push_back(canonical_pair(u, v));
    }
    rng.shuffle(pool);
    long long added = 0;
    for (const auto& p : pool) {
      if (added == want) break;
      if (taken.insert(p).second) {
        out.push_back(p);
        ++added;
      }
    }
    if (added != want)
      throw InfeasibleSpec("synthetic spec: more edges requested than pairs exist");
    return;
  }
  long long added = 0;
  while (added < want) {
    int u, v;
    if (same_group) {
      u = a[rng.next_below(a.size())];
      v = a[rng.next_below(a.size())];
    } else {
      u = a[rng.next_below(a.size())];
      v = b[rng.next_below(b.size())];
    }
    if (u == v) continue;
    const auto p = canonical_pair(u, v);
    if (!taken.insert(p).second) continue;
    out.push_back(p);
    ++added;
  }
}

}  // namespace detail

// Two-group random graph with controlled group homophily, label homophily,
// per-group positive rates and group-informative attributes. Column 0 of the
// attribute matrix is the sensitive value, column 1 a label-correlated
// ranking score. Deterministic in the seed.
inline AttributedGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int n = spec.n;
  const int n1 = static_cast<int>(std::llround(spec.protected_fraction * n));
  const int n0 = n - n1;
  if (n1 < 2 || n0 < 2)
    throw InfeasibleSpec("synthetic spec: each group needs at least two nodes");

  // Random group assignment, then index lists per group.
  Eigen::VectorXi s(n);
  {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    s.setZero();
    for (int i = 0; i < n1; ++i) s[order[static_cast<std::size_t>(i)]] = 1;
  }
  std::vector<int> g1, g0;
  for (int i = 0; i < n; ++i) (s[i] == 1 ? g1 : g0).push_back(i);

  const long long m = std::llround(spec.avg_degree * n / 2.0);
  if (m < 1) throw InfeasibleSpec("synthetic spec: average degree yields no edges");
  long long m_intra = std::llround(spec.homophily_sensitive * static_cast<double>(m));
  m_intra = std::clamp(m_intra, 0LL, m);
  const long long m_inter = m - m_intra;
  const long long pairs1 = static_cast<long long>(n1) * (n1 - 1) / 2;
  const long long pairs0 = static_cast<long long>(n0) * (n0 - 1) / 2;
  const long long pairs_x = static_cast<long long>(n1) * n0;
  if (m_intra > pairs1 + pairs0 || m_inter > pairs_x)
    throw InfeasibleSpec("synthetic spec: requested homophily is unreachable given group sizes");
  long long m_i1 = std::llround(static_cast<double>(m_intra) * static_cast<double>(pairs1) /
                                static_cast<double>(pairs1 + pairs0));
  m_i1 = std::clamp(m_i1, std::max(0LL, m_intra - pairs0), std::min(m_intra, pairs1));

  detail::PairSet edge_set;
  std::vector<std::pair<int, int>> edges;
  detail::sample_pairs(g1, g1, true, m_i1, rng, edge_set, edges);
  detail::sample_pairs(g0, g0, true, m_intra - m_i1, rng, edge_set, edges);
  detail::sample_pairs(g1, g0, false, m_inter, rng, edge_set, edges);

  // Exact per-group positive counts, assigned to random members.
  const int pos1 = static_cast<int>(std::llround(spec.pos_rate_protected * n1));
  const int pos0 = static_cast<int>(std::llround(spec.pos_rate_other * n0));
  if (pos1 + pos0 == 0 || pos1 + pos0 == n)
    throw InfeasibleSpec("synthetic spec: a label class is empty");
  Eigen::VectorXi y(n);
  y.setZero();
  {
    std::vector<int> order1 = g1, order0 = g0;
    rng.shuffle(order1);
    rng.shuffle(order0);
    for (int i = 0; i < pos1; ++i) y[order1[static_cast<std::size_t>(i)]] = 1;
    for (int i = 0; i < pos0; ++i) y[order0[static_cast<std::size_t>(i)]] = 1;
  }

  // Label-homophily rewiring: swap an edge for a fresh pair of the same
  // group category (intra-1 / intra-0 / inter) whose label agreement moves
  // the same-label edge count toward the target. Group homophily and the
  // edge count are invariant under every swap.
  {
    const long long target_same = std::llround(spec.homophily_label * static_cast<double>(m));
    const auto same_label = [&](const std::pair<int, int>& e) { return y[e.first] == y[e.second]; };
    long long same_count = 0;
    for (const auto& e : edges) same_count += same_label(e) ? 1 : 0;
    long long delta = target_same - same_count;
    const auto try_replace = [&](std::size_t idx, bool want_same) {
      const auto old = edges[idx];
      const int cat = s[old.first] + s[old.second];
      const std::vector<int>& pa = cat == 0 ? g0 : g1;
      const std::vector<int>& pb = cat == 2 ? g1 : g0;
      for (int attempt = 0; attempt < 300; ++attempt) {
        const int u = pa[rng.next_below(pa.size())];
        const int v = pb[rng.next_below(pb.size())];
        if (u == v) continue;
        if ((y[u] == y[v]) != want_same) continue;
        const auto p = detail::canonical_pair(u, v);
        if (edge_set.count(p)) continue;
        edge_set.erase(old);
        edge_set.insert(p);
        edges[idx] = p;
        return true;
      }
      return false;
    };
    for (int pass = 0; pass < 40 && delta != 0; ++pass) {
      std::vector<std::size_t> order(edges.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      bool progressed = false;
      for (std::size_t idx : order) {
        if (delta == 0) break;
        const bool is_same = same_label(edges[idx]);
        if (delta > 0 && !is_same && try_replace(idx, true)) {
          --delta;
          ++same_count;
          progressed = true;
        } else if (delta < 0 && is_same && try_replace(idx, false)) {
          ++delta;
          --same_count;
          progressed = true;
        }
      }
      if (!progressed) break;
    }
    const double achieved = static_cast<double>(same_count) / static_cast<double>(m);
    if (std::abs(achieved - spec.homophily_label) > 0.045)
      throw InfeasibleSpec(
          "synthetic spec: label homophily is unreachable given the label distribution");
  }

  // Attributes: sensitive bit, label-correlated ranking score, then feature
  // columns with alternating-sign group means plus a label shift.
  Eigen::MatrixXd X(n, spec.dims);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(spec.dims));
  names.emplace_back("sensitive");
  names.emplace_back("ranking");
  for (int j = 2; j < spec.dims; ++j) names.push_back("f" + std::to_string(j));
  for (int i = 0; i < n; ++i) {
    X(i, 0) = s[i];
    X(i, 1) = static_cast<double>(y[i]) + spec.noise * rng.normal();
    for (int j = 2; j < spec.dims; ++j) {
      const double sign = j % 2 == 0 ? 1.0 : -1.0;
      X(i, j) = 0.5 * sign * (2.0 * s[i] - 1.0) + spec.label_signal * y[i] +
                spec.noise * rng.normal();
    }
  }

  return AttributedGraph::build(n, edges, X, s, y, 0, 1, names);
}

}  // namespace fairgraph
