#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairgraph/error.hpp"

namespace fairgraph {

// ΔSP = 100·|P(Ŷ=1 | s=1) − P(Ŷ=1 | s=0)|, empirical frequencies.
inline double statistical_disparity(const Eigen::VectorXi& predicted,
                                    const Eigen::VectorXi& s) {
  if (predicted.size() != s.size()) throw DimensionMismatch("predicted/s length mismatch");
  long pos[2] = {0, 0}, tot[2] = {0, 0};
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    ++tot[s[i]];
    pos[s[i]] += predicted[i];
  }
  if (tot[0] == 0 || tot[1] == 0)
    throw EmptyGroup("statistical_disparity needs both sensitive groups");
  return 100.0 * std::abs(static_cast<double>(pos[1]) / static_cast<double>(tot[1]) -
                          static_cast<double>(pos[0]) / static_cast<double>(tot[0]));
}

// ΔEO = 100·|P(Ŷ=1 | s=1, Y=1) − P(Ŷ=1 | s=0, Y=1)|.
inline double inequal_opportunity(const Eigen::VectorXi& predicted,
                                  const Eigen::VectorXi& labels,
                                  const Eigen::VectorXi& s) {
  if (predicted.size() != s.size() || labels.size() != s.size())
    throw DimensionMismatch("predicted/labels/s length mismatch");
  long tp[2] = {0, 0}, pos[2] = {0, 0};
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos[s[i]];
    tp[s[i]] += predicted[i];
  }
  if (pos[0] == 0 || pos[1] == 0)
    throw NoPositives("inequal_opportunity needs a positively labeled node in each group");
  return 100.0 * std::abs(static_cast<double>(tp[1]) / static_cast<double>(pos[1]) -
                          static_cast<double>(tp[0]) / static_cast<double>(pos[0]));
}

// Mann-Whitney AUC: (#{pos > neg} + 0.5·#{pos = neg}) / (n_pos·n_neg),
// counted exactly in integer arithmetic before the final division.
inline double auc_roc(const Eigen::VectorXd& logits, const Eigen::VectorXi& labels) {
  if (logits.size() != labels.size()) throw DimensionMismatch("logits/labels length mismatch");
  const Eigen::Index n = logits.size();
  long np = 0, nn = 0;
  for (Eigen::Index i = 0; i < n; ++i) (labels[i] == 1 ? np : nn)++;
  if (np == 0 || nn == 0) throw SingleClass("auc_roc needs both label classes");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return logits[a] < logits[b]; });

  long wins = 0, ties = 0, neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    long gp = 0, gn = 0;
    while (j < order.size() && logits[order[j]] == logits[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn)++;
      ++j;
    }
    wins += gp * neg_below;
    ties += gp * gn;
    neg_below += gn;
    i = j;
  }
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
         (static_cast<double>(np) * static_cast<double>(nn));
}

// F1 with predictions ŷ = [logit ≥ 0]; 0 when precision + recall is 0.
inline double f1_at_zero(const Eigen::VectorXd& logits, const Eigen::VectorXi& labels) {
  if (logits.size() != labels.size()) throw DimensionMismatch("logits/labels length mismatch");
  long np = 0, nn = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) (labels[i] == 1 ? np : nn)++;
  if (np == 0 || nn == 0) throw SingleClass("f1_at_zero needs both label classes");

  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const bool pred = logits[i] >= 0.0;
    if (pred && labels[i] == 1) ++tp;
    else if (pred && labels[i] == 0) ++fp;
    else if (!pred && labels[i] == 1) ++fn;
  }
  const double precision = (tp + fp == 0) ? 0.0 : static_cast<double>(tp) / (tp + fp);
  const double recall = (tp + fn == 0) ? 0.0 : static_cast<double>(tp) / (tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// Per-(s, Y) logit histograms normalized to unit area over a shared range.
struct LogitDensity {
  double lo = 0.0, hi = 0.0;
  int bins = 0;
  // density[s][y][b]; integral over the range is 1 for nonempty cells, 0 otherwise.
  std::array<std::array<std::vector<double>, 2>, 2> density;
  std::array<std::array<long, 2>, 2> cell_counts{};

  double bin_width() const { return (hi - lo) / bins; }

  std::string to_csv() const {
    std::ostringstream os;
    os << "bin_lo,bin_hi,s1_y1,s1_y0,s0_y1,s0_y0\n";
    const double w = bin_width();
    os.precision(17);
    for (int b = 0; b < bins; ++b)
      os << lo + b * w << ',' << lo + (b + 1) * w << ',' << density[1][1][b] << ','
         << density[1][0][b] << ',' << density[0][1][b] << ',' << density[0][0][b] << '\n';
    return os.str();
  }
};

inline LogitDensity logit_density_export(const Eigen::VectorXd& logits,
                                         const Eigen::VectorXi& labels,
                                         const Eigen::VectorXi& s, int bins) {
  if (bins < 2) throw ConfigError("logit_density_export needs bins >= 2");
  if (logits.size() != labels.size() || logits.size() != s.size())
    throw DimensionMismatch("logits/labels/s length mismatch");
  if (logits.size() == 0) throw Error("logit_density_export needs at least one logit");

  LogitDensity out;
  out.bins = bins;
  out.lo = logits.minCoeff();
  out.hi = logits.maxCoeff();
  if (out.hi <= out.lo) {
    out.lo -= 0.5;
    out.hi += 0.5;
  }
  for (auto& per_y : out.density)
    for (auto& cell : per_y) cell.assign(static_cast<std::size_t>(bins), 0.0);

  const double w = out.bin_width();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    int b = static_cast<int>((logits[i] - out.lo) / w);
    b = std::clamp(b, 0, bins - 1);
    out.density[s[i]][labels[i]][static_cast<std::size_t>(b)] += 1.0;
    ++out.cell_counts[s[i]][labels[i]];
  }
  for (int si = 0; si < 2; ++si)
    for (int yi = 0; yi < 2; ++yi) {
      const long c = out.cell_counts[si][yi];
      if (c == 0) continue;
      for (double& d : out.density[si][yi]) d /= c * w;
    }
  return out;
}

// One evaluation of a prediction set: accuracy + fairness metrics plus the
// (s, Ŷ) cell counts behind the disparity decomposition.
struct EvalReport {
  double auc = 0.0;
  double f1 = 0.0;
  double disparity = 0.0;
  double inequality = 0.0;
  double n_s1y1 = 0.0, n_s1y0 = 0.0, n_s0y1 = 0.0, n_s0y0 = 0.0;
  double runtime_seconds = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"auc", auc},
                          {"f1", f1},
                          {"disparity", disparity},
                          {"inequality", inequality},
                          {"n_s1y1", n_s1y1},
                          {"n_s1y0", n_s1y0},
                          {"n_s0y1", n_s0y1},
                          {"n_s0y0", n_s0y0},
                          {"runtime_seconds", runtime_seconds}};
  }

  static std::string csv_header() {
    return "auc,f1,disparity,inequality,n_s1y1,n_s1y0,n_s0y1,n_s0y0,runtime_seconds";
  }

  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << auc << ',' << f1 << ',' << disparity << ',' << inequality << ',' << n_s1y1 << ','
       << n_s1y0 << ',' << n_s0y1 << ',' << n_s0y0 << ',' << runtime_seconds;
    return os.str();
  }
};

inline EvalReport evaluate(const Eigen::VectorXd& logits, const Eigen::VectorXi& labels,
                           const Eigen::VectorXi& s, double runtime_seconds = 0.0) {
  EvalReport r;
  Eigen::VectorXi pred(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) pred[i] = logits[i] >= 0.0 ? 1 : 0;
  r.auc = auc_roc(logits, labels);
  r.f1 = f1_at_zero(logits, labels);
  r.disparity = statistical_disparity(pred, s);
  r.inequality = inequal_opportunity(pred, labels, s);
  long counts[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < logits.size(); ++i) ++counts[s[i]][pred[i]];
  r.n_s1y1 = static_cast<double>(counts[1][1]);
  r.n_s1y0 = static_cast<double>(counts[1][0]);
  r.n_s0y1 = static_cast<double>(counts[0][1]);
  r.n_s0y0 = static_cast<double>(counts[0][0]);
  r.runtime_seconds = runtime_seconds;
  return r;
}

// ΔSP recovered from the four (s, Ŷ) cell counts alone.
inline double disparity_from_counts(double n_s1y1, double n_s1y0, double n_s0y1,
                                    double n_s0y0) {
  if (n_s1y1 + n_s1y0 == 0.0 || n_s0y1 + n_s0y0 == 0.0)
    throw EmptyGroup("disparity_from_counts needs both sensitive groups");
  return 100.0 * std::abs(n_s1y1 / (n_s1y1 + n_s1y0) - n_s0y1 / (n_s0y1 + n_s0y0));
}

}  // namespace fairgraph
