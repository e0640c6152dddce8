#ifndef FUS_CORRELATION_HPP
#define FUS_CORRELATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/records.hpp"
#include "fus/stats.hpp"

namespace fus {

/// Symmetric unit-diagonal matrix of inter-item Pearson correlations.
struct CorrelationMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> labels;
  std::optional<long> n;  // sample size, when known

  int p() const { return static_cast<int>(values.rows()); }

  void validate() const {
    if (values.rows() != values.cols()) throw std::invalid_argument("correlation matrix not square");
    const int d = p();
    for (int i = 0; i < d; ++i) {
      if (std::abs(values(i, i) - 1.0) > 1e-12)
        throw std::invalid_argument("correlation matrix diagonal not 1 at " + label(i));
      for (int j = 0; j < d; ++j) {
        if (std::abs(values(i, j) - values(j, i)) > 1e-12)
          throw std::invalid_argument("correlation matrix not symmetric");
        if (values(i, j) < -1.0 - 1e-12 || values(i, j) > 1.0 + 1e-12)
          throw std::invalid_argument("correlation out of [-1,1]");
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(values, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8)
      throw std::invalid_argument("correlation matrix is not PSD within tolerance");
  }

  std::string label(int i) const {
    return i < static_cast<int>(labels.size()) ? labels[i] : "col" + std::to_string(i + 1);
  }

  /// Submatrix restricted to the given column indices (0-based), in order.
  CorrelationMatrix restrict(const std::vector<int>& idx) const {
    CorrelationMatrix out;
    out.n = n;
    out.values.resize(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      out.labels.push_back(label(idx[a]));
      for (std::size_t b = 0; b < idx.size(); ++b) out.values(a, b) = values(idx[a], idx[b]);
    }
    return out;
  }
};

/// Pearson product-moment correlation of two equally long samples.
inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("pearson: need two samples of equal length >= 3");
  const double n = static_cast<double>(x.size());
  Eigen::VectorXd xc = x.array() - x.mean();
  Eigen::VectorXd yc = y.array() - y.mean();
  double sx = xc.squaredNorm();
  double sy = yc.squaredNorm();
  if (sx <= 0.0 || sy <= 0.0) throw std::invalid_argument("pearson: zero-variance sample");
  (void)n;
  return xc.dot(yc) / std::sqrt(sx * sy);
}

inline CorrelationMatrix pearson_matrix(const Eigen::MatrixXd& data,
                                        const std::vector<std::string>& labels = {}) {
  const int p = static_cast<int>(data.cols());
  if (data.rows() < 3) throw std::invalid_argument("pearson_matrix: need n >= 3");
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  Eigen::VectorXd sd(p);
  for (int j = 0; j < p; ++j) {
    sd(j) = centered.col(j).norm();
    if (sd(j) <= 0.0) {
      std::string name = j < static_cast<int>(labels.size()) ? labels[j] : "i" + std::to_string(j + 1);
      throw std::invalid_argument("pearson_matrix: zero variance in item " + name);
    }
  }
  CorrelationMatrix R;
  R.labels = labels;
  R.n = static_cast<long>(data.rows());
  R.values = (centered.transpose() * centered).array() / (sd * sd.transpose()).array();
  // clean up round-off on the diagonal
  for (int j = 0; j < p; ++j) R.values(j, j) = 1.0;
  R.values = 0.5 * (R.values + R.values.transpose()).eval();
  return R;
}

inline CorrelationMatrix pearson_matrix(const RatingMatrix& m) {
  return pearson_matrix(m.values, m.item_ids);
}

struct ItemTotalEntry {
  std::string item;
  double raw_r = 0.0;        // item vs total including the item
  double corrected_r = 0.0;  // item vs total excluding the item
};

struct ItemTotalReport {
  std::vector<ItemTotalEntry> items;
};

inline ItemTotalReport item_total_correlations(const Eigen::MatrixXd& data,
                                               const std::vector<std::string>& labels = {}) {
  const int p = static_cast<int>(data.cols());
  if (p < 2) throw std::invalid_argument("item_total_correlations: need p >= 2");
  Eigen::VectorXd total = data.rowwise().sum();
  ItemTotalReport rep;
  for (int j = 0; j < p; ++j) {
    ItemTotalEntry e;
    e.item = j < static_cast<int>(labels.size()) ? labels[j] : "i" + std::to_string(j + 1);
    e.raw_r = pearson(data.col(j), total);
    e.corrected_r = pearson(data.col(j), total - data.col(j));
    rep.items.push_back(e);
  }
  return rep;
}

inline ItemTotalReport item_total_correlations(const RatingMatrix& m) {
  return item_total_correlations(m.values, m.item_ids);
}

/// Items whose corrected item-total correlation falls below the threshold.
/// Flags only; removal is a human or config decision.
inline std::vector<std::string> flag_low_correlation_items(const ItemTotalReport& rep,
                                                           double threshold = 0.30) {
  std::vector<std::string> out;
  for (const auto& e : rep.items)
    if (e.corrected_r < threshold) out.push_back(e.item);
  return out;
}

namespace detail {

/// log determinant via Cholesky; throws if the matrix is not PD.
inline double logdet_pd(const Eigen::MatrixXd& M, const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(context + ": determinant nonpositive");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

struct BartlettResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
};

/// Bartlett's test of sphericity:
///   chi2 = -(n - 1 - (2p+5)/6) * ln|R|,  df = p(p-1)/2.
inline BartlettResult bartlett_test(const CorrelationMatrix& R, long n) {
  const int p = R.p();
  if (n <= p) throw std::invalid_argument("bartlett_test: need n > p");
  double logdet = detail::logdet_pd(R.values, "bartlett_test");
  BartlettResult res;
  res.chi2 = -(static_cast<double>(n) - 1.0 - (2.0 * p + 5.0) / 6.0) * logdet;
  if (res.chi2 < 0.0) res.chi2 = 0.0;
  res.df = p * (p - 1) / 2;
  res.p = chi_square_sf(res.chi2, res.df);
  return res;
}

struct KmoResult {
  double overall = 0.0;
  std::vector<double> per_item;  // MSA per item
};

/// Kaiser-Meyer-Olkin sampling adequacy from anti-image partial correlations.
inline KmoResult kmo(const CorrelationMatrix& R) {
  const int p = R.p();
  Eigen::LLT<Eigen::MatrixXd> llt(R.values);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("kmo: correlation matrix is singular");
  Eigen::MatrixXd Q = llt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd d = Q.diagonal().array().sqrt();
  Eigen::MatrixXd A = -Q.array() / (d * d.transpose()).array();

  double sum_r2 = 0.0, sum_a2 = 0.0;
  std::vector<double> r2_row(p, 0.0), a2_row(p, 0.0);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      double r2 = R.values(i, j) * R.values(i, j);
      double a2 = A(i, j) * A(i, j);
      sum_r2 += r2;
      sum_a2 += a2;
      r2_row[i] += r2;
      a2_row[i] += a2;
    }
  KmoResult res;
  double denom = sum_r2 + sum_a2;
  if (denom <= 0.0) throw std::runtime_error("kmo: undefined for a diagonal correlation matrix");
  res.overall = sum_r2 / denom;
  for (int i = 0; i < p; ++i) {
    double di = r2_row[i] + a2_row[i];
    res.per_item.push_back(di > 0.0 ? r2_row[i] / di : 0.0);
  }
  return res;
}

struct FactorabilityReport {
  BartlettResult bartlett;
  double kmo_overall = 0.0;
  std::vector<double> kmo_per_item;
  std::vector<std::string> low_correlation_items;
};

inline void to_json(nlohmann::json& j, const FactorabilityReport& r) {
  j = {{"bartlett_chi2", r.bartlett.chi2},
       {"bartlett_df", r.bartlett.df},
       {"bartlett_p", r.bartlett.p},
       {"bartlett_p_display", format_p(r.bartlett.p)},
       {"kmo_overall", r.kmo_overall},
       {"kmo_per_item", r.kmo_per_item},
       {"low_correlation_items", r.low_correlation_items}};
}

/// Loads a square correlation matrix CSV with an item-id header row and
/// column. Published matrices are rounded to 2 dp, so asymmetry up to 5e-3 is
/// tolerated and resolved by averaging.
inline CorrelationMatrix load_correlation_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open correlation file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty correlation file: " + path);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw std::runtime_error("correlation header too short: " + path);

  CorrelationMatrix R;
  for (std::size_t c = 1; c < header.size(); ++c) R.labels.push_back(detail::trim(header[c]));
  const int p = static_cast<int>(R.labels.size());
  R.values.resize(p, p);

  int row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    if (row >= p) throw std::runtime_error("too many rows in correlation file: " + path);
    auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != p + 1)
      throw std::runtime_error("wrong cell count in row " + std::to_string(row + 1) + " of " + path);
    if (detail::trim(cells[0]) != R.labels[row])
      throw std::runtime_error("row label mismatch at row " + std::to_string(row + 1) + " of " + path);
    for (int c = 0; c < p; ++c) R.values(row, c) = std::stod(detail::trim(cells[c + 1]));
    ++row;
  }
  if (row != p) throw std::runtime_error("too few rows in correlation file: " + path);

  for (int i = 0; i < p; ++i) {
    if (std::abs(R.values(i, i) - 1.0) > 5e-3)
      throw std::runtime_error("diagonal entry not 1 at " + R.labels[i] + " in " + path);
    R.values(i, i) = 1.0;
    for (int j = i + 1; j < p; ++j) {
      if (std::abs(R.values(i, j) - R.values(j, i)) > 5e-3)
        throw std::runtime_error("asymmetry beyond tolerance at (" + R.labels[i] + "," + R.labels[j] + ") in " + path);
      double avg = 0.5 * (R.values(i, j) + R.values(j, i));
      R.values(i, j) = R.values(j, i) = avg;
    }
  }
  R.validate();
  return R;
}

inline void save_correlation_csv(const CorrelationMatrix& R, std::ostream& out) {
  out << "item";
  for (int j = 0; j < R.p(); ++j) out << "," << R.label(j);
  out << "\n";
  for (int i = 0; i < R.p(); ++i) {
    out << R.label(i);
    for (int j = 0; j < R.p(); ++j) out << "," << R.values(i, j);
    out << "\n";
  }
}

}  // namespace fus

#endif  // FUS_CORRELATION_HPP
