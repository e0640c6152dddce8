#ifndef FUS_RELIABILITY_HPP
#define FUS_RELIABILITY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/correlation.hpp"
#include "fus/instrument.hpp"
#include "fus/records.hpp"

namespace fus {

/// McDonald's omega from standardized loadings of one factor:
///   omega = (sum lambda)^2 / ((sum lambda)^2 + sum psi),
/// with psi = 1 - lambda^2 unless explicit uniquenesses are supplied.
inline double mcdonald_omega(const std::vector<double>& loadings,
                             const std::vector<double>& uniquenesses = {}) {
  if (loadings.empty()) throw std::invalid_argument("mcdonald_omega: empty loading list");
  if (!uniquenesses.empty() && uniquenesses.size() != loadings.size())
    throw std::invalid_argument("mcdonald_omega: uniqueness count mismatch");
  double sum_l = 0.0, sum_psi = 0.0;
  for (std::size_t i = 0; i < loadings.size(); ++i) {
    double l = loadings[i];
    if (std::abs(l) > 1.0 + 1e-9) throw std::invalid_argument("mcdonald_omega: |loading| > 1");
    sum_l += l;
    sum_psi += uniquenesses.empty() ? 1.0 - l * l : uniquenesses[i];
  }
  double num = sum_l * sum_l;
  if (num + sum_psi <= 0.0) return 0.0;
  return num / (num + sum_psi);
}

/// Average variance extracted: mean squared standardized loading.
inline double ave(const std::vector<double>& loadings) {
  if (loadings.empty()) throw std::invalid_argument("ave: empty loading list");
  double s = 0.0;
  for (double l : loadings) {
    if (std::abs(l) > 1.0 + 1e-9) throw std::invalid_argument("ave: |loading| > 1");
    s += l * l;
  }
  return s / static_cast<double>(loadings.size());
}

/// Standardized Cronbach's alpha from a factor's correlation block:
///   alpha = k rbar / (1 + (k-1) rbar).
inline double cronbach_alpha(const CorrelationMatrix& R) {
  const int k = R.p();
  if (k < 2) throw std::invalid_argument("cronbach_alpha: need at least 2 items");
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) sum += R.values(i, j);
  double rbar = sum / (k * (k - 1) / 2.0);
  return k * rbar / (1.0 + (k - 1) * rbar);
}

struct FactorReliability {
  std::string factor;
  std::vector<std::string> items;
  double omega = 0.0;
  double ave = 0.0;
  double alpha = 0.0;
};

struct ReliabilityReport {
  std::vector<FactorReliability> factors;
};

inline void to_json(nlohmann::json& j, const ReliabilityReport& r) {
  j = nlohmann::json::array();
  for (const auto& f : r.factors)
    j.push_back({{"factor", f.factor},
                 {"items", f.items},
                 {"omega", f.omega},
                 {"ave", f.ave},
                 {"alpha", f.alpha}});
}

/// Reliability per factor from standardized loadings plus the correlation
/// matrix for alpha. items_per_factor maps factor name to 0-based item
/// indices into R/loading rows.
inline ReliabilityReport reliability_report(
    const std::vector<std::pair<std::string, std::vector<int>>>& items_per_factor,
    const Eigen::MatrixXd& loadings_by_factor,  // p x k, column f for factor f
    const CorrelationMatrix& R) {
  ReliabilityReport rep;
  for (std::size_t f = 0; f < items_per_factor.size(); ++f) {
    const auto& [name, idx] = items_per_factor[f];
    FactorReliability fr;
    fr.factor = name;
    std::vector<double> lambdas;
    for (int i : idx) {
      fr.items.push_back(R.label(i));
      lambdas.push_back(loadings_by_factor(i, static_cast<Eigen::Index>(f)));
    }
    fr.omega = mcdonald_omega(lambdas);
    fr.ave = fus::ave(lambdas);
    fr.alpha = cronbach_alpha(R.restrict(idx));
    rep.factors.push_back(fr);
  }
  return rep;
}

struct UnderstandabilityScore {
  std::string feature_id;
  std::map<std::string, double> subscale_means;
  double overall = 0.0;
  long n_ratings = 0;
  int rank = 0;
};

inline void to_json(nlohmann::json& j, const UnderstandabilityScore& s) {
  j = {{"feature_id", s.feature_id},
       {"subscales", s.subscale_means},
       {"overall", s.overall},
       {"n_ratings", s.n_ratings},
       {"rank", s.rank}};
}

/// Per-feature mean scores over complete, quality-filtered ratings. Features
/// without retained ratings are absent from the output.
inline std::vector<UnderstandabilityScore> score_features(const std::vector<RatingRecord>& records,
                                                          const InstrumentDefinition& instrument) {
  struct Acc {
    std::map<std::string, std::pair<double, long>> subscale;  // sum, count
    double total = 0.0;
    long total_count = 0;
    long n_ratings = 0;
  };
  std::map<std::string, Acc> by_feature;
  for (const auto& r : records) {
    if (!r.complete(instrument.item_count())) continue;
    Acc& acc = by_feature[r.feature_id];
    ++acc.n_ratings;
    for (const auto& it : instrument.items) {
      int v = r.responses.at(it.index);
      auto& [sum, count] = acc.subscale[it.subscale];
      sum += v;
      ++count;
      acc.total += v;
      ++acc.total_count;
    }
  }
  std::vector<UnderstandabilityScore> out;
  for (const auto& [fid, acc] : by_feature) {
    UnderstandabilityScore s;
    s.feature_id = fid;
    s.n_ratings = acc.n_ratings;
    s.overall = acc.total / static_cast<double>(acc.total_count);
    for (const auto& [sub, sc] : acc.subscale)
      s.subscale_means[sub] = sc.first / static_cast<double>(sc.second);
    out.push_back(std::move(s));
  }
  return out;
}

/// Descending by overall mean; ties broken ascending by feature id.
inline std::vector<UnderstandabilityScore> rank_features(std::vector<UnderstandabilityScore> scores) {
  if (scores.empty()) throw std::invalid_argument("rank_features: empty score list");
  std::sort(scores.begin(), scores.end(),
            [](const UnderstandabilityScore& a, const UnderstandabilityScore& b) {
              if (a.overall != b.overall) return a.overall > b.overall;
              return a.feature_id < b.feature_id;
            });
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i].rank = static_cast<int>(i + 1);
  return scores;
}

/// CSV export: feature_id, one column per subscale, overall, n_ratings, rank.
inline void save_scores_csv(const std::vector<UnderstandabilityScore>& scores,
                            const InstrumentDefinition& instrument, std::ostream& out) {
  out << "feature_id";
  for (const auto& s : instrument.subscales) out << "," << s.id;
  out << ",overall,n_ratings,rank\n";
  for (const auto& sc : scores) {
    out << sc.feature_id;
    for (const auto& s : instrument.subscales) {
      auto it = sc.subscale_means.find(s.id);
      out << ",";
      if (it != sc.subscale_means.end()) out << it->second;
    }
    out << "," << sc.overall << "," << sc.n_ratings << "," << sc.rank << "\n";
  }
}

}  // namespace fus

#endif  // FUS_RELIABILITY_HPP
