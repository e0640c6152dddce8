#ifndef FUS_SIMGEN_HPP
#define FUS_SIMGEN_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/instrument.hpp"
#include "fus/records.hpp"

namespace fus {

namespace detail {

/// splitmix64 step, used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed + 0x632BE59BD9B4E019ULL * (index + 1);
  return splitmix64(s);
}

}  // namespace detail

/// Seeded normal/uniform source: mt19937_64 with Box-Muller for normals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in (0,1)
    double u = (engine_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t integer() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// A known factor population: standardized loadings, factor correlations,
/// uniquenesses, and per-item Likert cut points.
struct PopulationModel {
  Eigen::MatrixXd loadings;      // p x k
  Eigen::MatrixXd phi;           // k x k
  Eigen::VectorXd uniquenesses;  // p
  std::vector<std::vector<double>> thresholds;  // per item, 4 ordered cuts
  std::uint64_t seed = 0;

  int p() const { return static_cast<int>(loadings.rows()); }
  int k() const { return static_cast<int>(loadings.cols()); }

  void validate() const {
    if (phi.rows() != k() || phi.cols() != k())
      throw std::invalid_argument("population model: phi size mismatch");
    if (uniquenesses.size() != p())
      throw std::invalid_argument("population model: uniqueness size mismatch");
    for (int a = 0; a < k(); ++a) {
      if (std::abs(phi(a, a) - 1.0) > 1e-9)
        throw std::invalid_argument("population model: phi diagonal not 1");
      for (int b = 0; b < k(); ++b)
        if (std::abs(phi(a, b) - phi(b, a)) > 1e-9)
          throw std::invalid_argument("population model: phi not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(phi, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9)
      throw std::invalid_argument("population model: phi not PSD");
    Eigen::VectorXd total = (loadings * phi * loadings.transpose()).diagonal() + uniquenesses;
    if ((total.array() - 1.0).abs().maxCoeff() > 1e-6)
      throw std::invalid_argument("population model: communality + uniqueness must equal 1");
    if (!thresholds.empty()) {
      if (static_cast<int>(thresholds.size()) != p())
        throw std::invalid_argument("population model: threshold count mismatch");
      for (const auto& t : thresholds) {
        if (t.size() != 4) throw std::invalid_argument("population model: need 4 cut points per item");
        for (std::size_t i = 1; i < t.size(); ++i)
          if (!(t[i] > t[i - 1]))
            throw std::invalid_argument("population model: thresholds must be strictly increasing");
      }
    }
  }
};

namespace detail {

/// Symmetric square root via eigendecomposition.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.eigenvalues().minCoeff() < -1e-9) throw std::invalid_argument("matrix not PSD");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

/// Draws n rows from the factor model: scores ~ N(0, Phi), observed =
/// scores Lambda' + unique errors. Deterministic given model.seed.
inline Eigen::MatrixXd generate_factor_data(const PopulationModel& model, long n) {
  if (n < 1) throw std::invalid_argument("generate_factor_data: need n >= 1");
  model.validate();
  Eigen::MatrixXd phi_sqrt = detail::symmetric_sqrt(model.phi);
  Rng rng(model.seed);
  Eigen::MatrixXd out(n, model.p());
  Eigen::VectorXd z(model.k());
  Eigen::VectorXd sd = model.uniquenesses.cwiseMax(0.0).cwiseSqrt();
  for (long r = 0; r < n; ++r) {
    for (int f = 0; f < model.k(); ++f) z(f) = rng.normal();
    Eigen::VectorXd scores = phi_sqrt * z;
    Eigen::VectorXd row = model.loadings * scores;
    for (int j = 0; j < model.p(); ++j) row(j) += sd(j) * rng.normal();
    out.row(r) = row;
  }
  return out;
}

/// Maps a latent value to 1 + number of cut points below it.
inline Eigen::MatrixXi discretize_likert(const Eigen::MatrixXd& data,
                                         const std::vector<std::vector<double>>& thresholds) {
  const int p = static_cast<int>(data.cols());
  if (static_cast<int>(thresholds.size()) != p)
    throw std::invalid_argument("discretize_likert: threshold count mismatch");
  for (const auto& t : thresholds)
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) throw std::invalid_argument("discretize_likert: unordered thresholds");
  Eigen::MatrixXi out(data.rows(), p);
  for (int j = 0; j < p; ++j)
    for (long r = 0; r < data.rows(); ++r) {
      int v = 1;
      for (double cut : thresholds[j])
        if (data(r, j) > cut) ++v;
      out(r, j) = v;
    }
  return out;
}

struct FixtureConfig {
  long n_per_feature = 240;
  double attention_fail_rate = 0.0;
  long exact_fail_count = -1;  // overrides the rate when >= 0
  std::uint64_t seed = 0;
};

/// Generates complete rating records for the given features under the given
/// population models. Each feature draws from its own seeded substream, so
/// per-feature generation is order independent. When the feature count is a
/// multiple of 3, respondents rate 3 features each (classes {c, c+g, c+2g});
/// otherwise one respondent per rating.
inline std::vector<RatingRecord> generate_rating_fixture(
    const InstrumentDefinition& instrument, const std::vector<std::string>& feature_ids,
    const std::vector<PopulationModel>& models, const FixtureConfig& config) {
  const int n_features = static_cast<int>(feature_ids.size());
  if (models.size() != feature_ids.size())
    throw std::invalid_argument("generate_rating_fixture: one model per feature required");
  if (config.n_per_feature < 1) throw std::invalid_argument("generate_rating_fixture: n_per_feature >= 1");
  for (const auto& m : models) {
    if (m.p() != instrument.item_count())
      throw std::invalid_argument("generate_rating_fixture: model size does not match instrument");
    if (m.thresholds.empty())
      throw std::invalid_argument("generate_rating_fixture: models need Likert thresholds");
  }

  const bool triples = n_features % 3 == 0;
  const int group = triples ? n_features / 3 : 0;

  auto respondent_of = [&](int feature, long row) {
    if (!triples) return feature * config.n_per_feature + row;
    // class c = feature % group rates features {c, c+group, c+2*group}
    return static_cast<long>(feature % group) * config.n_per_feature + row;
  };
  long n_respondents = triples ? group * config.n_per_feature
                               : static_cast<long>(n_features) * config.n_per_feature;
  int id_width = 1;
  for (long v = n_respondents; v >= 10; v /= 10) ++id_width;

  std::vector<RatingRecord> out;
  out.reserve(static_cast<std::size_t>(n_features) * config.n_per_feature);
  for (int f = 0; f < n_features; ++f) {
    PopulationModel m = models[f];
    m.seed = detail::substream_seed(config.seed, static_cast<std::uint64_t>(f));
    Eigen::MatrixXd latent = generate_factor_data(m, config.n_per_feature);
    Eigen::MatrixXi likert = discretize_likert(latent, m.thresholds);
    Rng aux(detail::substream_seed(config.seed, 1000 + static_cast<std::uint64_t>(f)));
    for (long r = 0; r < config.n_per_feature; ++r) {
      RatingRecord rec;
      std::string num = std::to_string(respondent_of(f, r) + 1);
      if (static_cast<int>(num.size()) < id_width)
        num.insert(0, static_cast<std::size_t>(id_width) - num.size(), '0');
      rec.respondent_id = "R" + num;
      rec.feature_id = feature_ids[f];
      rec.instrument_id = instrument.id;
      for (int j = 0; j < instrument.item_count(); ++j) rec.responses[j + 1] = likert(r, j);
      rec.attention_response = instrument.attention_instruction;
      if (config.exact_fail_count < 0 && config.attention_fail_rate > 0.0 &&
          aux.uniform() < config.attention_fail_rate)
        rec.attention_response = instrument.attention_instruction == instrument.likert_max
                                     ? instrument.likert_min
                                     : instrument.attention_instruction + 1;
      rec.duration_seconds = std::round(100.0 * 180.0 * std::exp(0.35 * aux.normal())) / 100.0;
      out.push_back(std::move(rec));
    }
  }

  if (config.exact_fail_count >= 0) {
    if (config.exact_fail_count > static_cast<long>(out.size()))
      throw std::invalid_argument("generate_rating_fixture: exact_fail_count exceeds record count");
    std::vector<std::size_t> idx(out.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 shuffler(detail::substream_seed(config.seed, 999999));
    std::shuffle(idx.begin(), idx.end(), shuffler);
    for (long i = 0; i < config.exact_fail_count; ++i) {
      RatingRecord& rec = out[idx[static_cast<std::size_t>(i)]];
      rec.attention_response = instrument.attention_instruction == instrument.likert_max
                                   ? instrument.likert_min
                                   : instrument.attention_instruction + 1;
    }
  }
  return out;
}

/// Writes records in the response CSV schema.
inline void save_responses_csv(const std::vector<RatingRecord>& records,
                               const InstrumentDefinition& instrument, std::ostream& out) {
  out << "respondent_id,feature_id,instrument";
  for (int i = 1; i <= instrument.item_count(); ++i) out << ",i" << i;
  out << ",attention,duration_s\n";
  for (const auto& r : records) {
    out << r.respondent_id << "," << r.feature_id << "," << r.instrument_id;
    for (int i = 1; i <= instrument.item_count(); ++i) {
      out << ",";
      auto it = r.responses.find(i);
      if (it != r.responses.end()) out << it->second;
    }
    out << "," << r.attention_response << "," << r.duration_seconds << "\n";
  }
}

inline void to_json(nlohmann::json& j, const PopulationModel& m) {
  nlohmann::json load = nlohmann::json::array();
  for (int i = 0; i < m.p(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int f = 0; f < m.k(); ++f) row.push_back(m.loadings(i, f));
    load.push_back(row);
  }
  nlohmann::json phi = nlohmann::json::array();
  for (int a = 0; a < m.k(); ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < m.k(); ++b) row.push_back(m.phi(a, b));
    phi.push_back(row);
  }
  nlohmann::json uniq = nlohmann::json::array();
  for (int i = 0; i < m.p(); ++i) uniq.push_back(m.uniquenesses(i));
  j = {{"loadings", load}, {"phi", phi}, {"uniquenesses", uniq},
       {"thresholds", m.thresholds}, {"seed", m.seed}};
}

inline void from_json(const nlohmann::json& j, PopulationModel& m) {
  const auto& load = j.at("loadings");
  const int p = static_cast<int>(load.size());
  const int k = static_cast<int>(load.at(0).size());
  m.loadings.resize(p, k);
  for (int i = 0; i < p; ++i)
    for (int f = 0; f < k; ++f) m.loadings(i, f) = load.at(i).at(f).get<double>();
  m.phi.resize(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) m.phi(a, b) = j.at("phi").at(a).at(b).get<double>();
  m.uniquenesses.resize(p);
  for (int i = 0; i < p; ++i) m.uniquenesses(i) = j.at("uniquenesses").at(i).get<double>();
  m.thresholds = j.value("thresholds", std::vector<std::vector<double>>{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.validate();
}

inline PopulationModel load_population_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  nlohmann::json j;
  in >> j;
  return j.get<PopulationModel>();
}

/// A plausible two-factor population matching the instrument's subscales:
/// loadings 0.75 on the own factor, factor correlation 0.5, mildly skewed
/// Likert cuts.
inline PopulationModel default_population_model(const InstrumentDefinition& instrument,
                                                std::uint64_t seed = 0) {
  const int p = instrument.item_count();
  const int k = static_cast<int>(instrument.subscales.size());
  PopulationModel m;
  m.loadings = Eigen::MatrixXd::Zero(p, k);
  std::map<std::string, int> factor_index;
  for (int f = 0; f < k; ++f) factor_index[instrument.subscales[f].id] = f;
  for (const auto& it : instrument.items)
    m.loadings(it.index - 1, factor_index.at(it.subscale)) = 0.75;
  m.phi = Eigen::MatrixXd::Identity(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      if (a != b) m.phi(a, b) = 0.5;
  m.uniquenesses =
      Eigen::VectorXd::Ones(p) - (m.loadings * m.phi * m.loadings.transpose()).diagonal();
  m.thresholds.assign(p, {-1.8, -1.0, -0.2, 0.8});
  m.seed = seed;
  m.validate();
  return m;
}

}  // namespace fus

#endif  // FUS_SIMGEN_HPP
