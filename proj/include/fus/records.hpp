#ifndef FUS_RECORDS_HPP
#define FUS_RECORDS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/instrument.hpp"
#include "fus/stats.hpp"

namespace fus {

enum class SplitArm { unassigned, efa, cfa };

/// One respondent's ratings of one feature on one instrument.
struct RatingRecord {
  std::string respondent_id;
  std::string feature_id;
  std::string instrument_id;
  std::map<int, int> responses;  // item index -> value; absent means missing
  int attention_response = 0;
  double duration_seconds = 0.0;
  SplitArm split = SplitArm::unassigned;

  std::string key() const { return respondent_id + "/" + feature_id; }
  bool complete(int item_count) const { return static_cast<int>(responses.size()) == item_count; }
};

struct RowError {
  long line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<RatingRecord> records;
  std::vector<RowError> errors;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses the response CSV schema:
///   respondent_id,feature_id,instrument,i1..iN,attention,duration_s
/// Malformed rows become row-level errors; an unexpected header is fatal.
inline ParseResult parse_responses(std::istream& in, const InstrumentDefinition& instrument) {
  ParseResult result;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("response file is empty");

  auto header = detail::split_csv_line(line);
  std::vector<std::string> expected = {"respondent_id", "feature_id", "instrument"};
  for (int i = 1; i <= instrument.item_count(); ++i) expected.push_back("i" + std::to_string(i));
  expected.push_back("attention");
  expected.push_back("duration_s");
  if (header.size() != expected.size())
    throw std::runtime_error("schema error: expected " + std::to_string(expected.size()) +
                             " columns, found " + std::to_string(header.size()));
  for (std::size_t c = 0; c < expected.size(); ++c)
    if (detail::trim(header[c]) != expected[c])
      throw std::runtime_error("schema error: unknown column '" + detail::trim(header[c]) +
                               "' (expected '" + expected[c] + "')");

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != expected.size()) {
      result.errors.push_back({line_no, "wrong field count"});
      continue;
    }
    RatingRecord rec;
    rec.respondent_id = detail::trim(cells[0]);
    rec.feature_id = detail::trim(cells[1]);
    rec.instrument_id = detail::trim(cells[2]);
    bool row_ok = true;
    std::string row_err;
    for (int i = 0; i < instrument.item_count(); ++i) {
      std::string cell = detail::trim(cells[3 + i]);
      if (cell.empty() || cell == "NA") continue;  // missing response
      int v;
      try {
        v = std::stoi(cell);
      } catch (...) {
        row_ok = false;
        row_err = "non-integer value in column i" + std::to_string(i + 1);
        break;
      }
      if (v < instrument.likert_min || v > instrument.likert_max) {
        row_ok = false;
        row_err = "value " + std::to_string(v) + " out of range in column i" + std::to_string(i + 1);
        break;
      }
      rec.responses[i + 1] = v;
    }
    if (row_ok) {
      try {
        rec.attention_response = std::stoi(detail::trim(cells[3 + instrument.item_count()]));
        rec.duration_seconds = std::stod(detail::trim(cells[4 + instrument.item_count()]));
      } catch (...) {
        row_ok = false;
        row_err = "malformed attention/duration field";
      }
      if (row_ok && rec.duration_seconds < 0) {
        row_ok = false;
        row_err = "negative duration";
      }
    }
    if (!row_ok) {
      result.errors.push_back({line_no, row_err});
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

struct QualityPolicy {
  int attention_value = 3;
  bool drop_time_outliers = false;  // flagged only, by default
  bool listwise_missing = true;
};

struct QualityReport {
  long n_input = 0;
  long n_removed_attention = 0;
  long n_flagged_time = 0;
  long n_removed_time = 0;
  long n_removed_missing = 0;
  long n_retained = 0;
  std::vector<std::string> removed_attention_keys;
  std::vector<std::string> flagged_time_keys;
  std::vector<std::string> removed_time_keys;
  std::vector<std::string> removed_missing_keys;
};

inline void to_json(nlohmann::json& j, const QualityReport& r) {
  j = {{"n_input", r.n_input},
       {"n_removed_attention", r.n_removed_attention},
       {"n_flagged_time", r.n_flagged_time},
       {"n_removed_time", r.n_removed_time},
       {"n_removed_missing", r.n_removed_missing},
       {"n_retained", r.n_retained},
       {"removed_attention", r.removed_attention_keys},
       {"flagged_time", r.flagged_time_keys},
       {"removed_time", r.removed_time_keys},
       {"removed_missing", r.removed_missing_keys}};
}

struct FilterOutcome {
  std::vector<RatingRecord> retained;
  QualityReport report;
};

/// Applies the data-quality filters in order: attention check, completion
/// time, missing responses. Timing outliers outside the 1.5*IQR whiskers are
/// flagged, not removed, unless the policy says otherwise.
inline FilterOutcome apply_quality_filters(const std::vector<RatingRecord>& records,
                                           const InstrumentDefinition& instrument,
                                           const QualityPolicy& policy = {}) {
  if (records.empty()) throw std::invalid_argument("apply_quality_filters: no records");

  FilterOutcome out;
  out.report.n_input = static_cast<long>(records.size());

  std::vector<RatingRecord> after_attention;
  for (const auto& r : records) {
    if (r.attention_response != policy.attention_value) {
      ++out.report.n_removed_attention;
      out.report.removed_attention_keys.push_back(r.key());
    } else {
      after_attention.push_back(r);
    }
  }

  // timing whiskers over the surviving records
  std::vector<RatingRecord> after_time;
  if (!after_attention.empty()) {
    std::vector<double> durations;
    durations.reserve(after_attention.size());
    for (const auto& r : after_attention) durations.push_back(r.duration_seconds);
    Whiskers w = tukey_whiskers(durations);
    for (const auto& r : after_attention) {
      bool outlier = r.duration_seconds < w.lower || r.duration_seconds > w.upper;
      if (outlier) {
        ++out.report.n_flagged_time;
        out.report.flagged_time_keys.push_back(r.key());
        if (policy.drop_time_outliers) {
          ++out.report.n_removed_time;
          out.report.removed_time_keys.push_back(r.key());
          continue;
        }
      }
      after_time.push_back(r);
    }
  }

  for (const auto& r : after_time) {
    if (policy.listwise_missing && !r.complete(instrument.item_count())) {
      ++out.report.n_removed_missing;
      out.report.removed_missing_keys.push_back(r.key());
    } else {
      out.retained.push_back(r);
    }
  }
  out.report.n_retained = static_cast<long>(out.retained.size());
  return out;
}

/// Deterministic stratified split at respondent level: all records of one
/// respondent land in the same arm. The stratum key is the respondent's
/// sorted set of values of the stratify field.
inline std::pair<std::vector<RatingRecord>, std::vector<RatingRecord>> split_sample(
    const std::vector<RatingRecord>& records, double fraction,
    const std::string& stratify_by, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_sample: fraction must lie in (0,1)");
  if (stratify_by != "none" && stratify_by != "instrument" && stratify_by != "feature_id")
    throw std::invalid_argument("split_sample: unknown stratify field '" + stratify_by + "'");

  std::map<std::string, std::vector<std::string>> respondent_values;  // ordered -> stable
  for (const auto& r : records) {
    std::string v = stratify_by == "instrument" ? r.instrument_id
                  : stratify_by == "feature_id" ? r.feature_id
                                                : std::string("all");
    respondent_values[r.respondent_id].push_back(v);
  }

  std::map<std::string, std::vector<std::string>> strata;  // key -> respondent ids
  for (auto& [rid, vals] : respondent_values) {
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    std::string key;
    for (const auto& v : vals) key += v + "+";
    strata[key].push_back(rid);
  }

  std::map<std::string, SplitArm> arm;
  std::mt19937_64 rng(seed);
  for (auto& [key, rids] : strata) {
    std::shuffle(rids.begin(), rids.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rids.size())));
    for (std::size_t i = 0; i < rids.size(); ++i)
      arm[rids[i]] = i < take ? SplitArm::efa : SplitArm::cfa;
  }

  std::pair<std::vector<RatingRecord>, std::vector<RatingRecord>> out;
  for (const auto& r : records) {
    RatingRecord c = r;
    c.split = arm.at(r.respondent_id);
    (c.split == SplitArm::efa ? out.first : out.second).push_back(std::move(c));
  }
  return out;
}

/// Complete, rectangular response data in stable row order.
struct RatingMatrix {
  Eigen::MatrixXd values;             // n x p
  std::vector<std::string> item_ids;  // "i1".."iN"
  std::vector<std::string> row_keys;  // respondent/feature
  std::vector<std::string> feature_ids;
  long n_excluded_missing = 0;
};

/// Builds the n x p matrix from complete records, rows sorted by
/// (respondent_id, feature_id), columns in instrument item order.
inline RatingMatrix to_matrix(const std::vector<RatingRecord>& records,
                              const InstrumentDefinition& instrument) {
  std::vector<const RatingRecord*> rows;
  long excluded = 0;
  for (const auto& r : records) {
    if (r.instrument_id != instrument.id)
      throw std::invalid_argument("to_matrix: record for instrument '" + r.instrument_id +
                                  "' mixed into '" + instrument.id + "'");
    if (!r.complete(instrument.item_count())) {
      ++excluded;
      continue;
    }
    rows.push_back(&r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RatingRecord* a, const RatingRecord* b) {
    return std::tie(a->respondent_id, a->feature_id) < std::tie(b->respondent_id, b->feature_id);
  });

  RatingMatrix m;
  m.n_excluded_missing = excluded;
  const int p = instrument.item_count();
  for (int i = 1; i <= p; ++i) m.item_ids.push_back("i" + std::to_string(i));
  m.values.resize(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row_keys.push_back(rows[i]->key());
    m.feature_ids.push_back(rows[i]->feature_id);
    for (int j = 1; j <= p; ++j) m.values(static_cast<Eigen::Index>(i), j - 1) = rows[i]->responses.at(j);
  }
  return m;
}

}  // namespace fus

#endif  // FUS_RECORDS_HPP
