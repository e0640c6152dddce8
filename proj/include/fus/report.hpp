#ifndef FUS_REPORT_HPP
#define FUS_REPORT_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/cfa.hpp"
#include "fus/correlation.hpp"
#include "fus/efa.hpp"
#include "fus/instrument.hpp"
#include "fus/records.hpp"
#include "fus/reliability.hpp"

namespace fus {

inline const char* kToolVersion = "0.1.0";

/// Data-quality aborts map to their own exit code in the CLI.
struct data_quality_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::string responses_path;  // exactly one of responses_path / corr_path
  std::string corr_path;
  long n = 0;  // sample size, required with corr_path
  std::string instrument = "fus-numerical";
  QualityPolicy quality;
  EfaConfig efa;
  std::string structure_path;  // optional CFA structure JSON
  std::string out_dir;
  std::uint64_t seed = 0;
  double split_fraction = 0.5;
  bool run_reduction = false;
  std::vector<std::string> formats = {"json", "text", "csv"};

  void validate() const {
    bool have_responses = !responses_path.empty();
    bool have_corr = !corr_path.empty();
    if (have_responses == have_corr)
      throw std::invalid_argument("config error: supply exactly one of responses or correlation input");
    if (have_corr && n <= 0)
      throw std::invalid_argument("config error: correlation input requires a sample size n");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw std::invalid_argument("config error: split fraction must lie in (0,1)");
  }

  nlohmann::json echo() const {
    return {{"responses", responses_path},
            {"corr", corr_path},
            {"n", n},
            {"instrument", instrument},
            {"rotation", to_string(efa.rotation)},
            {"n_factors", efa.n_factors},
            {"keep", efa.keep},
            {"drop", efa.drop},
            {"structure", structure_path},
            {"seed", seed},
            {"split_fraction", split_fraction},
            {"run_reduction", run_reduction},
            {"drop_time_outliers", quality.drop_time_outliers}};
  }
};

struct ValidationReport {
  nlohmann::json config_echo;
  nlohmann::json quality;
  nlohmann::json factorability;
  nlohmann::json efa;
  nlohmann::json reduction;
  nlohmann::json cfa;
  nlohmann::json reliability;
  nlohmann::json scores;
  Eigen::VectorXd scree;
  std::vector<UnderstandabilityScore> score_list;
  InstrumentDefinition instrument;
  std::string version = kToolVersion;
  double elapsed_seconds = 0.0;
  bool complete = true;

  nlohmann::json to_json_document() const {
    return {{"version", version},
            {"config", config_echo},
            {"complete", complete},
            {"quality", quality},
            {"factorability", factorability},
            {"efa", efa},
            {"reduction", reduction},
            {"cfa", cfa},
            {"reliability", reliability},
            {"scores", scores}};
  }
};

namespace detail {

inline nlohmann::json skipped(const std::string& reason) { return {{"skipped", reason}}; }

inline nlohmann::json cfa_block(const CfaModel& model, const CfaFit& fit) {
  nlohmann::json j;
  to_json(j, fit);
  StandardizedSolution st = standardize(fit);
  j["standardized_loadings"] = matrix_json(st.loadings);
  j["factor_correlations"] = matrix_json(st.factor_corr);
  j["factors"] = model.factors;
  j["items"] = model.items;
  return j;
}

}  // namespace detail

/// Runs the full validation sequence: quality filtering, factorability, EFA
/// (optionally with item reduction), CFA with a nested one-factor comparison,
/// reliability, and feature scoring. Blocks that need inputs the config does
/// not provide are marked skipped with a reason.
inline ValidationReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  auto t0 = std::chrono::steady_clock::now();

  ValidationReport report;
  report.config_echo = config.echo();
  report.instrument = load_instrument(config.instrument);
  const InstrumentDefinition& instrument = report.instrument;

  CorrelationMatrix efa_corr;
  CorrelationMatrix cfa_corr;
  long cfa_n = 0;
  std::optional<Eigen::MatrixXd> cfa_raw;  // present only with response input
  std::vector<RatingRecord> retained;

  if (!config.responses_path.empty()) {
    std::ifstream in(config.responses_path);
    if (!in) throw std::runtime_error("cannot open responses file: " + config.responses_path);
    ParseResult parsed = parse_responses(in, instrument);
    FilterOutcome filtered = apply_quality_filters(parsed.records, instrument, config.quality);
    if (filtered.retained.empty()) throw data_quality_error("no records retained after quality filtering");
    retained = filtered.retained;
    to_json(report.quality, filtered.report);
    report.quality["n_parse_errors"] = parsed.errors.size();

    auto [efa_arm, cfa_arm] = split_sample(retained, config.split_fraction, "feature_id", config.seed);
    if (efa_arm.empty() || cfa_arm.empty())
      throw data_quality_error("sample split produced an empty arm");
    RatingMatrix efa_m = to_matrix(efa_arm, instrument);
    RatingMatrix cfa_m = to_matrix(cfa_arm, instrument);
    report.quality["n_efa_arm"] = efa_m.values.rows();
    report.quality["n_cfa_arm"] = cfa_m.values.rows();
    efa_corr = pearson_matrix(efa_m);
    cfa_corr = pearson_matrix(cfa_m);
    cfa_n = cfa_m.values.rows();
    cfa_raw = cfa_m.values;
  } else {
    efa_corr = load_correlation_csv(config.corr_path);
    efa_corr.n = config.n;
    cfa_corr = efa_corr;
    cfa_n = config.n;
    report.quality = detail::skipped("raw data required");
  }

  // factorability
  {
    FactorabilityReport fr;
    fr.bartlett = bartlett_test(efa_corr, efa_corr.n.value_or(cfa_n));
    KmoResult k = kmo(efa_corr);
    fr.kmo_overall = k.overall;
    fr.kmo_per_item = k.per_item;
    to_json(report.factorability, fr);
  }

  // EFA, optionally with the a-priori reduction loop
  report.scree = eigenvalues(efa_corr);
  FactorSolution efa_sol;
  std::vector<std::string> final_items;
  if (config.run_reduction) {
    ReductionResult red = reduce_items(efa_corr, config.efa);
    efa_sol = red.solution;
    final_items = red.final_items;
    to_json(report.reduction, red.trace);
  } else {
    efa_sol = run_efa(efa_corr, config.efa);
    final_items = efa_corr.labels;
    report.reduction = detail::skipped("reduction not requested");
  }
  to_json(report.efa, efa_sol);

  // CFA: configured structure, instrument structure when the items match,
  // otherwise skipped
  CfaModel model;
  bool have_model = false;
  std::vector<std::string> instrument_items;
  for (const auto& it : instrument.items) instrument_items.push_back("i" + std::to_string(it.index));
  if (!config.structure_path.empty()) {
    model = load_cfa_structure(config.structure_path, cfa_corr.labels);
    have_model = true;
  } else if (cfa_corr.labels == instrument_items) {
    model = build_cfa(instrument);
    have_model = true;
  }

  if (have_model) {
    CfaFit fit = fit_ml(model, cfa_corr, cfa_n);
    CfaModel one = build_one_factor(model.items);
    CfaFit fit1 = fit_ml(one, cfa_corr, cfa_n);
    report.cfa = {{"two_factor", detail::cfa_block(model, fit)},
                  {"one_factor", detail::cfa_block(one, fit1)},
                  {"input_is_correlation", true}};
    if (cfa_raw) {
      GammaMatrix gamma = estimate_gamma(*cfa_raw);
      SatorraBentlerResult sb = satorra_bentler(model, fit, gamma, cfa_corr.values);
      SatorraBentlerResult sb1 = satorra_bentler(one, fit1, gamma, cfa_corr.values);
      ScaledDiffResult diff = scaled_chisq_diff(fit1, sb1.c, fit, sb.c);
      nlohmann::json robust = {{"scaling_factor", sb.c},
                               {"T_scaled", sb.T_scaled},
                               {"indices", sb.robust},
                               {"one_factor_scaling_factor", sb1.c},
                               {"one_factor_T_scaled", sb1.T_scaled}};
      robust["scaled_difference"] = {{"T", diff.T_d},
                                     {"df", diff.df_d},
                                     {"p", diff.p},
                                     {"p_display", format_p(diff.p)}};
      report.cfa["robust"] = robust;
    } else {
      report.cfa["robust"] = detail::skipped("raw data required");
    }

    // reliability from the standardized two-factor CFA solution
    StandardizedSolution st = standardize(fit);
    std::vector<std::pair<std::string, std::vector<int>>> groups;
    for (int f = 0; f < model.k(); ++f) {
      std::vector<int> idx;
      for (int i = 0; i < model.p(); ++i)
        if (model.factor_of[i] == f) idx.push_back(i);
      groups.emplace_back(model.factors[f], idx);
    }
    to_json(report.reliability, reliability_report(groups, st.loadings, cfa_corr));
  } else {
    report.cfa = detail::skipped("no structure for these items");
    report.reliability = detail::skipped("no structure for these items");
  }

  // feature scores need raw records
  if (!retained.empty()) {
    report.score_list = rank_features(score_features(retained, instrument));
    report.scores = nlohmann::json::array();
    for (const auto& s : report.score_list) {
      nlohmann::json js;
      to_json(js, s);
      report.scores.push_back(js);
    }
  } else {
    report.scores = detail::skipped("raw data required");
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace detail {

inline void summary_block(std::ostream& out, const std::string& title, const nlohmann::json& j,
                          const std::vector<std::pair<std::string, std::string>>& lines) {
  out << title << "\n";
  if (j.is_object() && j.contains("skipped")) {
    out << "  SKIPPED: " << j.at("skipped").get<std::string>() << "\n\n";
    return;
  }
  for (const auto& [label, path] : lines) {
    nlohmann::json v = j;
    std::stringstream keys(path);
    std::string key;
    bool ok = true;
    while (std::getline(keys, key, '.')) {
      if (v.is_object() && v.contains(key)) {
        v = v.at(key);
      } else {
        ok = false;
        break;
      }
    }
    if (ok) out << "  " << label << ": " << v.dump() << "\n";
  }
  out << "\n";
}

}  // namespace detail

/// Plain-text summary for humans; the JSON report remains the machine format.
inline void write_summary(const ValidationReport& r, std::ostream& out) {
  out << "scale validation report (version " << r.version << ")\n";
  out << "instrument: " << r.instrument.id << "\n\n";
  detail::summary_block(out, "quality", r.quality,
                        {{"input records", "n_input"},
                         {"attention removals", "n_removed_attention"},
                         {"flagged durations", "n_flagged_time"},
                         {"missing-response removals", "n_removed_missing"},
                         {"retained", "n_retained"}});
  detail::summary_block(out, "factorability", r.factorability,
                        {{"bartlett chi2", "bartlett_chi2"},
                         {"bartlett df", "bartlett_df"},
                         {"bartlett p", "bartlett_p_display"},
                         {"kmo", "kmo_overall"}});
  detail::summary_block(out, "efa", r.efa,
                        {{"factors", "n_factors"},
                         {"rotation", "rotation"},
                         {"ss loadings", "ss_loadings"},
                         {"cumulative variance", "cumulative_variance"},
                         {"converged", "converged"}});
  detail::summary_block(out, "cfa", r.cfa,
                        {{"two-factor T", "two_factor.T"},
                         {"two-factor df", "two_factor.df"},
                         {"two-factor indices", "two_factor.indices"},
                         {"one-factor indices", "one_factor.indices"}});
  if (r.cfa.is_object() && r.cfa.contains("robust")) {
    detail::summary_block(out, "cfa robust", r.cfa.at("robust"),
                          {{"scaling factor", "scaling_factor"},
                           {"scaled T", "T_scaled"},
                           {"indices", "indices"},
                           {"scaled difference", "scaled_difference"}});
  }
  detail::summary_block(out, "reliability",
                        r.reliability.is_array() ? nlohmann::json{{"factors", r.reliability}}
                                                 : r.reliability,
                        {{"per factor", "factors"}});
  detail::summary_block(out, "scores",
                        r.scores.is_array() ? nlohmann::json{{"ranked", r.scores}} : r.scores,
                        {{"ranked", "ranked"}});
}

/// Writes report.json, summary.txt, scree.csv, scores.csv plus meta.json
/// (timing and version, kept out of the deterministic artifacts).
inline void emit_report(const ValidationReport& report, const std::string& out_dir,
                        const std::vector<std::string>& formats = {"json", "text", "csv"}) {
  std::filesystem::create_directories(out_dir);
  auto has = [&](const std::string& f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  };
  auto open = [&](const std::string& name) {
    std::ofstream f(std::filesystem::path(out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + name + " in " + out_dir);
    return f;
  };

  if (has("json")) {
    auto f = open("report.json");
    f << report.to_json_document().dump(2) << "\n";
  }
  if (has("text")) {
    auto f = open("summary.txt");
    write_summary(report, f);
  }
  if (has("csv")) {
    {
      auto f = open("scree.csv");
      save_scree_csv(report.scree, f);
    }
    {
      auto f = open("scores.csv");
      save_scores_csv(report.score_list, report.instrument, f);
    }
  }
  {
    auto f = open("meta.json");
    nlohmann::json meta = {{"version", report.version},
                           {"elapsed_seconds", report.elapsed_seconds}};
    f << meta.dump(2) << "\n";
  }
}

}  // namespace fus

#endif  // FUS_REPORT_HPP
