// Command line front end for the scale validation engine.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fus/cfa.hpp"
#include "fus/correlation.hpp"
#include "fus/efa.hpp"
#include "fus/instrument.hpp"
#include "fus/records.hpp"
#include "fus/reliability.hpp"
#include "fus/report.hpp"
#include "fus/simgen.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAnalysis = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDataQuality = 3;

std::uint64_t resolve_seed(std::uint64_t flag_seed, bool seed_given) {
  if (seed_given) return flag_seed;
  if (const char* env = std::getenv("FUS_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

struct InputOptions {
  std::string responses;
  std::string corr;
  long n = 0;
  std::string instrument = "fus-numerical";
};

void add_input_options(CLI::App* cmd, InputOptions& in, bool corr_allowed = true) {
  cmd->add_option("--responses", in.responses, "response CSV file");
  if (corr_allowed) {
    cmd->add_option("--corr", in.corr, "correlation matrix CSV file");
    cmd->add_option("--n", in.n, "sample size for correlation input");
  }
  cmd->add_option("--instrument", in.instrument,
                  "instrument: fus-numerical, fus-categorical, or a JSON file");
}

struct LoadedInput {
  fus::CorrelationMatrix corr;
  long n = 0;
  std::optional<Eigen::MatrixXd> raw;
  std::vector<fus::RatingRecord> retained;
  fus::InstrumentDefinition instrument;
};

/// Resolves either input mode to a correlation matrix; response input also
/// yields the raw matrix and the retained records.
LoadedInput load_input(const InputOptions& in) {
  if (in.responses.empty() == in.corr.empty())
    throw CLI::ValidationError("supply exactly one of --responses or --corr");
  LoadedInput out;
  out.instrument = fus::load_instrument(in.instrument);
  if (!in.responses.empty()) {
    std::ifstream f(in.responses);
    if (!f) throw std::runtime_error("cannot open responses file: " + in.responses);
    fus::ParseResult parsed = fus::parse_responses(f, out.instrument);
    fus::FilterOutcome filtered = fus::apply_quality_filters(parsed.records, out.instrument);
    if (filtered.retained.empty())
      throw fus::data_quality_error("no records retained after quality filtering");
    out.retained = filtered.retained;
    fus::RatingMatrix m = fus::to_matrix(out.retained, out.instrument);
    out.corr = fus::pearson_matrix(m);
    out.n = m.values.rows();
    out.raw = m.values;
  } else {
    if (in.n <= 0) throw CLI::ValidationError("--corr requires --n");
    out.corr = fus::load_correlation_csv(in.corr);
    out.corr.n = in.n;
    out.n = in.n;
  }
  return out;
}

void print_or_write(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    f << j.dump(2) << "\n";
  }
}

fus::CfaModel resolve_structure(const std::string& structure_path, const LoadedInput& input) {
  if (!structure_path.empty()) return fus::load_cfa_structure(structure_path, input.corr.labels);
  std::vector<std::string> instrument_items;
  for (const auto& it : input.instrument.items)
    instrument_items.push_back("i" + std::to_string(it.index));
  if (input.corr.labels != instrument_items)
    throw std::runtime_error("items do not match the instrument; supply --structure");
  return fus::build_cfa(input.instrument);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Psychometric validation toolkit for feature understandability scales"};
  app.require_subcommand(1);

  // check
  auto* check = app.add_subcommand("check", "parse responses and report data quality");
  InputOptions check_in;
  add_input_options(check, check_in, false);
  std::string check_out;
  bool check_drop_outliers = false;
  check->add_option("--out", check_out, "output JSON file (default stdout)");
  check->add_flag("--drop-time-outliers", check_drop_outliers, "remove flagged durations too");

  // factorability
  auto* fact = app.add_subcommand("factorability", "Bartlett sphericity and KMO adequacy");
  InputOptions fact_in;
  add_input_options(fact, fact_in);
  std::string fact_out;
  fact->add_option("--out", fact_out, "output JSON file (default stdout)");

  // efa
  auto* efa = app.add_subcommand("efa", "exploratory factor analysis");
  InputOptions efa_in;
  add_input_options(efa, efa_in);
  std::string efa_factors = "auto", efa_rotation = "promax", efa_out;
  std::vector<std::string> efa_keep, efa_drop;
  bool efa_reduce = false;
  efa->add_option("--factors", efa_factors, "factor count or 'auto'");
  efa->add_option("--rotation", efa_rotation, "none, varimax, or promax");
  efa->add_option("--keep", efa_keep, "items the reduction loop must keep");
  efa->add_option("--drop", efa_drop, "items removed before analysis");
  efa->add_flag("--reduce", efa_reduce, "run the a-priori item reduction loop");
  efa->add_option("--out", efa_out, "output JSON file (default stdout)");

  // cfa
  auto* cfa = app.add_subcommand("cfa", "confirmatory factor analysis with nested comparison");
  InputOptions cfa_in;
  add_input_options(cfa, cfa_in);
  std::string cfa_structure, cfa_out;
  cfa->add_option("--structure", cfa_structure, "JSON item-to-factor map");
  cfa->add_option("--out", cfa_out, "output JSON file (default stdout)");

  // reliability
  auto* rel = app.add_subcommand("reliability", "omega, AVE, and alpha per factor");
  InputOptions rel_in;
  add_input_options(rel, rel_in);
  std::string rel_structure, rel_out;
  rel->add_option("--structure", rel_structure, "JSON item-to-factor map");
  rel->add_option("--out", rel_out, "output JSON file (default stdout)");

  // score
  auto* score = app.add_subcommand("score", "per-feature understandability scores and ranks");
  InputOptions score_in;
  add_input_options(score, score_in, false);
  std::string score_out, score_format = "json";
  score->add_option("--out", score_out, "output file (default stdout)");
  score->add_option("--format", score_format, "json or csv");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic rating fixtures");
  std::string sim_instrument = "fus-numerical", sim_model, sim_out;
  std::vector<std::string> sim_features;
  long sim_n = 240, sim_exact_fails = -1;
  double sim_fail_rate = 0.0;
  std::uint64_t sim_seed = 0;
  bool sim_seed_given = false;
  sim->add_option("--instrument", sim_instrument, "instrument id or JSON file");
  sim->add_option("--model", sim_model, "population model JSON (default built-in)");
  sim->add_option("--features", sim_features, "feature ids (default the 9 built-in features)");
  sim->add_option("--n-per-feature", sim_n, "ratings per feature");
  sim->add_option("--attention-fail-rate", sim_fail_rate, "per-record failure probability");
  sim->add_option("--exact-fail-count", sim_exact_fails, "exact number of attention failures");
  sim->add_option("--seed", sim_seed, "random seed")->each([&](const std::string&) { sim_seed_given = true; });
  sim->add_option("--out", sim_out, "output CSV file")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "full validation sequence");
  InputOptions pipe_in;
  add_input_options(pipe, pipe_in);
  std::string pipe_factors = "auto", pipe_rotation = "promax", pipe_structure, pipe_out;
  std::vector<std::string> pipe_keep, pipe_drop, pipe_formats = {"json", "text", "csv"};
  bool pipe_reduce = false;
  std::uint64_t pipe_seed = 0;
  bool pipe_seed_given = false;
  pipe->add_option("--factors", pipe_factors, "factor count or 'auto'");
  pipe->add_option("--rotation", pipe_rotation, "none, varimax, or promax");
  pipe->add_option("--structure", pipe_structure, "JSON item-to-factor map for the CFA stage");
  pipe->add_option("--keep", pipe_keep, "items the reduction loop must keep");
  pipe->add_option("--drop", pipe_drop, "items removed before analysis");
  pipe->add_flag("--reduce", pipe_reduce, "run the a-priori item reduction loop");
  pipe->add_option("--seed", pipe_seed, "random seed")->each([&](const std::string&) { pipe_seed_given = true; });
  pipe->add_option("--format", pipe_formats, "output formats: json, text, csv");
  pipe->add_option("--out", pipe_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*check) {
      fus::InstrumentDefinition instrument = fus::load_instrument(check_in.instrument);
      std::ifstream f(check_in.responses);
      if (check_in.responses.empty() || !f)
        throw std::runtime_error("cannot open responses file: " + check_in.responses);
      fus::ParseResult parsed = fus::parse_responses(f, instrument);
      fus::QualityPolicy policy;
      policy.attention_value = instrument.attention_instruction;
      policy.drop_time_outliers = check_drop_outliers;
      fus::FilterOutcome filtered = fus::apply_quality_filters(parsed.records, instrument, policy);
      nlohmann::json j;
      to_json(j, filtered.report);
      j["parse_errors"] = nlohmann::json::array();
      for (const auto& e : parsed.errors)
        j["parse_errors"].push_back({{"line", e.line}, {"message", e.message}});
      print_or_write(j, check_out);
      if (filtered.retained.empty()) {
        std::cerr << "error: no records retained after quality filtering\n";
        return kExitDataQuality;
      }
    } else if (*fact) {
      LoadedInput input = load_input(fact_in);
      fus::FactorabilityReport fr;
      fr.bartlett = fus::bartlett_test(input.corr, input.n);
      fus::KmoResult k = fus::kmo(input.corr);
      fr.kmo_overall = k.overall;
      fr.kmo_per_item = k.per_item;
      nlohmann::json j;
      to_json(j, fr);
      print_or_write(j, fact_out);
    } else if (*efa) {
      LoadedInput input = load_input(efa_in);
      fus::EfaConfig cfg;
      cfg.rotation = fus::rotation_from_string(efa_rotation);
      cfg.n_factors = efa_factors == "auto" ? 0 : std::stoi(efa_factors);
      cfg.keep = efa_keep;
      cfg.drop = efa_drop;
      nlohmann::json j;
      if (efa_reduce) {
        fus::ReductionResult red = fus::reduce_items(input.corr, cfg);
        to_json(j, red.solution);
        nlohmann::json trace;
        to_json(trace, red.trace);
        j["reduction_trace"] = trace;
        j["final_items"] = red.final_items;
      } else {
        if (!cfg.drop.empty()) {
          std::vector<int> idx;
          for (int i = 0; i < input.corr.p(); ++i)
            if (std::find(cfg.drop.begin(), cfg.drop.end(), input.corr.label(i)) == cfg.drop.end())
              idx.push_back(i);
          input.corr = input.corr.restrict(idx);
        }
        fus::FactorSolution sol = fus::run_efa(input.corr, cfg);
        to_json(j, sol);
      }
      print_or_write(j, efa_out);
    } else if (*cfa) {
      LoadedInput input = load_input(cfa_in);
      fus::CfaModel model = resolve_structure(cfa_structure, input);
      fus::CfaFit fit = fus::fit_ml(model, input.corr, input.n);
      fus::CfaModel one = fus::build_one_factor(model.items);
      fus::CfaFit fit1 = fus::fit_ml(one, input.corr, input.n);
      nlohmann::json j, j2;
      to_json(j, fit);
      to_json(j2, fit1);
      fus::StandardizedSolution st = fus::standardize(fit);
      nlohmann::json out = {{"two_factor", j}, {"one_factor", j2}};
      out["two_factor"]["standardized_loadings"] = fus::detail::matrix_json(st.loadings);
      out["two_factor"]["factor_correlations"] = fus::detail::matrix_json(st.factor_corr);
      if (input.raw) {
        fus::GammaMatrix gamma = fus::estimate_gamma(*input.raw);
        fus::SatorraBentlerResult sb = fus::satorra_bentler(model, fit, gamma, input.corr.values);
        fus::SatorraBentlerResult sb1 = fus::satorra_bentler(one, fit1, gamma, input.corr.values);
        fus::ScaledDiffResult diff = fus::scaled_chisq_diff(fit1, sb1.c, fit, sb.c);
        nlohmann::json robust = {{"scaling_factor", sb.c}, {"T_scaled", sb.T_scaled}};
        to_json(robust["indices"], sb.robust);
        robust["scaled_difference"] = {{"T", diff.T_d}, {"df", diff.df_d}, {"p", diff.p}};
        out["robust"] = robust;
      } else {
        out["robust"] = {{"skipped", "raw data required"}};
      }
      print_or_write(out, cfa_out);
    } else if (*rel) {
      LoadedInput input = load_input(rel_in);
      fus::CfaModel model = resolve_structure(rel_structure, input);
      fus::CfaFit fit = fus::fit_ml(model, input.corr, input.n);
      fus::StandardizedSolution st = fus::standardize(fit);
      std::vector<std::pair<std::string, std::vector<int>>> groups;
      for (int f = 0; f < model.k(); ++f) {
        std::vector<int> idx;
        for (int i = 0; i < model.p(); ++i)
          if (model.factor_of[i] == f) idx.push_back(i);
        groups.emplace_back(model.factors[f], idx);
      }
      fus::ReliabilityReport rep = fus::reliability_report(groups, st.loadings, input.corr);
      nlohmann::json j;
      to_json(j, rep);
      print_or_write(j, rel_out);
    } else if (*score) {
      LoadedInput input = load_input(score_in);
      auto scores = fus::rank_features(fus::score_features(input.retained, input.instrument));
      if (score_format == "csv") {
        if (score_out.empty()) {
          fus::save_scores_csv(scores, input.instrument, std::cout);
        } else {
          std::ofstream f(score_out, std::ios::binary);
          if (!f) throw std::runtime_error("cannot write " + score_out);
          fus::save_scores_csv(scores, input.instrument, f);
        }
      } else {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& s : scores) {
          nlohmann::json js;
          to_json(js, s);
          j.push_back(js);
        }
        print_or_write(j, score_out);
      }
    } else if (*sim) {
      fus::InstrumentDefinition instrument = fus::load_instrument(sim_instrument);
      fus::PopulationModel model = sim_model.empty()
                                       ? fus::default_population_model(instrument)
                                       : fus::load_population_model(sim_model);
      std::vector<std::string> features = sim_features;
      if (features.empty())
        for (const auto& f : fus::builtin_features()) features.push_back(f.id);
      fus::FixtureConfig cfg;
      cfg.n_per_feature = sim_n;
      cfg.attention_fail_rate = sim_fail_rate;
      cfg.exact_fail_count = sim_exact_fails;
      cfg.seed = resolve_seed(sim_seed, sim_seed_given);
      std::vector<fus::PopulationModel> models(features.size(), model);
      auto records = fus::generate_rating_fixture(instrument, features, models, cfg);
      std::ofstream f(sim_out, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + sim_out);
      fus::save_responses_csv(records, instrument, f);
      std::cout << "wrote " << records.size() << " records to " << sim_out << "\n";
    } else if (*pipe) {
      fus::PipelineConfig cfg;
      cfg.responses_path = pipe_in.responses;
      cfg.corr_path = pipe_in.corr;
      cfg.n = pipe_in.n;
      cfg.instrument = pipe_in.instrument;
      cfg.efa.rotation = fus::rotation_from_string(pipe_rotation);
      cfg.efa.n_factors = pipe_factors == "auto" ? 0 : std::stoi(pipe_factors);
      cfg.efa.keep = pipe_keep;
      cfg.efa.drop = pipe_drop;
      cfg.run_reduction = pipe_reduce;
      cfg.structure_path = pipe_structure;
      cfg.seed = resolve_seed(pipe_seed, pipe_seed_given);
      cfg.formats = pipe_formats;
      cfg.out_dir = pipe_out;
      fus::ValidationReport report = fus::run_pipeline(cfg);
      fus::emit_report(report, pipe_out, pipe_formats);
      std::cout << "report written to " << pipe_out << "\n";
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fus::data_quality_error& e) {
    std::cerr << "data quality error: " << e.what() << "\n";
    return kExitDataQuality;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAnalysis;
  }
  return kExitOk;
}
