#ifndef FUS_INSTRUMENT_HPP
#define FUS_INSTRUMENT_HPP

#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fus {

struct SubscaleDef {
  std::string id;
  std::string name;
};

struct ItemDef {
  int index = 0;  // 1-based
  std::string text;
  std::string subscale;
};

/// A rating instrument: ordered Likert items grouped into subscales, plus the
/// glossary shown to respondents before administration.
struct InstrumentDefinition {
  std::string id;
  std::vector<ItemDef> items;
  std::vector<SubscaleDef> subscales;
  int likert_min = 1;
  int likert_max = 5;
  int attention_instruction = 3;  // the neutral value respondents must select
  std::vector<std::pair<std::string, std::string>> glossary;

  int item_count() const { return static_cast<int>(items.size()); }

  std::vector<int> subscale_items(const std::string& subscale_id) const {
    std::vector<int> out;
    for (const auto& it : items)
      if (it.subscale == subscale_id) out.push_back(it.index);
    return out;
  }

  void validate(bool final_instrument = true) const {
    if (items.empty()) throw std::invalid_argument("instrument '" + id + "' has no items");
    if (!(likert_min < attention_instruction && attention_instruction < likert_max))
      throw std::invalid_argument("instrument '" + id + "': attention value must lie strictly between the Likert bounds");
    std::set<int> seen;
    std::set<std::string> subscale_ids;
    for (const auto& s : subscales) subscale_ids.insert(s.id);
    for (const auto& it : items) {
      if (!seen.insert(it.index).second)
        throw std::invalid_argument("instrument '" + id + "': duplicate item index " + std::to_string(it.index));
      if (!subscale_ids.count(it.subscale))
        throw std::invalid_argument("instrument '" + id + "': item " + std::to_string(it.index) +
                                    " references unknown subscale '" + it.subscale + "'");
    }
    for (int i = 1; i <= item_count(); ++i)
      if (!seen.count(i))
        throw std::invalid_argument("instrument '" + id + "': item indices must be contiguous from 1");
    if (final_instrument) {
      for (const auto& s : subscales)
        if (subscale_items(s.id).size() < 3)
          throw std::invalid_argument("instrument '" + id + "': subscale '" + s.id + "' has fewer than 3 items");
    }
  }
};

enum class FeatureDomain { hiring, medicine, loan, other };
enum class FeatureKind { numerical, categorical };

inline std::string to_string(FeatureDomain d) {
  switch (d) {
    case FeatureDomain::hiring: return "hiring";
    case FeatureDomain::medicine: return "medicine";
    case FeatureDomain::loan: return "loan";
    default: return "other";
  }
}

inline std::string to_string(FeatureKind k) {
  return k == FeatureKind::numerical ? "numerical" : "categorical";
}

/// A tabular input feature to be rated. Its kind determines which instrument
/// rates it.
struct FeatureDescriptor {
  std::string id;
  FeatureDomain domain = FeatureDomain::other;
  std::string name;
  std::string intended_meaning;
  FeatureKind kind = FeatureKind::numerical;

  std::string instrument_id() const {
    return kind == FeatureKind::numerical ? "fus-numerical" : "fus-categorical";
  }
};

inline std::vector<std::pair<std::string, std::string>> default_glossary() {
  return {
      {"Feature", "A column in a dataset; e.g. 'Debt' to predict Mortgage"},
      {"Value", "A value that a feature can take; e.g. -500 euro as a value of 'debt'"},
      {"Categorical feature", "A feature with distinct categories; e.g. phone brands"},
      {"Measuring Scale", "A method used to assess a numerical feature; e.g. Celsius is a measuring scale for temperature"},
      {"End Points", "The minimum and maximum values a numerical feature can reasonably take; e.g. the age range of loan applicants may be expected to vary between 18 and 100 years."},
  };
}

/// The 8-item scale for numerical features: 5 understanding/measurement items
/// and 3 feature-outcome items.
inline InstrumentDefinition builtin_numerical_instrument() {
  InstrumentDefinition d;
  d.id = "fus-numerical";
  d.subscales = {{"understanding_measurement", "Understanding & Measurement"},
                 {"feature_outcome", "Feature-Outcome Relation"}};
  d.items = {
      {1, "I can understand the scale (units) of the feature.", "understanding_measurement"},
      {2, "I can easily understand if a given value of the feature is high or low.", "understanding_measurement"},
      {3, "I know what this feature measures.", "understanding_measurement"},
      {4, "I know what this feature represents.", "understanding_measurement"},
      {5, "I think that I can easily access a definition of the feature.", "understanding_measurement"},
      {6, "In my opinion, the feature should be used to predict the outcome.", "feature_outcome"},
      {7, "I think that the feature is important for the outcome.", "feature_outcome"},
      {8, "I think it is fair that the feature influences the outcome.", "feature_outcome"},
  };
  d.glossary = default_glossary();
  return d;
}

/// The 9-item scale for categorical features: 6 understanding/measurement
/// items and 3 feature-outcome items.
inline InstrumentDefinition builtin_categorical_instrument() {
  InstrumentDefinition d;
  d.id = "fus-categorical";
  d.subscales = {{"understanding_measurement", "Understanding & Measurement"},
                 {"feature_outcome", "Feature-Outcome Relation"}};
  d.items = {
      {1, "I can easily understand how the categories were assessed.", "understanding_measurement"},
      {2, "I can easily understand the order of categories.", "understanding_measurement"},
      {3, "I think it is feasible for me to verify the specific category of the feature.", "understanding_measurement"},
      {4, "I understand all possible values of the categorical feature.", "understanding_measurement"},
      {5, "I know what this feature represents.", "understanding_measurement"},
      {6, "I require no support to understand the feature.", "understanding_measurement"},
      {7, "In my opinion, the feature should be used to predict the outcome.", "feature_outcome"},
      {8, "I think that the feature is important for the outcome.", "feature_outcome"},
      {9, "I think it is fair that the feature influences the outcome.", "feature_outcome"},
  };
  d.glossary = default_glossary();
  return d;
}

/// The nine features the scales were tested on.
inline std::vector<FeatureDescriptor> builtin_features() {
  using D = FeatureDomain;
  using K = FeatureKind;
  return {
      {"recruitment_strategy", D::hiring, "Recruitment Strategy", "Strategy adopted by the hiring team for recruitment", K::categorical},
      {"personality_score", D::hiring, "Personality Score", "Score of candidate's personality traits", K::numerical},
      {"degree", D::hiring, "Degree", "Highest educational degree held", K::categorical},
      {"bmi", D::medicine, "BMI", "Body Mass Index", K::numerical},
      {"total_cholesterol", D::medicine, "Total Cholesterol", "Cholesterol in mg/dL or mmol/L", K::numerical},
      {"neoplasm_stage", D::medicine, "Neoplasm Stage", "Whether the tumour is regional or has spread", K::categorical},
      {"credit_score", D::loan, "Credit Score", "Applicant's credit score", K::numerical},
      {"debt", D::loan, "Debt", "Total amount of individual's debt", K::numerical},
      {"loan_type", D::loan, "Business or commercial", "Type of loan applied for", K::categorical},
  };
}

inline void to_json(nlohmann::json& j, const InstrumentDefinition& d) {
  j = nlohmann::json{{"id", d.id},
                     {"likert_min", d.likert_min},
                     {"likert_max", d.likert_max},
                     {"attention_instruction", d.attention_instruction}};
  j["subscales"] = nlohmann::json::array();
  for (const auto& s : d.subscales) j["subscales"].push_back({{"id", s.id}, {"name", s.name}});
  j["items"] = nlohmann::json::array();
  for (const auto& it : d.items)
    j["items"].push_back({{"index", it.index}, {"text", it.text}, {"subscale", it.subscale}});
  j["glossary"] = nlohmann::json::array();
  for (const auto& g : d.glossary) j["glossary"].push_back({{"term", g.first}, {"definition", g.second}});
}

inline void from_json(const nlohmann::json& j, InstrumentDefinition& d) {
  d = {};
  d.id = j.at("id").get<std::string>();
  d.likert_min = j.value("likert_min", 1);
  d.likert_max = j.value("likert_max", 5);
  d.attention_instruction = j.value("attention_instruction", 3);
  for (const auto& s : j.at("subscales"))
    d.subscales.push_back({s.at("id").get<std::string>(), s.value("name", std::string{})});
  for (const auto& it : j.at("items"))
    d.items.push_back({it.at("index").get<int>(), it.value("text", std::string{}),
                       it.at("subscale").get<std::string>()});
  if (j.contains("glossary"))
    for (const auto& g : j.at("glossary"))
      d.glossary.emplace_back(g.at("term").get<std::string>(), g.at("definition").get<std::string>());
}

/// Resolves an instrument by builtin name or JSON file path.
inline InstrumentDefinition load_instrument(const std::string& name_or_path) {
  if (name_or_path == "fus-numerical") return builtin_numerical_instrument();
  if (name_or_path == "fus-categorical") return builtin_categorical_instrument();
  std::ifstream in(name_or_path);
  if (!in) throw std::runtime_error("cannot open instrument file: " + name_or_path);
  nlohmann::json j;
  in >> j;
  InstrumentDefinition d = j.get<InstrumentDefinition>();
  d.validate(false);
  return d;
}

}  // namespace fus

#endif  // FUS_INSTRUMENT_HPP
