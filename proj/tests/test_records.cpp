#include <doctest.h>

#include <set>
#include <sstream>

#include "fus/records.hpp"

namespace {

std::string header8() {
  return "respondent_id,feature_id,instrument,i1,i2,i3,i4,i5,i6,i7,i8,attention,duration_s\n";
}

std::string row(const std::string& rid, const std::string& fid, const std::string& items,
                int attention = 3, double duration = 120.0) {
  return rid + "," + fid + ",fus-numerical," + items + "," + std::to_string(attention) + "," +
         std::to_string(duration) + "\n";
}

}  // namespace

TEST_CASE("response parsing accepts the documented schema") {
  std::stringstream in(header8() + row("r1", "bmi", "1,2,3,4,5,1,2,3") +
                       row("r2", "debt", "5,5,5,5,5,5,5,5", 2, 80.0));
  fus::ParseResult res = fus::parse_responses(in, fus::builtin_numerical_instrument());
  REQUIRE(res.records.size() == 2);
  CHECK(res.errors.empty());
  CHECK(res.records[0].respondent_id == "r1");
  CHECK(res.records[0].responses.at(3) == 3);
  CHECK(res.records[1].attention_response == 2);
  CHECK(res.records[1].duration_seconds == doctest::Approx(80.0));
}

TEST_CASE("schema violations are fatal, row problems are row errors") {
  auto instrument = fus::builtin_numerical_instrument();
  {
    std::stringstream in("respondent_id,feature_id,instrument,i1,attention,duration_s\n");
    CHECK_THROWS_WITH_AS(fus::parse_responses(in, instrument),
                         doctest::Contains("schema error"), std::runtime_error);
  }
  {
    std::stringstream in(
        "respondent_id,feature_id,instrument,i1,i2,iX,i4,i5,i6,i7,i8,attention,duration_s\n");
    CHECK_THROWS_WITH_AS(fus::parse_responses(in, instrument),
                         doctest::Contains("unknown column"), std::runtime_error);
  }
  {
    std::stringstream in(header8() + row("r1", "bmi", "1,2,6,4,5,1,2,3") +
                         row("r2", "bmi", "1,2,x,4,5,1,2,3") +
                         "r3,bmi,fus-numerical,1,2,3\n" +
                         row("r4", "bmi", "1,2,3,4,5,1,2,3", 3, -5.0) +
                         row("r5", "bmi", "1,2,3,4,5,1,2,3"));
    fus::ParseResult res = fus::parse_responses(in, instrument);
    CHECK(res.records.size() == 1);
    REQUIRE(res.errors.size() == 4);
    CHECK(res.errors[0].line == 2);
    CHECK(res.errors[0].message == "value 6 out of range in column i3");
    CHECK(res.errors[1].message == "non-integer value in column i3");
    CHECK(res.errors[2].message == "wrong field count");
    CHECK(res.errors[3].message == "negative duration");
  }
}

TEST_CASE("missing cells parse as absent responses") {
  std::stringstream in(header8() + row("r1", "bmi", "1,,3,NA,5,1,2,3"));
  fus::ParseResult res = fus::parse_responses(in, fus::builtin_numerical_instrument());
  REQUIRE(res.records.size() == 1);
  CHECK(res.records[0].responses.size() == 6);
  CHECK_FALSE(res.records[0].complete(8));
}

TEST_CASE("quality filters run in order and account for every record") {
  auto instrument = fus::builtin_numerical_instrument();
  std::vector<fus::RatingRecord> records;
  for (int i = 0; i < 40; ++i) {
    fus::RatingRecord r;
    r.respondent_id = "r" + std::to_string(i);
    r.feature_id = "bmi";
    r.instrument_id = instrument.id;
    for (int j = 1; j <= 8; ++j) r.responses[j] = 3;
    r.attention_response = i < 3 ? 5 : 3;      // 3 attention failures
    r.duration_seconds = i == 10 ? 5000.0 : 100.0 + i;  // one timing outlier
    if (i == 20) r.responses.erase(4);         // one incomplete
    records.push_back(r);
  }

  fus::FilterOutcome out = fus::apply_quality_filters(records, instrument);
  CHECK(out.report.n_input == 40);
  CHECK(out.report.n_removed_attention == 3);
  CHECK(out.report.n_flagged_time == 1);
  CHECK(out.report.n_removed_time == 0);  // flagged, not dropped, by default
  CHECK(out.report.n_removed_missing == 1);
  CHECK(out.report.n_retained == 36);
  CHECK(out.report.n_input == out.report.n_retained + out.report.n_removed_attention +
                                  out.report.n_removed_time + out.report.n_removed_missing);
  CHECK(out.report.flagged_time_keys == std::vector<std::string>{"r10/bmi"});

  // dropping outliers removes the flagged record too
  fus::QualityPolicy strict;
  strict.drop_time_outliers = true;
  fus::FilterOutcome out2 = fus::apply_quality_filters(records, instrument, strict);
  CHECK(out2.report.n_removed_time == 1);
  CHECK(out2.report.n_retained == 35);

  // filtering the retained set again removes nothing further
  fus::FilterOutcome again = fus::apply_quality_filters(out.retained, instrument);
  CHECK(again.report.n_retained == out.report.n_retained);
  CHECK(again.report.n_removed_attention == 0);
  CHECK(again.report.n_removed_missing == 0);

  CHECK_THROWS(fus::apply_quality_filters({}, instrument));
}

TEST_CASE("sample split is deterministic, exhaustive, and respondent-level") {
  std::vector<fus::RatingRecord> records;
  for (int r = 0; r < 1440; ++r) {
    for (int f = 0; f < 3; ++f) {
      fus::RatingRecord rec;
      rec.respondent_id = "R" + std::to_string(1000 + r);
      rec.feature_id = "f" + std::to_string((r % 3) + 3 * f);
      rec.instrument_id = "fus-numerical";
      records.push_back(rec);
    }
  }

  auto [a, b] = fus::split_sample(records, 0.5, "feature_id", 123);
  CHECK(a.size() + b.size() == records.size());

  std::set<std::string> resp_a, resp_b;
  for (const auto& r : a) resp_a.insert(r.respondent_id);
  for (const auto& r : b) resp_b.insert(r.respondent_id);
  CHECK(resp_a.size() == 720);
  CHECK(resp_b.size() == 720);
  for (const auto& id : resp_a) CHECK(resp_b.count(id) == 0);

  auto [a2, b2] = fus::split_sample(records, 0.5, "feature_id", 123);
  REQUIRE(a2.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a2[i].key() == a[i].key());

  auto [a3, b3] = fus::split_sample(records, 0.5, "feature_id", 124);
  bool any_difference = a3.size() != a.size();
  for (std::size_t i = 0; !any_difference && i < a.size(); ++i)
    any_difference = a3[i].key() != a[i].key();
  CHECK(any_difference);

  CHECK_THROWS(fus::split_sample(records, 0.0, "none", 1));
  CHECK_THROWS(fus::split_sample(records, 0.5, "color", 1));
}

TEST_CASE("matrix conversion sorts rows and drops incomplete records") {
  auto instrument = fus::builtin_numerical_instrument();
  std::vector<fus::RatingRecord> records;
  auto make = [&](const std::string& rid, const std::string& fid, int value) {
    fus::RatingRecord r;
    r.respondent_id = rid;
    r.feature_id = fid;
    r.instrument_id = instrument.id;
    for (int j = 1; j <= 8; ++j) r.responses[j] = value;
    return r;
  };
  records.push_back(make("r2", "bmi", 4));
  records.push_back(make("r1", "debt", 2));
  records.push_back(make("r1", "bmi", 1));
  fus::RatingRecord incomplete = make("r3", "bmi", 5);
  incomplete.responses.erase(1);
  records.push_back(incomplete);

  fus::RatingMatrix m = fus::to_matrix(records, instrument);
  CHECK(m.values.rows() == 3);
  CHECK(m.n_excluded_missing == 1);
  CHECK(m.row_keys == std::vector<std::string>{"r1/bmi", "r1/debt", "r2/bmi"});
  CHECK(m.values(0, 0) == doctest::Approx(1.0));
  CHECK(m.values(1, 7) == doctest::Approx(2.0));
  CHECK(m.values.col(3).mean() == doctest::Approx((1.0 + 2.0 + 4.0) / 3.0));

  records[0].instrument_id = "fus-categorical";
  CHECK_THROWS(fus::to_matrix(records, instrument));
}
