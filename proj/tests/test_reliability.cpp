#include <doctest.h>

#include <sstream>

#include "fus/reliability.hpp"

namespace {

const std::string kDataDir = FUS_DATA_DIR;

fus::RatingRecord make_record(const std::string& rid, const std::string& fid,
                              const std::vector<int>& values) {
  fus::RatingRecord r;
  r.respondent_id = rid;
  r.feature_id = fid;
  r.instrument_id = "fus-numerical";
  for (std::size_t i = 0; i < values.size(); ++i) r.responses[static_cast<int>(i) + 1] = values[i];
  return r;
}

}  // namespace

TEST_CASE("omega closed forms") {
  CHECK(fus::mcdonald_omega({0.88, 0.85, 0.87}) == doctest::Approx(0.90).epsilon(0.006));
  CHECK(fus::mcdonald_omega({0.63, 0.66, 0.85, 0.83, 0.78}) == doctest::Approx(0.87).epsilon(0.006));
  CHECK(fus::mcdonald_omega({0.0, 0.0, 0.0}) == doctest::Approx(0.0));
  CHECK(fus::mcdonald_omega({1.0, 1.0}) == doctest::Approx(1.0));
  CHECK_THROWS(fus::mcdonald_omega({}));
  CHECK_THROWS(fus::mcdonald_omega({1.2}));

  // explicit uniquenesses override the 1 - lambda^2 default
  double with_default = fus::mcdonald_omega({0.8, 0.8});
  double with_explicit = fus::mcdonald_omega({0.8, 0.8}, {0.36, 0.36});
  CHECK(with_default == doctest::Approx(with_explicit));
  CHECK(fus::mcdonald_omega({0.8, 0.8}, {0.1, 0.1}) > with_default);
  CHECK_THROWS(fus::mcdonald_omega({0.8, 0.8}, {0.1}));
}

TEST_CASE("omega is sign invariant and monotone in loading magnitude") {
  double base = fus::mcdonald_omega({0.6, 0.7, 0.8});
  CHECK(fus::mcdonald_omega({-0.6, -0.7, -0.8}) == doctest::Approx(base));
  CHECK(fus::mcdonald_omega({0.6, 0.7, 0.9}) > base);
  CHECK(fus::mcdonald_omega({0.65, 0.7, 0.8}) > base);
}

TEST_CASE("average variance extracted") {
  CHECK(fus::ave({1.0, 1.0, 1.0}) == doctest::Approx(1.0));
  CHECK(fus::ave({0.63, 0.66, 0.85, 0.83, 0.78}) == doctest::Approx(0.57).epsilon(0.02));
  CHECK(fus::ave({-0.5, 0.5}) == doctest::Approx(0.25));
  CHECK_THROWS(fus::ave({}));
}

TEST_CASE("standardized alpha closed forms") {
  fus::CorrelationMatrix R;
  R.values = Eigen::MatrixXd::Constant(3, 3, 0.5);
  R.values.diagonal().setOnes();
  CHECK(fus::cronbach_alpha(R) == doctest::Approx(0.75));

  R.values = Eigen::MatrixXd::Identity(3, 3);
  CHECK(fus::cronbach_alpha(R) == doctest::Approx(0.0));

  fus::CorrelationMatrix one;
  one.values = Eigen::MatrixXd::Identity(1, 1);
  CHECK_THROWS(fus::cronbach_alpha(one));
}

TEST_CASE("alpha of the final numerical second-factor block") {
  fus::CorrelationMatrix R = fus::load_correlation_csv(kDataDir + "/corr_final_numerical.csv");
  fus::CorrelationMatrix block = R.restrict({5, 6, 7});
  double rbar = (block.values(0, 1) + block.values(0, 2) + block.values(1, 2)) / 3.0;
  double expected = 3.0 * rbar / (1.0 + 2.0 * rbar);
  CHECK(fus::cronbach_alpha(block) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fus::cronbach_alpha(block) == doctest::Approx(0.876).epsilon(0.01));
}

TEST_CASE("feature scores from trivial response patterns") {
  auto instrument = fus::builtin_numerical_instrument();
  std::vector<fus::RatingRecord> records;
  records.push_back(make_record("r1", "ceiling", std::vector<int>(8, 5)));
  records.push_back(make_record("r2", "ceiling", std::vector<int>(8, 5)));
  records.push_back(make_record("r3", "mixed", std::vector<int>(8, 1)));
  records.push_back(make_record("r4", "mixed", std::vector<int>(8, 5)));

  auto scores = fus::score_features(records, instrument);
  REQUIRE(scores.size() == 2);
  for (const auto& s : scores) {
    if (s.feature_id == "ceiling") {
      CHECK(s.overall == doctest::Approx(5.0));
      CHECK(s.subscale_means.at("understanding_measurement") == doctest::Approx(5.0));
      CHECK(s.subscale_means.at("feature_outcome") == doctest::Approx(5.0));
      CHECK(s.n_ratings == 2);
    } else {
      CHECK(s.overall == doctest::Approx(3.0));
    }
  }

  // incomplete records are skipped rather than biasing the mean
  fus::RatingRecord partial = make_record("r5", "ceiling", std::vector<int>(8, 1));
  partial.responses.erase(8);
  records.push_back(partial);
  auto scores2 = fus::score_features(records, instrument);
  for (const auto& s : scores2)
    if (s.feature_id == "ceiling") CHECK(s.overall == doctest::Approx(5.0));

  // rater and item order do not matter
  std::vector<fus::RatingRecord> shuffled = {records[3], records[0], records[2], records[1]};
  auto scores3 = fus::score_features(shuffled, instrument);
  CHECK(scores3.size() == 2);
  for (std::size_t i = 0; i < scores3.size(); ++i)
    CHECK(scores3[i].overall == doctest::Approx(scores.at(i).overall));
}

TEST_CASE("ranking is a deterministic total order with lexicographic ties") {
  std::vector<fus::UnderstandabilityScore> scores(3);
  scores[0].feature_id = "a";
  scores[0].overall = 4.2;
  scores[1].feature_id = "b";
  scores[1].overall = 3.1;
  scores[2].feature_id = "c";
  scores[2].overall = 4.9;
  auto ranked = fus::rank_features(scores);
  CHECK(ranked[0].feature_id == "c");
  CHECK(ranked[0].rank == 1);
  CHECK(ranked[1].feature_id == "a");
  CHECK(ranked[2].feature_id == "b");
  CHECK(ranked[2].rank == 3);

  // tie broken by id, input order irrelevant, idempotent
  std::vector<fus::UnderstandabilityScore> tie(2);
  tie[0].feature_id = "debt";
  tie[0].overall = 4.0;
  tie[1].feature_id = "bmi";
  tie[1].overall = 4.0;
  auto t1 = fus::rank_features(tie);
  std::swap(tie[0], tie[1]);
  auto t2 = fus::rank_features(tie);
  CHECK(t1[0].feature_id == "bmi");
  CHECK(t2[0].feature_id == "bmi");
  auto t3 = fus::rank_features(t1);
  CHECK(t3[0].feature_id == "bmi");
  CHECK(t3[0].rank == 1);

  CHECK_THROWS(fus::rank_features({}));
}

TEST_CASE("scores CSV export") {
  auto instrument = fus::builtin_numerical_instrument();
  std::vector<fus::RatingRecord> records;
  records.push_back(make_record("r1", "bmi", std::vector<int>(8, 4)));
  auto ranked = fus::rank_features(fus::score_features(records, instrument));
  std::stringstream out;
  fus::save_scores_csv(ranked, instrument, out);
  CHECK(out.str() ==
        "feature_id,understanding_measurement,feature_outcome,overall,n_ratings,rank\n"
        "bmi,4,4,4,1,1\n");

  // empty score list yields header only
  std::stringstream empty;
  fus::save_scores_csv({}, instrument, empty);
  CHECK(empty.str() ==
        "feature_id,understanding_measurement,feature_outcome,overall,n_ratings,rank\n");
}
