#include <doctest.h>

#include "tokendrive/metrics/metrics.hpp"

using namespace tokendrive;

namespace {

sim::InfractionEvent ev(sim::InfractionKind k) { return {k, 0, {0, 0}}; }

metrics::RouteResult result(double completion, std::vector<sim::InfractionKind> kinds = {}) {
  metrics::RouteResult r;
  r.completion = completion;
  for (auto k : kinds) r.infractions.push_back(ev(k));
  return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("route completion") {
  CHECK(metrics::route_completion(std::vector<metrics::RouteResult>{result(1.0), result(1.0)}) ==
        doctest::Approx(100.0));
  CHECK(metrics::route_completion(std::vector<metrics::RouteResult>{result(0.5), result(1.0)}) ==
        doctest::Approx(75.0));
  CHECK_THROWS_AS(metrics::route_completion(std::vector<metrics::RouteResult>{}),
                  metrics::EmptyInput);
}

TEST_CASE("infraction score products") {
  const metrics::PenaltyCoefficients coeffs;
  CHECK(metrics::infraction_score(std::vector<sim::InfractionEvent>{}, coeffs) == 1.0);
  CHECK(metrics::infraction_score(
            std::vector<sim::InfractionEvent>{ev(sim::InfractionKind::red_light),
                                              ev(sim::InfractionKind::collision_vehicle)},
            coeffs) == doctest::Approx(0.42));
  // deviation and timeout terminate the route, they do not multiply
  CHECK(metrics::infraction_score(
            std::vector<sim::InfractionEvent>{ev(sim::InfractionKind::route_deviation),
                                              ev(sim::InfractionKind::timeout)},
            coeffs) == 1.0);
}

TEST_CASE("infraction score is permutation invariant and multiplicative") {
  const metrics::PenaltyCoefficients coeffs;
  const std::vector<sim::InfractionEvent> a{ev(sim::InfractionKind::collision_pedestrian),
                                            ev(sim::InfractionKind::red_light)};
  const std::vector<sim::InfractionEvent> b{ev(sim::InfractionKind::collision_static)};
  std::vector<sim::InfractionEvent> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  std::vector<sim::InfractionEvent> ba = b;
  ba.insert(ba.end(), a.begin(), a.end());
  const double sa = metrics::infraction_score(a, coeffs);
  const double sb = metrics::infraction_score(b, coeffs);
  CHECK(metrics::infraction_score(ab, coeffs) == doctest::Approx(sa * sb).epsilon(1e-12));
  CHECK(metrics::infraction_score(ab, coeffs) ==
        doctest::Approx(metrics::infraction_score(ba, coeffs)).epsilon(1e-12));
}

TEST_CASE("driving score") {
  CHECK(metrics::driving_score(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0}) ==
        doctest::Approx(100.0));
  CHECK(metrics::driving_score(std::vector<double>{0.9}, std::vector<double>{0.5}) ==
        doctest::Approx(45.0));
  CHECK_THROWS_AS(
      metrics::driving_score(std::vector<double>{1.0}, std::vector<double>{1.0, 0.5}),
      metrics::LengthMismatch);
}

TEST_CASE("DS is bounded by 100 RC pointwise") {
  const metrics::PenaltyCoefficients coeffs;
  std::vector<metrics::RouteResult> results{
      result(0.8, {sim::InfractionKind::red_light}),
      result(0.6, {sim::InfractionKind::collision_pedestrian, sim::InfractionKind::red_light}),
      result(1.0)};
  const auto agg = metrics::aggregate_run(results, coeffs);
  CHECK(agg.ds <= agg.rc + 1e-12);
}

TEST_CASE("mean and sample standard deviation match a hand oracle") {
  const std::vector<double> vals{40.0, 50.0, 60.0};
  const auto ms = metrics::mean_std(vals);
  CHECK(ms.mean == doctest::Approx(50.0));
  CHECK(ms.std == doctest::Approx(10.0));  // sqrt(((-10)^2 + 0 + 10^2) / 2)
  const auto single = metrics::mean_std(std::vector<double>{42.0});
  CHECK(single.mean == doctest::Approx(42.0));
  CHECK(single.std == 0.0);
}

TEST_CASE("report aggregates and stable field order") {
  metrics::EvaluationReport rep;
  rep.mode = "drive";
  rep.seed = 7;
  rep.runs = {{result(1.0), result(0.5, {sim::InfractionKind::red_light})},
              {result(0.8), result(0.7)}};
  const auto rc = rep.rc();
  CHECK(rc.mean == doctest::Approx(75.0));  // run means 75 and 75
  const std::string text = rep.to_string();
  CHECK(text.find("tokendrive-report v1") == 0);
  CHECK(text.find("aggregate RC") != std::string::npos);
  CHECK(text.find("aggregate DS") != std::string::npos);
  CHECK(rep.to_string() == text);  // stable
}

}  // TEST_SUITE
