#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokendrive/sim/world.hpp"

namespace tokendrive::metrics {

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multiplicative per-infraction penalty coefficients (CARLA leaderboard
// convention). route_deviation and timeout terminate the route instead of
// multiplying the score.
struct PenaltyCoefficients {
  double collision_pedestrian = 0.50;
  double collision_vehicle = 0.60;
  double collision_static = 0.65;
  double red_light = 0.70;
};

struct RouteResult {
  std::string route_id;
  double completion = 0.0;  // final route_progress of the trace, in [0, 1]
  std::vector<sim::InfractionEvent> infractions;
  long ticks_used = 0;
};

// RC = 100 * mean completion. Throws EmptyInput.
double route_completion(std::span<const RouteResult> results);

// Product of penalty coefficients over qualifying events; 1.0 when clean.
double infraction_score(std::span<const sim::InfractionEvent> events,
                        const PenaltyCoefficients& coeffs);

// Mean over routes of 100 * R_i * IS_i. Throws LengthMismatch.
double driving_score(std::span<const double> completions, std::span<const double> scores);

struct RunAggregate {
  double rc = 0.0, is = 0.0, ds = 0.0;
};

RunAggregate aggregate_run(std::span<const RouteResult> results, const PenaltyCoefficients& coeffs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single run
};

MeanStd mean_std(std::span<const double> values);

struct EvaluationReport {
  std::string mode;
  uint64_t seed = 0;
  PenaltyCoefficients coeffs;
  std::vector<std::vector<RouteResult>> runs;  // [run][route]

  MeanStd rc() const;
  MeanStd is() const;
  MeanStd ds() const;
  std::string to_string() const;  // stable field order, diffable
};

void save_report(const EvaluationReport& report, const std::string& path);

}  // namespace tokendrive::metrics
