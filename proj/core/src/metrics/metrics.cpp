#include "tokendrive/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tokendrive::metrics {

double route_completion(std::span<const RouteResult> results) {
  if (results.empty()) throw EmptyInput("route_completion: no results");
  double sum = 0.0;
  for (const auto& r : results) sum += r.completion;
  return 100.0 * sum / static_cast<double>(results.size());
}

double infraction_score(std::span<const sim::InfractionEvent> events,
                        const PenaltyCoefficients& coeffs) {
  double score = 1.0;
  for (const auto& e : events) {
    switch (e.kind) {
      case sim::InfractionKind::collision_pedestrian: score *= coeffs.collision_pedestrian; break;
      case sim::InfractionKind::collision_vehicle: score *= coeffs.collision_vehicle; break;
      case sim::InfractionKind::collision_static: score *= coeffs.collision_static; break;
      case sim::InfractionKind::red_light: score *= coeffs.red_light; break;
      case sim::InfractionKind::route_deviation:
      case sim::InfractionKind::timeout:
        break;  // terminate the route; no multiplicative penalty
    }
  }
  return score;
}

double driving_score(std::span<const double> completions, std::span<const double> scores) {
  if (completions.size() != scores.size())
    throw LengthMismatch("driving_score: list lengths differ");
  if (completions.empty()) throw EmptyInput("driving_score: no routes");
  double sum = 0.0;
  for (size_t i = 0; i < completions.size(); ++i) sum += 100.0 * completions[i] * scores[i];
  return sum / static_cast<double>(completions.size());
}

RunAggregate aggregate_run(std::span<const RouteResult> results,
                           const PenaltyCoefficients& coeffs) {
  RunAggregate agg;
  agg.rc = route_completion(results);
  std::vector<double> r_i, is_i;
  for (const auto& r : results) {
    r_i.push_back(r.completion);
    is_i.push_back(infraction_score(r.infractions, coeffs));
  }
  double is_sum = 0.0;
  for (double v : is_i) is_sum += v;
  agg.is = is_sum / static_cast<double>(is_i.size());
  agg.ds = driving_score(r_i, is_i);
  return agg;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) throw EmptyInput("mean_std: no values");
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

namespace {

std::vector<double> per_run(const EvaluationReport& rep, double RunAggregate::*field) {
  std::vector<double> out;
  for (const auto& run : rep.runs) out.push_back(aggregate_run(run, rep.coeffs).*field);
  return out;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MeanStd EvaluationReport::rc() const { return mean_std(per_run(*this, &RunAggregate::rc)); }
MeanStd EvaluationReport::is() const { return mean_std(per_run(*this, &RunAggregate::is)); }
MeanStd EvaluationReport::ds() const { return mean_std(per_run(*this, &RunAggregate::ds)); }

std::string EvaluationReport::to_string() const {
  std::ostringstream out;
  out << "tokendrive-report v1\n";
  out << "mode " << mode << " seed " << seed << " runs " << runs.size() << "\n";
  out << "coeffs pedestrian " << fmt(coeffs.collision_pedestrian) << " vehicle "
      << fmt(coeffs.collision_vehicle) << " static " << fmt(coeffs.collision_static)
      << " red_light " << fmt(coeffs.red_light) << "\n";
  out << "fields run route route_id completion infraction_score driving_score ticks events\n";
  for (size_t run = 0; run < runs.size(); ++run) {
    for (size_t i = 0; i < runs[run].size(); ++i) {
      const RouteResult& r = runs[run][i];
      const double is_i = infraction_score(r.infractions, coeffs);
      out << "route " << run << ' ' << i << ' ' << r.route_id << ' ' << fmt(r.completion) << ' '
          << fmt(is_i) << ' ' << fmt(100.0 * r.completion * is_i) << ' ' << r.ticks_used << ' ';
      if (r.infractions.empty()) {
        out << '-';
      } else {
        for (size_t e = 0; e < r.infractions.size(); ++e) {
          if (e) out << ';';
          out << sim::infraction_name(r.infractions[e].kind);
        }
      }
      out << "\n";
    }
  }
  const MeanStd rc_v = rc(), is_v = is(), ds_v = ds();
  out << "aggregate RC " << fmt(rc_v.mean) << " +/- " << fmt(rc_v.std) << "\n";
  out << "aggregate IS " << fmt(is_v.mean) << " +/- " << fmt(is_v.std) << "\n";
  out << "aggregate DS " << fmt(ds_v.mean) << " +/- " << fmt(ds_v.std) << "\n";
  return out.str();
}

void save_report(const EvaluationReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << report.to_string();
}

}  // namespace tokendrive::metrics
