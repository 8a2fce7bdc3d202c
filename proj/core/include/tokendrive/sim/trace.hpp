#pragma once

#include <string>
#include <vector>

#include "tokendrive/sim/world.hpp"

namespace tokendrive::sim {

// One line per tick of a driving run. Doubles are written with %.17g so the
// file round-trips bit-exactly; field order is documented in docs/formats.md.
struct TraceRecord {
  long tick = 0;
  Pose ego;
  double speed = 0.0;
  Control control;
  std::string source = "expert";  // which arbitration path produced the control
  int queries_used = 0;
  double progress = 0.0;
  std::vector<InfractionEvent> events;
};

struct Trace {
  std::string route_id;
  std::vector<Vec2> goals;
  std::vector<TraceRecord> records;
};

std::string trace_to_string(const Trace& trace);
void save_trace(const Trace& trace, const std::string& path);
Trace load_trace(const std::string& path);

}  // namespace tokendrive::sim
