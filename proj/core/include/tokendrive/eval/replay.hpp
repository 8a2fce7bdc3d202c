#pragma once

#include <string>

#include "tokendrive/sim/trace.hpp"

namespace tokendrive::eval {

// Top-down plot of a recorded run: route centerline, ego path, infraction
// markers. Output bytes are deterministic for a given trace.
std::string trace_to_svg(const sim::Trace& trace);

// Flat per-tick table for external plotting.
std::string trace_to_csv(const sim::Trace& trace);

}  // namespace tokendrive::eval
