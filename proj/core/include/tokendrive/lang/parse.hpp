#pragma once

#include <optional>
#include <string>

#include "tokendrive/lang/grammar.hpp"
#include "tokendrive/types.hpp"

namespace tokendrive::lang {

enum class ParseError {
  none,
  missing_waypoints,
  wrong_waypoint_count,
  missing_control,
  malformed_number,
};

const char* parse_error_name(ParseError e);

struct ParseResult {
  ParseError error = ParseError::none;
  bool clamped = false;  // some value was outside its grid and got saturated
  ActionBundle action;

  bool ok() const { return error == ParseError::none; }
};

// Extracts the waypoint and control groups from free text via the documented
// regular expressions (docs/grammar.md). Accepts arbitrary bytes and never
// throws; every failure maps to a named error. Values are snapped to the
// grammar grids, out-of-range controls are clamped and flagged.
ParseResult parse_action(const std::string& text, const Vocab& vocab);

// Reward-context helpers: first `speed=` value and the `hazard_dist=` value
// (infinity for "inf") found in a sentence.
std::optional<double> parse_status_speed(const std::string& text);
std::optional<double> parse_hazard_dist(const std::string& text);

}  // namespace tokendrive::lang
