#include "tokendrive/lang/parse.hpp"

#include <charconv>
#include <regex>

namespace tokendrive::lang {

const char* parse_error_name(ParseError e) {
  switch (e) {
    case ParseError::none: return "none";
    case ParseError::missing_waypoints: return "missing_waypoints";
    case ParseError::wrong_waypoint_count: return "wrong_waypoint_count";
    case ParseError::missing_control: return "missing_control";
    case ParseError::malformed_number: return "malformed_number";
  }
  return "unknown";
}

namespace {

constexpr size_t kWaypointWindow = 2048;
constexpr size_t kControlWindow = 512;

// Strict full-string double parse.
std::optional<double> parse_double(std::string_view s) {
  if (s.empty() || s.size() > 48) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// The documented extraction patterns (docs/grammar.md).
const std::regex& pair_pattern() {
  static const std::regex re(R"(\(([^()]{0,64})\))");
  return re;
}

std::optional<std::string> find_field(const std::string& window, const char* name) {
  const std::regex re(std::string(name) + R"(=([^\s]{1,48}))");
  std::smatch m;
  if (!std::regex_search(window, m, re)) return std::nullopt;
  return m[1].str();
}

}  // namespace

ParseResult parse_action(const std::string& text, const Vocab& vocab) {
  ParseResult out;

  const size_t wp_anchor = text.rfind("WAYPOINTS:");
  if (wp_anchor == std::string::npos) {
    out.error = ParseError::missing_waypoints;
    return out;
  }
  size_t wp_end = text.find("CONTROL:", wp_anchor);
  if (wp_end == std::string::npos) wp_end = text.size();
  wp_end = std::min(wp_end, wp_anchor + kWaypointWindow);
  const std::string wp_window = text.substr(wp_anchor + 10, wp_end - wp_anchor - 10);

  std::vector<Vec2> points;
  for (auto it = std::sregex_iterator(wp_window.begin(), wp_window.end(), pair_pattern());
       it != std::sregex_iterator(); ++it) {
    const std::string inner = (*it)[1].str();
    const size_t comma = inner.find(',');
    if (comma == std::string::npos || inner.find(',', comma + 1) != std::string::npos) {
      out.error = ParseError::malformed_number;
      return out;
    }
    const auto x = parse_double(trimmed(std::string_view(inner).substr(0, comma)));
    const auto y = parse_double(trimmed(std::string_view(inner).substr(comma + 1)));
    if (!x || !y) {
      out.error = ParseError::malformed_number;
      return out;
    }
    points.push_back({*x, *y});
  }
  if (points.empty()) {
    out.error = ParseError::missing_waypoints;
    return out;
  }
  if (points.size() != 4) {
    out.error = ParseError::wrong_waypoint_count;
    return out;
  }

  const size_t ctl_anchor = text.rfind("CONTROL:");
  if (ctl_anchor == std::string::npos || ctl_anchor < wp_anchor) {
    out.error = ParseError::missing_control;
    return out;
  }
  const std::string ctl_window =
      text.substr(ctl_anchor, std::min(kControlWindow, text.size() - ctl_anchor));
  const auto steer_s = find_field(ctl_window, "steer");
  const auto throttle_s = find_field(ctl_window, "throttle");
  const auto brake_s = find_field(ctl_window, "brake");
  if (!steer_s || !throttle_s || !brake_s) {
    out.error = ParseError::missing_control;
    return out;
  }
  const auto steer = parse_double(*steer_s);
  const auto throttle = parse_double(*throttle_s);
  const auto brake = parse_double(*brake_s);
  if (!steer || !throttle || !brake) {
    out.error = ParseError::malformed_number;
    return out;
  }

  for (int i = 0; i < 4; ++i) {
    const auto qx = vocab.quantize(points[i].x, Field::wp);
    const auto qy = vocab.quantize(points[i].y, Field::wp);
    out.clamped |= qx.clamped || qy.clamped;
    out.action.waypoints[i] = {qx.value, qy.value};
  }
  const auto qs = vocab.quantize(*steer, Field::steer);
  const auto qt = vocab.quantize(*throttle, Field::throttle);
  const auto qb = vocab.quantize(*brake, Field::brake);
  out.clamped |= qs.clamped || qt.clamped || qb.clamped;
  out.action.control = {qs.value, qt.value, qb.value};
  return out;
}

std::optional<double> parse_status_speed(const std::string& text) {
  static const std::regex re(R"(speed=([0-9][^\s]{0,16}))");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return parse_double(m[1].str());
}

std::optional<double> parse_hazard_dist(const std::string& text) {
  static const std::regex re(R"(hazard_dist=(inf|[0-9][^\s]{0,16}))");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  if (m[1].str() == "inf") return std::numeric_limits<double>::infinity();
  return parse_double(m[1].str());
}

}  // namespace tokendrive::lang
