#include "tokendrive/eval/replay.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tokendrive::eval {

namespace {

std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* event_color(sim::InfractionKind k) {
  switch (k) {
    case sim::InfractionKind::collision_pedestrian: return "#d62728";
    case sim::InfractionKind::collision_vehicle: return "#ff7f0e";
    case sim::InfractionKind::collision_static: return "#8c564b";
    case sim::InfractionKind::red_light: return "#e377c2";
    case sim::InfractionKind::route_deviation: return "#9467bd";
    case sim::InfractionKind::timeout: return "#7f7f7f";
  }
  return "#000000";
}

}  // namespace

std::string trace_to_svg(const sim::Trace& trace) {
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  bool first = true;
  auto extend = [&](double x, double y) {
    if (first) {
      min_x = max_x = x;
      min_y = max_y = y;
      first = false;
      return;
    }
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (const auto& g : trace.goals) extend(g.x, g.y);
  for (const auto& r : trace.records) extend(r.ego.x, r.ego.y);
  const double pad = 8.0;
  min_x -= pad;
  min_y -= pad;
  max_x += pad;
  max_y += pad;
  const double scale = 4.0;
  const double width = (max_x - min_x) * scale;
  const double height = (max_y - min_y) * scale;
  auto px = [&](double x) { return (x - min_x) * scale; };
  // flip the y axis so north is up
  auto py = [&](double y) { return height - (y - min_y) * scale; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f2(width) << "\" height=\""
      << f2(height) << "\" viewBox=\"0 0 " << f2(width) << ' ' << f2(height) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#fafafa\"/>\n";

  out << "<polyline fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"" << f2(3.5 * scale)
      << "\" stroke-linecap=\"round\" stroke-linejoin=\"round\" points=\"";
  for (size_t i = 0; i < trace.goals.size(); ++i) {
    if (i) out << ' ';
    out << f2(px(trace.goals[i].x)) << ',' << f2(py(trace.goals[i].y));
  }
  out << "\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"4,4\""
      << " points=\"";
  for (size_t i = 0; i < trace.goals.size(); ++i) {
    if (i) out << ' ';
    out << f2(px(trace.goals[i].x)) << ',' << f2(py(trace.goals[i].y));
  }
  out << "\"/>\n";

  if (!trace.records.empty()) {
    out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < trace.records.size(); ++i) {
      if (i) out << ' ';
      out << f2(px(trace.records[i].ego.x)) << ',' << f2(py(trace.records[i].ego.y));
    }
    out << "\"/>\n";
  }

  if (!trace.goals.empty()) {
    out << "<circle cx=\"" << f2(px(trace.goals.front().x)) << "\" cy=\""
        << f2(py(trace.goals.front().y)) << "\" r=\"5\" fill=\"#2ca02c\"/>\n";
    out << "<circle cx=\"" << f2(px(trace.goals.back().x)) << "\" cy=\""
        << f2(py(trace.goals.back().y)) << "\" r=\"5\" fill=\"#111111\"/>\n";
  }
  for (const auto& r : trace.records) {
    for (const auto& e : r.events) {
      out << "<circle cx=\"" << f2(px(e.position.x)) << "\" cy=\"" << f2(py(e.position.y))
          << "\" r=\"4\" fill=\"" << event_color(e.kind) << "\"><title>"
          << sim::infraction_name(e.kind) << " @ tick " << e.tick << "</title></circle>\n";
    }
  }
  out << "<text x=\"6\" y=\"14\" font-family=\"monospace\" font-size=\"11\">route "
      << trace.route_id << " ticks " << trace.records.size() << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string trace_to_csv(const sim::Trace& trace) {
  std::ostringstream out;
  out << "tick,x,y,heading,speed,steer,throttle,brake,source,queries,progress,events\n";
  char buf[200];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,", r.tick, r.ego.x,
                  r.ego.y, r.ego.heading, r.speed, r.control.steer, r.control.throttle,
                  r.control.brake);
    out << buf << r.source << ',' << r.queries_used << ',';
    std::snprintf(buf, sizeof buf, "%.6f,", r.progress);
    out << buf;
    for (size_t i = 0; i < r.events.size(); ++i) {
      if (i) out << ';';
      out << sim::infraction_name(r.events[i].kind);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace tokendrive::eval
