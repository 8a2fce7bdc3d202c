#include "tokendrive/sim/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tokendrive::sim {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string trace_to_string(const Trace& trace) {
  std::ostringstream out;
  out << "tokendrive-trace v1\n";
  out << "route " << trace.route_id << " goals " << trace.goals.size();
  for (const auto& g : trace.goals) out << ' ' << fmt_double(g.x) << ' ' << fmt_double(g.y);
  out << '\n';
  out << "fields tick x y heading speed steer throttle brake source queries progress events\n";
  for (const auto& r : trace.records) {
    out << r.tick << ' ' << fmt_double(r.ego.x) << ' ' << fmt_double(r.ego.y) << ' '
        << fmt_double(r.ego.heading) << ' ' << fmt_double(r.speed) << ' '
        << fmt_double(r.control.steer) << ' ' << fmt_double(r.control.throttle) << ' '
        << fmt_double(r.control.brake) << ' ' << r.source << ' ' << r.queries_used << ' '
        << fmt_double(r.progress) << ' ';
    if (r.events.empty()) {
      out << '-';
    } else {
      for (size_t i = 0; i < r.events.size(); ++i) {
        if (i) out << ';';
        out << infraction_name(r.events[i].kind) << '@' << fmt_double(r.events[i].position.x)
            << ',' << fmt_double(r.events[i].position.y);
      }
    }
    out << '\n';
  }
  return out.str();
}

void save_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << trace_to_string(trace);
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  Trace trace;
  std::string line;
  if (!std::getline(in, line) || line != "tokendrive-trace v1")
    throw std::runtime_error("bad trace header: " + path);
  if (!std::getline(in, line)) throw std::runtime_error("truncated trace: " + path);
  {
    std::istringstream ls(line);
    std::string kw, goals_kw;
    size_t n = 0;
    ls >> kw >> trace.route_id >> goals_kw >> n;
    if (kw != "route" || goals_kw != "goals") throw std::runtime_error("bad trace route line");
    for (size_t i = 0; i < n; ++i) {
      Vec2 g;
      ls >> g.x >> g.y;
      trace.goals.push_back(g);
    }
  }
  std::getline(in, line);  // fields line
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TraceRecord r;
    std::string events;
    ls >> r.tick >> r.ego.x >> r.ego.y >> r.ego.heading >> r.speed >> r.control.steer >>
        r.control.throttle >> r.control.brake >> r.source >> r.queries_used >> r.progress >>
        events;
    if (!ls && events.empty()) throw std::runtime_error("bad trace record: " + line);
    if (events != "-") {
      std::istringstream es(events);
      std::string item;
      while (std::getline(es, item, ';')) {
        const auto at = item.find('@');
        const auto comma = item.find(',', at);
        if (at == std::string::npos || comma == std::string::npos) continue;
        InfractionEvent e{};
        const auto kind = infraction_from_name(item.substr(0, at));
        if (!kind) continue;
        e.kind = *kind;
        e.tick = r.tick;
        e.position.x = std::stod(item.substr(at + 1, comma - at - 1));
        e.position.y = std::stod(item.substr(comma + 1));
        r.events.push_back(e);
      }
    }
    trace.records.push_back(std::move(r));
  }
  return trace;
}

}  // namespace tokendrive::sim
