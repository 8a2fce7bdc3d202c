#include "tokendrive/expert/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "tokendrive/lang/parse.hpp"

namespace tokendrive::expert {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<float> to_f32(const Tensor3& t) {
  std::vector<float> out(t.a.size());
  for (size_t i = 0; i < t.a.size(); ++i) out[i] = static_cast<float>(t.a[i]);
  return out;
}

Vec2 rotate_vec(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {v.x * c - v.y * s, v.x * s + v.y * c};
}

// Nearest-neighbour rotation of an ego-centered grid about its center.
Tensor3 rotate_bev_grid(const Tensor3& in, double angle, double extent) {
  Tensor3 out(in.h, in.w, in.c);
  const double cell_h = extent / in.h;
  const double cell_w = extent / in.w;
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < in.w; ++c) {
      const double y = extent * 0.5 - (r + 0.5) * cell_h;  // forward
      const double x = extent * 0.5 - (c + 0.5) * cell_w;  // lateral-left
      const Vec2 src = rotate_vec({x, y}, -angle);
      const int sr = static_cast<int>(std::floor((extent * 0.5 - src.y) / cell_h));
      const int sc = static_cast<int>(std::floor((extent * 0.5 - src.x) / cell_w));
      if (sr < 0 || sr >= in.h || sc < 0 || sc >= in.w) continue;
      for (int ch = 0; ch < in.c; ++ch) out.at(r, c, ch) = in.at(sr, sc, ch);
    }
  }
  return out;
}

struct PendingRecord {
  CorpusRecord rec;
  std::vector<float> cam, bev;
};

struct RouteBuffer {
  std::vector<PendingRecord> records;
  long expert_infractions = 0;
};

RouteBuffer collect_route(int route_index, const RouteScenario& rs,
                          const sim::WorldConfig& base_config, const ExpertConfig& expert_cfg,
                          const CollectConfig& cc, const lang::Vocab& vocab, uint64_t seed) {
  RouteBuffer buf;
  sim::WorldConfig config = base_config;
  config.scenario = rs.scenario;
  const uint64_t world_seed = Rng(seed).fork(route_index).next_u64();
  sim::WorldState state = sim::create_world(config, rs.route, world_seed);
  Control last_control;
  sim::ObservationFrame frame = sim::observe(state, rs.route, config, last_control);
  const long max_ticks = sim::timeout_ticks(config, rs.route);

  for (long tick = 0; tick < max_ticks; ++tick) {
    const double remaining = rs.route.length - sim::project(rs.route, state.ego.position()).s;
    if (remaining < cc.done_remaining) break;

    const ActionBundle raw = expert_control(state, rs.route, config, expert_cfg);

    if (tick % cc.stride == 0) {
      Rng rec_rng = Rng(seed).fork(static_cast<uint64_t>(route_index) * 0x100000ull +
                                   static_cast<uint64_t>(tick));
      PerceptionDescription desc = sim::describe_scene(state, rs.route, config);
      ActionBundle expert_q = lang::quantize_bundle(raw, vocab);
      Tensor3 bev = frame.bev_grid;

      if (cc.rotate_bev) {
        const double angle = rec_rng.uniform(-20.0, 20.0) * 3.14159265358979323846 / 180.0;
        bev = rotate_bev_grid(bev, angle, config.sensors.bev_extent);
        ActionBundle rotated = raw;
        for (auto& wp : rotated.waypoints) wp = rotate_vec(wp, angle);
        expert_q = lang::quantize_bundle(rotated, vocab);
        for (auto& v : desc.vehicles) v.rel = rotate_vec(v.rel, angle);
      }

      const bool has_model = rec_rng.uniform() < cc.model_action_fraction;
      CorpusRecord rec;
      rec.route_index = route_index;
      rec.tick = tick;
      rec.status = frame.status;
      rec.hazard_dist = desc.hazard_dist;
      rec.expert_action = expert_q;
      rec.expert_text = lang::action_to_text(expert_q, vocab);

      lang::TaskCommand task;
      if (has_model) {
        const ActionBundle model_q = lang::quantize_bundle(
            scripted_model_action(expert_q, desc.hazard_dist, rec_rng, cc.scripted), vocab);
        rec.model_action = model_q;
        rec.model_text = lang::action_to_text(model_q, vocab);
        rec.uncertainty_label = label_uncertainty(model_q, expert_q, cc.thresholds);
        rec.task_mode = rec_rng.uniform() < cc.mode2_rate ? 2 : 3;
        task.model_action = model_q;
        if (rec.task_mode == 2) {
          task.mode = lang::TaskMode::REQUERY;
          ctrl::PidPair pid;
          const auto derived =
              ctrl::waypoints_to_control(model_q.waypoints, frame.status, pid, cc.control);
          const auto report = ctrl::conflict(model_q.control, derived.control, cc.tau_c);
          task.conflict = lang::ConflictInfo{
              report.steer_delta,
              report.longitudinal == ctrl::LongitudinalDisagreement::throttle_vs_brake};
        } else {
          task.mode = lang::TaskMode::CORRECT;
        }
      } else {
        rec.task_mode = 1;
        rec.model_text = "-";
        task.mode = lang::TaskMode::DRIVE;
      }

      rec.prompt_text = lang::serialize_prompt(cc.obs_tokens, frame.status, task, vocab).text;
      rec.supervision_text = lang::serialize_supervision(desc, expert_q, vocab).text;

      PendingRecord pending;
      pending.rec = std::move(rec);
      pending.cam = to_f32(frame.camera_grid);
      pending.bev = to_f32(bev);
      buf.records.push_back(std::move(pending));
    }

    const sim::StepResult sr = sim::step(state, rs.route, config, raw.control, config.dt);
    state = sr.state;
    frame = sr.frame;
    last_control = raw.control;
    buf.expert_infractions += static_cast<long>(sr.events.size());
    bool timed_out = false;
    for (const auto& e : sr.events)
      if (e.kind == sim::InfractionKind::timeout) timed_out = true;
    if (timed_out) break;
  }
  return buf;
}

}  // namespace

CollectSummary collect_corpus(const std::vector<RouteScenario>& routes,
                              const sim::WorldConfig& base_config, const ExpertConfig& expert_cfg,
                              const CollectConfig& collect_cfg, const lang::Vocab& vocab,
                              uint64_t seed, const std::string& out_path, int threads) {
  std::vector<RouteBuffer> buffers(routes.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= routes.size()) return;
      buffers[i] = collect_route(static_cast<int>(i), routes[i], base_config, expert_cfg,
                                 collect_cfg, vocab, seed);
    }
  };
  const int n_threads = std::max(1, threads);
  if (n_threads > 1 && routes.size() > 1) {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    worker();
  }

  const std::string blob_path = out_path + ".bin";
  std::ofstream txt(out_path, std::ios::binary);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!txt || !blob) throw CorpusWriteError("cannot open corpus output: " + out_path);

  const auto& sc = base_config.sensors;
  txt << "tokendrive-corpus v1\n";
  txt << "tensors " << std::filesystem::path(blob_path).filename().string() << " cam " << sc.cam_h
      << ' ' << sc.cam_w << ' ' << sc.cam_c << " bev " << sc.bev_h << ' ' << sc.bev_w << ' '
      << sc.bev_c << " dtype f32\n";

  CollectSummary summary;
  uint64_t offset = 0;
  long frame_id = 0;
  for (auto& buf : buffers) {
    summary.expert_infractions += buf.expert_infractions;
    for (auto& p : buf.records) {
      CorpusRecord& r = p.rec;
      r.frame_id = frame_id++;
      r.cam_offset = offset;
      r.cam_count = p.cam.size();
      blob.write(reinterpret_cast<const char*>(p.cam.data()),
                 static_cast<std::streamsize>(p.cam.size() * sizeof(float)));
      offset += p.cam.size();
      r.bev_offset = offset;
      r.bev_count = p.bev.size();
      blob.write(reinterpret_cast<const char*>(p.bev.data()),
                 static_cast<std::streamsize>(p.bev.size() * sizeof(float)));
      offset += p.bev.size();

      txt << r.frame_id << '\t' << r.route_index << '\t' << r.tick << '\t' << r.task_mode << '\t'
          << r.uncertainty_label << '\t' << fmt_double(r.status.speed) << '\t'
          << fmt_double(r.status.throttle) << '\t' << fmt_double(r.status.brake) << '\t'
          << fmt_double(r.status.position.x) << '\t' << fmt_double(r.status.position.y) << '\t'
          << fmt_double(r.status.heading) << '\t' << fmt_double(r.hazard_dist) << '\t'
          << r.cam_offset << '\t' << r.cam_count << '\t' << r.bev_offset << '\t' << r.bev_count
          << '\t' << r.prompt_text << '\t' << r.supervision_text << '\t' << r.expert_text << '\t'
          << r.model_text << '\n';

      ++summary.records;
      if (r.task_mode == 1) ++summary.mode1;
      if (r.task_mode == 2) ++summary.mode2;
      if (r.task_mode == 3) ++summary.mode3;
      summary.labels_positive += r.uncertainty_label;
    }
  }
  if (!txt || !blob) throw CorpusWriteError("corpus write failed: " + out_path);
  return summary;
}

namespace {

Tensor3 read_blob(const std::string& path, uint64_t offset, uint64_t count, int h, int w, int c) {
  if (count != static_cast<uint64_t>(h) * w * c)
    throw CorpusWriteError("corpus blob count mismatch");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusWriteError("cannot open corpus blob: " + path);
  in.seekg(static_cast<std::streamoff>(offset * sizeof(float)));
  std::vector<float> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw CorpusWriteError("truncated corpus blob: " + path);
  Tensor3 t(h, w, c);
  for (size_t i = 0; i < raw.size(); ++i) t.a[i] = static_cast<double>(raw[i]);
  return t;
}

}  // namespace

Tensor3 Corpus::load_camera(const CorpusRecord& rec) const {
  return read_blob(blob_path, rec.cam_offset, rec.cam_count, cam_h, cam_w, cam_c);
}

Tensor3 Corpus::load_bev(const CorpusRecord& rec) const {
  return read_blob(blob_path, rec.bev_offset, rec.bev_count, bev_h, bev_w, bev_c);
}

Corpus load_corpus(const std::string& path, const lang::Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw CorpusWriteError("cannot open corpus: " + path);
  Corpus corpus;
  std::string line;
  if (!std::getline(in, line) || line != "tokendrive-corpus v1")
    throw CorpusWriteError("bad corpus header: " + path);
  if (!std::getline(in, line)) throw CorpusWriteError("truncated corpus: " + path);
  {
    std::istringstream ls(line);
    std::string kw, blob_name, cam_kw, bev_kw, dtype_kw, dtype;
    ls >> kw >> blob_name >> cam_kw >> corpus.cam_h >> corpus.cam_w >> corpus.cam_c >> bev_kw >>
        corpus.bev_h >> corpus.bev_w >> corpus.bev_c >> dtype_kw >> dtype;
    if (kw != "tensors" || cam_kw != "cam" || bev_kw != "bev" || dtype != "f32")
      throw CorpusWriteError("bad corpus tensor line: " + path);
    corpus.blob_path = (std::filesystem::path(path).parent_path() / blob_name).string();
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t pos = 0;
    while (true) {
      const size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(pos));
        break;
      }
      cols.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (cols.size() != 20) throw CorpusWriteError("bad corpus record: " + line.substr(0, 60));
    CorpusRecord r;
    r.frame_id = std::stol(cols[0]);
    r.route_index = std::stoi(cols[1]);
    r.tick = std::stol(cols[2]);
    r.task_mode = std::stoi(cols[3]);
    r.uncertainty_label = std::stoi(cols[4]);
    r.status.speed = std::stod(cols[5]);
    r.status.throttle = std::stod(cols[6]);
    r.status.brake = std::stod(cols[7]);
    r.status.position.x = std::stod(cols[8]);
    r.status.position.y = std::stod(cols[9]);
    r.status.heading = std::stod(cols[10]);
    r.hazard_dist = std::stod(cols[11]);
    r.cam_offset = std::stoull(cols[12]);
    r.cam_count = std::stoull(cols[13]);
    r.bev_offset = std::stoull(cols[14]);
    r.bev_count = std::stoull(cols[15]);
    r.prompt_text = cols[16];
    r.supervision_text = cols[17];
    r.expert_text = cols[18];
    r.model_text = cols[19];
    const auto expert_parsed = lang::parse_action(r.expert_text, vocab);
    if (!expert_parsed.ok()) throw CorpusWriteError("corpus expert action does not parse");
    r.expert_action = expert_parsed.action;
    if (r.model_text != "-") {
      const auto model_parsed = lang::parse_action(r.model_text, vocab);
      if (!model_parsed.ok()) throw CorpusWriteError("corpus model action does not parse");
      r.model_action = model_parsed.action;
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

}  // namespace tokendrive::expert
