#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tokendrive/control/safety.hpp"
#include "tokendrive/expert/expert.hpp"
#include "tokendrive/lang/serialize.hpp"
#include "tokendrive/sim/world.hpp"

namespace tokendrive::expert {

struct CorpusWriteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One frame of the driving-language corpus. Sensor tensors live in a side
// blob file (float32) referenced by element offset; everything else is one
// tab-separated line (docs/formats.md).
struct CorpusRecord {
  long frame_id = 0;
  int route_index = 0;
  long tick = 0;
  int task_mode = 1;  // 1 drive, 2 re-query, 3 correct
  int uncertainty_label = 0;
  DriveStatus status;
  double hazard_dist = std::numeric_limits<double>::infinity();
  uint64_t cam_offset = 0, cam_count = 0;
  uint64_t bev_offset = 0, bev_count = 0;
  std::string prompt_text;
  std::string supervision_text;
  std::string expert_text;              // grammar rendering of the expert action
  std::string model_text;               // "-" when absent
  ActionBundle expert_action;           // parsed back from expert_text
  std::optional<ActionBundle> model_action;
};

struct Corpus {
  int cam_h = 0, cam_w = 0, cam_c = 0;
  int bev_h = 0, bev_w = 0, bev_c = 0;
  std::string blob_path;
  std::vector<CorpusRecord> records;

  Tensor3 load_camera(const CorpusRecord& rec) const;
  Tensor3 load_bev(const CorpusRecord& rec) const;
};

Corpus load_corpus(const std::string& path, const lang::Vocab& vocab);

struct RouteScenario {
  sim::Route route;
  sim::ScenarioConfig scenario;
  bool hazard_free = false;
  std::string id;
};

struct CollectConfig {
  double model_action_fraction = 0.5;  // records carrying a model action
  double mode2_rate = 0.2;             // REQUERY share among those
  UncertaintyThresholds thresholds;
  ScriptedModelConfig scripted;
  ctrl::ControlConfig control;
  double tau_c = 0.2;
  int obs_tokens = 4;      // joint token count announced in prompts
  int stride = 1;          // record every n-th tick
  bool rotate_bev = false; // +/-20 degree BEV augmentation with label rotation
  double done_remaining = 1.0;
};

struct CollectSummary {
  long records = 0;
  long mode1 = 0, mode2 = 0, mode3 = 0;
  long expert_infractions = 0;
  long labels_positive = 0;
};

// Runs the expert over every route and writes the corpus. Parallelizes across
// routes; records merge in route then tick order, so the output bytes do not
// depend on scheduling.
CollectSummary collect_corpus(const std::vector<RouteScenario>& routes,
                              const sim::WorldConfig& base_config, const ExpertConfig& expert_cfg,
                              const CollectConfig& collect_cfg, const lang::Vocab& vocab,
                              uint64_t seed, const std::string& out_path, int threads);

}  // namespace tokendrive::expert
