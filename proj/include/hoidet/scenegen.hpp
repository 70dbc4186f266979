#pragma once

// Synthetic benchmark: scenes of circular agents and shape-keyed objects
// whose interaction labels are defined by geometric predicates. Three verbs
// are deliberately subtle (no contact, defined by the agent's gaze ray) and
// two are rare in the frequency profile. Generation is deterministic per
// scene seed; supervision comes from the analytic records, never from
// pixels.

#include <cstdint>
#include <string>
#include <vector>

#include "hoidet/geometry.hpp"

namespace hoidet::scenes {

// fixed taxonomy --------------------------------------------------------

inline constexpr int kNumObjectClasses = 6;
inline constexpr int kNumVerbs = 8;

// 0 hold      agent and object boxes clearly overlap
// 1 ride      agent centered above the object, boxes overlapping
// 2 push      side contact, agent facing the object
// 3 look_at   gaze ray hits the object at mid range, no contact   (subtle)
// 4 reach_for gaze ray hits the object at close range, no contact (subtle)
// 5 watch     gaze ray hits the object at long range              (subtle)
// 6 carry     object box contained in the agent box               (rare)
// 7 pull      side contact, agent facing away                     (rare)
extern const char* const kVerbNames[kNumVerbs];
extern const char* const kObjectNames[kNumObjectClasses];

inline constexpr int kSubtleVerbs[] = {3, 4, 5};
inline constexpr int kRareVerbs[] = {6, 7};

bool verb_is_subtle(int verb);
bool verb_is_rare(int verb);

// object classes a verb can act on (Known-Object evaluation uses this too)
const std::vector<int>& admissible_objects(int verb);

// gap bands for the ray verbs; exposed so tests can probe the boundaries
inline constexpr double kContactGapMax = 0.008;
inline constexpr double kReachGapMin = 0.012;
inline constexpr double kReachGapMax = 0.046;
inline constexpr double kLookGapMin = 0.054;
inline constexpr double kLookGapMax = 0.216;
inline constexpr double kWatchGapMin = 0.224;
inline constexpr double kRayTolerance = 0.21;  // radians

// domain types ----------------------------------------------------------

struct Entity {
  bool is_agent = false;
  int class_id = -1;  // -1 for agents
  double cx = 0.0, cy = 0.0;
  double size = 0.0;         // box side length
  double orientation = 0.0;  // radians, agents only; y grows downward
  Box box() const;
};

struct HoiTriplet {
  int human_idx = -1;   // index into entities, must be an agent
  int object_idx = -1;  // index into entities, must be an object
  int verb_id = -1;
  bool corrupted = false;  // label was flipped by the noise knob
};

struct SceneRecord {
  std::uint64_t seed = 0;
  std::string split;
  std::vector<Entity> entities;
  std::vector<HoiTriplet> triplets;
};

// the numeric ground truth a scene provides to matching / losses / eval
struct GtTriplet {
  Box human_box;
  Box object_box;
  int object_class = -1;
  int verb = -1;
};
std::vector<GtTriplet> gt_triplets(const SceneRecord& record);

struct SceneProfile {
  std::vector<double> verb_freq;  // length kNumVerbs, renormalized internally
  double label_noise = 0.0;       // fraction of triplet verbs flipped
  int min_triplets = 1;
  int max_triplets = 3;
  bool distractors = true;

  SceneProfile();
  void validate() const;  // throws InvalidProfile

  // "default", "no-subtle" (subtle frequencies zeroed), "noisy" (15% flips)
  static SceneProfile named(const std::string& name);
};

// generation ------------------------------------------------------------

// verb id, or kNoInteraction when no predicate fires, or kAmbiguous when the
// pair falls into a dead zone between predicate bands
inline constexpr int kNoInteraction = -1;
inline constexpr int kAmbiguous = -2;
int classify_pair(const Entity& agent, const Entity& object);

SceneRecord generate_scene(std::uint64_t scene_seed, const SceneProfile& profile,
                           const std::string& split);

// scene seeds are derived from (dataset_seed, split, index), so splits are
// disjoint streams by construction
std::vector<SceneRecord> generate(std::uint64_t dataset_seed, int n_scenes,
                                  const SceneProfile& profile, const std::string& split);

// rendering -------------------------------------------------------------

// planar [3, S, S] raster in [0,1]; black background, agents as filled
// circles with an orientation tick, objects as class-keyed colored shapes
std::vector<double> render_scene(const SceneRecord& record, int resolution);

// dataset files ---------------------------------------------------------

struct Dataset {
  std::uint64_t dataset_seed = 0;
  std::string split;
  SceneProfile profile;
  std::vector<SceneRecord> records;
};

// JSON lines; first line is a versioned schema header
void save_jsonl(const Dataset& ds, const std::string& path);
Dataset load_jsonl(const std::string& path);

}  // namespace hoidet::scenes
