#include "hoidet/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "hoidet/errors.hpp"
#include "hoidet/rng.hpp"
#include "json.hpp"

namespace hoidet::scenes {

using json = nlohmann::ordered_json;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinEntityGap = 0.07;   // between unrelated entities
constexpr double kBoundsMargin = 0.005;  // boxes stay inside [m, 1-m]

struct SizeRange {
  double lo, hi;
};
// square side lengths per object class
constexpr SizeRange kClassSize[kNumObjectClasses] = {
    {0.055, 0.095},  // cup
    {0.16, 0.24},    // bike
    {0.05, 0.09},    // ball
    {0.17, 0.26},    // cart
    {0.11, 0.18},    // screen
    {0.08, 0.14},    // crate
};
constexpr SizeRange kAgentSize = {0.12, 0.20};
}  // namespace

const char* const kVerbNames[kNumVerbs] = {"hold",  "ride",  "push",  "look_at",
                                           "reach_for", "watch", "carry", "pull"};
const char* const kObjectNames[kNumObjectClasses] = {"cup",  "bike",   "ball",
                                                     "cart", "screen", "crate"};

bool verb_is_subtle(int verb) { return verb == 3 || verb == 4 || verb == 5; }
bool verb_is_rare(int verb) { return verb == 6 || verb == 7; }

const std::vector<int>& admissible_objects(int verb) {
  static const std::vector<int> table[kNumVerbs] = {
      {0, 2, 5},           // hold: cup, ball, crate
      {1, 3},              // ride: bike, cart
      {1, 3, 5},           // push: bike, cart, crate
      {0, 1, 2, 3, 4},     // look_at: anything watchable
      {0, 2, 4, 5},        // reach_for
      {2, 4},              // watch: ball, screen
      {0, 2, 5},           // carry: small things
      {1, 3, 5},           // pull
  };
  if (verb < 0 || verb >= kNumVerbs) throw Error("verb id out of range");
  return table[verb];
}

Box Entity::box() const {
  const double h = 0.5 * size;
  return {cx - h, cy - h, cx + h, cy + h};
}

std::vector<GtTriplet> gt_triplets(const SceneRecord& record) {
  std::vector<GtTriplet> out;
  out.reserve(record.triplets.size());
  for (const auto& t : record.triplets) {
    const Entity& h = record.entities[static_cast<size_t>(t.human_idx)];
    const Entity& o = record.entities[static_cast<size_t>(t.object_idx)];
    out.push_back({h.box(), o.box(), o.class_id, t.verb_id});
  }
  return out;
}

SceneProfile::SceneProfile()
    : verb_freq{0.22, 0.18, 0.15, 0.14, 0.12, 0.10, 0.05, 0.04} {}

void SceneProfile::validate() const {
  if (static_cast<int>(verb_freq.size()) != kNumVerbs)
    throw InvalidProfile("verb_freq must have " + std::to_string(kNumVerbs) + " entries");
  double sum = 0.0;
  for (double f : verb_freq) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw InvalidProfile("verb_freq entries must be >= 0");
    sum += f;
  }
  if (!(sum > 0.0)) throw InvalidProfile("verb_freq must not be all zero");
  if (!(label_noise >= 0.0 && label_noise <= 1.0))
    throw InvalidProfile("label_noise must lie in [0,1]");
  if (min_triplets < 1 || max_triplets < min_triplets || max_triplets > 6)
    throw InvalidProfile("triplet count range must satisfy 1 <= min <= max <= 6");
}

SceneProfile SceneProfile::named(const std::string& name) {
  SceneProfile p;
  if (name == "default") return p;
  if (name == "no-subtle") {
    for (int v : kSubtleVerbs) p.verb_freq[static_cast<size_t>(v)] = 0.0;
    return p;
  }
  if (name == "noisy") {
    p.label_noise = 0.15;
    return p;
  }
  throw InvalidProfile("unknown profile '" + name + "'");
}

namespace {

// angle between the agent's gaze ray and the direction to the object center
double ray_angle(const Entity& agent, const Entity& object) {
  const double phi = std::atan2(object.cy - agent.cy, object.cx - agent.cx);
  return std::fabs(std::remainder(agent.orientation - phi, kTwoPi));
}

}  // namespace

int classify_pair(const Entity& agent, const Entity& object) {
  const Box a = agent.box();
  const Box o = object.box();

  const double margin = 0.1 * object.size;
  if (o.x1 >= a.x1 + margin && o.x2 <= a.x2 - margin && o.y1 >= a.y1 + margin &&
      o.y2 <= a.y2 - margin)
    return 6;  // carry: contained

  const double overlap = iou(a, o);
  const double gap = box_gap(a, o);
  const double ang = ray_angle(agent, object);
  const bool toward = ang <= kRayTolerance;
  const bool away = ang >= kPi - kRayTolerance;

  if (overlap > 0.0) {
    // y grows downward, so "agent above" means smaller cy
    const bool ride_geometry = std::fabs(agent.cx - object.cx) <= 0.15 * object.size &&
                               (object.cy - agent.cy) >= 0.1 * object.size + 0.4 * agent.size;
    if (ride_geometry) return 1;
    if (overlap >= 0.05) return 0;  // hold
    if (overlap >= 0.02) return kAmbiguous;
    // sliver overlap falls through to the contact band
  }

  if (gap <= kContactGapMax) {
    const bool side = std::fabs(agent.cy - object.cy) <= 0.35 * 0.5 * (agent.size + object.size);
    if (side && toward) return 2;  // push
    if (side && away) return 7;    // pull
    return kAmbiguous;             // touching without a defined contact verb
  }

  if (toward) {
    if (gap < kReachGapMin) return kAmbiguous;
    if (gap <= kReachGapMax) return 4;  // reach_for
    if (gap < kLookGapMin) return kAmbiguous;
    if (gap <= kLookGapMax) return 3;  // look_at
    if (gap < kWatchGapMin) return kAmbiguous;
    return 5;  // watch
  }
  return kNoInteraction;
}

namespace {

bool entity_in_bounds(const Entity& e) {
  const double h = 0.5 * e.size;
  return e.cx - h >= kBoundsMargin && e.cx + h <= 1.0 - kBoundsMargin &&
         e.cy - h >= kBoundsMargin && e.cy + h <= 1.0 - kBoundsMargin;
}

double place_coord(Rng& rng, double size) {
  const double h = 0.5 * size;
  return rng.uniform(h + kBoundsMargin, 1.0 - h - kBoundsMargin);
}

// center distance along direction phi that produces hull gap `target`
double solve_distance(double half_sum, double phi, double target) {
  const double ax = std::fabs(std::cos(phi));
  const double ay = std::fabs(std::sin(phi));
  double lo = 0.0, hi = 3.0 * (half_sum + target) + 1.0;
  for (int it = 0; it < 80; ++it) {
    const double d = 0.5 * (lo + hi);
    const double gx = std::max(0.0, d * ax - half_sum);
    const double gy = std::max(0.0, d * ay - half_sum);
    (std::hypot(gx, gy) < target ? lo : hi) = d;
  }
  return 0.5 * (lo + hi);
}

struct Placer {
  Rng& rng;
  std::vector<Entity> entities;

  // hull gap to every entity placed so far
  bool far_from_others(const Entity& e) const {
    const Box eb = e.box();
    for (const auto& other : entities)
      if (box_gap(other.box(), eb) < kMinEntityGap) return false;
    return true;
  }

  // no interaction predicate may fire between the newcomer and any
  // previously placed entity; ambiguous readings are rejected too
  bool inert_against_others(const Entity& e) const {
    for (const auto& other : entities) {
      if (e.is_agent && !other.is_agent && classify_pair(e, other) != kNoInteraction)
        return false;
      if (!e.is_agent && other.is_agent && classify_pair(other, e) != kNoInteraction)
        return false;
    }
    return true;
  }
};

bool place_pair(int verb, int obj_class, Placer& pl) {
  Rng& rng = pl.rng;
  const SizeRange cr = kClassSize[static_cast<size_t>(obj_class)];

  for (int attempt = 0; attempt < 80; ++attempt) {
    double sa, so;
    switch (verb) {
      case 6:  // carry: object must fit inside the agent with margin
        sa = rng.uniform(std::max(0.15, cr.lo / 0.42), kAgentSize.hi);
        so = rng.uniform(cr.lo, std::min(cr.hi, 0.45 * sa));
        break;
      case 1:  // ride: object clearly larger than the agent
        sa = rng.uniform(kAgentSize.lo, std::min(kAgentSize.hi, cr.hi / 1.15));
        so = rng.uniform(std::max(cr.lo, 1.1 * sa), cr.hi);
        break;
      default:
        sa = rng.uniform(kAgentSize.lo, kAgentSize.hi);
        so = rng.uniform(cr.lo, cr.hi);
    }

    Entity a;
    a.is_agent = true;
    a.size = sa;
    Entity o;
    o.is_agent = false;
    o.class_id = obj_class;
    o.size = so;

    switch (verb) {
      case 6: {  // carry
        a.cx = place_coord(rng, sa);
        a.cy = place_coord(rng, sa);
        a.orientation = rng.uniform(0.0, kTwoPi);
        const double m = 0.8 * (0.5 * (sa - so) - 0.12 * so);
        if (m <= 0.0) continue;
        o.cx = a.cx + rng.uniform(-m, m);
        o.cy = a.cy + rng.uniform(-m, m);
        break;
      }
      case 1: {  // ride: agent straddles the object's top edge
        o.cx = place_coord(rng, so);
        o.cy = place_coord(rng, so);
        a.cx = o.cx + rng.uniform(-0.1, 0.1) * so;
        a.cy = (o.cy - 0.5 * so) + 0.3 * so - 0.5 * sa;
        a.orientation = rng.uniform(0.0, kTwoPi);
        break;
      }
      case 0: {  // hold: sideways overlap
        a.cx = place_coord(rng, sa);
        a.cy = place_coord(rng, sa);
        const double side = rng.uniform01() < 0.5 ? kPi : 0.0;
        const double phi = side + rng.uniform(-0.7, 0.7);
        const double d = rng.uniform(0.5, 0.75) * 0.5 * (sa + so);
        o.cx = a.cx + d * std::cos(phi);
        o.cy = a.cy + d * std::sin(phi);
        a.orientation = std::atan2(o.cy - a.cy, o.cx - a.cx) + rng.uniform(-0.6, 0.6);
        break;
      }
      case 2:
      case 7: {  // push / pull: side contact, gaze toward / away
        a.cx = place_coord(rng, sa);
        a.cy = place_coord(rng, sa);
        const double s = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        const double g = rng.uniform(0.0005, 0.003);
        o.cx = a.cx + s * (0.5 * sa + 0.5 * so + g);
        o.cy = a.cy + rng.uniform(-0.15, 0.15) * 0.5 * (sa + so);
        const double phi = std::atan2(o.cy - a.cy, o.cx - a.cx);
        a.orientation = (verb == 2 ? phi : phi + kPi) + rng.uniform(-0.08, 0.08);
        break;
      }
      default: {  // ray verbs: pick the gap inside the band, well off its edges
        a.cx = place_coord(rng, sa);
        a.cy = place_coord(rng, sa);
        const double phi = rng.uniform(0.0, kTwoPi);
        double g;
        if (verb == 4)
          g = rng.uniform(0.018, 0.040);
        else if (verb == 3)
          g = rng.uniform(0.060, 0.210);
        else
          g = rng.uniform(0.230, 0.40);
        const double d = solve_distance(0.5 * (sa + so), phi, g);
        o.cx = a.cx + d * std::cos(phi);
        o.cy = a.cy + d * std::sin(phi);
        a.orientation = phi + rng.uniform(-0.09, 0.09);
      }
    }

    if (!entity_in_bounds(a) || !entity_in_bounds(o)) continue;
    if (classify_pair(a, o) != verb) continue;
    // keep holds comfortably above the ambiguity band, mirroring how the
    // ray verbs sample their gaps well inside the band edges
    if (verb == 0 && iou(a.box(), o.box()) < 0.08) continue;

    // both members must stay clear of every previously placed entity,
    // geometrically and semantically; their mutual proximity is the point,
    // and neither is in the list yet, so no exemptions are needed
    if (!pl.far_from_others(a) || !pl.inert_against_others(a)) continue;
    if (!pl.far_from_others(o) || !pl.inert_against_others(o)) continue;

    pl.entities.push_back(a);
    pl.entities.push_back(o);
    return true;
  }
  return false;
}

void add_distractors(Placer& pl) {
  Rng& rng = pl.rng;
  const double count_weights[3] = {0.5, 0.35, 0.15};
  const int n_obj = rng.categorical(count_weights, 3);
  for (int k = 0; k < n_obj; ++k) {
    const int cls = static_cast<int>(rng.uniform_int(0, kNumObjectClasses - 1));
    const SizeRange cr = kClassSize[static_cast<size_t>(cls)];
    for (int attempt = 0; attempt < 60; ++attempt) {
      Entity o;
      o.is_agent = false;
      o.class_id = cls;
      o.size = rng.uniform(cr.lo, cr.hi);
      o.cx = place_coord(rng, o.size);
      o.cy = place_coord(rng, o.size);
      if (!pl.far_from_others(o) || !pl.inert_against_others(o)) continue;
      pl.entities.push_back(o);
      break;
    }
  }
  if (rng.uniform01() < 0.25) {
    for (int attempt = 0; attempt < 60; ++attempt) {
      Entity a;
      a.is_agent = true;
      a.size = rng.uniform(kAgentSize.lo, kAgentSize.hi);
      a.cx = place_coord(rng, a.size);
      a.cy = place_coord(rng, a.size);
      a.orientation = rng.uniform(0.0, kTwoPi);
      if (!pl.far_from_others(a) || !pl.inert_against_others(a)) continue;
      pl.entities.push_back(a);
      break;
    }
  }
}

bool verify_scene(const std::vector<Entity>& entities, const std::vector<HoiTriplet>& triplets) {
  for (size_t ai = 0; ai < entities.size(); ++ai) {
    if (!entities[ai].is_agent) continue;
    for (size_t oi = 0; oi < entities.size(); ++oi) {
      if (entities[oi].is_agent) continue;
      int expected = kNoInteraction;
      for (const auto& t : triplets)
        if (t.human_idx == static_cast<int>(ai) && t.object_idx == static_cast<int>(oi))
          expected = t.verb_id;
      if (classify_pair(entities[ai], entities[oi]) != expected) return false;
    }
  }
  return true;
}

}  // namespace

SceneRecord generate_scene(std::uint64_t scene_seed, const SceneProfile& profile,
                           const std::string& split) {
  profile.validate();
  Rng rng(scene_seed);

  // verbs and classes are drawn before any geometry, so the verb histogram
  // is exactly multinomial in the profile frequencies no matter how many
  // placement retries follow
  const int n = static_cast<int>(rng.uniform_int(profile.min_triplets, profile.max_triplets));
  std::vector<int> verbs(static_cast<size_t>(n)), classes(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    verbs[static_cast<size_t>(i)] = rng.categorical(profile.verb_freq.data(), kNumVerbs);
    const auto& adm = admissible_objects(verbs[static_cast<size_t>(i)]);
    classes[static_cast<size_t>(i)] =
        adm[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(adm.size()) - 1))];
  }

  for (int scene_try = 0; scene_try < 120; ++scene_try) {
    Placer pl{rng, {}};
    std::vector<HoiTriplet> triplets;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const int base = static_cast<int>(pl.entities.size());
      if (place_pair(verbs[static_cast<size_t>(i)], classes[static_cast<size_t>(i)], pl))
        triplets.push_back({base, base + 1, verbs[static_cast<size_t>(i)], false});
      else
        ok = false;
    }
    if (!ok) continue;
    if (profile.distractors) add_distractors(pl);
    if (!verify_scene(pl.entities, triplets)) continue;

    // optional label corruption, applied after geometry is fixed so the
    // boxes stay truthful while the verb lies
    for (auto& t : triplets) {
      if (profile.label_noise > 0.0 && rng.uniform01() < profile.label_noise) {
        const int k = static_cast<int>(rng.uniform_int(0, kNumVerbs - 2));
        t.verb_id = k >= t.verb_id ? k + 1 : k;
        t.corrupted = true;
      }
    }

    SceneRecord rec;
    rec.seed = scene_seed;
    rec.split = split;
    rec.entities = std::move(pl.entities);
    rec.triplets = std::move(triplets);
    return rec;
  }
  throw Error("scene geometry unrealizable after 120 attempts, seed " +
              std::to_string(scene_seed));
}

std::vector<SceneRecord> generate(std::uint64_t dataset_seed, int n_scenes,
                                  const SceneProfile& profile, const std::string& split) {
  if (n_scenes <= 0) throw Error("n_scenes must be positive");
  profile.validate();
  const std::uint64_t split_stream = mix_seed(dataset_seed, hash_string(split));
  std::vector<SceneRecord> out;
  out.reserve(static_cast<size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i)
    out.push_back(generate_scene(mix_seed(split_stream, static_cast<std::uint64_t>(i)), profile,
                                 split));
  return out;
}

// ------------------------------------------------------------------ render

namespace {

struct Rgb {
  double r, g, b;
};
constexpr Rgb kClassColor[kNumObjectClasses] = {
    {1.0, 0.35, 0.25},  // cup
    {0.25, 0.55, 1.0},  // bike
    {1.0, 0.85, 0.2},   // ball
    {0.35, 0.9, 0.4},   // cart
    {0.8, 0.4, 1.0},    // screen
    {0.9, 0.85, 0.7},   // crate
};
constexpr Rgb kAgentColor = {1.0, 1.0, 1.0};
constexpr Rgb kTickColor = {1.0, 0.15, 0.15};

bool object_shape_hit(int cls, double dx, double dy, double h) {
  switch (cls) {
    case 0:  // filled square
      return std::fabs(dx) <= h && std::fabs(dy) <= h;
    case 1:  // hollow square
      return std::fabs(dx) <= h && std::fabs(dy) <= h &&
             !(std::fabs(dx) <= 0.6 * h && std::fabs(dy) <= 0.6 * h);
    case 2:  // filled disc
      return dx * dx + dy * dy <= h * h;
    case 3:  // diamond
      return std::fabs(dx) + std::fabs(dy) <= h;
    case 4:  // ring
      return dx * dx + dy * dy <= h * h && dx * dx + dy * dy >= 0.36 * h * h;
    default:  // plus sign
      return (std::fabs(dx) <= 0.3 * h || std::fabs(dy) <= 0.3 * h) && std::fabs(dx) <= h &&
             std::fabs(dy) <= h;
  }
}

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double qx = ax + t * vx, qy = ay + t * vy;
  return std::hypot(px - qx, py - qy);
}

}  // namespace

std::vector<double> render_scene(const SceneRecord& record, int resolution) {
  if (resolution <= 0) throw BadShape("render resolution must be positive");
  const int S = resolution;
  std::vector<double> img(static_cast<size_t>(3) * S * S, 0.0);

  auto paint = [&](const Entity& e, auto&& hit, const Rgb& color) {
    const double h = 0.5 * e.size;
    const int x0 = std::max(0, static_cast<int>(std::floor((e.cx - h) * S)) - 1);
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil((e.cx + h) * S)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor((e.cy - h) * S)) - 1);
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil((e.cy + h) * S)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double px = (x + 0.5) / S, py = (y + 0.5) / S;
        if (!hit(px, py)) continue;
        const size_t idx = static_cast<size_t>(y) * S + x;
        img[idx] = color.r;
        img[static_cast<size_t>(S) * S + idx] = color.g;
        img[2 * static_cast<size_t>(S) * S + idx] = color.b;
      }
  };

  for (const auto& e : record.entities) {
    if (e.is_agent) continue;
    const double h = 0.5 * e.size;
    paint(e, [&](double px, double py) {
      return object_shape_hit(e.class_id, px - e.cx, py - e.cy, h);
    }, kClassColor[static_cast<size_t>(e.class_id)]);
  }
  for (const auto& e : record.entities) {
    if (!e.is_agent) continue;
    const double h = 0.5 * e.size;
    paint(e, [&](double px, double py) {
      const double dx = px - e.cx, dy = py - e.cy;
      return dx * dx + dy * dy <= h * h;
    }, kAgentColor);
    // orientation tick: a thin radial line, kept inside the disc
    const double tx = e.cx + 0.92 * h * std::cos(e.orientation);
    const double ty = e.cy + 0.92 * h * std::sin(e.orientation);
    const double thick = 0.7 / S;
    paint(e, [&](double px, double py) {
      const double dx = px - e.cx, dy = py - e.cy;
      if (dx * dx + dy * dy > h * h) return false;
      return point_segment_dist(px, py, e.cx, e.cy, tx, ty) <= thick;
    }, kTickColor);
  }
  return img;
}

// ------------------------------------------------------------- jsonl files

namespace {

json profile_to_json(const SceneProfile& p) {
  return json{{"verb_freq", p.verb_freq},
              {"label_noise", p.label_noise},
              {"min_triplets", p.min_triplets},
              {"max_triplets", p.max_triplets},
              {"distractors", p.distractors}};
}

SceneProfile profile_from_json(const json& j) {
  SceneProfile p;
  p.verb_freq = j.at("verb_freq").get<std::vector<double>>();
  p.label_noise = j.at("label_noise").get<double>();
  p.min_triplets = j.at("min_triplets").get<int>();
  p.max_triplets = j.at("max_triplets").get<int>();
  p.distractors = j.at("distractors").get<bool>();
  p.validate();
  return p;
}

}  // namespace

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);

  json header{{"schema", "hoidet-scenes-v1"},
              {"dataset_seed", ds.dataset_seed},
              {"split", ds.split},
              {"profile", profile_to_json(ds.profile)},
              {"count", ds.records.size()},
              {"verb_names", std::vector<std::string>(kVerbNames, kVerbNames + kNumVerbs)},
              {"object_names",
               std::vector<std::string>(kObjectNames, kObjectNames + kNumObjectClasses)}};
  out << header.dump() << "\n";

  for (const auto& rec : ds.records) {
    json ents = json::array();
    for (const auto& e : rec.entities)
      ents.push_back(json{{"kind", e.is_agent ? "agent" : "object"},
                          {"class_id", e.class_id},
                          {"cx", e.cx},
                          {"cy", e.cy},
                          {"size", e.size},
                          {"orientation", e.orientation}});
    json trips = json::array();
    for (const auto& t : rec.triplets)
      trips.push_back(json{{"human", t.human_idx},
                           {"object", t.object_idx},
                           {"verb", t.verb_id},
                           {"corrupted", t.corrupted}});
    json line{{"seed", rec.seed}, {"split", rec.split}, {"entities", ents},
              {"triplets", trips}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("bad dataset header: " + std::string(e.what()));
  }
  if (header.value("schema", "") != "hoidet-scenes-v1")
    throw IoError("unsupported dataset schema in " + path);

  Dataset ds;
  ds.dataset_seed = header.at("dataset_seed").get<std::uint64_t>();
  ds.split = header.at("split").get<std::string>();
  ds.profile = profile_from_json(header.at("profile"));

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("bad dataset record: " + std::string(e.what()));
    }
    SceneRecord rec;
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.split = j.at("split").get<std::string>();
    for (const auto& je : j.at("entities")) {
      Entity e;
      e.is_agent = je.at("kind").get<std::string>() == "agent";
      e.class_id = je.at("class_id").get<int>();
      e.cx = je.at("cx").get<double>();
      e.cy = je.at("cy").get<double>();
      e.size = je.at("size").get<double>();
      e.orientation = je.at("orientation").get<double>();
      rec.entities.push_back(e);
    }
    for (const auto& jt : j.at("triplets")) {
      HoiTriplet t;
      t.human_idx = jt.at("human").get<int>();
      t.object_idx = jt.at("object").get<int>();
      t.verb_id = jt.at("verb").get<int>();
      t.corrupted = jt.at("corrupted").get<bool>();
      const int n = static_cast<int>(rec.entities.size());
      if (t.human_idx < 0 || t.human_idx >= n || t.object_idx < 0 || t.object_idx >= n ||
          !rec.entities[static_cast<size_t>(t.human_idx)].is_agent ||
          rec.entities[static_cast<size_t>(t.object_idx)].is_agent || t.verb_id < 0 ||
          t.verb_id >= kNumVerbs)
        throw IoError("triplet references invalid entities in " + path);
      rec.triplets.push_back(t);
    }
    ds.records.push_back(std::move(rec));
  }
  if (header.at("count").get<size_t>() != ds.records.size())
    throw IoError("record count mismatch in " + path);
  return ds;
}

}  // namespace hoidet::scenes
