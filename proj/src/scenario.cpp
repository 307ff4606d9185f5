#include "heterogcn/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace heterogcn {
namespace {

constexpr double kDegenerateHeading = 1e-6;  // meters

bool finite2(double x, double y) { return std::isfinite(x) && std::isfinite(y); }

double get_number(const nlohmann::json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ParseError(ctx + "." + key + ": expected a number");
  }
  return j.at(key).get<double>();
}

std::string get_string(const nlohmann::json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ParseError(ctx + "." + key + ": expected a string");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kVehicle: return "vehicle";
    case AgentKind::kPedestrian: return "pedestrian";
    case AgentKind::kCyclist: return "cyclist";
    case AgentKind::kOther: return "other";
  }
  return "other";
}

AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "vehicle") return AgentKind::kVehicle;
  if (s == "pedestrian") return AgentKind::kPedestrian;
  if (s == "cyclist") return AgentKind::kCyclist;
  if (s == "other") return AgentKind::kOther;
  throw ValidationError("agent kind '" + s + "' is not one of vehicle|pedestrian|cyclist|other");
}

const AgentState* AgentTrack::observed_at(int t) const {
  for (const auto& st : states) {
    if (st.t == t) return st.observed ? &st : nullptr;
    if (st.t > t) break;
  }
  return nullptr;
}

int Scenario::focal_index() const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].id == focal_agent_id) return static_cast<int>(i);
  }
  throw ValidationError("focal_agent_id '" + focal_agent_id + "' not found among agents");
}

void validate_scenario(const Scenario& s) {
  if (s.t_hist < 1) throw ValidationError("t_hist must be >= 1");
  if (s.t_future < 1) throw ValidationError("t_future must be >= 1");

  std::unordered_set<std::string> agent_ids;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const AgentTrack& a = s.agents[i];
    if (!agent_ids.insert(a.id).second) {
      throw ValidationError("duplicate agent id '" + a.id + "'");
    }
    int observed_count = 0;
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      const AgentState& st = a.states[k];
      if (k > 0 && a.states[k - 1].t >= st.t) {
        throw ValidationError("agent '" + a.id + "' states not strictly sorted by t at index " +
                              std::to_string(k));
      }
      if (st.observed) {
        ++observed_count;
        if (!finite2(st.x, st.y)) {
          throw ValidationError("agent '" + a.id + "' has a non-finite observed state at t=" +
                                std::to_string(st.t));
        }
      }
    }
    if (observed_count == 0) {
      throw ValidationError("agent '" + a.id + "' has no observed states");
    }
  }

  if (agent_ids.find(s.focal_agent_id) == agent_ids.end()) {
    throw ValidationError("focal_agent_id '" + s.focal_agent_id + "' not found among agents");
  }
  int focal_observed = 0;
  for (const auto& st : s.focal().states) {
    if (st.observed) ++focal_observed;
  }
  if (focal_observed < 2) {
    throw ValidationError("focal agent '" + s.focal_agent_id +
                          "' must have at least 2 observed states");
  }

  std::unordered_set<std::string> lane_ids;
  for (const auto& lane : s.lanes) {
    if (!lane_ids.insert(lane.id).second) {
      throw ValidationError("duplicate lane id '" + lane.id + "'");
    }
    if (lane.centerline.size() < 2) {
      throw ValidationError("lane '" + lane.id + "' centerline must have >= 2 points");
    }
    for (std::size_t k = 1; k < lane.centerline.size(); ++k) {
      const auto& a = lane.centerline[k - 1];
      const auto& b = lane.centerline[k];
      if (a[0] == b[0] && a[1] == b[1]) {
        throw ValidationError("lane '" + lane.id + "' has duplicate consecutive centerline points at index " +
                              std::to_string(k));
      }
      if (!finite2(b[0], b[1]) || !finite2(a[0], a[1])) {
        throw ValidationError("lane '" + lane.id + "' has a non-finite centerline point");
      }
    }
  }
  for (const auto& lane : s.lanes) {
    for (const auto& succ : lane.successors) {
      if (lane_ids.find(succ) == lane_ids.end()) {
        throw ValidationError("lane '" + lane.id + "' successor '" + succ +
                              "' references a missing lane");
      }
    }
  }
}

Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  s.focal_agent_id = get_string(j, "focal_agent_id", "scenario");
  s.t_hist = static_cast<int>(get_number(j, "t_hist", "scenario"));
  s.t_future = static_cast<int>(get_number(j, "t_future", "scenario"));

  if (!j.contains("agents") || !j.at("agents").is_array()) {
    throw ParseError("scenario.agents: expected an array");
  }
  for (std::size_t i = 0; i < j.at("agents").size(); ++i) {
    const auto& ja = j.at("agents")[i];
    const std::string ctx = "agents[" + std::to_string(i) + "]";
    AgentTrack a;
    a.id = get_string(ja, "id", ctx);
    a.kind = agent_kind_from_string(get_string(ja, "kind", ctx));
    if (!ja.contains("states") || !ja.at("states").is_array()) {
      throw ParseError(ctx + ".states: expected an array");
    }
    for (std::size_t k = 0; k < ja.at("states").size(); ++k) {
      const auto& js = ja.at("states")[k];
      const std::string sctx = ctx + ".states[" + std::to_string(k) + "]";
      AgentState st;
      st.t = static_cast<int>(get_number(js, "t", sctx));
      st.x = get_number(js, "x", sctx);
      st.y = get_number(js, "y", sctx);
      if (js.contains("heading") && !js.at("heading").is_null()) {
        if (!js.at("heading").is_number()) throw ParseError(sctx + ".heading: expected a number");
        st.heading = js.at("heading").get<double>();
      }
      if (js.contains("observed")) {
        if (!js.at("observed").is_boolean()) throw ParseError(sctx + ".observed: expected a boolean");
        st.observed = js.at("observed").get<bool>();
      }
      a.states.push_back(st);
    }
    s.agents.push_back(std::move(a));
  }

  if (!j.contains("lanes") || !j.at("lanes").is_array()) {
    throw ParseError("scenario.lanes: expected an array");
  }
  for (std::size_t i = 0; i < j.at("lanes").size(); ++i) {
    const auto& jl = j.at("lanes")[i];
    const std::string ctx = "lanes[" + std::to_string(i) + "]";
    LanePolyline lane;
    lane.id = get_string(jl, "id", ctx);
    if (!jl.contains("centerline") || !jl.at("centerline").is_array()) {
      throw ParseError(ctx + ".centerline: expected an array of [x, y] pairs");
    }
    for (const auto& jp : jl.at("centerline")) {
      if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number() || !jp[1].is_number()) {
        throw ParseError(ctx + ".centerline: expected an array of [x, y] pairs");
      }
      lane.centerline.push_back({jp[0].get<double>(), jp[1].get<double>()});
    }
    if (jl.contains("successors")) {
      if (!jl.at("successors").is_array()) throw ParseError(ctx + ".successors: expected an array");
      for (const auto& js : jl.at("successors")) {
        if (!js.is_string()) throw ParseError(ctx + ".successors: expected lane id strings");
        lane.successors.push_back(js.get<std::string>());
      }
    }
    if (jl.contains("is_intersection")) {
      if (!jl.at("is_intersection").is_boolean()) {
        throw ParseError(ctx + ".is_intersection: expected a boolean");
      }
      lane.is_intersection = jl.at("is_intersection").get<bool>();
    }
    s.lanes.push_back(std::move(lane));
  }

  validate_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed JSON in '" + path + "': " + e.what());
  }
  return parse_scenario(j);
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["focal_agent_id"] = s.focal_agent_id;
  j["t_hist"] = s.t_hist;
  j["t_future"] = s.t_future;
  j["agents"] = nlohmann::json::array();
  for (const auto& a : s.agents) {
    nlohmann::json ja;
    ja["id"] = a.id;
    ja["kind"] = to_string(a.kind);
    ja["states"] = nlohmann::json::array();
    for (const auto& st : a.states) {
      nlohmann::json js;
      js["t"] = st.t;
      js["x"] = st.x;
      js["y"] = st.y;
      if (st.heading) js["heading"] = *st.heading;
      js["observed"] = st.observed;
      ja["states"].push_back(std::move(js));
    }
    j["agents"].push_back(std::move(ja));
  }
  j["lanes"] = nlohmann::json::array();
  for (const auto& lane : s.lanes) {
    nlohmann::json jl;
    jl["id"] = lane.id;
    jl["centerline"] = nlohmann::json::array();
    for (const auto& p : lane.centerline) jl["centerline"].push_back({p[0], p[1]});
    jl["successors"] = lane.successors;
    jl["is_intersection"] = lane.is_intersection;
    j["lanes"].push_back(std::move(jl));
  }
  return j;
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write scenario file '" + path + "'");
  out << scenario_to_json(s).dump(2) << "\n";
}

double focal_heading_at_origin(const Scenario& s) {
  const AgentTrack& focal = s.agents[s.focal_index()];
  const AgentState* at0 = focal.observed_at(0);
  if (at0 == nullptr) {
    throw ValidationError("focal agent '" + focal.id + "' has no observed state at t=0");
  }
  if (at0->heading) return *at0->heading;

  // Fall back to the direction of the last two observed states.
  const AgentState* prev = nullptr;
  for (const auto& st : focal.states) {
    if (st.t >= 0) break;
    if (st.observed) prev = &st;
  }
  if (prev != nullptr) {
    const double dx = at0->x - prev->x;
    const double dy = at0->y - prev->y;
    if (std::hypot(dx, dy) >= kDegenerateHeading) return std::atan2(dy, dx);
  }
  throw ValidationError("focal agent '" + focal.id +
                        "' has a degenerate heading at t=0 (no heading field and no displacement)");
}

Scenario normalize_scenario(const Scenario& s) {
  const int fi = s.focal_index();
  const AgentState* origin = s.agents[fi].observed_at(0);
  if (origin == nullptr) {
    throw ValidationError("focal agent '" + s.focal_agent_id + "' has no observed state at t=0");
  }
  const double theta = focal_heading_at_origin(s);
  const double ox = origin->x;
  const double oy = origin->y;
  const double c = std::cos(theta);
  const double sn = std::sin(theta);

  Scenario out = s;
  auto map_point = [&](double x, double y) -> std::array<double, 2> {
    const double dx = x - ox;
    const double dy = y - oy;
    return {c * dx + sn * dy, -sn * dx + c * dy};
  };
  for (auto& a : out.agents) {
    for (auto& st : a.states) {
      const auto p = map_point(st.x, st.y);
      st.x = p[0];
      st.y = p[1];
      if (st.heading) st.heading = *st.heading - theta;
    }
  }
  for (auto& lane : out.lanes) {
    for (auto& p : lane.centerline) p = map_point(p[0], p[1]);
  }
  // Canonical by construction; also makes repeated normalization exact.
  for (auto& st : out.agents[fi].states) {
    if (st.t == 0 && st.observed) st.heading = 0.0;
  }
  return out;
}

std::vector<DenseHistory> fill_history(const Scenario& s) {
  const int T = s.t_hist;
  std::vector<DenseHistory> out;
  out.reserve(s.agents.size());
  for (const auto& a : s.agents) {
    DenseHistory h;
    h.x.assign(T, 0.0);
    h.y.assign(T, 0.0);
    h.heading.assign(T, 0.0);
    h.observed.assign(T, false);

    // idx 0 corresponds to t = -T'+1, idx T-1 to t = 0.
    for (const auto& st : a.states) {
      const int idx = st.t + T - 1;
      if (idx < 0 || idx >= T || !st.observed) continue;
      h.x[idx] = st.x;
      h.y[idx] = st.y;
      h.observed[idx] = true;
      if (st.heading) {
        h.heading[idx] = *st.heading;
      } else {
        h.heading[idx] = std::numeric_limits<double>::quiet_NaN();  // resolved below
      }
    }

    // Seed for leading gaps: first observed state anywhere on the track.
    double seed_x = 0.0, seed_y = 0.0, seed_heading = 0.0;
    bool have_seed = false;
    for (const auto& st : a.states) {
      if (st.observed) {
        seed_x = st.x;
        seed_y = st.y;
        if (st.heading) seed_heading = *st.heading;
        have_seed = true;
        break;
      }
    }
    (void)have_seed;  // validate_scenario guarantees >= 1 observed state

    double px = seed_x, py = seed_y, ph = seed_heading;
    for (int i = 0; i < T; ++i) {
      if (!h.observed[i]) {
        h.x[i] = px;
        h.y[i] = py;
        h.heading[i] = ph;
      } else if (std::isnan(h.heading[i])) {
        const double dx = h.x[i] - px;
        const double dy = h.y[i] - py;
        h.heading[i] = (i > 0 && std::hypot(dx, dy) > 1e-9) ? std::atan2(dy, dx) : ph;
      }
      px = h.x[i];
      py = h.y[i];
      ph = h.heading[i];
    }
    out.push_back(std::move(h));
  }
  return out;
}

namespace {

// Piecewise-linear path with arc-length queries; the synthetic agents move
// along these.
struct Path {
  std::vector<std::array<double, 2>> pts;
  std::vector<double> cum;  // cumulative arc length, cum[0] = 0

  void finalize() {
    cum.assign(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      cum[i] = cum[i - 1] + std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
    }
  }
  double length() const { return cum.back(); }
  std::array<double, 2> at(double s) const {
    if (s <= 0.0) return pts.front();
    if (s >= length()) return pts.back();
    std::size_t i = 1;
    while (i < cum.size() && cum[i] < s) ++i;
    const double seg = cum[i] - cum[i - 1];
    const double w = (s - cum[i - 1]) / seg;
    return {pts[i - 1][0] + w * (pts[i][0] - pts[i - 1][0]),
            pts[i - 1][1] + w * (pts[i][1] - pts[i - 1][1])};
  }
};

std::vector<std::array<double, 2>> arc_points(double cx, double cy, double radius,
                                              double a0, double a1, int n) {
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * i / n;
    pts.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
  }
  return pts;
}

}  // namespace

SyntheticSpec::Family family_from_string(const std::string& s) {
  if (s == "straight") return SyntheticSpec::Family::kStraight;
  if (s == "curve") return SyntheticSpec::Family::kCurve;
  if (s == "t_intersection" || s == "t-intersection" || s == "t") {
    return SyntheticSpec::Family::kTIntersection;
  }
  throw ValidationError("unknown lane family '" + s + "' (straight|curve|t_intersection)");
}

Scenario generate_synthetic_scenario(std::uint64_t seed, const SyntheticSpec& spec) {
  Rng rng(seed);
  Scenario s;
  s.t_hist = spec.t_hist;
  s.t_future = spec.t_future;

  std::vector<Path> routes;  // candidate agent routes over the lane network
  switch (spec.family) {
    case SyntheticSpec::Family::kStraight: {
      LanePolyline lane;
      lane.id = "main";
      lane.centerline = {{-40.0, 0.0}, {80.0, 0.0}};
      s.lanes.push_back(lane);
      Path p;
      p.pts = lane.centerline;
      p.finalize();
      routes.push_back(p);
      break;
    }
    case SyntheticSpec::Family::kCurve: {
      // Left curve of radius 60 starting at (-40, 0) heading +x.
      LanePolyline lane;
      lane.id = "curve";
      lane.centerline = arc_points(-40.0, 60.0, 60.0, -kPi / 2.0, 0.0, 32);
      s.lanes.push_back(lane);
      Path p;
      p.pts = lane.centerline;
      p.finalize();
      routes.push_back(p);
      break;
    }
    case SyntheticSpec::Family::kTIntersection: {
      LanePolyline approach;
      approach.id = "approach";
      approach.centerline = {{-60.0, 0.0}, {-10.0, 0.0}};
      approach.successors = {"through", "turn"};

      LanePolyline through;
      through.id = "through";
      through.centerline = {{-10.0, 0.0}, {60.0, 0.0}};

      LanePolyline turn;
      turn.id = "turn";
      turn.centerline = arc_points(-10.0, 20.0, 20.0, -kPi / 2.0, 0.0, 16);
      turn.centerline.push_back({10.0, 70.0});
      turn.is_intersection = true;

      s.lanes = {approach, through, turn};

      Path straight_route;
      straight_route.pts = approach.centerline;
      straight_route.pts.insert(straight_route.pts.end(), through.centerline.begin() + 1,
                                through.centerline.end());
      straight_route.finalize();

      Path turn_route;
      turn_route.pts = approach.centerline;
      turn_route.pts.insert(turn_route.pts.end(), turn.centerline.begin() + 1,
                            turn.centerline.end());
      turn_route.finalize();

      routes.push_back(straight_route);
      routes.push_back(turn_route);
      break;
    }
  }

  const double dt = 0.1;
  const int total_frames = spec.t_hist + spec.t_future;
  for (int ai = 0; ai < spec.agent_count; ++ai) {
    AgentTrack a;
    a.id = "agent" + std::to_string(ai);
    a.kind = AgentKind::kVehicle;
    const Path& route = routes[rng.uniform_int(static_cast<int>(routes.size()))];
    const double speed = rng.uniform(spec.min_speed, spec.max_speed);
    // Stagger agents so nearby pairs exist; the focal starts well inside the map.
    const double travel = speed * (total_frames - 1) * dt;
    const double max_start = std::max(1.0, route.length() - travel - 1.0);
    double start = std::min(10.0 + rng.uniform(0.0, 5.0) + 12.0 * ai, max_start);

    std::vector<std::array<double, 2>> raw(total_frames);
    double arc = start;
    for (int f = 0; f < total_frames; ++f) {
      raw[f] = route.at(arc);
      arc += speed * dt * (1.0 + 0.05 * (rng.uniform() - 0.5));
    }
    for (int f = 0; f < total_frames; ++f) {
      AgentState st;
      st.t = f - spec.t_hist + 1;
      st.x = raw[f][0] + rng.uniform(-spec.noise, spec.noise);
      st.y = raw[f][1] + rng.uniform(-spec.noise, spec.noise);
      const int f2 = std::min(f + 1, total_frames - 1);
      const int f1 = f2 - 1;
      st.heading = std::atan2(raw[f2][1] - raw[f1][1], raw[f2][0] - raw[f1][0]);
      st.observed = true;
      a.states.push_back(st);
    }
    s.agents.push_back(std::move(a));
  }
  s.focal_agent_id = "agent0";
  validate_scenario(s);
  return s;
}

}  // namespace heterogcn
