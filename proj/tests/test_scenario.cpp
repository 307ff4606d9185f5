#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "heterogcn/scenario.hpp"

namespace {

using namespace heterogcn;

AgentState state(int t, double x, double y) {
  AgentState s;
  s.t = t;
  s.x = x;
  s.y = y;
  return s;
}

// Two agents on a straight east-bound lane; focal moves 1 m per frame.
Scenario make_basic_scenario() {
  Scenario s;
  s.focal_agent_id = "ego";
  s.t_hist = 3;
  s.t_future = 2;

  AgentTrack ego;
  ego.id = "ego";
  ego.kind = AgentKind::kVehicle;
  for (int t = -2; t <= 2; ++t) ego.states.push_back(state(t, 10.0 + t, 5.0));
  s.agents.push_back(ego);

  AgentTrack other;
  other.id = "npc";
  other.kind = AgentKind::kPedestrian;
  for (int t = -2; t <= 0; ++t) other.states.push_back(state(t, -3.0, 2.0 + 0.5 * t));
  s.agents.push_back(other);

  LanePolyline lane;
  lane.id = "l0";
  lane.centerline = {{0.0, 5.0}, {30.0, 5.0}};
  s.lanes.push_back(lane);
  return s;
}

}  // namespace

TEST_CASE("agent kind names round-trip") {
  for (AgentKind k : {AgentKind::kVehicle, AgentKind::kPedestrian, AgentKind::kCyclist,
                      AgentKind::kOther}) {
    CHECK(agent_kind_from_string(to_string(k)) == k);
  }
  CHECK(to_string(AgentKind::kVehicle) == "vehicle");
  CHECK_THROWS_WITH_AS(agent_kind_from_string("boat"),
                       "agent kind 'boat' is not one of vehicle|pedestrian|cyclist|other",
                       ValidationError);
}

TEST_CASE("observed_at returns observed frames only") {
  AgentTrack a;
  a.states.push_back(state(-1, 1.0, 2.0));
  AgentState hole = state(0, 9.0, 9.0);
  hole.observed = false;
  a.states.push_back(hole);
  a.states.push_back(state(1, 3.0, 4.0));

  REQUIRE(a.observed_at(-1) != nullptr);
  CHECK(a.observed_at(-1)->x == 1.0);
  CHECK(a.observed_at(0) == nullptr);   // present but unobserved
  CHECK(a.observed_at(2) == nullptr);   // absent
  REQUIRE(a.observed_at(1) != nullptr);
  CHECK(a.observed_at(1)->y == 4.0);
}

TEST_CASE("scenario json round-trip preserves every field") {
  Scenario s = make_basic_scenario();
  s.agents[0].states[2].heading = 0.25;
  s.agents[1].states[0].observed = false;
  s.lanes[0].successors = {"l1"};
  LanePolyline l1;
  l1.id = "l1";
  l1.centerline = {{30.0, 5.0}, {40.0, 6.0}, {50.0, 9.0}};
  l1.is_intersection = true;
  s.lanes.push_back(l1);

  const Scenario r = parse_scenario(scenario_to_json(s));
  CHECK(r.focal_agent_id == "ego");
  CHECK(r.t_hist == 3);
  CHECK(r.t_future == 2);
  REQUIRE(r.agents.size() == 2);
  CHECK(r.agents[0].kind == AgentKind::kVehicle);
  CHECK(r.agents[1].kind == AgentKind::kPedestrian);
  REQUIRE(r.agents[0].states.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(r.agents[0].states[i].t == s.agents[0].states[i].t);
    CHECK(r.agents[0].states[i].x == s.agents[0].states[i].x);  // bit-exact
    CHECK(r.agents[0].states[i].y == s.agents[0].states[i].y);
  }
  REQUIRE(r.agents[0].states[2].heading.has_value());
  CHECK(*r.agents[0].states[2].heading == 0.25);
  CHECK_FALSE(r.agents[0].states[0].heading.has_value());
  CHECK_FALSE(r.agents[1].states[0].observed);
  CHECK(r.agents[1].states[1].observed);
  REQUIRE(r.lanes.size() == 2);
  CHECK(r.lanes[0].successors == std::vector<std::string>{"l1"});
  CHECK_FALSE(r.lanes[0].is_intersection);
  CHECK(r.lanes[1].is_intersection);
  REQUIRE(r.lanes[1].centerline.size() == 3);
  CHECK(r.lanes[1].centerline[1][0] == 40.0);
  CHECK(r.lanes[1].centerline[1][1] == 6.0);
}

TEST_CASE("scenario file save/load round-trip") {
  const std::string path = "roundtrip_scenario_tmp.json";
  Scenario s = make_basic_scenario();
  save_scenario(s, path);
  const Scenario r = load_scenario(path);
  std::remove(path.c_str());
  CHECK(scenario_to_json(r) == scenario_to_json(s));
  CHECK_THROWS_AS(load_scenario("no_such_dir/absent.json"), ValidationError);
}

TEST_CASE("parse errors name the offending field") {
  nlohmann::json j = scenario_to_json(make_basic_scenario());

  nlohmann::json bad = j;
  bad.erase("focal_agent_id");
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "scenario.focal_agent_id: expected a string",
                       ParseError);

  bad = j;
  bad["t_hist"] = "three";
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "scenario.t_hist: expected a number", ParseError);

  bad = j;
  bad["agents"] = 7;
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "scenario.agents: expected an array", ParseError);

  bad = j;
  bad["agents"][0]["states"][1].erase("x");
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "agents[0].states[1].x: expected a number",
                       ParseError);

  bad = j;
  bad["agents"][1]["states"][0]["observed"] = "yes";
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "agents[1].states[0].observed: expected a boolean",
                       ParseError);

  bad = j;
  bad["agents"][0]["states"][0]["heading"] = "north";
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "agents[0].states[0].heading: expected a number",
                       ParseError);

  bad = j;
  bad["lanes"][0]["centerline"] = {{1.0, 2.0}, {3.0}};
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "lanes[0].centerline: expected an array of [x, y] pairs",
                       ParseError);

  bad = j;
  bad["lanes"][0]["successors"] = {1, 2};
  CHECK_THROWS_WITH_AS(parse_scenario(bad), "lanes[0].successors: expected lane id strings",
                       ParseError);
}

TEST_CASE("validation rejects malformed scenarios with exact messages") {
  SUBCASE("duplicate agent id") {
    Scenario s = make_basic_scenario();
    s.agents[1].id = "ego";
    CHECK_THROWS_WITH_AS(validate_scenario(s), "duplicate agent id 'ego'", ValidationError);
  }
  SUBCASE("unsorted states") {
    Scenario s = make_basic_scenario();
    std::swap(s.agents[0].states[1], s.agents[0].states[2]);
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         "agent 'ego' states not strictly sorted by t at index 2", ValidationError);
  }
  SUBCASE("duplicate t counts as unsorted") {
    Scenario s = make_basic_scenario();
    s.agents[0].states[2].t = s.agents[0].states[1].t;
    CHECK_THROWS_AS(validate_scenario(s), ValidationError);
  }
  SUBCASE("agent without observed states") {
    Scenario s = make_basic_scenario();
    for (auto& st : s.agents[1].states) st.observed = false;
    CHECK_THROWS_WITH_AS(validate_scenario(s), "agent 'npc' has no observed states",
                         ValidationError);
  }
  SUBCASE("focal id missing") {
    Scenario s = make_basic_scenario();
    s.focal_agent_id = "ghost";
    CHECK_THROWS_WITH_AS(validate_scenario(s), "focal_agent_id 'ghost' not found among agents",
                         ValidationError);
  }
  SUBCASE("focal needs two observed states") {
    Scenario s = make_basic_scenario();
    for (std::size_t i = 1; i < s.agents[0].states.size(); ++i) {
      s.agents[0].states[i].observed = false;
    }
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         "focal agent 'ego' must have at least 2 observed states", ValidationError);
  }
  SUBCASE("non-finite observed state") {
    Scenario s = make_basic_scenario();
    s.agents[0].states[1].y = std::nan("");
    CHECK_THROWS_AS(validate_scenario(s), ValidationError);
  }
  SUBCASE("duplicate lane id") {
    Scenario s = make_basic_scenario();
    s.lanes.push_back(s.lanes[0]);
    CHECK_THROWS_WITH_AS(validate_scenario(s), "duplicate lane id 'l0'", ValidationError);
  }
  SUBCASE("short centerline") {
    Scenario s = make_basic_scenario();
    s.lanes[0].centerline.resize(1);
    CHECK_THROWS_WITH_AS(validate_scenario(s), "lane 'l0' centerline must have >= 2 points",
                         ValidationError);
  }
  SUBCASE("duplicate consecutive centerline points") {
    Scenario s = make_basic_scenario();
    s.lanes[0].centerline = {{0.0, 5.0}, {0.0, 5.0}, {30.0, 5.0}};
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         "lane 'l0' has duplicate consecutive centerline points at index 1",
                         ValidationError);
  }
  SUBCASE("missing successor") {
    Scenario s = make_basic_scenario();
    s.lanes[0].successors = {"void"};
    CHECK_THROWS_WITH_AS(validate_scenario(s),
                         "lane 'l0' successor 'void' references a missing lane", ValidationError);
  }
  SUBCASE("nonpositive horizons") {
    Scenario s = make_basic_scenario();
    s.t_hist = 0;
    CHECK_THROWS_WITH_AS(validate_scenario(s), "t_hist must be >= 1", ValidationError);
    s.t_hist = 3;
    s.t_future = 0;
    CHECK_THROWS_WITH_AS(validate_scenario(s), "t_future must be >= 1", ValidationError);
  }
}

TEST_CASE("focal heading priority: field, then displacement, then error") {
  Scenario s = make_basic_scenario();

  SUBCASE("explicit heading field wins") {
    s.agents[0].states[2].heading = 1.25;  // contradicts the eastbound motion on purpose
    CHECK(focal_heading_at_origin(s) == 1.25);
  }
  SUBCASE("falls back to last observed displacement") {
    // ego moves +1 in x per frame, so the fallback heading is atan2(0, 1) = 0;
    // nudge the t=0 state to make the angle nontrivial.
    s.agents[0].states[2].y += 1.0;
    CHECK(focal_heading_at_origin(s) == doctest::Approx(std::atan2(1.0, 1.0)).epsilon(1e-12));
  }
  SUBCASE("skips unobserved frames when searching backwards") {
    s.agents[0].states[1].observed = false;  // t=-1 gone; fallback uses t=-2
    CHECK(focal_heading_at_origin(s) == doctest::Approx(std::atan2(0.0, 2.0)).epsilon(1e-12));
  }
  SUBCASE("degenerate when stationary with no heading") {
    for (auto& st : s.agents[0].states) {
      st.x = 4.0;
      st.y = 4.0;
    }
    CHECK_THROWS_WITH_AS(
        focal_heading_at_origin(s),
        "focal agent 'ego' has a degenerate heading at t=0 (no heading field and no displacement)",
        ValidationError);
  }
}

TEST_CASE("normalize_scenario maps focal t=0 to origin facing +x") {
  Scenario s = make_basic_scenario();
  s.agents[0].states[2].heading = kPi / 2.0;  // focal faces +y in the world frame
  s.agents[1].states[2].heading = 0.0;

  const Scenario n = normalize_scenario(s);
  const AgentState* o = n.focal().observed_at(0);
  REQUIRE(o != nullptr);
  CHECK(o->x == 0.0);
  CHECK(o->y == 0.0);
  REQUIRE(o->heading.has_value());
  CHECK(*o->heading == 0.0);  // written exactly, not via arithmetic

  // The world +y axis becomes the scenario +x axis: npc at (-3, 2) relative to
  // focal (10, 5) maps to (rotated by -pi/2) => (2-5, -(-3-10)) = (-3, 13).
  const AgentState* npc = n.agents[1].observed_at(0);
  REQUIRE(npc != nullptr);
  CHECK(npc->x == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(npc->y == doctest::Approx(13.0).epsilon(1e-12));
  REQUIRE(npc->heading.has_value());
  CHECK(*npc->heading == doctest::Approx(-kPi / 2.0).epsilon(1e-12));

  // Lane endpoints rotate with the same rigid transform.
  CHECK(n.lanes[0].centerline[0][0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(n.lanes[0].centerline[0][1] == doctest::Approx(10.0).epsilon(1e-12));

  SUBCASE("pairwise distances preserved") {
    for (std::size_t i = 0; i < s.agents[0].states.size(); ++i) {
      for (std::size_t k = 0; k < s.agents[1].states.size(); ++k) {
        const double before = std::hypot(s.agents[0].states[i].x - s.agents[1].states[k].x,
                                         s.agents[0].states[i].y - s.agents[1].states[k].y);
        const double after = std::hypot(n.agents[0].states[i].x - n.agents[1].states[k].x,
                                        n.agents[0].states[i].y - n.agents[1].states[k].y);
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
      }
    }
  }
  SUBCASE("idempotent bit-for-bit") {
    const Scenario nn = normalize_scenario(n);
    CHECK(scenario_to_json(nn).dump() == scenario_to_json(n).dump());
  }
}

TEST_CASE("fill_history forward-fills gaps and derives headings") {
  Scenario s;
  s.focal_agent_id = "a";
  s.t_hist = 4;
  s.t_future = 1;

  AgentTrack a;  // observed at -3, -1, 0 with a hole at -2
  a.id = "a";
  a.states.push_back(state(-3, 0.0, 0.0));
  a.states.push_back(state(-1, 2.0, 0.0));
  a.states.push_back(state(0, 3.0, 1.0));
  a.states.push_back(state(1, 4.0, 2.0));
  s.agents.push_back(a);

  AgentTrack b;  // first observation at -1: leading gap
  b.id = "b";
  b.states.push_back(state(-1, 5.0, 5.0));
  b.states.push_back(state(0, 5.0, 6.0));
  s.agents.push_back(b);

  LanePolyline lane;
  lane.id = "l";
  lane.centerline = {{0.0, 0.0}, {10.0, 0.0}};
  s.lanes.push_back(lane);

  const std::vector<DenseHistory> h = fill_history(s);
  REQUIRE(h.size() == 2);
  REQUIRE(h[0].size() == 4);  // frames -3, -2, -1, 0

  // Agent a: the hole at -2 copies the -3 state and is marked unobserved.
  CHECK(h[0].x == std::vector<double>{0.0, 0.0, 2.0, 3.0});
  CHECK(h[0].y == std::vector<double>{0.0, 0.0, 0.0, 1.0});
  CHECK(h[0].observed == std::vector<bool>{true, false, true, true});
  // Headings come from dense displacements when they are long enough.
  CHECK(h[0].heading[2] == doctest::Approx(0.0).epsilon(1e-12));             // (2,0)-(0,0)
  CHECK(h[0].heading[3] == doctest::Approx(std::atan2(1.0, 1.0)).epsilon(1e-12));
  // The forward-filled frame has zero displacement, so it carries the
  // previous heading instead of inventing one.
  CHECK(h[0].heading[1] == h[0].heading[0]);

  // Agent b: leading gap takes the first observed state everywhere.
  CHECK(h[1].x == std::vector<double>{5.0, 5.0, 5.0, 5.0});
  CHECK(h[1].y == std::vector<double>{5.0, 5.0, 5.0, 6.0});
  CHECK(h[1].observed == std::vector<bool>{false, false, true, true});
  CHECK(h[1].heading[3] == doctest::Approx(kPi / 2.0).epsilon(1e-12));  // straight up
}

TEST_CASE("synthetic scenarios are deterministic and well-formed") {
  SyntheticSpec spec;
  spec.family = SyntheticSpec::Family::kTIntersection;
  spec.agent_count = 3;
  spec.t_hist = 20;
  spec.t_future = 30;

  const Scenario a = generate_synthetic_scenario(7, spec);
  const Scenario b = generate_synthetic_scenario(7, spec);
  const Scenario c = generate_synthetic_scenario(8, spec);
  CHECK(scenario_to_json(a).dump() == scenario_to_json(b).dump());
  CHECK(scenario_to_json(a).dump() != scenario_to_json(c).dump());

  CHECK(a.focal_agent_id == "agent0");
  REQUIRE(a.agents.size() == 3);
  for (const auto& agent : a.agents) {
    REQUIRE(agent.states.size() == static_cast<std::size_t>(spec.t_hist + spec.t_future));
    CHECK(agent.states.front().t == -spec.t_hist + 1);
    CHECK(agent.states.back().t == spec.t_future);
    for (const auto& st : agent.states) CHECK(st.observed);
  }
  CHECK_NOTHROW(validate_scenario(a));
}

TEST_CASE("synthetic families expose the expected lane topology") {
  SyntheticSpec spec;

  spec.family = SyntheticSpec::Family::kStraight;
  const Scenario st = generate_synthetic_scenario(1, spec);
  REQUIRE(st.lanes.size() == 1);
  CHECK(st.lanes[0].id == "main");
  CHECK(st.lanes[0].centerline.front()[1] == 0.0);  // along the x axis

  spec.family = SyntheticSpec::Family::kCurve;
  const Scenario cv = generate_synthetic_scenario(1, spec);
  REQUIRE(cv.lanes.size() == 1);
  CHECK(cv.lanes[0].id == "curve");
  CHECK(cv.lanes[0].centerline.size() > 10);  // sampled arc, not a segment

  spec.family = SyntheticSpec::Family::kTIntersection;
  const Scenario ti = generate_synthetic_scenario(1, spec);
  REQUIRE(ti.lanes.size() == 3);
  std::set<std::string> ids;
  for (const auto& lane : ti.lanes) ids.insert(lane.id);
  CHECK(ids == std::set<std::string>{"approach", "through", "turn"});
  for (const auto& lane : ti.lanes) {
    if (lane.id == "approach") {
      CHECK(lane.successors == std::vector<std::string>{"through", "turn"});
    }
    if (lane.id == "turn") CHECK(lane.is_intersection);
  }

  CHECK(family_from_string("straight") == SyntheticSpec::Family::kStraight);
  CHECK(family_from_string("curve") == SyntheticSpec::Family::kCurve);
  CHECK(family_from_string("t_intersection") == SyntheticSpec::Family::kTIntersection);
  CHECK_THROWS_AS(family_from_string("roundabout"), ValidationError);
}
