#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "heterogcn/checkpoint.hpp"
#include "heterogcn/config.hpp"
#include "heterogcn/trainer.hpp"

namespace {

using namespace heterogcn;
namespace fs = std::filesystem;

// Scratch directory next to the test binary; wiped on construction.
fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path("pipeline_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Small-but-complete configuration used by the training tests.
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.tau = 2;
  cfg.num_snapshots = 2;
  cfg.knn = 2;
  cfg.hidden = 4;
  cfg.gcm_layers = 1;
  cfg.modes = 2;
  cfg.t_future = 3;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.seed = 3;
  return cfg;
}

Dataset tiny_dataset(int count) {
  SyntheticSpec spec;
  spec.family = SyntheticSpec::Family::kStraight;
  spec.agent_count = 2;
  spec.t_hist = 4;
  spec.t_future = 3;
  Dataset data;
  for (int i = 0; i < count; ++i) {
    data.ids.push_back("scn" + std::to_string(i));
    data.scenarios.push_back(generate_synthetic_scenario(100 + i, spec));
  }
  return data;
}

}  // namespace

TEST_CASE("config text parsing") {
  SUBCASE("comments, blank lines, and loose spacing") {
    const RunConfig cfg = parse_run_config(
        "# full-line comment\n"
        "\n"
        "tau = 2\n"
        "hidden=16   # trailing comment\n"
        "  variant   =  homo_static\n"
        "loss_all_agents = true\n"
        "seed = 42\n"
        "lr = 5e-4\n");
    CHECK(cfg.tau == 2);
    CHECK(cfg.hidden == 16);
    CHECK(cfg.variant == "homo_static");
    CHECK(cfg.loss_all_agents);
    CHECK(cfg.seed == 42);
    CHECK(cfg.lr == doctest::Approx(5e-4));
    CHECK(cfg.num_snapshots == 4);  // untouched keys keep their defaults
    CHECK(cfg.modes == 6);
  }
  SUBCASE("unknown key") {
    CHECK_THROWS_WITH_AS(parse_run_config("no_such_key = 1\n"),
                         "unknown config key 'no_such_key'", ValidationError);
  }
  SUBCASE("bad integer") {
    CHECK_THROWS_WITH_AS(parse_run_config("tau = abc\n"),
                         "config key 'tau' expects an integer, got 'abc'", ValidationError);
    CHECK_THROWS_AS(parse_run_config("tau = 2.5\n"), ValidationError);
  }
  SUBCASE("bad bool") {
    CHECK_THROWS_WITH_AS(parse_run_config("loss_all_agents = yes\n"),
                         "config key 'loss_all_agents' expects true/false, got 'yes'",
                         ValidationError);
  }
  SUBCASE("malformed line") {
    CHECK_THROWS_WITH_AS(parse_run_config("tau = 2\njust words\n"),
                         "config line 2 is not 'key = value': 'just words'", ValidationError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ValidationError);
  }
  SUBCASE("file round-trip") {
    const fs::path dir = scratch_dir("config_file");
    {
      std::ofstream out(dir / "run.cfg");
      out << "epochs = 7\nbatch_size = 3\n";
    }
    const RunConfig cfg = load_run_config((dir / "run.cfg").string());
    CHECK(cfg.epochs == 7);
    CHECK(cfg.batch_size == 3);
  }
}

TEST_CASE("config validation rejects out-of-range values") {
  RunConfig cfg = tiny_config();
  cfg.validate();  // the baseline passes
  SUBCASE("lr") {
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("batch size") {
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("precision") {
    cfg.precision = "f16";
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("t_future") {
    cfg.t_future = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
  SUBCASE("variant") {
    cfg.variant = "hetero_sometimes";
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }
}

TEST_CASE("config JSON round-trip") {
  RunConfig cfg = tiny_config();
  cfg.variant = "homo_dynamic";
  cfg.loss_all_agents = true;
  cfg.precision = "f32";
  cfg.seed = 123456789012345ULL;

  const nlohmann::json j = run_config_to_json(cfg);
  const RunConfig back = run_config_from_json(j);
  CHECK(run_config_to_json(back) == j);
  CHECK(back.seed == cfg.seed);
  CHECK(back.variant == cfg.variant);

  // The JSON carries exactly the documented key set.
  for (const std::string& key : run_config_keys()) {
    CHECK(j.contains(key));
  }
  CHECK(j.size() == run_config_keys().size());

  nlohmann::json incomplete = j;
  incomplete.erase("tau");
  CHECK_THROWS_AS(run_config_from_json(incomplete), ParseError);
}

TEST_CASE("checkpoint save/load round-trip") {
  const fs::path dir = scratch_dir("checkpoint");
  const std::string stem = (dir / "model").string();

  RunConfig cfg = tiny_config();
  nn::ParamStore params;
  Rng rng(17);
  build_model_params(params, rng, cfg);
  save_checkpoint(stem, cfg, params);

  const Checkpoint loaded = load_checkpoint(stem);
  CHECK(run_config_to_json(loaded.config) == run_config_to_json(cfg));
  CHECK(loaded.params.size() == params.size());
  for (const std::string& name : params.sorted_names()) {
    REQUIRE(loaded.params.has(name));
    const ad::Tensor& a = params.get(name);
    const ad::Tensor& b = loaded.params.get(name);
    REQUIRE(a.same_shape(b));
    CHECK(a.data == b.data);  // bit-exact through the little-endian encoding
  }
  validate_params_for_config(loaded.params, cfg);

  SUBCASE("truncated binary") {
    std::string blob = read_file(stem + ".bin");
    blob.resize(blob.size() - 8);
    std::ofstream(stem + ".bin", std::ios::binary) << blob;
    CHECK_THROWS_AS(load_checkpoint(stem), ValidationError);
    try {
      load_checkpoint(stem);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("is truncated") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    std::ofstream out(stem + ".bin", std::ios::binary | std::ios::app);
    out << "XXXXXXXX";
    out.close();
    try {
      load_checkpoint(stem);
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("trailing bytes") != std::string::npos);
    }
  }
  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_checkpoint((dir / "nope").string()), ValidationError);
  }
  SUBCASE("malformed manifest") {
    std::ofstream(stem + ".json", std::ios::binary) << "{not json";
    CHECK_THROWS_AS(load_checkpoint(stem), ParseError);
  }
  SUBCASE("config mismatch is caught by validation") {
    RunConfig wider = cfg;
    wider.hidden = 6;
    CHECK_THROWS_AS(validate_params_for_config(params, wider), ValidationError);

    RunConfig homo = cfg;
    homo.variant = "homo_static";
    // Heterogeneous stores lack the shared homogeneous parameter names.
    CHECK_THROWS_AS(validate_params_for_config(params, homo), ValidationError);

    nn::ParamStore padded;
    Rng rng2(17);
    build_model_params(padded, rng2, cfg);
    padded.add("zzz.extra", ad::Tensor(1, 1));
    try {
      validate_params_for_config(padded, cfg);
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()) == "checkpoint carries unexpected parameter 'zzz.extra'");
    }
  }
}

TEST_CASE("dataset loading from a directory") {
  const fs::path dir = scratch_dir("dataset");
  SyntheticSpec spec;
  spec.t_hist = 4;
  spec.t_future = 3;
  save_scenario(generate_synthetic_scenario(1, spec), (dir / "b_scene.json").string());
  save_scenario(generate_synthetic_scenario(2, spec), (dir / "a_scene.json").string());
  std::ofstream(dir / "notes.txt") << "ignored\n";

  const Dataset data = load_dataset_dir(dir.string());
  REQUIRE(data.ids.size() == 2);
  CHECK(data.ids[0] == "a_scene");  // sorted by filename
  CHECK(data.ids[1] == "b_scene");
  CHECK(data.scenarios[0].t_hist == 4);

  CHECK_THROWS_AS(load_dataset_dir((dir / "missing").string()), ValidationError);
  const fs::path empty = scratch_dir("dataset_empty");
  CHECK_THROWS_AS(load_dataset_dir(empty.string()), ValidationError);
  CHECK_THROWS_AS(load_dataset({}), ValidationError);
}

TEST_CASE("prepare_scenario extracts futures in the focal frame") {
  SyntheticSpec spec;
  spec.agent_count = 3;
  spec.t_hist = 4;
  spec.t_future = 3;
  const Scenario raw = generate_synthetic_scenario(55, spec);
  const RunConfig cfg = tiny_config();
  const PreparedScenario ps = prepare_scenario("scn", raw, cfg);

  CHECK(ps.id == "scn");
  CHECK(ps.focal_id == raw.focal_agent_id);
  REQUIRE(ps.focal_future.size() == 3);

  // The futures must equal the normalized scenario's states at t = 1..T.
  const Scenario norm = normalize_scenario(raw);
  for (const auto& [row, future] : ps.agent_futures) {
    REQUIRE(future.size() == 3);
    const AgentTrack& track = norm.agents[row];
    for (int t = 1; t <= 3; ++t) {
      const AgentState* st = nullptr;
      for (const AgentState& s : track.states) {
        if (s.t == t) st = &s;
      }
      REQUIRE(st != nullptr);
      CHECK(future[t - 1][0] == st->x);
      CHECK(future[t - 1][1] == st->y);
    }
  }
  // The synthetic generator populates every agent's future.
  CHECK(ps.agent_futures.size() == 3);
  bool focal_row_found = false;
  for (const auto& [row, future] : ps.agent_futures) {
    if (row == ps.graph.focal_index) {
      focal_row_found = true;
      CHECK(future == ps.focal_future);
    }
  }
  CHECK(focal_row_found);
}

TEST_CASE("parameter inventory does not depend on the snapshot count") {
  for (const std::string variant :
       {"hetero_dynamic", "hetero_static", "homo_dynamic", "homo_static"}) {
    RunConfig two = tiny_config();
    two.variant = variant;
    two.num_snapshots = 2;
    RunConfig five = two;
    five.num_snapshots = 5;

    nn::ParamStore p2, p5;
    Rng r2(1), r5(1);
    build_model_params(p2, r2, two);
    build_model_params(p5, r5, five);
    CHECK(p2.sorted_names() == p5.sorted_names());
    CHECK(p2.scalar_count() == p5.scalar_count());
  }
}

TEST_CASE("zero learning rate leaves parameters at their initialization") {
  const fs::path dir = scratch_dir("train_zero_lr");
  RunConfig cfg = tiny_config();
  cfg.lr = 0.0;
  const Dataset data = tiny_dataset(2);

  const TrainResult result = train(data, cfg, dir.string(), nullptr);
  const Checkpoint final = load_checkpoint(result.final_checkpoint_stem);

  nn::ParamStore fresh;
  Rng rng(cfg.seed);
  build_model_params(fresh, rng, cfg);
  REQUIRE(final.params.size() == fresh.size());
  for (const std::string& name : fresh.sorted_names()) {
    CHECK(final.params.get(name).data == fresh.get(name).data);
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const fs::path dir_a = scratch_dir("train_repro_a");
  const fs::path dir_b = scratch_dir("train_repro_b");
  RunConfig cfg = tiny_config();
  const Dataset data = tiny_dataset(3);

  std::ostringstream log_a, log_b;
  const TrainResult a = train(data, cfg, dir_a.string(), &log_a);
  const TrainResult b = train(data, cfg, dir_b.string(), &log_b);

  CHECK(read_file(dir_a / "checkpoint_final.bin") == read_file(dir_b / "checkpoint_final.bin"));
  CHECK(read_file(dir_a / "checkpoint_final.json") == read_file(dir_b / "checkpoint_final.json"));
  CHECK(log_a.str() == log_b.str());
  CHECK(a.final_epoch.loss == b.final_epoch.loss);
  CHECK(a.train_metrics.min_ade == b.train_metrics.min_ade);
  CHECK(a.train_metrics.k == cfg.modes);

  // Predictions from the loaded checkpoints agree too, and repeat exactly.
  const Checkpoint ck = load_checkpoint(a.final_checkpoint_stem);
  const PreparedScenario ps = prepare_scenario(data.ids[0], data.scenarios[0], cfg);
  const std::string once = prediction_to_json(predict_prepared(ck.params, cfg, ps));
  CHECK(prediction_to_json(predict_prepared(ck.params, cfg, ps)) == once);
  const Checkpoint ck_b = load_checkpoint(b.final_checkpoint_stem);
  CHECK(prediction_to_json(predict_prepared(ck_b.params, cfg, ps)) == once);

  SUBCASE("a different seed produces a different model") {
    const fs::path dir_c = scratch_dir("train_repro_c");
    RunConfig other = cfg;
    other.seed = cfg.seed + 1;
    train(data, other, dir_c.string(), nullptr);
    CHECK(read_file(dir_c / "checkpoint_final.bin") != read_file(dir_a / "checkpoint_final.bin"));
  }
}

TEST_CASE("periodic checkpointing honors save_every") {
  const fs::path dir = scratch_dir("train_save_every");
  RunConfig cfg = tiny_config();
  cfg.epochs = 4;
  cfg.save_every = 2;
  const Dataset data = tiny_dataset(2);
  train(data, cfg, dir.string(), nullptr);

  CHECK(fs::exists(dir / "checkpoint_epoch2.json"));
  CHECK(fs::exists(dir / "checkpoint_epoch2.bin"));
  // The last epoch writes checkpoint_final instead of a duplicate.
  CHECK_FALSE(fs::exists(dir / "checkpoint_epoch4.json"));
  CHECK(fs::exists(dir / "checkpoint_final.json"));

  const Checkpoint mid = load_checkpoint((dir / "checkpoint_epoch2").string());
  validate_params_for_config(mid.params, cfg);
}

TEST_CASE("train rejects datasets that do not match the config") {
  RunConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("train_reject");

  SUBCASE("t_hist mismatch") {
    SyntheticSpec spec;
    spec.t_hist = 6;  // config implies tau * num_snapshots = 4
    spec.t_future = 3;
    Dataset data;
    data.ids.push_back("bad");
    data.scenarios.push_back(generate_synthetic_scenario(1, spec));
    CHECK_THROWS_WITH_AS(train(data, cfg, dir.string(), nullptr),
                         "scenario 'bad' has t_hist 6, config implies tau * num_snapshots = 4",
                         ValidationError);
  }
  SUBCASE("t_future mismatch") {
    SyntheticSpec spec;
    spec.t_hist = 4;
    spec.t_future = 5;
    Dataset data;
    data.ids.push_back("bad");
    data.scenarios.push_back(generate_synthetic_scenario(1, spec));
    CHECK_THROWS_WITH_AS(train(data, cfg, dir.string(), nullptr),
                         "scenario 'bad' has t_future 5, config expects 3", ValidationError);
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(train(Dataset{}, cfg, dir.string(), nullptr), ValidationError);
  }
}
