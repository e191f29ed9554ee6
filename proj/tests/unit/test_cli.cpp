#include <doctest.h>

#include "tdflow/commands.hpp"
#include "tdflow/experiment.hpp"
#include "tdflow/report.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace tdflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("tdflow_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const TempDir& dir, const std::string& name, const std::string& text) {
  const auto p = dir.path / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTinyGrid = R"({
  "name": "tiny",
  "seed": 3,
  "env": {"kind": "gridworld", "width": 3, "height": 3},
  "policies": [{"kind": "grid_goal", "name": "a", "goal": [0, 2]}, {"kind": "grid_goal", "name": "b", "goal": [2, 0]}],
  "reward": {"kind": "ball", "center": [0, 2], "radius": 0.5},
  "dataset": {"n_transitions": 300, "episode_length": 20},
  "model": {"width": 8, "n_hidden": 2, "time_embed_dim": 4},
  "train": {"algorithm": "td2-cfm", "gamma": 0.8, "batch_size": 16, "steps": 5, "lr": 1e-3},
  "eval": {"n_source_states": 3, "n_model_samples": 16, "episode_length": 20},
  "sweep": {"algorithms": ["td-cfm", "td2-cfm"], "gammas": [0.8, 0.9, 0.95, 0.98, 0.99]},
  "plan": {"episodes": 3, "length": 4, "n_ghm_samples": 4}
})";

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string strip_column(const std::string& csv, std::size_t col) {
  std::istringstream in(csv);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(cells, cell, ',')) {
      if (k++ != col) out += cell + ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("schema errors name the offending field") {
  CHECK(error_of("{}").find("env is required") != std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "trian": {}})").find("trian is not a recognized field") !=
        std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "train": {"gamma": 1.0}})").find("train.gamma") != std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "train": {"steps": 1.5}})").find("train.steps must be of type integer") !=
        std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "torus"}})").find("env.kind must be one of") != std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "policies": [{"kind": "uniform"}, {}]})").find("policies[1].kind") !=
        std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "reward": {"kind": "sum", "terms": [{"kind": "ball", "radius": -1}]}})")
            .find("reward.terms[0].radius") != std::string::npos);
  CHECK(error_of("{not json").find("invalid JSON") != std::string::npos);
  CHECK(error_of(R"({"env": {"kind": "cycle"}, "model": {"time_embed_dim": 5}})").find("even") != std::string::npos);
}

TEST_CASE("config parsing fills defaults and resolves relative paths") {
  const auto cfg = parse_run_config(
      R"({"env": {"kind": "cycle", "n_states": 4}, "checkpoint": "m.ckpt",
          "train": {"algorithm": "td-dd", "path": "curved", "branch_mode": "bernoulli", "gamma": 0.5}})",
      "/base");
  CHECK(cfg.env.n_states == 4);
  CHECK(cfg.train.algorithm == Algorithm::TdDd);
  CHECK(cfg.train.path == PathKind::Curved);
  CHECK(cfg.train.branch_mode == BranchMode::Bernoulli);
  CHECK(*cfg.checkpoint == fs::path("/base/m.ckpt"));
  CHECK(cfg.eval.protocol.gamma == 0.5);
  CHECK(cfg.model.width == 256);
  CHECK(cfg.sweep.gammas.size() == 5);

  const auto tc = make_train_config(cfg, 9);
  CHECK(tc.seed == 9);
  CHECK(tc.target.branch_mode == BranchMode::Bernoulli);
  CHECK(tc.target.gamma == 0.5);
}

TEST_CASE("rewards from config") {
  const auto grid = make_gridworld(GridSpec{3, 3, {}});
  RewardConfig ball;
  ball.kind = "ball";
  ball.center = {1.0, 1.0};
  ball.radius = 0.5;
  ball.value = 2.0;
  RewardConfig gauss;
  gauss.kind = "gaussian";
  gauss.center = {0.0, 0.0};
  gauss.width = 1.0;
  RewardConfig sum;
  sum.kind = "sum";
  sum.terms = {ball, gauss};
  const auto r = build_reward(sum, grid);
  CHECK(r(Vec::Ones(2)) == doctest::Approx(2.0 + std::exp(-1.0)));
  CHECK(r(Vec::Zero(2)) == doctest::Approx(1.0));

  RewardConfig table;
  table.kind = "table";
  table.values = std::vector<double>(9, 0.0);
  table.values[4] = 3.0;
  const Vec values = reward_table(*grid, build_reward(table, grid));
  CHECK(values.sum() == 3.0);
  table.values.pop_back();
  CHECK_THROWS_AS(build_reward(table, grid), ConfigError);
  table.values.push_back(0.0);
  CHECK_THROWS_AS(build_reward(table, nullptr), ConfigError);
}

TEST_CASE("experiment building") {
  const auto cfg = parse_run_config(kTinyGrid);
  const auto exp = build_experiment(cfg);
  CHECK(exp.tabular != nullptr);
  CHECK(exp.library.size() == 2);
  CHECK(exp.tables.size() == 2);
  const auto arch = build_architecture(exp, cfg);
  CHECK(arch.n_policies == 2);
  CHECK(arch.state_dim == 2);
  CHECK(arch.action_dim == 5);

  auto bad = cfg;
  bad.policies[0].kind = "goal_seeking";
  CHECK_THROWS_AS(build_experiment(bad), ConfigError);
  CHECK_THROWS_AS(build_dataset(exp, cfg, Algorithm::McCfm, 0.9), ConfigError);
}

TEST_CASE("train is reproducible and zero steps keeps the initialization") {
  TempDir dir;
  const auto config = write_config(dir, "c.json", kTinyGrid);
  CommandOptions opt{"train", config, 7, dir.path / "out", std::nullopt, std::nullopt};
  const auto first = run_command(opt);
  const auto second = run_command(opt);
  CHECK(first != second);
  CHECK(slurp(first / "model.ckpt") == slurp(second / "model.ckpt"));
  CHECK(strip_column(slurp(first / "metrics.csv"), 5) == strip_column(slurp(second / "metrics.csv"), 5));
  CHECK(slurp(first / "manifest.json").find("\"status\": \"ok\"") != std::string::npos);

  opt.steps = 0;
  const auto init = run_command(opt);
  const auto ck = load_checkpoint(init / "model.ckpt");
  CHECK(ck.step == 0);
  CHECK(ck.online == ck.target);
  Rng rng = make_rng(parse_run_config(kTinyGrid).model.init_seed.value_or(mix_seed(7, 12)));
  const VectorFieldNet fresh(ck.arch, rng);
  CHECK(fresh.params() == ck.online);
  CHECK(slurp(first / "model.ckpt") != slurp(init / "model.ckpt"));
}

TEST_CASE("eval, plan and sweep produce their reports") {
  TempDir dir;
  const auto config = write_config(dir, "c.json", kTinyGrid);
  const auto out = dir.path / "out";
  const auto trained = run_command({"train", config, std::nullopt, out, 0, std::nullopt});
  const auto ckpt = trained / "model.ckpt";

  const auto eval = run_command({"eval", config, std::nullopt, out, std::nullopt, ckpt});
  const auto report = slurp(eval / "eval.json");
  CHECK(report.find("null") == std::string::npos);
  CHECK(report.find("\"mse_v\"") != std::string::npos);
  const auto again = run_command({"eval", config, std::nullopt, out, std::nullopt, ckpt});
  CHECK(slurp(again / "eval.csv") == slurp(eval / "eval.csv"));

  const auto plan = run_command({"plan", config, std::nullopt, out, std::nullopt, ckpt});
  const auto table = read_csv(plan / "plan.csv");
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows.back()[0] == "gpi");

  const auto sweep = run_command({"gamma-sweep", config, std::nullopt, out, std::nullopt, std::nullopt});
  const auto rows = read_csv(sweep / "sweep.csv");
  CHECK(rows.rows.size() == 10);
  CHECK(rows.header == std::vector<std::string>{"algorithm", "gamma", "horizon", "mse_v", "emd", "norm_nll", "status"});
}

TEST_CASE("checkpoint with a different architecture is rejected") {
  TempDir dir;
  const auto config = write_config(dir, "c.json", kTinyGrid);
  const auto trained = run_command({"train", config, std::nullopt, dir.path, 0, std::nullopt});
  std::string wider = kTinyGrid;
  wider.replace(wider.find("\"width\": 8"), 10, "\"width\": 9");
  const auto other = write_config(dir, "w.json", wider);
  try {
    run_command({"eval", other, std::nullopt, dir.path, std::nullopt, trained / "model.ckpt"});
    FAIL("expected an architecture mismatch");
  } catch (const ConfigError& e) {
    CHECK(exit_code_for(e) == kExitConfig);
  }
}

TEST_CASE("exit codes by failure kind") {
  TempDir dir;
  std::string diverging = kTinyGrid;
  diverging.replace(diverging.find("\"lr\": 1e-3"), 10, "\"lr\": 1e300");
  const auto config = write_config(dir, "d.json", diverging);
  int code = kExitOk;
  try {
    run_command({"train", config, std::nullopt, dir.path, std::nullopt, std::nullopt});
  } catch (const std::exception& e) {
    code = exit_code_for(e);
  }
  CHECK(code == kExitNumeric);

  try {
    run_command({"train", dir.path / "missing.json", std::nullopt, dir.path, std::nullopt, std::nullopt});
  } catch (const std::exception& e) {
    code = exit_code_for(e);
  }
  CHECK(code == kExitIo);

  const auto good = write_config(dir, "c.json", kTinyGrid);
  try {
    run_command({"eval", good, std::nullopt, dir.path, std::nullopt, dir.path / "nope.ckpt"});
  } catch (const std::exception& e) {
    code = exit_code_for(e);
  }
  CHECK(code == kExitIo);
}

TEST_CASE("TDFLOW_OUT overrides the configured output root") {
  TempDir dir;
  std::string text = kTinyGrid;
  text.replace(text.find("\"seed\": 3,"), 10, "\"seed\": 3, \"out_dir\": \"from_config\",");
  const auto config = write_config(dir, "c.json", text);
  ::setenv("TDFLOW_OUT", (dir.path / "env_root").c_str(), 1);
  const auto run = run_command({"oracle", config, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  ::unsetenv("TDFLOW_OUT");
  CHECK(run.parent_path() == dir.path / "env_root");
  CHECK(fs::exists(run / "successor.csv"));
  CHECK(fs::exists(run / "values.csv"));
  const auto fallback = run_command({"oracle", config, std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  CHECK(fallback.parent_path() == dir.path / "from_config");
}

TEST_CASE("plot renders one polyline per series") {
  TempDir dir;
  std::ofstream(dir.path / "two.csv") << "x,y\n1,2\n2,4\n3,3\n";
  std::ofstream(dir.path / "grouped.csv") << "algorithm,gamma,mse\na,0.8,1\na,0.9,2\nb,0.8,1.5\nb,0.9,nan\n";
  const auto single = write_config(
      dir, "p.json", R"({"env": {"kind": "cycle"}, "plot": {"csv": "two.csv", "x": "x", "y": ["y"]}})");
  const auto run = run_command({"plot", single, std::nullopt, dir.path, std::nullopt, std::nullopt});
  const auto svg = slurp(run / "plot.svg");
  auto count = [](const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + 1)) ++n;
    return n;
  };
  CHECK(count(svg, "<polyline") == 1);
  CHECK(svg.rfind("<svg", 0) == 0);

  CommandOptions grouped{"plot", single, std::nullopt, dir.path, std::nullopt, std::nullopt};
  grouped.input = dir.path / "grouped.csv";
  CHECK_THROWS_AS(run_command(grouped), ConfigError);  // x column "x" is absent from grouped.csv
  grouped.command = "oracle";
  CHECK_THROWS_AS(run_command(grouped), ConfigError);

  PlotSection spec;
  spec.x = "gamma";
  spec.y = {"mse"};
  spec.group = "algorithm";
  const auto table = read_csv(dir.path / "grouped.csv");
  CHECK(count(render_svg(table, spec), "<polyline") == 2);
  spec.kind = "bar";
  CHECK(count(render_svg(table, spec), "class=\"bar\"") == 3);
  spec.y = {"missing"};
  CHECK_THROWS_AS(render_svg(table, spec), ConfigError);
}

TEST_CASE("manifest is written atomically and hashes the config") {
  TempDir dir;
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") != content_hash("b"));
  RunManifest m;
  m.command = "train";
  m.seed = 4;
  m.write(dir.path / "manifest.json");
  CHECK(!fs::exists(dir.path / "manifest.json.tmp"));
  CHECK(slurp(dir.path / "manifest.json").find("\"finished\": null") != std::string::npos);
  const auto a = create_run_dir(dir.path, "r");
  const auto b = create_run_dir(dir.path, "r");
  CHECK(a.filename() == "r");
  CHECK(b.filename() == "r-2");
}
