#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sdnlw/studies.hpp"

using namespace sdnlw;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sdnlw_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? v : nullptr;
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

StudySpec tiny_strong(const fs::path& out) {
  StudySpec s;
  s.study = StudyKind::strong_triviality;
  s.n_ladder = {3, 4, 6};
  s.mc_replicas = 3;
  s.T = 0.5;
  s.h = 0.05;
  s.seed = 99;
  s.output_dir = out.string();
  return s;
}

}  // namespace

TEST_CASE("ladder parsing") {
  CHECK(parse_ladder("4:64:x2") == std::vector<int>{4, 8, 16, 32, 64});
  CHECK(parse_ladder("8:20:+4") == std::vector<int>{8, 12, 16, 20});
  CHECK(parse_ladder("[16, 32, 64, 128]") == std::vector<int>{16, 32, 64, 128});
  CHECK(parse_ladder("5") == std::vector<int>{5});
  CHECK_THROWS_AS(parse_ladder("[8, 4]"), ConfigError);
  CHECK_THROWS_AS(parse_ladder("[1, 4]"), ConfigError);
  CHECK_THROWS_AS(parse_ladder("4:64:x1"), ConfigError);
  CHECK_THROWS_AS(parse_ladder("four"), ConfigError);
}

TEST_CASE("study spec parsing") {
  const auto s = parse_study_spec(
      "# comment\n[run]\nstudy = weak\nn_ladder = [16, 32]\nalpha_rule = kappa_log\nkappa = 1.5\nmc_replicas = 8\n");
  CHECK(s.study == StudyKind::weak_limit);
  CHECK(s.n_ladder == std::vector<int>{16, 32});
  CHECK(s.alpha_at(16) == Approx(1.5 / std::sqrt(std::log(16.0))));
  CHECK(s.mc_replicas == 8);

  CHECK_THROWS_AS(parse_study_spec("study = strong\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_study_spec("study = strong\nkappa = 1\nkappa = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_study_spec("study = strong\nmc_replicas = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_study_spec("study = nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_study_spec("study = strong\nT = abc\n"), ConfigError);

  const auto t = parse_study_spec("study = tuned\nalpha_rule = tuned_gamma\ndamping_rule = inv_log\ngamma = 1\n");
  const double logN = std::log(64.0);
  CHECK(t.damping_rule.at(64) == Approx(1.0 / logN));
  CHECK(t.alpha_at(64) * t.alpha_at(64) == Approx(2.0 / (logN * logN)));

  const auto l = parse_study_spec("study = strong\nn_ladder = [8, 16]\nalpha_rule = list:0.5,0.25\n");
  CHECK(l.alpha_at(16) == 0.25);
  CHECK_THROWS_AS(l.alpha_at(32), ConfigError);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"strong", "weak", "wick", "tuned", "lambda"}) {
    INFO(name);
    const auto s = load_study_spec(fs::path(SDNLW_SOURCE_DIR) / "configs" / (std::string(name) + ".toml"));
    CHECK(s.study == parse_study(name));
  }
}

TEST_CASE("initial data library") {
  CHECK(initial_data("zero", 1.0, 4).pos.is_zero());
  const auto m = initial_data("single_mode", 2.0, 4);
  CHECK(winfty_norm(m.pos, 0.0) == Approx(2.0));
  const auto b = initial_data("smooth_bump", 1.5, 16);
  CHECK(to_physical(b.pos, 34)(0, 0) == Approx(1.5).epsilon(1e-12));
  CHECK(b.vel.is_zero());
  CHECK(b.pos.hermitian_defect() == 0.0);
  CHECK_THROWS_AS(initial_data("nope", 1.0, 4), ConfigError);
}

TEST_CASE("csv round trip") {
  const auto dir = scratch("csv");
  {
    CsvWriter w(dir / "a.csv", {"x", "label"});
    w.row({"1", "plain"});
    w.row({"2", "has,comma \"q\""});
  }
  const auto t = read_csv(dir / "a.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "has,comma \"q\"");
  CHECK(t.column("label") == 1);
  CHECK(t.column("missing") == -1);
  CHECK(fmt_double(0.1) == "0.10000000000000001");
}

TEST_CASE("lambda study output") {
  const auto dir = scratch("lambda");
  StudySpec s;
  s.study = StudyKind::lambda_asymptotics;
  s.n_ladder = {4};
  s.output_dir = dir.string();
  auto r = run_lambda_study(s);
  CHECK(r.exit_code == kExitPass);
  auto t = read_csv(dir / "lambda_vs_logN.csv");
  CHECK(t.rows.size() == 1);

  s.n_ladder = parse_ladder("4:4096:x2");
  s.alpha_rule.value = 0.1;
  r = run_lambda_study(s);
  t = read_csv(dir / "lambda_vs_logN.csv");
  CHECK(t.rows.size() == 11);
  const int lam = t.column("lambda"), ratio = t.column("ratio");
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    CHECK(std::stod(t.rows[i][lam]) > std::stod(t.rows[i - 1][lam]));
  CHECK(std::stod(t.rows.back()[ratio]) > 0.5);
}

TEST_CASE("strong study is reproducible and independent of the worker count") {
  const auto a = scratch("strong_a"), b = scratch("strong_b");
  const auto ra = run_strong_study(tiny_strong(a), 1);
  const auto rb = run_strong_study(tiny_strong(b), 3);
  CHECK(ra.exit_code == rb.exit_code);
  for (const char* f : {"strong_split.csv", "strong_records.csv"}) CHECK(slurp(a / f) == slurp(b / f));

  const auto t = read_csv(a / "strong_split.csv");
  CHECK(t.header == std::vector<std::string>{"N", "statistic", "z_contribution", "vlin_contribution",
                                             "V_contribution", "total"});
  CHECK(t.rows.size() == 9);

  auto zs = tiny_strong(scratch("strong_zero"));
  zs.initial_data = "zero";
  run_strong_study(zs, 1);
  const auto tz = read_csv(fs::path(zs.output_dir) / "strong_split.csv");
  for (const auto& row : tz.rows) CHECK(std::stod(row[tz.column("vlin_contribution")]) == 0.0);
}

TEST_CASE("weak study output") {
  const auto dir = scratch("weak");
  StudySpec s;
  s.study = StudyKind::weak_limit;
  s.alpha_rule.kind = AlphaRule::kappa_log;
  s.kappa = 0.0;
  s.initial_data = "zero";
  s.n_ladder = {4, 6, 8};
  s.mc_replicas = 4;
  s.T = 0.5;
  s.compare_n = 8;
  s.compare_replicas = 2;
  s.output_dir = dir.string();
  const auto r = run_weak_study(s, 2);
  const auto t = read_csv(dir / "weak_error.csv");
  CHECK(t.rows.size() == 3 * (3 + 2));
  // kappa = 0, zero data: the ladder runs carry no noise and no data, so u_N = w_kappa = 0
  int ladder_rows = 0;
  for (const auto& row : t.rows)
    if (std::stod(row[t.column("kappa")]) == 0.0 && row[t.column("reference")] == "w_kappa") {
      CHECK(std::stod(row[t.column("u_error")]) == 0.0);
      ++ladder_rows;
    }
  CHECK(ladder_rows == 9);
  (void)r;
}

TEST_CASE("plot data manifest") {
  const auto empty_in = scratch("plot_empty_in"), empty_out = scratch("plot_empty_out");
  const auto r0 = emit_plotdata(empty_in, empty_out);
  CHECK(r0.exit_code == kExitPass);
  const auto m0 = nlohmann::json::parse(slurp(empty_out / "manifest.json"));
  CHECK(m0["figures"].empty());

  const auto in = scratch("plot_in"), out = scratch("plot_out");
  run_strong_study(tiny_strong(in), 1);
  StudySpec l;
  l.study = StudyKind::lambda_asymptotics;
  l.n_ladder = {4, 8, 16};
  l.output_dir = in.string();
  run_lambda_study(l);
  emit_plotdata(in, out);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  REQUIRE(m["figures"].size() == 2);
  CHECK(m["figures"][0]["id"] == "lambda_vs_logN");
  CHECK(m["figures"][1]["id"] == "strong_split");
  CHECK(fs::exists(out / "strong_split.csv"));

  {
    std::ofstream bad(in / "wick_decay.csv");
    bad << "N,ell\n8,1\n";
  }
  CHECK_THROWS_AS(emit_plotdata(in, scratch("plot_bad")), std::runtime_error);
  fs::remove(in / "wick_decay.csv");

  const char* py = env("SDNLW_PYTHON");
  const char* schema = env("SDNLW_SCHEMA");
  if (py == nullptr || schema == nullptr) SKIP("python or schema path not provided");
  for (const auto& dir : {empty_out, out}) {
    const std::string cmd = std::string(py) +
                            " -c \"import json,sys,jsonschema; jsonschema.validate(json.load(open(sys.argv[1])),"
                            " json.load(open(sys.argv[2])))\" " +
                            (dir / "manifest.json").string() + " " + schema;
    CHECK(run(cmd) == 0);
  }
  // the schema must also reject a malformed manifest
  {
    std::ofstream bad(out / "bad.json");
    bad << R"({"schema_version": 2, "generator": "x", "figures": []})";
  }
  const std::string bad_cmd = std::string(py) +
                              " -c \"import json,sys,jsonschema; jsonschema.validate(json.load(open(sys.argv[1])),"
                              " json.load(open(sys.argv[2])))\" " +
                              (out / "bad.json").string() + " " + schema;
  CHECK(run(bad_cmd) != 0);
}

TEST_CASE("command-line exit codes") {
  const char* cli = env("SDNLW_CLI");
  if (cli == nullptr) SKIP("SDNLW_CLI not set");
  const auto dir = scratch("cli");
  const std::string exe = std::string(cli);
  {
    std::ofstream c(dir / "bad.toml");
    c << "study = strong\nunknown_key = 3\n";
  }
  {
    std::ofstream c(dir / "lambda.toml");
    c << "study = lambda\nn_ladder = [4, 8]\nalpha_rule = constant:1\noutput_dir = " << (dir / "out").string()
      << "\n";
  }
  CHECK(run(exe + " study strong --config " + (dir / "bad.toml").string()) == kExitConfig);
  CHECK(run(exe + " study strong --config " + (dir / "missing.toml").string()) == kExitConfig);
  CHECK(run(exe + " study strong --config " + (dir / "lambda.toml").string()) == kExitConfig);
  CHECK(run(exe + " study lambda --config " + (dir / "lambda.toml").string()) == kExitPass);
  CHECK(fs::exists(dir / "out" / "lambda_vs_logN.csv"));
  CHECK(run(exe + " renorm --out " + (dir / "r").string()) == kExitPass);
  CHECK(run(exe + " renorm --alpha 0 --out " + (dir / "r").string()) == kExitConfig);
  CHECK(run(exe + " nonsense") == kExitConfig);
  CHECK(run(exe + " plotdata --in " + (dir / "out").string() + " --out " + (dir / "plot").string()) == kExitPass);
  CHECK(fs::exists(dir / "plot" / "manifest.json"));
}
