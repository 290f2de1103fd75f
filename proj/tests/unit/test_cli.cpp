#include <doctest.h>

#include <cstdlib>
#include <regex>
#include <sstream>
#include <string>

#include <json.hpp>

#include "commands.hpp"
#include "iaf/dataio.hpp"
#include "iaf/fileutil.hpp"
#include "temp_dir.hpp"
#include "tiny_config.hpp"

namespace fs = std::filesystem;
using namespace iaf;
using namespace iaf::cli;

namespace {

std::size_t data_rows(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);  // header
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(IAF_BIN_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Synthesizes the tiny dataset and trains every model once for the suite.
struct Pipeline {
  test_util::TempDir tmp{"cli_pipeline"};
  fs::path config, data, ian, det, gate, det_late;

  Pipeline() {
    config = tmp.path / "tiny.cfg";
    write_file_atomic(config, tiny::kCliConfig);
    data = tmp.path / "data";
    run_synth({config, data, std::nullopt});
    run_train_ian({data, config, tmp.path / "ian", std::nullopt, std::nullopt});
    ian = tmp.path / "ian" / "ian.ckpt";
    run_train_detector({data, config, tmp.path / "det", std::nullopt, std::string("score2")});
    det = tmp.path / "det" / "detector.ckpt";
    run_train_detector({data, config, tmp.path / "late", std::nullopt, std::string("late")});
    det_late = tmp.path / "late" / "detector.ckpt";
    run_optimize_gate({data, det, ian, config, tmp.path / "gate", std::nullopt});
    gate = tmp.path / "gate" / "gate.txt";
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth is byte-identical for the same seed and differs for another") {
    test_util::TempDir tmp("cli_synth");
    const fs::path cfg = tmp.path / "tiny.cfg";
    write_file_atomic(cfg, tiny::kCliConfig);
    const auto written = run_synth({cfg, tmp.path / "a", std::nullopt});
    REQUIRE(written.size() == 2);
    CHECK(written.back().filename() == "synth_manifest.json");
    run_synth({cfg, tmp.path / "b", std::nullopt});
    run_synth({cfg, tmp.path / "c", std::uint64_t{99}});
    const auto a = test_util::tree_bytes(tmp.path / "a", "_manifest.json");
    CHECK(a.size() == 1 + 2 * 24 + 24);  // manifest + color/thermal + annotations
    CHECK(a == test_util::tree_bytes(tmp.path / "b", "_manifest.json"));
    CHECK(a != test_util::tree_bytes(tmp.path / "c", "_manifest.json"));
  }

  TEST_CASE("run manifest records command, seed and outputs") {
    test_util::TempDir tmp("cli_manifest");
    const fs::path cfg = tmp.path / "tiny.cfg";
    write_file_atomic(cfg, tiny::kCliConfig);
    const auto written = run_synth({cfg, tmp.path / "d", std::uint64_t{5}});
    const auto j = nlohmann::json::parse(read_file(written.back()));
    CHECK(j.at("command") == "synth");
    CHECK(j.at("seed") == 5);
    CHECK(j.at("duration_seconds").get<double>() >= 0.0);
    CHECK(j.at("outputs").size() == 1);
  }

  TEST_CASE("output directory comes from --out or the environment") {
    ::unsetenv(kOutputDirEnv);
    CHECK_THROWS_AS(resolve_output_dir(std::nullopt), UsageError);
    test_util::TempDir tmp("cli_env");
    ::setenv(kOutputDirEnv, (tmp.path / "env").c_str(), 1);
    CHECK(resolve_output_dir(std::nullopt) == tmp.path / "env");
    CHECK(resolve_output_dir(tmp.path / "flag") == tmp.path / "flag");
    ::unsetenv(kOutputDirEnv);
  }

  TEST_CASE("default dataset passes the self-check") {
    test_util::TempDir tmp("cli_default");
    run_synth({std::nullopt, tmp.path / "data", std::nullopt});
    const auto m = read_manifest(DatasetLayout{tmp.path / "data"}.manifest());
    CHECK(m.frames.size() == 500);
    const auto written = run_eval({tmp.path / "data", std::nullopt, "test", true, std::nullopt, tmp.path / "eval"});
    const auto j = nlohmann::json::parse(read_file(tmp.path / "eval" / "lamr.json"));
    CHECK(j.at("all").get<double>() < 1e-9);
    CHECK(written.back().filename() == "eval_manifest.json");
  }

  TEST_CASE("loss logs have one row per step") {
    auto& p = pipeline();
    CHECK(data_rows(p.tmp.path / "ian" / "ian_loss.csv") == 2);          // 16 frames, batch 8, 1 epoch
    CHECK(data_rows(p.tmp.path / "det" / "detector_loss.csv") == 2 * 16);  // one image per step
    CHECK(data_rows(p.tmp.path / "gate" / "gate_loss.csv") >= 2);
    const std::string header = read_file(p.tmp.path / "det" / "detector_loss.csv").substr(0, 20);
    CHECK(header.rfind("epoch,step,lr,total", 0) == 0);
  }

  TEST_CASE("training commands are reproducible") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_repeat");
    run_train_detector({p.data, p.config, tmp.path / "det", std::nullopt, std::string("score2")});
    CHECK(read_file(tmp.path / "det" / "detector.ckpt") == read_file(p.det));
    run_train_ian({p.data, p.config, tmp.path / "ian", std::nullopt, std::nullopt});
    CHECK(read_file(tmp.path / "ian" / "ian.ckpt") == read_file(p.ian));
    run_optimize_gate({p.data, p.det, p.ian, p.config, tmp.path / "gate", std::nullopt});
    CHECK(read_file(tmp.path / "gate" / "gate.txt") == read_file(p.gate));
  }

  TEST_CASE("missing prerequisites are named") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_prereq");
    try {
      run_optimize_gate({p.data, p.det, std::nullopt, p.config, tmp.path, std::nullopt});
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("--ian") != std::string::npos);
    }
    CHECK_THROWS_WITH_AS(
        run_optimize_gate({p.data, tmp.path / "nope.ckpt", p.ian, p.config, tmp.path, std::nullopt}),
        doctest::Contains("nope.ckpt"), std::exception);
    DetectArgs d{p.data, p.det, "ia", p.ian, std::nullopt, std::nullopt, "test", std::nullopt, p.config, tmp.path};
    CHECK_THROWS_WITH_AS(run_detect(d), doctest::Contains("--gate"), std::runtime_error);
    CHECK_THROWS_WITH_AS(run_eval({p.data, std::nullopt, "test", false, p.config, tmp.path}),
                         doctest::Contains("--detections"), UsageError);
  }

  TEST_CASE("detect writes one record per kept box with frame ids from the manifest") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_detect");
    run_detect({p.data, p.det, "ia", p.ian, p.gate, std::nullopt, "test", std::nullopt, p.config, tmp.path});
    const auto dets = read_detections(tmp.path / "detections.txt");
    const auto m = read_manifest(DatasetLayout{p.data}.manifest());
    std::set<std::string> ids;
    for (const auto& f : m.frames) {
      if (f.set == "test") ids.insert(f.id);
    }
    for (const auto& d : dets) {
      CHECK(ids.count(d.frame_id) == 1);
      CHECK(d.score >= 0.0);
      CHECK(d.score <= 1.0);
    }
  }

  TEST_CASE("average weighting equals ia with the color weight forced to one half") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_force");
    run_detect({p.data, p.det, "average", std::nullopt, std::nullopt, std::nullopt, "test", std::nullopt, p.config,
                tmp.path / "avg"});
    run_detect({p.data, p.det, "ia", std::nullopt, std::nullopt, std::nullopt, "test", 0.5, p.config,
                tmp.path / "forced"});
    CHECK(read_file(tmp.path / "avg" / "detections.txt") == read_file(tmp.path / "forced" / "detections.txt"));
    CHECK_THROWS_AS(run_detect({p.data, p.det, "average", std::nullopt, std::nullopt, std::nullopt, "test", 0.5,
                                p.config, tmp.path / "x"}),
                    UsageError);
    CHECK_THROWS_AS(run_detect({p.data, p.det, "ia", std::nullopt, std::nullopt, std::nullopt, "test", 1.5,
                                p.config, tmp.path / "x"}),
                    UsageError);
  }

  TEST_CASE("detect enforces the architecture") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_arch");
    CHECK_THROWS_WITH_AS(run_detect({p.data, p.det, "average", std::nullopt, std::nullopt, std::string("late"),
                                     "test", std::nullopt, p.config, tmp.path}),
                         doctest::Contains("mismatch"), std::runtime_error);
    CHECK_THROWS_WITH_AS(run_detect({p.data, p.det_late, "hard01", p.ian, std::nullopt, std::nullopt, "test",
                                     std::nullopt, p.config, tmp.path}),
                         doctest::Contains("score2"), std::runtime_error);
    CHECK_NOTHROW(run_detect({p.data, p.det_late, "average", std::nullopt, std::nullopt, std::nullopt, "test",
                              std::nullopt, p.config, tmp.path}));
  }

  TEST_CASE("eval writes per-condition curves and a summary") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_eval");
    run_detect({p.data, p.det, "average", std::nullopt, std::nullopt, std::nullopt, "test", std::nullopt, p.config,
                tmp.path / "det"});
    run_eval({p.data, tmp.path / "det" / "detections.txt", "test", false, p.config, tmp.path / "eval"});
    CHECK(fs::exists(tmp.path / "eval" / "curve_all.csv"));
    const auto j = nlohmann::json::parse(read_file(tmp.path / "eval" / "lamr.json"));
    const double lamr = j.at("all").get<double>();
    CHECK(lamr >= 0.0);
    CHECK(lamr <= 1.0);
  }

  TEST_CASE("compare ranks exactly the three weighting modes") {
    auto& p = pipeline();
    test_util::TempDir tmp("cli_compare");
    std::string table;
    run_compare({p.data, p.det, p.ian, p.gate, "test", p.config, tmp.path}, &table);
    const auto j = nlohmann::json::parse(read_file(tmp.path / "compare.json"));
    REQUIRE(j.size() == 3);
    std::set<std::string> modes;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(j[i].at("rank") == i + 1);
      modes.insert(j[i].at("weighting").get<std::string>());
      if (i) CHECK(j[i - 1]["lamr"]["all"].get<double>() <= j[i]["lamr"]["all"].get<double>());
    }
    CHECK(modes == std::set<std::string>{"average", "hard01", "ia"});
    CHECK(table == read_file(tmp.path / "compare.txt"));
  }

  TEST_CASE("rank_rows orders by all-condition lamr and keeps ties stable") {
    const auto row = [](const char* mode, double lamr) {
      eval::ConditionBreakdown b;
      b.all = eval::EvalResult{};
      b.all->lamr = lamr;
      return CompareRow{mode, b};
    };
    const auto r = rank_rows({row("average", 0.4), row("hard01", 0.3), row("ia", 0.4)});
    CHECK(r[0].mode == "hard01");
    CHECK(r[1].mode == "average");
    CHECK(r[2].mode == "ia");
  }

  TEST_CASE("plot draws one polyline point per curve row") {
    test_util::TempDir tmp("cli_plot");
    const std::vector<eval::CurvePoint> a{{0.0, 1.0}, {0.05, 0.6}, {0.5, 0.3}, {5.0, 0.1}};
    const std::vector<eval::CurvePoint> b{{0.0, 1.0}, {2.0, 0.002}};
    write_file_atomic(tmp.path / "a.csv", eval::curve_csv(a));
    write_file_atomic(tmp.path / "b.csv", eval::curve_csv(b));
    const auto written = run_plot({{tmp.path / "a.csv", tmp.path / "b.csv"}, {"first", "second"}, tmp.path, "p.svg"});
    const std::string svg = read_file(written.front());
    const std::regex poly("points=\"([^\"]*)\"");
    std::vector<std::size_t> counts;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
      const std::string pts = (*it)[1];
      counts.push_back(static_cast<std::size_t>(std::count(pts.begin(), pts.end(), ',')));
    }
    CHECK(counts == std::vector<std::size_t>{4, 2});
    CHECK(svg.find(">first<") != std::string::npos);
    CHECK_THROWS_AS(run_plot({{tmp.path / "a.csv"}, {"x", "y"}, tmp.path, "q.svg"}), UsageError);
    CHECK_THROWS_AS(run_plot({{tmp.path / "missing.csv"}, {}, tmp.path, "q.svg"}), std::runtime_error);
  }

  TEST_CASE("binary exit codes") {
    test_util::TempDir tmp("cli_exit");
    ::unsetenv(kOutputDirEnv);
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("--version") == 0);
    CHECK(run_binary("") == 2);
    CHECK(run_binary("synth --bogus") == 2);
    CHECK(run_binary("synth") == 2);  // no output directory
    CHECK(run_binary("eval --data " + tmp.path.string() + "/none --self-check --out " + tmp.path.string()) == 1);
    CHECK(run_binary("synth --config " + tmp.path.string() + "/none.cfg --out " + tmp.path.string()) == 1);
  }
}
