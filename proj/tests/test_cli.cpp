#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "siamgcn/csv.hpp"
#include "test_support.hpp"

using siamgcn::testing::TempDir;
using siamgcn::testing::read_text;
using siamgcn::testing::write_text;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

RunResult run_cli(const fs::path& workdir, const std::string& args) {
  const fs::path out = workdir / ".stdout";
  const fs::path err = workdir / ".stderr";
  const std::string cmd = quote(SIAMGCN_CLI_PATH) + " -w " + quote(workdir.string()) + " " + args + " >" +
                          quote(out.string()) + " 2>" + quote(err.string());
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_text(out);
  r.err = read_text(err);
  return r;
}

// Small enough to run the whole pipeline in a few seconds.
const std::string kSmall =
    "--set synth.subjects=24 --set synth.rois=8 --set synth.timepoints=40 --set graph.k=3 "
    "--set model.widths=4,4 --set model.k_order=2 --set train.epochs=2 --set train.batch_size=20 "
    "--set train.pair_budget=60 --set train.test_fraction=0.3 --set eval.n_perm=200";

void run_ok(const fs::path& wd, const std::string& args) {
  const RunResult r = run_cli(wd, args);
  INFO(args);
  INFO(r.err);
  REQUIRE(r.status == 0);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("full pipeline writes every artefact") {
    TempDir dir;
    const fs::path wd = dir.path();
    for (const char* cmd : {"synth", "preprocess", "train"}) run_ok(wd, kSmall + " " + cmd);

    for (const char* f : {"coords.csv", "manifest.csv", "profiles/index.csv", "graph/adjacency.csv", "graph/graph.json",
                          "model/checkpoint.json", "model/checkpoint_epoch_0002.json", "model/loss_trace.csv",
                          "model/split.json", "config.synth.toml", "config.train.toml"}) {
      INFO(f);
      CHECK(fs::exists(wd / f));
    }
    const auto trace = siamgcn::csv::read_matrix(wd / "model" / "loss_trace.csv");
    CHECK(trace.rows() == 2);

    const RunResult ev = run_cli(wd, kSmall + " evaluate");
    REQUIRE(ev.status == 0);
    CHECK(ev.out.find("learned") != std::string::npos);
    CHECK(ev.out.find("baseline") != std::string::npos);
    const auto report = nlohmann::json::parse(read_text(wd / "eval" / "report.json"));
    CHECK(report.at("schema") == "siamgcn-eval-report");
    const auto n = report.at("n_subjects").get<std::size_t>();
    CHECK(report.at("n_pairs").get<std::size_t>() == n * (n - 1) / 2);
    const double auc = report.at("learned").at("auc").get<double>();
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    CHECK(fs::exists(wd / "eval" / "roc_learned.csv"));

    run_ok(wd, kSmall + " baseline");
    CHECK(fs::exists(wd / "baseline" / "summary.json"));

    const RunResult pt = run_cli(wd, kSmall + " permtest --distances eval/distances.csv --column baseline_distance");
    REQUIRE(pt.status == 0);
    const auto perm = nlohmann::json::parse(read_text(wd / "permtest.json"));
    const double p = perm.at("p_value").get<double>();
    CHECK(pt.out == "p_value=" + siamgcn::csv::format_double(p) + "\n");
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    CHECK(perm.at("n_matching").get<std::size_t>() + perm.at("n_non_matching").get<std::size_t>() ==
          report.at("n_pairs").get<std::size_t>());
  }

  TEST_CASE("training twice gives byte-identical checkpoints") {
    TempDir a, b;
    for (const auto* dir : {&a, &b}) {
      for (const char* cmd : {"synth", "preprocess", "train"}) run_ok(dir->path(), kSmall + " " + cmd);
    }
    const std::string first = read_text(a / "model/checkpoint.json");
    CHECK(!first.empty());
    CHECK(first == read_text(b / "model/checkpoint.json"));
    CHECK(read_text(a / "model/loss_trace.csv") == read_text(b / "model/loss_trace.csv"));

    run_ok(b.path(), kSmall + " --set train.seed=2 train");
    CHECK(first != read_text(b / "model/checkpoint.json"));
  }

  TEST_CASE("config files and overrides") {
    TempDir dir;
    write_text(dir / "run.toml", "[synth]\nsubjects = 12\nrois = 6\ntimepoints = 30\n");
    run_ok(dir.path(), "-c run.toml --set synth.subjects=10 synth");
    const auto rows = siamgcn::csv::read_rows(dir / "manifest.csv");
    CHECK(rows.size() == 11);
    const std::string echoed = read_text(dir / "config.synth.toml");
    CHECK(echoed.find("subjects = 10") != std::string::npos);
    CHECK(echoed.find("rois = 6") != std::string::npos);
  }

  TEST_CASE("validation failures exit with 2") {
    TempDir dir;
    RunResult r = run_cli(dir.path(), "--set graph.bogus=1 synth");
    CHECK(r.status == 2);
    CHECK(r.err.find("graph.bogus") != std::string::npos);

    r = run_cli(dir.path(), "--set synth.subjects=7 synth");
    CHECK(r.status == 2);

    r = run_cli(dir.path(), "train");
    CHECK(r.status == 2);
    CHECK(r.err.find("error:") == 0);

    r = run_cli(dir.path(), "permtest --distances nope.csv");
    CHECK(r.status == 2);

    r = run_cli(dir.path(), "--set nokey synth");
    CHECK(r.status == 2);
  }

  TEST_CASE("a diverging run exits with 3") {
    TempDir dir;
    for (const char* cmd : {"synth", "preprocess"}) run_ok(dir.path(), kSmall + " " + cmd);
    const RunResult r = run_cli(dir.path(), kSmall + " --set train.learning_rate=1e300 --set train.epochs=5 train");
    CHECK(r.status == 3);
    CHECK(r.err.find("numeric error") == 0);
  }

  TEST_CASE("evaluate refuses a checkpoint from another graph") {
    TempDir dir;
    for (const char* cmd : {"synth", "preprocess", "train"}) run_ok(dir.path(), kSmall + " " + cmd);
    run_ok(dir.path(), kSmall + " --set graph.k=2 preprocess");
    const RunResult r = run_cli(dir.path(), kSmall + " evaluate");
    CHECK(r.status == 2);
    CHECK(r.err.find("graph") != std::string::npos);
  }

  TEST_CASE("usage errors") {
    TempDir dir;
    CHECK(run_cli(dir.path(), "").status != 0);
    CHECK(run_cli(dir.path(), "frobnicate").status != 0);
    const RunResult help = run_cli(dir.path(), "--help");
    CHECK(help.status == 0);
    CHECK(help.out.find("permtest") != std::string::npos);
  }
}
