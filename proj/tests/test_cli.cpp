#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "ppkt/evalkit.hpp"
#include "ppkt/trainer.hpp"
#include "test_util.hpp"

using namespace ppkt;
using ppkt::test::file_bytes;
using ppkt::test::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ppkt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::vector<std::string> kTinyModel{"--teacher-channels", "4,4,6", "--student-widths", "8,8", "--embed-dim", "8"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("gen-data writes the requested frame count") {
    TempDir dir("cli_gen");
    const auto data = (dir / "d").string();
    const Run r = cli({"gen-data", "--out", data, "--scenes", "2", "--frames-per-scene", "3", "--seed", "4"});
    REQUIRE(r.code == 0);
    const Dataset d = read_dataset(data);
    CHECK(d.frames.size() == 6);
    CHECK(d.seed == 4);
  }

  TEST_CASE("unknown flags and missing required options exit 1") {
    CHECK(cli({"gen-data", "--out", "x", "--bogus", "1"}).code == 1);
    CHECK(cli({"gen-data"}).code == 1);
    CHECK(cli({"no-such-command"}).code == 1);
  }

  TEST_CASE("help lists every flag with its default") {
    const Run r = cli({"pretrain", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--lr0", "--momentum", "--weight-decay", "--steps", "--batch-frames", "--pairs-per-frame",
                             "--lr-final-factor", "--loss-kind", "--seed", "--tau", "--embed-dim", "--voxel-size"}) {
      INFO(flag);
      CHECK(r.out.find(flag) != std::string::npos);
    }
    CHECK(r.out.find("0.04") != std::string::npos);
    CHECK(r.out.find("128") != std::string::npos);
    CHECK(r.out.find("0.025") != std::string::npos);
    CHECK(r.out.find("0.0001") != std::string::npos);
    for (const char* cmd : {"gen-data", "pretrain-teacher", "gradcheck", "eval-retrieval", "probe", "diversity"}) {
      const Run h = cli({cmd, "--help"});
      INFO(cmd);
      CHECK(h.code == 0);
      CHECK(h.out.find("--") != std::string::npos);
    }
  }

  TEST_CASE("gradcheck exits 0 and reports the error") {
    const Run r = cli({"gradcheck", "--loss", "ppnce", "--samples", "40"});
    CHECK(r.code == 0);
    CHECK(r.out.find("max relative error") != std::string::npos);
    CHECK(cli({"gradcheck", "--loss", "mse"}).code == 2);
  }

  TEST_CASE("the whole pipeline runs and repeats byte for byte") {
    TempDir dir("cli_pipe");
    const auto data = (dir / "d").string();
    REQUIRE(cli({"gen-data", "--out", data, "--scenes", "2", "--frames-per-scene", "3"}).code == 0);
    const auto teacher = (dir / "t.ppkc").string();
    REQUIRE(cli(with({"pretrain-teacher", "--data", data, "--out", teacher, "--steps", "3"}, kTinyModel)).code == 0);
    for (const char* tag : {"a", "b"}) {
      const Run r = cli(with({"pretrain", "--data", data, "--teacher", teacher, "--out", (dir / (std::string(tag) + ".ppkc")).string(),
                              "--metrics", (dir / (std::string(tag) + ".csv")).string(), "--steps", "3", "--pairs-per-frame", "32"},
                             {"--student-widths", "8,8", "--embed-dim", "8"}));
      REQUIRE(r.code == 0);
    }
    CHECK(file_bytes(dir / "a.ppkc") == file_bytes(dir / "b.ppkc"));
    CHECK(file_bytes(dir / "a.csv") == file_bytes(dir / "b.csv"));

    const auto ckpt = (dir / "a.ppkc").string();
    const auto ev = (dir / "ev.csv").string();
    REQUIRE(cli({"eval-retrieval", "--data", data, "--checkpoint", ckpt, "--pairs", "32", "--metrics", ev}).code == 0);
    const auto rows = read_metrics(ev);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].name == "retrieval_top1");

    const auto pm = (dir / "probe.csv").string();
    REQUIRE(cli({"probe", "--train-data", data, "--heldout-data", data, "--checkpoint", ckpt, "--probe-steps", "5",
                 "--metrics", pm, "--embeddings", (dir / "emb.csv").string()})
                .code == 0);
    const auto prow = read_metrics(pm);
    CHECK(std::any_of(prow.begin(), prow.end(), [](const MetricsRow& m) { return m.name == "probe_mean_iou"; }));
    const Run scratch = cli(with({"probe", "--train-data", data, "--heldout-data", data, "--probe-steps", "5"},
                                 {"--student-widths", "8,8", "--embed-dim", "8"}));
    CHECK(scratch.code == 0);

    const auto dm = (dir / "div.csv").string();
    REQUIRE(cli({"diversity", "--data", data, "--teacher", teacher, "--samples", "20", "--metrics", dm}).code == 0);
    CHECK(read_metrics(dm).size() == 2);
  }

  TEST_CASE("a missing dataset is a runtime error, exit 2") {
    const Run r = cli({"pretrain", "--data", "/nonexistent/ppkt", "--teacher", "/nonexistent/t", "--out", "/tmp/x"});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
  }
}
