#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "mcap/data.hpp"
#include "mcap/metrics.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("MCAP_BIN");
  REQUIRE_MESSAGE(b != nullptr, "MCAP_BIN must point at the CLI binary");
  return b;
}

// Runs the CLI with sh, captures combined output, returns the exit code.
int run(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = bin() + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

std::string fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("mcap_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE_MESSAGE(bool(is), ("missing " + path).c_str());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("full pipeline: generate, train, caption, eval, retrieve") {
  const std::string base = fresh_dir("pipeline");
  const std::string corpus = base + "/corpus";

  REQUIRE(run("gen-data --out " + corpus + " --pairs 12 --classes 3 --feature-dim 5 --seed 5") ==
          0);
  CHECK(fs::exists(corpus + "/manifest.jsonl"));
  CHECK(fs::exists(corpus + "/run_config.json"));

  const std::string rundir = base + "/run";
  REQUIRE(run("train --data " + corpus + " --out " + rundir +
              " --fusion attention --hidden 8 --embed-dim 6 --epochs 2 --batch-size 4"
              " --lr 1e-3 --min-freq 1 --dropout 0.1 --seed 3",
              base + "/train.log") == 0);
  CHECK(fs::exists(rundir + "/run_config.json"));
  CHECK(fs::exists(rundir + "/splits.json"));
  CHECK(fs::exists(rundir + "/log.jsonl"));
  const std::string ckpt = rundir + "/checkpoints/best";
  REQUIRE(fs::exists(ckpt + "/params.bin"));

  // The echoed config records the effective values, not just the flags given.
  {
    std::ifstream is(rundir + "/run_config.json");
    const auto j = nlohmann::json::parse(is);
    CHECK(j["fusion"] == "attention");
    CHECK(j["hidden"] == 8);
    CHECK(j["epochs"] == 2);
    CHECK(j.contains("split_sizes"));
  }

  const std::string capdir = base + "/cap";
  REQUIRE(run("caption --ckpt " + ckpt + " --data " + corpus + " --splits " + rundir +
              "/splits.json --split test --decode greedy --out " + capdir,
              base + "/caption.log") == 0);
  const auto captions = mcap::metrics::read_caption_file(capdir + "/captions.tsv");
  REQUIRE(!captions.empty());
  for (const auto& [id, cap] : captions) {
    CHECK(cap.find("<pad>") == std::string::npos);
    CHECK(cap.find("<sos>") == std::string::npos);
    CHECK(cap.find("<eos>") == std::string::npos);
  }
  // Caption ids come from the manifest.
  const auto pairs = mcap::data::read_manifest(corpus + "/manifest.jsonl", false);
  for (const auto& [id, cap] : captions) {
    bool known = false;
    for (const auto& p : pairs) known = known || p.id == id;
    CHECK(known);
  }

  // Beam decoding drives the same interface.
  REQUIRE(run("caption --ckpt " + ckpt + " --data " + corpus + " --splits " + rundir +
              "/splits.json --split test --decode beam --beam-size 3 --out " + base + "/cap_beam",
              base + "/caption_beam.log") == 0);
  CHECK(fs::exists(base + "/cap_beam/captions.tsv"));

  const std::string evaldir = base + "/eval";
  REQUIRE(run("eval --data " + corpus + " --candidates " + capdir + "/captions.tsv --out " +
              evaldir,
              base + "/eval.log") == 0);
  CHECK(fs::exists(evaldir + "/report.tsv"));
  CHECK(fs::exists(evaldir + "/report.json"));
  const std::string eval_out = slurp(base + "/eval.log");
  CHECK(eval_out.find("BLEU") != std::string::npos);
  CHECK(eval_out.find("CIDEr") != std::string::npos);

  const std::string retdir = base + "/ret";
  REQUIRE(run("retrieve --ckpt " + ckpt + " --data " + corpus + " --splits " + rundir +
              "/splits.json --split test --out " + retdir,
              base + "/retrieve.log") == 0);
  CHECK(fs::exists(retdir + "/ranks.tsv"));
  CHECK(fs::exists(retdir + "/retrieval.json"));
  {
    std::ifstream is(retdir + "/retrieval.json");
    const auto j = nlohmann::json::parse(is);
    CHECK(j.contains("r_at_1"));
    CHECK(j.contains("median_rank"));
  }

  fs::remove_all(base);
}

TEST_CASE("gradient verification runs as a command") {
  CHECK(run("grad-check --fusion early --pretrained frozen-file --seed 1") == 0);
  // An impossible tolerance turns the same run into a numeric failure.
  CHECK(run("grad-check --fusion early --pretrained frozen-file --seed 1 --tol 1e-15") == 3);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);                       // a subcommand is required
  CHECK(run("frobnicate") == 1);             // unknown subcommand
  CHECK(run("gen-data --bogus 3") == 1);     // unknown flag
  CHECK(run("train") == 1);                  // missing required --data
  CHECK(run("gen-data --classes 1") == 1);   // out-of-range value
  CHECK(run("--help") == 0);                 // help is a clean exit
}

TEST_CASE("data and file problems exit with 2") {
  const std::string base = fresh_dir("errors");
  CHECK(run("train --data /nonexistent/corpus --out " + base + "/r") == 2);
  CHECK(run("eval --data /nonexistent/corpus --candidates /nonexistent/c.tsv --out " + base +
            "/e") == 2);
  CHECK(run("caption --ckpt /nonexistent/ckpt --data /nonexistent/corpus --out " + base + "/c") ==
        2);

  // A real corpus but a candidate file naming an unknown clip.
  const std::string corpus = base + "/corpus";
  REQUIRE(run("gen-data --out " + corpus + " --pairs 8 --classes 2 --seed 1") == 0);
  std::ofstream os(base + "/bad.tsv");
  os << "ghost_clip\tsome caption\n";
  os.close();
  CHECK(run("eval --data " + corpus + " --candidates " + base + "/bad.tsv --out " + base +
            "/e2") == 2);
  fs::remove_all(base);
}

TEST_CASE("MCAP_OUT_ROOT supplies the default output root") {
  const std::string base = fresh_dir("outroot");
  const std::string cmd = "MCAP_OUT_ROOT=" + base + " " + bin() +
                          " gen-data --pairs 6 --classes 2 --seed 2 >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(base + "/corpus/manifest.jsonl"));
  fs::remove_all(base);
}
