#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mate/cli/commands.hpp"
#include "mate/cli/config.hpp"
#include "mate/data/nbest.hpp"
#include "test_util.hpp"

using namespace mate;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "mate");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> synth_args(const std::filesystem::path& out) {
  return {"synth", "--out", out.string(), "--set", "train_count=40", "--set", "dev_count=8",
          "--set", "test_count=4"};
}

std::vector<std::string> train_args(const std::filesystem::path& data, const std::filesystem::path& out) {
  return {"train", "--data", data.string(), "--out", out.string(), "--steps", "4", "--batch-size", "4",
          "--set", "d_model=16", "--set", "ffn_dim=16", "--set", "heads=2", "--set", "speech_dim=8",
          "--set", "speech_ffn_dim=8", "--set", "log_every=1"};
}

}  // namespace

TEST_CASE("config precedence and validation") {
  test::TempDir dir("cfg");
  cli::RunConfig cfg({{"lr", "0.001"}, {"steps", "10"}, {"name", "x"}, {"grid", "0,0.5"}});
  {
    std::ofstream f(dir / "a.cfg");
    f << "# comment\nlr = 0.01\n\nsteps=20\n";
  }
  cfg.merge_file(dir / "a.cfg");
  CHECK(cfg.real("lr") == 0.01);
  CHECK(cfg.count("steps") == 20);
  cfg.set("lr", "0.5");
  CHECK(cfg.real("lr") == 0.5);
  CHECK(cfg.list("grid").size() == 2);
  CHECK_THROWS_AS(cfg.set("unknown", "1"), cli::UsageError);
  cfg.set("steps", "many");
  CHECK_THROWS_AS(cfg.count("steps"), cli::UsageError);
  {
    std::ofstream f(dir / "b.cfg");
    f << "bogus = 1\n";
  }
  CHECK_THROWS_AS(cfg.merge_file(dir / "b.cfg"), cli::UsageError);

  // A named flag beats --set, which beats the config file.
  {
    std::ofstream f(dir / "s.cfg");
    f << "seed = 3\ntrain_count = 40\ndev_count = 8\ntest_count = 4\n";
  }
  const auto out = dir / "corpus";
  const Result r = run({"synth", "--config", (dir / "s.cfg").string(), "--set", "seed=4", "--seed", "5",
                        "--out", out.string()});
  REQUIRE(r.code == cli::kOk);
  const std::string echoed = slurp(out / "run.cfg");
  CHECK(echoed.find("seed = 5") != std::string::npos);
  CHECK(echoed.find("train_count = 40") != std::string::npos);
  CHECK(json::parse(slurp(out / "manifest.json"))["seed"] == "5");
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"bogus"}).code == cli::kUsage);
  CHECK(run({"train", "--set", "nope=1"}).code == cli::kUsage);
  CHECK(run({"train", "--set", "noequals"}).code == cli::kUsage);
  CHECK(run({"synth", "--steps", "3"}).code == cli::kUsage);
  CHECK(run({"rescore"}).code == cli::kUsage);
  const Result help = run({"eval", "--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("--lambda") != std::string::npos);
}

TEST_CASE("synth is deterministic per seed") {
  test::TempDir dir("synth");
  REQUIRE(run(synth_args(dir / "a")).code == cli::kOk);
  REQUIRE(run(synth_args(dir / "b")).code == cli::kOk);
  auto other = synth_args(dir / "c");
  other.insert(other.end(), {"--seed", "8"});
  REQUIRE(run(other).code == cli::kOk);
  for (const char* f : {"train.jsonl", "dev.nbest.jsonl", "test.nbest.jsonl", "vocab.txt", "feats/dev/dev000.matf"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(slurp(dir / "a" / "train.jsonl") != slurp(dir / "c" / "train.jsonl"));
}

TEST_CASE("train, rescore, sweep and eval end to end") {
  test::TempDir dir("e2e");
  const auto corpus = dir / "c", model = dir / "m";
  REQUIRE(run(synth_args(corpus)).code == cli::kOk);
  const Result trained = run(train_args(corpus, model));
  REQUIRE_MESSAGE(trained.code == cli::kOk, trained.err);
  for (const char* f : {"model.ckpt", "vocab.txt", "run.cfg", "manifest.json", "train_log.jsonl"}) {
    CHECK(std::filesystem::exists(model / f));
  }
  std::istringstream log(slurp(model / "train_log.jsonl"));
  std::string line;
  std::size_t steps = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    CHECK(j.contains("mlm"));
    CHECK(j.contains("alignment"));
    CHECK(j.contains("lr"));
    ++steps;
  }
  CHECK(steps == 4);
  const json manifest = json::parse(slurp(model / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["config"]["d_model"] == "16");
  CHECK(manifest["inputs"]["train"]["fnv1a64"] == cli::file_digest(corpus / "train.jsonl"));

  const auto ckpt = (model / "model.ckpt").string();
  const auto dev = (corpus / "dev.nbest.jsonl").string();

  SUBCASE("replaying the manifest reproduces the loss trajectory") {
    const auto again = dir / "again";
    const Result r = run({"train", "--config", (model / "manifest.json").string(), "--out", again.string()});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    CHECK(slurp(again / "train_log.jsonl") == slurp(model / "train_log.jsonl"));
    CHECK(slurp(again / "model.ckpt") == slurp(model / "model.ckpt"));
  }

  SUBCASE("lambda 0 keeps the first-pass order") {
    const auto out = dir / "r.jsonl";
    REQUIRE(run({"rescore", "--model", ckpt, "--nbest", dev, "--lambda", "0", "--out", out.string()}).code ==
            cli::kOk);
    const auto entries = data::read_nbest(dev);
    std::istringstream in(slurp(out));
    std::size_t i = 0;
    while (std::getline(in, line)) {
      const json j = json::parse(line);
      REQUIRE(i < entries.size());
      CHECK(j["utterance_id"] == entries[i].utterance_id);
      for (std::size_t k = 0; k < entries[i].hypotheses.size(); ++k) {
        CHECK(j["ranked"][k]["text"] == entries[i].hypotheses[k].text);
      }
      ++i;
    }
    CHECK(i == entries.size());
    CHECK(std::filesystem::exists(dir / "r.jsonl.manifest.json"));
  }

  SUBCASE("sweep writes a table and a best lambda") {
    const auto out = dir / "sweep.json";
    REQUIRE(run({"sweep", "--model", ckpt, "--nbest", dev, "--grid", "0,0.5,1", "--out", out.string()}).code ==
            cli::kOk);
    const json j = json::parse(slurp(out));
    CHECK(j["table"].size() == 3);
    CHECK(j.contains("best_lambda"));
  }

  SUBCASE("eval on perfect hypotheses reports zero") {
    auto entries = data::read_nbest(dev);
    for (auto& e : entries) e.hypotheses = {{e.reference, 0.0, 0}};
    const auto perfect = corpus / "perfect.nbest.jsonl";
    data::write_nbest(perfect, entries);
    const auto out = dir / "eval.json";
    const Result r = run({"eval", "--model", ckpt, "--nbest", perfect.string(), "--lambda", "0.5", "--blocklist",
                          (corpus / "blocklist.txt").string(), "--out", out.string()});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    const json j = json::parse(slurp(out));
    CHECK(j["words"]["substitutions"] == 0);
    CHECK(j["words"]["insertions"] == 0);
    CHECK(j["words"]["deletions"] == 0);
    CHECK(r.out.find("CWER") != std::string::npos);
  }

  SUBCASE("data errors exit with 2") {
    CHECK(run({"eval", "--model", ckpt, "--nbest", (dir / "missing.jsonl").string()}).code == cli::kDataError);
    CHECK(run({"eval", "--model", (dir / "none.ckpt").string(), "--nbest", dev}).code == cli::kDataError);
    std::ofstream(dir / "bad.jsonl") << "{not json\n";
    const Result r = run({"eval", "--model", ckpt, "--nbest", (dir / "bad.jsonl").string()});
    CHECK(r.code == cli::kDataError);
    CHECK(r.err.find("bad.jsonl") != std::string::npos);
  }
}

TEST_CASE("divergence exits with 3") {
  test::TempDir dir("diverge");
  REQUIRE(run(synth_args(dir / "c")).code == cli::kOk);
  auto args = train_args(dir / "c", dir / "m");
  args.insert(args.end(), {"--set", "lr=1e200", "--set", "warmup_fraction=0"});
  const Result r = run(args);
  CHECK(r.code == cli::kDivergence);
  CHECK(r.err.find("divergence at step") != std::string::npos);
}
