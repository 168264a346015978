#include "mate/cli/commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mate/cli/config.hpp"
#include "mate/data/errors.hpp"
#include "mate/data/nbest.hpp"
#include "mate/data/synth.hpp"
#include "mate/model/model.hpp"
#include "mate/objectives/train.hpp"
#include "mate/rescoring/rescore.hpp"

namespace mate::cli {

namespace fs = std::filesystem;
using Settings = std::map<std::string, std::string>;

namespace {

const Settings kSynthDefaults = {
    {"seed", "7"},          {"out", ""},
    {"train_count", "2000"}, {"dev_count", "200"},
    {"test_count", "200"},  {"nbest_depth", "5"},
    {"content_words", "50"}, {"function_words", "10"},
    {"confusable_pairs", "10"}, {"topics", "5"},
    {"frames_per_token", "8"}, {"feature_dims", "16"},
    {"noise_sigma", "0.1"}, {"score_noise_sigma", "0.75"},
    {"confusable_edit_rate", "0.5"}, {"second_edit_rate", "0.3"},
};

const Settings kTrainDefaults = {
    {"seed", "0"},
    {"data", ""},
    {"out", ""},
    {"steps", "3000"},
    {"batch_size", "32"},
    {"lr", "0.001"},
    {"alpha", "1.0"},
    {"alignment", "contrastive"},
    {"text_only", "false"},
    {"freeze", ""},
    {"mask_rate", "0.15"},
    {"warmup_fraction", "0.1"},
    {"pool_tap", "inputs"},
    {"d_model", "64"},
    {"encoder_layers", "2"},
    {"heads", "4"},
    {"ffn_dim", "128"},
    {"speech_dim", "32"},
    {"speech_ffn_dim", "64"},
    {"speech_encoder_layers", "1"},
    {"max_positions", "512"},
    {"dropout", "0.1"},
    {"log_every", "100"},
    {"checkpoint_every", "500"},
    {"eval_every", "1000"},
    {"eval_lambda", "0.5"},
    {"workers", "1"},
};

const Settings kScoringDefaults = {
    {"seed", "0"},  {"model", ""},   {"vocab", ""},    {"nbest", ""},        {"out", ""},
    {"lambda", "0.5"}, {"workers", "1"}, {"copy_batch", "64"}, {"blocklist", ""},
    {"grid", "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95,1"},
};

struct Invocation {
  std::string command;
  RunConfig config;
};

void write_manifest(const fs::path& path, const Invocation& inv,
                    const std::map<std::string, std::string>& inputs) {
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& [name, file] : inputs) digests[name] = {{"path", file}, {"fnv1a64", file_digest(file)}};
  const nlohmann::json manifest = {{"command", inv.command},
                                   {"seed", inv.config.str("seed")},
                                   {"config", inv.config.values()},
                                   {"inputs", digests}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << manifest.dump(2) << '\n';
}

/// The resolved config in the key=value format accepted by --config.
void write_resolved_config(const fs::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [k, v] : config.values()) out << k << " = " << v << '\n';
}

fs::path sidecar(const fs::path& file, const char* suffix) {
  fs::path p = file;
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

// --- synth ------------------------------------------------------------------

int run_synth(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  data::SynthConfig sc;
  sc.train_count = c.count("train_count");
  sc.dev_count = c.count("dev_count");
  sc.test_count = c.count("test_count");
  sc.nbest_depth = c.count("nbest_depth");
  sc.content_words = c.count("content_words");
  sc.function_words = c.count("function_words");
  sc.confusable_pairs = c.count("confusable_pairs");
  sc.topics = c.count("topics");
  sc.frames_per_token = c.count("frames_per_token");
  sc.feature_dims = c.count("feature_dims");
  sc.noise_sigma = c.real("noise_sigma");
  sc.score_noise_sigma = c.real("score_noise_sigma");
  sc.confusable_edit_rate = c.real("confusable_edit_rate");
  sc.second_edit_rate = c.real("second_edit_rate");
  const fs::path dir = c.required("out");
  const data::SynthSummary s = data::synth_corpus(sc, c.u64("seed"), dir);
  write_resolved_config(dir / "run.cfg", c);
  write_manifest(dir / "manifest.json", inv, {});
  char line[200];
  std::snprintf(line, sizeof line,
                "synth: %zu train, %zu dev, %zu test utterances; first-pass top-1 exact on test %.3f\n",
                s.train, s.dev, s.test, s.test_top1_correct);
  out << line;
  return kOk;
}

// --- train ------------------------------------------------------------------

obj::TrainConfig train_config(const RunConfig& c) {
  obj::TrainConfig tc;
  tc.seed = c.u64("seed");
  tc.steps = c.count("steps");
  tc.batch_size = c.count("batch_size");
  tc.learning_rate = c.real("lr");
  tc.alpha = c.real("alpha");
  tc.masking.mask_rate = c.real("mask_rate");
  tc.warmup_fraction = c.real("warmup_fraction");
  tc.frozen_groups = c.list("freeze");
  try {
    tc.alignment = obj::parse_alignment_kind(c.str("alignment"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::string& tap = c.str("pool_tap");
  if (tap == "inputs") {
    tc.pool_tap = obj::PoolTap::Inputs;
  } else if (tap == "outputs") {
    tc.pool_tap = obj::PoolTap::Outputs;
  } else {
    throw UsageError("pool_tap must be inputs or outputs");
  }
  if (c.flag("text_only")) tc.alignment = obj::AlignmentKind::None;
  const auto& groups = model::all_groups();
  for (const auto& g : tc.frozen_groups) {
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) {
      throw UsageError("--freeze: unknown parameter group '" + g + "'");
    }
  }
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return tc;
}

int run_train(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  const fs::path data_dir = c.required("data");
  const fs::path dir = c.required("out");
  const obj::TrainConfig tc = train_config(c);

  const data::Vocab vocab = data::Vocab::load(data_dir / "vocab.txt");
  const std::vector<obj::TrainExample> examples = obj::load_examples(data_dir / "train.jsonl", vocab);

  model::ModelConfig mc;
  mc.d_model = c.count("d_model");
  mc.encoder_layers = c.count("encoder_layers");
  mc.heads = c.count("heads");
  mc.ffn_dim = c.count("ffn_dim");
  mc.speech_dim = c.count("speech_dim");
  mc.speech_ffn_dim = c.count("speech_ffn_dim");
  mc.speech_encoder_layers = c.count("speech_encoder_layers");
  mc.max_positions = c.count("max_positions");
  mc.dropout = c.real("dropout");
  mc.text_only = c.flag("text_only");
  mc.vocab_size = vocab.size();
  mc.feature_dims = examples.front().features.dims();
  model::Model m;
  try {
    m = model::init_model(mc, tc.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  fs::create_directories(dir);
  vocab.save(dir / "vocab.txt");
  write_resolved_config(dir / "run.cfg", c);
  write_manifest(dir / "manifest.json", inv,
                 {{"train", (data_dir / "train.jsonl").string()},
                  {"vocab", (data_dir / "vocab.txt").string()}});

  const fs::path dev_path = data_dir / "dev.nbest.jsonl";
  const std::size_t eval_every = c.count("eval_every");
  std::vector<data::NBestEntry> dev;
  if (eval_every > 0 && fs::exists(dev_path)) dev = data::read_nbest(dev_path);
  const double eval_lambda = c.real("eval_lambda");
  eval::interpolate(0.0, 0.0, eval_lambda);

  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  std::ofstream dev_log(dir / "dev_eval.jsonl", std::ios::binary);
  if (!log || !dev_log) throw DataError("cannot write logs under " + dir.string());
  const std::size_t log_every = std::max<std::size_t>(c.count("log_every"), 1);
  const std::size_t checkpoint_every = c.count("checkpoint_every");
  const eval::ScoreOptions score_options{c.count("workers"), 64, false};

  auto dev_eval = [&](std::size_t step) {
    if (dev.empty()) return;
    const auto scores = eval::score_corpus(m, vocab, dev, dev_path, score_options);
    const auto report = eval::evaluate(scores, eval_lambda, {});
    char line[160];
    std::snprintf(line, sizeof line, R"({"step": %zu, "lambda": %.17g, "wer": %.17g})", step,
                  eval_lambda, report.wer());
    dev_log << line << '\n' << std::flush;
    out << "dev " << line << '\n';
  };

  obj::Trainer trainer(m, examples, tc);
  for (std::size_t s = 1; s <= tc.steps; ++s) {
    const obj::StepRecord r = trainer.step();
    const std::string line = obj::to_json_line(r);
    log << line << '\n';
    if (s % log_every == 0 || s == tc.steps) out << line << '\n' << std::flush;
    if (checkpoint_every > 0 && s % checkpoint_every == 0 && s != tc.steps) {
      model::save_checkpoint(dir / "model.ckpt", m, vocab.fingerprint());
    }
    if (eval_every > 0 && s % eval_every == 0 && s != tc.steps) dev_eval(s);
  }
  model::save_checkpoint(dir / "model.ckpt", m, vocab.fingerprint());
  if (eval_every > 0) dev_eval(tc.steps);
  return kOk;
}

// --- rescore / sweep / eval ---------------------------------------------------

struct Loaded {
  model::Model model;
  data::Vocab vocab;
  fs::path nbest_path;
  std::vector<data::NBestEntry> entries;
};

Loaded load_scoring_inputs(const RunConfig& c) {
  Loaded l;
  const fs::path model_path = c.required("model");
  std::uint64_t fingerprint = 0;
  l.model = model::load_checkpoint(model_path, &fingerprint);
  const fs::path vocab_path = c.has("vocab") ? fs::path(c.str("vocab")) : model_path.parent_path() / "vocab.txt";
  l.vocab = data::Vocab::load(vocab_path);
  if (l.vocab.fingerprint() != fingerprint) {
    throw DataError("vocabulary " + vocab_path.string() + " does not match checkpoint " +
                    model_path.string());
  }
  l.nbest_path = c.required("nbest");
  l.entries = data::read_nbest(l.nbest_path);
  return l;
}

std::map<std::string, std::string> scoring_inputs(const RunConfig& c, const Loaded& l) {
  std::map<std::string, std::string> in = {{"model", c.str("model")}, {"nbest", l.nbest_path.string()}};
  if (c.has("blocklist")) in["blocklist"] = c.str("blocklist");
  return in;
}

double lambda_setting(const RunConfig& c) {
  const double lambda = c.real("lambda");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("--lambda must lie in [0,1]");
  return lambda;
}

eval::ScoreOptions score_options(const RunConfig& c, bool skip) {
  return {std::max<std::size_t>(c.count("workers"), 1), std::max<std::size_t>(c.count("copy_batch"), 1),
          skip};
}

int run_rescore(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  const double lambda = lambda_setting(c);
  const fs::path out_path = c.required("out");
  const Loaded l = load_scoring_inputs(c);
  const auto scores = eval::score_corpus(l.model, l.vocab, l.entries, l.nbest_path, score_options(c, false));
  ensure_parent(out_path);
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw DataError("cannot write " + out_path.string());
  for (const auto& s : scores.entries) f << eval::to_json(eval::rank(s, lambda)).dump() << '\n';
  write_manifest(sidecar(out_path, ".manifest.json"), inv, scoring_inputs(c, l));
  out << "rescore: " << scores.entries.size() << " entries at lambda " << lambda << " -> "
      << out_path.string() << '\n';
  return kOk;
}

int run_sweep(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  std::vector<double> grid;
  for (const auto& item : c.list("grid")) {
    try {
      grid.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("--grid: not a number '" + item + "'");
    }
  }
  if (grid.empty()) throw UsageError("--grid is empty");
  for (double g : grid) {
    if (!(g >= 0.0 && g <= 1.0)) throw UsageError("--grid values must lie in [0,1]");
  }
  const Loaded l = load_scoring_inputs(c);
  const auto scores = eval::score_corpus(l.model, l.vocab, l.entries, l.nbest_path, score_options(c, false));
  const eval::SweepResult sweep = eval::sweep_lambda(scores, grid);
  char line[96];
  out << "lambda      wer\n";
  for (const auto& [lambda, w] : sweep.table) {
    std::snprintf(line, sizeof line, "%6.3f  %7.4f\n", lambda, w);
    out << line;
  }
  std::snprintf(line, sizeof line, "best lambda %.3f (wer %.4f)\n", sweep.best_lambda, sweep.best_wer);
  out << line;
  if (c.has("out")) {
    const fs::path out_path = c.str("out");
    ensure_parent(out_path);
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw DataError("cannot write " + out_path.string());
    f << eval::to_json(sweep).dump(2) << '\n';
    write_manifest(sidecar(out_path, ".manifest.json"), inv, scoring_inputs(c, l));
  }
  return kOk;
}

int run_eval(const Invocation& inv, std::ostream& out) {
  const RunConfig& c = inv.config;
  const double lambda = lambda_setting(c);
  const Loaded l = load_scoring_inputs(c);
  std::set<std::string> blocklist;
  if (c.has("blocklist")) blocklist = eval::load_blocklist(c.str("blocklist"));
  const auto scores = eval::score_corpus(l.model, l.vocab, l.entries, l.nbest_path, score_options(c, true));
  const eval::EvalReport report = eval::evaluate(scores, lambda, blocklist);
  eval::print_table(out, report);
  for (const auto& s : report.skipped) out << "skipped " << s << '\n';
  if (c.has("out")) {
    const fs::path out_path = c.str("out");
    ensure_parent(out_path);
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw DataError("cannot write " + out_path.string());
    f << eval::to_json(report).dump(2) << '\n';
    write_manifest(sidecar(out_path, ".manifest.json"), inv, scoring_inputs(c, l));
  }
  return report.skipped.empty() ? kOk : kDataError;
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal masked-LM n-best rescorer", "mate"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::map<std::string, std::string> values;
    bool text_only = false;
  };
  std::map<std::string, Flags> flags;
  const std::map<std::string, const Settings*> defaults = {{"synth", &kSynthDefaults},
                                                           {"train", &kTrainDefaults},
                                                           {"rescore", &kScoringDefaults},
                                                           {"sweep", &kScoringDefaults},
                                                           {"eval", &kScoringDefaults}};
  const std::vector<std::pair<std::string, std::string>> value_flags = {
      {"--seed", "seed"},       {"--out", "out"},       {"--lambda", "lambda"},
      {"--alpha", "alpha"},     {"--freeze", "freeze"}, {"--alignment", "alignment"},
      {"--workers", "workers"}, {"--steps", "steps"},   {"--batch-size", "batch_size"},
      {"--data", "data"},       {"--model", "model"},   {"--nbest", "nbest"},
      {"--grid", "grid"},       {"--blocklist", "blocklist"}, {"--vocab", "vocab"}};
  const std::map<std::string, std::string> descriptions = {
      {"synth", "generate the synthetic corpus"},
      {"train", "train a model on a corpus directory"},
      {"rescore", "rescore an n-best file"},
      {"sweep", "sweep the interpolation weight on an n-best file"},
      {"eval", "rescore and report WER/CWER against references"}};

  for (const auto& [name, settings] : defaults) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    Flags& f = flags[name];
    sub->add_option("--config", f.config, "key = value config file, or a run manifest (.json) to replay");
    sub->add_option("--set", f.sets, "override any config key (key=value)");
    for (const auto& [flag, key] : value_flags) {
      if (settings->contains(key)) sub->add_option(flag, f.values[key]);
    }
    if (settings->contains("text_only")) sub->add_flag("--text-only", f.text_only, "train without audio");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mate: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Flags& f = flags.at(command);
  CLI::App* sub = app.get_subcommand(command);
  try {
    Invocation inv{command, RunConfig(*defaults.at(command))};
    if (!f.config.empty()) inv.config.merge_file(f.config);
    for (const auto& kv : f.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      inv.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [flag, key] : value_flags) {
      if (sub->get_option_no_throw(flag) && sub->count(flag) > 0) inv.config.set(key, f.values.at(key));
    }
    if (f.text_only) inv.config.set("text_only", "true");

    if (command == "synth") return run_synth(inv, out);
    if (command == "train") return run_train(inv, out);
    if (command == "rescore") return run_rescore(inv, out);
    if (command == "sweep") return run_sweep(inv, out);
    return run_eval(inv, out);
  } catch (const UsageError& e) {
    err << "mate " << command << ": " << e.what() << '\n';
    return kUsage;
  } catch (const obj::DivergenceError& e) {
    err << "mate " << command << ": " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    err << "mate " << command << ": " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace mate::cli
