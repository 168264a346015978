#include "mate/rescoring/rescore.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "mate/data/errors.hpp"
#include "mate/data/features.hpp"
#include "mate/rescoring/pll.hpp"

namespace mate::eval {

double interpolate(double first_pass, double pll, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("interpolation weight must lie in [0,1] (got " +
                                std::to_string(lambda) + ")");
  }
  return (1.0 - lambda) * first_pass + lambda * pll;
}

ScoredEntry score_entry(const model::Model& model, const data::Vocab& vocab,
                        const data::NBestEntry& entry, const std::filesystem::path& features_root,
                        std::size_t copy_batch) {
  ScoredEntry out;
  out.entry = entry;
  data::AudioFeatures features;
  if (!model.config.text_only) {
    try {
      features = data::read_features(data::resolve_relative(features_root, entry.features_path));
    } catch (const std::exception& e) {
      throw DataError("utterance " + entry.utterance_id + ": " + e.what());
    }
  }
  out.pll.reserve(entry.hypotheses.size());
  out.tokens.reserve(entry.hypotheses.size());
  for (const auto& h : entry.hypotheses) {
    const data::TokenSequence tokens = data::tokenize(h.text, vocab);
    try {
      out.pll.push_back(pll_score(model, features, tokens, copy_batch));
    } catch (const std::length_error& e) {
      throw DataError("utterance " + entry.utterance_id + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError("utterance " + entry.utterance_id + ": " + e.what());
    }
    out.tokens.push_back(tokens.length());
  }
  return out;
}

CorpusScores score_corpus(const model::Model& model, const data::Vocab& vocab,
                          const std::vector<data::NBestEntry>& entries,
                          const std::filesystem::path& features_root, const ScoreOptions& options) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].utterance_id < entries[b].utterance_id;
  });

  std::vector<std::optional<ScoredEntry>> results(entries.size());
  std::vector<std::string> errors(entries.size());
  std::vector<std::exception_ptr> failures(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t slot = next++; slot < order.size(); slot = next++) {
      try {
        results[slot] = score_entry(model, vocab, entries[order[slot]], features_root,
                                    options.copy_batch);
      } catch (const std::exception& e) {
        errors[slot] = e.what();
        failures[slot] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(entries.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  CorpusScores out;
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    if (failures[slot]) {
      if (!options.skip_failures) std::rethrow_exception(failures[slot]);
      out.skipped.push_back(errors[slot]);
    } else {
      out.entries.push_back(std::move(*results[slot]));
    }
  }
  return out;
}

RescoredEntry rank(const ScoredEntry& scored, double lambda) {
  RescoredEntry out;
  out.utterance_id = scored.entry.utterance_id;
  out.lambda = lambda;
  const auto& hyps = scored.entry.hypotheses;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    out.ranked.push_back({hyps[i].text, scored.pll[i], hyps[i].first_pass_score,
                          interpolate(hyps[i].first_pass_score, scored.pll[i], lambda),
                          scored.tokens[i], hyps[i].original_rank});
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const HypothesisScore& a, const HypothesisScore& b) {
                     if (a.final_score != b.final_score) return a.final_score > b.final_score;
                     return a.original_rank < b.original_rank;
                   });
  return out;
}

RescoredEntry rescore_nbest(const model::Model& model, const data::Vocab& vocab,
                            const data::NBestEntry& entry, const std::filesystem::path& features_root,
                            double lambda, std::size_t copy_batch) {
  interpolate(0.0, 0.0, lambda);
  return rank(score_entry(model, vocab, entry, features_root, copy_batch), lambda);
}

EvalReport evaluate(const CorpusScores& scores, double lambda, const std::set<std::string>& blocklist) {
  EvalReport report;
  report.lambda = lambda;
  report.skipped = scores.skipped;
  for (const auto& scored : scores.entries) {
    if (scored.entry.hypotheses.empty()) continue;
    const RescoredEntry ranked = rank(scored, lambda);
    UtteranceResult r;
    r.utterance_id = scored.entry.utterance_id;
    r.reference = scored.entry.reference;
    r.hypothesis = ranked.ranked.front().text;
    r.words = wer(r.reference, r.hypothesis);
    r.content = cwer(r.reference, r.hypothesis, blocklist);
    report.words += r.words;
    report.content += r.content;
    report.utterances.push_back(std::move(r));
  }
  return report;
}

SweepResult sweep_lambda(const CorpusScores& scores, std::vector<double> grid) {
  if (grid.empty()) throw std::invalid_argument("sweep_lambda: empty grid");
  for (double l : grid) interpolate(0.0, 0.0, l);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  SweepResult out;
  const std::set<std::string> no_blocklist;
  for (double l : grid) {
    const double rate = evaluate(scores, l, no_blocklist).wer();
    out.table.emplace_back(l, rate);
    if (out.table.size() == 1 || rate < out.best_wer) {
      out.best_wer = rate;
      out.best_lambda = l;
    }
  }
  return out;
}

namespace {

nlohmann::json counts_json(const ErrorCounts& c) {
  return {{"substitutions", c.substitutions},
          {"insertions", c.insertions},
          {"deletions", c.deletions},
          {"ref_words", c.ref_words},
          {"rate", c.rate()}};
}

}  // namespace

nlohmann::json to_json(const RescoredEntry& entry) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& h : entry.ranked) {
    ranked.push_back({{"text", h.text}, {"pll", h.pll}, {"first_pass", h.first_pass},
                      {"final", h.final_score}});
  }
  return {{"utterance_id", entry.utterance_id}, {"ranked", ranked}, {"lambda", entry.lambda}};
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : report.utterances) {
    utts.push_back({{"utterance_id", u.utterance_id},
                    {"reference", u.reference},
                    {"hypothesis", u.hypothesis},
                    {"words", counts_json(u.words)},
                    {"content_words", counts_json(u.content)}});
  }
  return {{"lambda", report.lambda},
          {"wer", report.wer()},
          {"cwer", report.cwer()},
          {"words", counts_json(report.words)},
          {"content_words", counts_json(report.content)},
          {"skipped", report.skipped},
          {"utterances", utts}};
}

nlohmann::json to_json(const SweepResult& sweep) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [l, w] : sweep.table) table.push_back({{"lambda", l}, {"wer", w}});
  return {{"best_lambda", sweep.best_lambda}, {"best_wer", sweep.best_wer}, {"table", table}};
}

void print_table(std::ostream& out, const EvalReport& report) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %6s %6s %6s %9s\n", "metric", "rate", "sub", "ins",
                "del", "ref_words");
  out << line;
  auto row = [&](const char* name, const ErrorCounts& c) {
    std::snprintf(line, sizeof line, "%-8s %8.4f %6zu %6zu %6zu %9zu\n", name, c.rate(),
                  c.substitutions, c.insertions, c.deletions, c.ref_words);
    out << line;
  };
  row("WER", report.words);
  row("CWER", report.content);
  std::snprintf(line, sizeof line, "lambda %.3f, %zu utterances, %zu skipped\n", report.lambda,
                report.utterances.size(), report.skipped.size());
  out << line;
}

}  // namespace mate::eval
