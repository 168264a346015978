#include "mate/data/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <stdexcept>

#include "mate/data/errors.hpp"
#include "mate/data/text.hpp"

namespace mate::data {

namespace {

const std::vector<std::string> kFunctionWords = {
    "the", "a", "to", "of", "in", "on", "and", "is", "for", "at",
    "my", "with", "from", "by", "it", "this", "that", "be", "or", "an"};

const std::vector<std::string> kContentWords = {
    "light",    "lamp",     "music",   "movie",   "alarm",    "album",     "timer",    "tiger",
    "kitchen",  "chicken",  "weather", "feather", "coffee",   "toffee",    "door",     "floor",
    "window",   "widow",    "radio",   "rodeo",   "heater",   "theater",   "garden",   "pardon",
    "news",     "shoes",    "train",   "rain",    "taxi",     "pizza",     "calendar", "meeting",
    "volume",   "shower",   "oven",    "fridge",  "garage",   "camera",    "speaker",  "blinds",
    "playlist", "podcast",  "recipe",  "dinner",  "flight",   "hotel",     "ticket",   "concert",
    "museum",   "market",   "bank",    "doctor",  "dentist",  "school",    "office",   "budget",
    "invoice",  "email",    "message", "phone",   "battery",  "charger",   "printer",  "laptop",
    "router",   "fan"};

std::string numbered(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", stem, i);
  return buf;
}

std::string utt_id(const char* split, std::size_t i) { return numbered(split, i); }

/// Word indices into the lexicon (function words first).
using WordSeq = std::vector<std::size_t>;

struct Generator {
  const SynthConfig& config;
  const Lexicon& lex;
  std::mt19937_64& rng;
  std::vector<std::vector<std::size_t>> topic_words;       // content word indices per topic
  std::vector<std::vector<std::size_t>> topic_confusables;  // subset with a partner

  Generator(const SynthConfig& c, const Lexicon& l, std::mt19937_64& r) : config(c), lex(l), rng(r) {
    topic_words.resize(config.topics);
    topic_confusables.resize(config.topics);
    for (std::size_t w = 0; w < lex.content_words.size(); ++w) {
      topic_words[lex.topic_of[w]].push_back(w);
      if (lex.partner[w] >= 0) topic_confusables[lex.topic_of[w]].push_back(w);
    }
  }

  std::size_t uniform(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng); }

  std::size_t content_global(std::size_t c) const { return lex.function_words.size() + c; }
  bool is_content(std::size_t g) const { return g >= lex.function_words.size(); }
  std::size_t content_local(std::size_t g) const { return g - lex.function_words.size(); }

  WordSeq utterance() {
    const std::size_t len =
        std::uniform_int_distribution<std::size_t>(config.min_words, config.max_words)(rng);
    std::size_t topic = uniform(config.topics);
    while (topic_words[topic].empty()) topic = (topic + 1) % config.topics;
    WordSeq words(len);
    for (auto& w : words) {
      if (!lex.function_words.empty() && coin(config.function_word_rate)) {
        w = uniform(lex.function_words.size());
      } else {
        w = content_global(topic_words[topic][uniform(topic_words[topic].size())]);
      }
    }
    const auto& conf = topic_confusables[topic];
    const std::size_t pos = uniform(len);
    words[pos] = content_global(conf.empty() ? topic_words[topic][uniform(topic_words[topic].size())]
                                             : conf[uniform(conf.size())]);
    return words;
  }

  WordSeq competitor(const WordSeq& ref) {
    WordSeq hyp = ref;
    std::vector<bool> edited(ref.size(), false);
    const std::size_t edits = 1 + (coin(config.second_edit_rate) ? 1 : 0);
    for (std::size_t e = 0; e < edits; ++e) {
      std::vector<std::size_t> confusable, content, any;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (edited[i]) continue;
        any.push_back(i);
        if (is_content(ref[i])) {
          content.push_back(i);
          if (lex.partner[content_local(ref[i])] >= 0) confusable.push_back(i);
        }
      }
      if (any.empty()) break;
      const bool swap = coin(config.confusable_edit_rate);
      if (swap && !confusable.empty()) {
        const std::size_t i = confusable[uniform(confusable.size())];
        hyp[i] = content_global(static_cast<std::size_t>(lex.partner[content_local(ref[i])]));
        edited[i] = true;
      } else if (!content.empty() && config.topics > 1) {
        const std::size_t i = content[uniform(content.size())];
        const std::size_t own = lex.topic_of[content_local(ref[i])];
        std::size_t other = uniform(config.topics - 1);
        if (other >= own) ++other;
        while (topic_words[other].empty()) other = (other + 1) % config.topics;
        hyp[i] = content_global(topic_words[other][uniform(topic_words[other].size())]);
        edited[i] = true;
      } else if (lex.function_words.size() > 1) {
        std::vector<std::size_t> function;
        for (std::size_t i : any) {
          if (!is_content(ref[i])) function.push_back(i);
        }
        if (function.empty()) continue;
        const std::size_t i = function[uniform(function.size())];
        std::size_t f = uniform(lex.function_words.size() - 1);
        if (f >= ref[i]) ++f;
        hyp[i] = f;
        edited[i] = true;
      }
    }
    return hyp;
  }

  std::string text(const WordSeq& words) const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (std::size_t w : words) out.push_back(lex.word(w));
    return join_words(out);
  }

  std::vector<std::string> strings(const WordSeq& words) const {
    std::vector<std::string> out;
    for (std::size_t w : words) out.push_back(lex.word(w));
    return out;
  }
};

std::size_t substitutions(const WordSeq& a, const WordSeq& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

/// Merges duplicate texts keeping the best first-pass score, then orders by
/// score (desc) and assigns ranks.
std::vector<Hypothesis> finalize_hypotheses(std::vector<Hypothesis> hyps) {
  std::vector<Hypothesis> merged;
  for (auto& h : hyps) {
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const Hypothesis& m) { return m.text == h.text; });
    if (it == merged.end()) {
      merged.push_back(std::move(h));
    } else {
      it->first_pass_score = std::max(it->first_pass_score, h.first_pass_score);
    }
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.first_pass_score > b.first_pass_score;
  });
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i].original_rank = static_cast<int>(i);
  return merged;
}

void write_lexicon_json(const std::filesystem::path& path, const Lexicon& lex,
                        const SynthConfig& config) {
  nlohmann::json j;
  j["function_words"] = lex.function_words;
  j["content_words"] = lex.content_words;
  j["topic_of"] = lex.topic_of;
  nlohmann::json pairs = nlohmann::json::array();
  for (auto [a, b] : lex.pairs) pairs.push_back({lex.content_words[a], lex.content_words[b]});
  j["confusable_pairs"] = pairs;
  j["frames_per_token"] = config.frames_per_token;
  j["feature_dims"] = config.feature_dims;
  j["noise_sigma"] = config.noise_sigma;
  nlohmann::json protos = nlohmann::json::object();
  for (std::size_t w = 0; w < lex.word_count(); ++w) {
    auto row = lex.prototypes.row(w);
    protos[lex.word(w)] = std::vector<double>(row.begin(), row.end());
  }
  j["prototypes"] = protos;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

const std::string& Lexicon::word(std::size_t i) const {
  return i < function_words.size() ? function_words[i] : content_words[i - function_words.size()];
}

std::size_t Lexicon::index_of(const std::string& w) const {
  for (std::size_t i = 0; i < word_count(); ++i) {
    if (word(i) == w) return i;
  }
  throw std::out_of_range("word '" + w + "' is not in the lexicon");
}

std::vector<std::string> Lexicon::all_words() const {
  std::vector<std::string> out = function_words;
  out.insert(out.end(), content_words.begin(), content_words.end());
  return out;
}

Lexicon make_lexicon(const SynthConfig& config, std::mt19937_64& rng) {
  if (config.content_words == 0 || config.topics == 0) {
    throw std::invalid_argument("synth: need at least one content word and one topic");
  }
  if (config.min_words == 0 || config.min_words > config.max_words) {
    throw std::invalid_argument("synth: invalid utterance length range");
  }
  if (config.frames_per_token == 0 || config.feature_dims == 0 || config.nbest_depth == 0) {
    throw std::invalid_argument("synth: frames per token, feature dims and n-best depth must be positive");
  }
  Lexicon lex;
  for (std::size_t i = 0; i < config.function_words; ++i) {
    lex.function_words.push_back(i < kFunctionWords.size() ? kFunctionWords[i] : numbered("fn", i));
  }
  for (std::size_t i = 0; i < config.content_words; ++i) {
    lex.content_words.push_back(i < kContentWords.size() ? kContentWords[i] : numbered("word", i));
  }
  lex.partner.assign(config.content_words, -1);
  auto content_index = [&](const std::string& w) -> std::size_t {
    auto it = std::find(lex.content_words.begin(), lex.content_words.end(), w);
    if (it == lex.content_words.end()) {
      throw std::invalid_argument("synth: confusable pair references unknown word '" + w + "'");
    }
    return static_cast<std::size_t>(it - lex.content_words.begin());
  };
  if (!config.pairs.empty()) {
    for (const auto& [a, b] : config.pairs) lex.pairs.emplace_back(content_index(a), content_index(b));
  } else {
    if (2 * config.confusable_pairs > config.content_words) {
      throw std::invalid_argument("synth: not enough content words for the confusable pairs");
    }
    for (std::size_t p = 0; p < config.confusable_pairs; ++p) lex.pairs.emplace_back(2 * p, 2 * p + 1);
  }
  for (auto [a, b] : lex.pairs) {
    if (a == b || lex.partner[a] >= 0 || lex.partner[b] >= 0) {
      throw std::invalid_argument("synth: each word may belong to at most one confusable pair");
    }
    lex.partner[a] = static_cast<int>(b);
    lex.partner[b] = static_cast<int>(a);
  }
  // Pair members share a topic so neither is favoured by the text around it.
  lex.topic_of.assign(config.content_words, 0);
  std::vector<bool> placed(config.content_words, false);
  for (std::size_t p = 0; p < lex.pairs.size(); ++p) {
    lex.topic_of[lex.pairs[p].first] = lex.topic_of[lex.pairs[p].second] = p % config.topics;
    placed[lex.pairs[p].first] = placed[lex.pairs[p].second] = true;
  }
  std::size_t next = 0;
  for (std::size_t w = 0; w < config.content_words; ++w) {
    if (!placed[w]) lex.topic_of[w] = next++ % config.topics;
  }
  std::uniform_real_distribution<double> proto(-1.0, 1.0);
  lex.prototypes = num::Tensor::matrix(lex.word_count(), config.feature_dims);
  for (double& v : lex.prototypes.values()) v = proto(rng);
  return lex;
}

AudioFeatures render_features(const std::vector<std::string>& words, const Lexicon& lexicon,
                              const SynthConfig& config, std::mt19937_64& rng) {
  if (words.empty()) {
    throw std::invalid_argument("synth: cannot render an empty utterance");
  }
  const std::size_t k = config.frames_per_token, d = config.feature_dims;
  AudioFeatures f{num::Tensor::matrix(words.size() * k, d)};
  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto proto = lexicon.prototypes.row(lexicon.index_of(words[w]));
    for (std::size_t t = 0; t < k; ++t) {
      auto frame = f.values.row(w * k + t);
      for (std::size_t c = 0; c < d; ++c) frame[c] = proto[c] + noise(rng);
    }
  }
  return f;
}

std::vector<std::string> decode_nearest_prototype(const AudioFeatures& features,
                                                  const Lexicon& lexicon,
                                                  std::size_t frames_per_token) {
  std::vector<std::string> words;
  const std::size_t d = features.dims();
  for (std::size_t start = 0; start + frames_per_token <= features.frames(); start += frames_per_token) {
    std::vector<double> centroid(d, 0.0);
    for (std::size_t t = 0; t < frames_per_token; ++t) {
      auto frame = features.values.row(start + t);
      for (std::size_t c = 0; c < d; ++c) centroid[c] += frame[c] / static_cast<double>(frames_per_token);
    }
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < lexicon.word_count(); ++w) {
      auto proto = lexicon.prototypes.row(w);
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist += (centroid[c] - proto[c]) * (centroid[c] - proto[c]);
      if (dist < best_dist) {
        best_dist = dist;
        best = w;
      }
    }
    words.push_back(lexicon.word(best));
  }
  return words;
}

SynthSummary synth_corpus(const SynthConfig& config, std::uint64_t seed,
                          const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(seed);
  const Lexicon lex = make_lexicon(config, rng);
  Generator gen(config, lex, rng);

  fs::create_directories(out_dir / "feats" / "train");
  fs::create_directories(out_dir / "feats" / "dev");
  fs::create_directories(out_dir / "feats" / "test");

  std::vector<std::string> vocab_tokens = Vocab().tokens();
  for (const auto& w : lex.all_words()) vocab_tokens.push_back(w);
  Vocab::from_tokens(vocab_tokens).save(out_dir / "vocab.txt");
  {
    std::ofstream block(out_dir / "blocklist.txt", std::ios::binary);
    for (const auto& w : lex.function_words) block << w << '\n';
  }
  write_lexicon_json(out_dir / "lexicon.json", lex, config);

  SynthSummary summary;
  std::vector<TrainPair> train;
  for (std::size_t i = 0; i < config.train_count; ++i) {
    const WordSeq words = gen.utterance();
    const std::string id = utt_id("train", i);
    const std::string rel = "feats/train/" + id + ".matf";
    write_features(out_dir / rel, render_features(gen.strings(words), lex, config, rng));
    train.push_back(TrainPair{id, gen.text(words), rel});
  }
  write_train_pairs(out_dir / "train.jsonl", train);
  summary.train = train.size();

  auto make_split = [&](const char* split, std::size_t count) {
    std::vector<NBestEntry> entries;
    std::size_t top1 = 0;
    std::normal_distribution<double> score_noise(0.0, config.score_noise_sigma);
    for (std::size_t i = 0; i < count; ++i) {
      const WordSeq ref = gen.utterance();
      NBestEntry entry;
      entry.utterance_id = utt_id(split, i);
      entry.reference = gen.text(ref);
      entry.features_path = std::string("feats/") + split + "/" + entry.utterance_id + ".matf";
      write_features(out_dir / entry.features_path, render_features(gen.strings(ref), lex, config, rng));

      std::vector<WordSeq> seqs{ref};
      for (std::size_t tries = 0; seqs.size() < config.nbest_depth && tries < 20 * config.nbest_depth;
           ++tries) {
        WordSeq c = gen.competitor(ref);
        if (std::find(seqs.begin(), seqs.end(), c) == seqs.end()) seqs.push_back(std::move(c));
      }
      std::vector<Hypothesis> hyps;
      for (const auto& s : seqs) {
        const double errors = static_cast<double>(substitutions(ref, s));
        hyps.push_back(Hypothesis{gen.text(s), -errors * config.error_penalty + score_noise(rng), 0});
      }
      entry.hypotheses = finalize_hypotheses(std::move(hyps));
      top1 += entry.hypotheses.front().text == entry.reference;
      entries.push_back(std::move(entry));
    }
    write_nbest(out_dir / (std::string(split) + ".nbest.jsonl"), entries);
    return std::pair{entries.size(), count ? static_cast<double>(top1) / static_cast<double>(count) : 0.0};
  };
  summary.dev = make_split("dev", config.dev_count).first;
  const auto [test_n, top1] = make_split("test", config.test_count);
  summary.test = test_n;
  summary.test_top1_correct = top1;
  return summary;
}

}  // namespace mate::data
