#include "mate/data/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "mate/data/errors.hpp"
#include "mate/data/text.hpp"

namespace mate::data {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return kTokens;
}

}  // namespace

Vocab::Vocab() : tokens_(reserved_tokens()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw DataError("vocabulary must start with [PAD], [UNK], [CLS], [SEP], [MASK]");
  }
  Vocab v;
  v.tokens_.clear();
  v.ids_.clear();
  for (auto& t : tokens) {
    if (t.empty()) {
      throw DataError("vocabulary contains an empty token");
    }
    if (!v.ids_.emplace(t, static_cast<int>(v.tokens_.size())).second) {
      throw DataError("duplicate vocabulary token '" + t + "'");
    }
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open vocabulary " + path.string());
  }
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write vocabulary " + path.string());
  }
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view word) const { return ids_.contains(std::string(word)); }

std::uint64_t Vocab::fingerprint() const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 1099511628211ULL;
  }
  return h;
}

Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_count) {
  if (texts.empty()) {
    throw std::invalid_argument("build_vocab: no texts");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  const auto& reserved = reserved_tokens();
  for (auto& [w, n] : counts) {
    if (n >= min_count && std::find(reserved.begin(), reserved.end(), w) == reserved.end()) {
      ranked.emplace_back(w, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved;
  for (auto& [w, n] : ranked) tokens.push_back(w);
  return Vocab::from_tokens(std::move(tokens));
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab) {
  TokenSequence seq;
  for (const auto& w : split_words(text)) seq.ids.push_back(vocab.id(w));
  return seq;
}

std::string detokenize(const TokenSequence& tokens, const Vocab& vocab) {
  std::string out;
  for (int id : tokens.ids) {
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

}  // namespace mate::data
