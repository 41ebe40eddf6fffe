#include "reflex/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "reflex/error.hpp"

namespace reflex {

namespace {

bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case ':': case ';': case '!':
    case '?': case '(': case ')': case '"':
      return true;
    default:
      return false;
  }
}

constexpr std::string_view kSpecials[] = {
    Tokenizer::kPad, Tokenizer::kEos, Tokenizer::kUnk, Tokenizer::kUser,
    Tokenizer::kAssistant};

}  // namespace

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '<') {
      // Role markers and other specials pass through whole.
      auto close = text.find('>', i);
      if (close != std::string_view::npos) {
        std::string_view cand = text.substr(i, close - i + 1);
        if (std::find(std::begin(kSpecials), std::end(kSpecials), cand) !=
            std::end(kSpecials)) {
          flush();
          out.emplace_back(cand);
          i = close;
          continue;
        }
      }
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_split_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts) {
  std::set<std::string> seen;
  for (const auto& t : texts) {
    for (auto& w : split(t)) seen.insert(std::move(w));
  }
  std::vector<std::string> words(std::begin(kSpecials), std::end(kSpecials));
  for (const auto& w : seen) {
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return from_words(std::move(words));
}

Tokenizer Tokenizer::from_words(std::vector<std::string> words) {
  if (words.size() < std::size(kSpecials)) {
    fail(ErrorKind::format, "vocabulary shorter than the special-token block");
  }
  for (std::size_t i = 0; i < std::size(kSpecials); ++i) {
    if (words[i] != kSpecials[i]) {
      fail(ErrorKind::format, "vocabulary entry " + std::to_string(i) +
                                  " must be " + std::string(kSpecials[i]));
    }
  }
  Tokenizer tok;
  tok.words_ = std::move(words);
  for (std::size_t i = 0; i < tok.words_.size(); ++i) {
    auto [it, inserted] = tok.index_.emplace(tok.words_[i], static_cast<TokenId>(i));
    if (!inserted) fail(ErrorKind::format, "duplicate vocabulary entry: " + tok.words_[i]);
  }
  return tok;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? unk_id() : it->second);
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < std::size(kSpecials)) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(id);
  }
  return out;
}

const std::string& Tokenizer::word(TokenId id) const {
  if (id >= words_.size()) {
    fail(ErrorKind::input, "token id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[id];
}

bool Tokenizer::contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

TokenId Tokenizer::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) fail(ErrorKind::input, "word not in vocabulary: " + std::string(word));
  return it->second;
}

bool is_sentence_end(std::string_view token) {
  return token == "." || token == "!" || token == "?";
}

}  // namespace reflex
