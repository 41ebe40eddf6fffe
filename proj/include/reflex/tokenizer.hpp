#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reflex {

using TokenId = std::uint32_t;

/// Closed-vocabulary word-level tokenizer. Text is lowercased and split on
/// whitespace; the punctuation characters . , : ; ! ? ( ) " are emitted as
/// their own tokens. Hyphens and apostrophes stay inside words.
class Tokenizer {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kUser = "<user>";
  static constexpr std::string_view kAssistant = "<assistant>";

  /// Builds the vocabulary from the given texts. Specials occupy ids 0..4 in
  /// the order above; remaining words are sorted bytewise.
  static Tokenizer build(std::span<const std::string> texts);

  /// Restores a tokenizer from an id-ordered word list. The first five
  /// entries must be the specials.
  static Tokenizer from_words(std::vector<std::string> words);

  /// Splits text into lowercase word strings without vocabulary lookup.
  static std::vector<std::string> split(std::string_view text);

  std::vector<TokenId> encode(std::string_view text) const;

  /// Joins token strings with single spaces. Specials are skipped.
  std::string decode(std::span<const TokenId> ids) const;

  const std::string& word(TokenId id) const;
  bool contains(std::string_view word) const;
  TokenId id(std::string_view word) const;

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  TokenId pad_id() const { return 0; }
  TokenId eos_id() const { return 1; }
  TokenId unk_id() const { return 2; }
  TokenId user_id() const { return 3; }
  TokenId assistant_id() const { return 4; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

/// True for tokens that close a sentence: "." "!" "?".
bool is_sentence_end(std::string_view token);

}  // namespace reflex
